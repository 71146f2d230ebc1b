"""Data-model validation, estimand moment functions and estimate assembly."""

import numpy as np
import pytest

from cgce import (
    CausalEstimate,
    EstimandSpec,
    ObservedSample,
    control_weights,
    u_value,
    validate_sample,
)
from cgce.errors import (
    LengthMismatch,
    NonBinaryAssignment,
    OneSidedViolation,
    PropensityOutOfBounds,
)


def toy_columns(n=8, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(1.0, 4.0, size=(n, 2))
    z = (rng.random(n) < 0.5).astype(float)
    w = (rng.random(n) < 0.7).astype(float)
    t = z * w
    y = rng.standard_normal(n)
    p = np.full(n, 0.5)
    return x, z, t, y, p


class TestValidation:
    def test_valid_sample_roundtrip(self):
        x, z, t, y, p = toy_columns()
        s = ObservedSample.validate(x, z, t, y, p)
        assert s.n == 8 and s.d == 2
        np.testing.assert_array_equal(s.z, z)
        np.testing.assert_array_equal(s.t, t)

    def test_length_mismatch(self):
        x, z, t, y, p = toy_columns()
        with pytest.raises(LengthMismatch):
            ObservedSample.validate(x, z[:-1], t, y, p)
        with pytest.raises(LengthMismatch):
            ObservedSample.validate(x[:-1], z, t, y, p)
        with pytest.raises(LengthMismatch):
            ObservedSample.validate(x[:0], z[:0], t[:0], y[:0], p[:0])

    def test_non_binary_assignment(self):
        x, z, t, y, p = toy_columns()
        bad = z.copy()
        bad[0] = 0.5
        with pytest.raises(NonBinaryAssignment):
            ObservedSample.validate(x, bad, t, y, p)
        bad_t = t.copy()
        bad_t[0] = 2.0
        with pytest.raises(NonBinaryAssignment):
            ObservedSample.validate(x, z, bad_t, y, p)

    def test_one_sided_violation(self):
        x, z, t, y, p = toy_columns()
        z = z.copy()
        t = t.copy()
        z[0], t[0] = 0.0, 1.0
        with pytest.raises(OneSidedViolation):
            ObservedSample.validate(x, z, t, y, p)

    def test_propensity_bounds(self):
        x, z, t, y, p = toy_columns()
        for bad_value in (0.0, 1.0, 0.001, np.nan):
            bad = p.copy()
            bad[0] = bad_value
            with pytest.raises(PropensityOutOfBounds):
                ObservedSample.validate(x, z, t, y, bad)

    def test_scalar_propensity_broadcast(self):
        x, z, t, y, _ = toy_columns()
        s = ObservedSample.validate(x, z, t, y, 0.4)
        np.testing.assert_allclose(s.p, 0.4)

    def test_immutability(self):
        x, z, t, y, p = toy_columns()
        s = ObservedSample.validate(x, z, t, y, p)
        with pytest.raises(ValueError):
            s.y[0] = 99.0
        # and the source arrays are copied, not aliased
        y[0] = 123.0
        assert s.y[0] != 123.0

    def test_standardize_continuous_columns_only(self):
        x, z, t, y, p = toy_columns()
        x = x.copy()
        x[:, 1] = z  # binary column must be left alone
        s = validate_sample(x, z, t, y, p, standardize=True)
        assert abs(s.x[:, 0].mean()) < 1e-12
        assert abs(s.x[:, 0].std(ddof=1) - 1.0) < 1e-12
        np.testing.assert_array_equal(s.x[:, 1], z)

    def test_subset_preserves_rows(self):
        x, z, t, y, p = toy_columns()
        s = ObservedSample.validate(x, z, t, y, p)
        sub = s.subset(np.array([2, 5]))
        assert sub.n == 2
        np.testing.assert_array_equal(sub.y, s.y[[2, 5]])


class TestEstimandSpec:
    def test_mean_u_is_residual(self):
        spec = EstimandSpec.mean()
        np.testing.assert_allclose(u_value(spec, [1.0, 3.0], 2.0), [-1.0, 1.0])

    def test_quantile_u_is_centered_indicator(self):
        spec = EstimandSpec.quantile(0.25)
        np.testing.assert_allclose(u_value(spec, [1.0, 3.0], 2.0), [0.75, -0.25])

    def test_alpha_bounds(self):
        with pytest.raises(ValueError):
            EstimandSpec.quantile(0.0)
        with pytest.raises(ValueError):
            EstimandSpec.quantile(1.0)
        with pytest.raises(ValueError):
            EstimandSpec(kind="mean", alpha=0.3)
        with pytest.raises(ValueError):
            EstimandSpec(kind="median")

    def test_mean_u_nonincreasing_quantile_u_nondecreasing_in_tau(self):
        # direction of monotonicity in tau differs by construction:
        # y - tau falls while 1{y <= tau} - alpha rises with tau
        y = np.array([0.3, 1.7, 2.2])
        taus = np.linspace(-1.0, 4.0, 23)
        mean_vals = np.array([u_value(EstimandSpec.mean(), y, t) for t in taus])
        q_vals = np.array([u_value(EstimandSpec.quantile(0.4), y, t) for t in taus])
        assert np.all(np.diff(mean_vals, axis=0) <= 0)
        assert np.all(np.diff(q_vals, axis=0) >= 0)


class TestControlWeights:
    def test_formula(self):
        x, z, t, y, p = toy_columns()
        s = ObservedSample.validate(x, z, t, y, p)
        expected = (1 - z) / (1 - p) - (z - t) / p
        np.testing.assert_allclose(control_weights(s), expected)

    def test_weight_sum_identity_constant_p(self):
        # for constant p the weight sum collapses to counts:
        # sum(w0) = n_{z=0}/(1-p) - (n_{z=1} - n_{t=1})/p
        x, z, t, y, p = toy_columns(n=200, seed=3)
        s = ObservedSample.validate(x, z, t, y, p)
        lhs = control_weights(s).sum()
        rhs = (1 - z).sum() / 0.5 - (z.sum() - t.sum()) / 0.5
        assert abs(lhs - rhs) < 1e-9


class TestCausalEstimate:
    def test_ci_uses_normal_quantile(self):
        est = CausalEstimate.from_components(5.0, 2.0, 0.5, 0.95, 100, "Simple")
        assert est.tau == pytest.approx(3.0)
        half = 1.959963984540054 * 0.5
        assert est.ci_lower == pytest.approx(3.0 - half)
        assert est.ci_upper == pytest.approx(3.0 + half)

    def test_level_changes_width(self):
        wide = CausalEstimate.from_components(1.0, 0.0, 1.0, 0.99, 10, "m")
        narrow = CausalEstimate.from_components(1.0, 0.0, 1.0, 0.80, 10, "m")
        assert (wide.ci_upper - wide.ci_lower) > (narrow.ci_upper - narrow.ci_lower)
