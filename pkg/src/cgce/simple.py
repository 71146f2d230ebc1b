"""Simple inverse-propensity estimator and its influence-function variance.

tau1 solves sum_i t_i u(y_i, tau) / p_i = 0 and tau0 solves
sum_i w0_i u(y_i, tau) = 0 with w0_i = (1-z_i)/(1-p_i) - (z_i-t_i)/p_i.
No nuisance regression is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateWeights,
    EmptyArm,
    NoCompliersObserved,
    NoCrossing,
    SingularDerivative,
)
from .model import (
    CausalEstimate,
    DerivativeMatrices,
    EstimandSpec,
    ObservedSample,
    control_weights,
    u_value,
)

_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class MarginalProbabilities:
    """Estimated marginal probabilities of compliance and assignment.

    rho_w is an inverse-propensity estimate and may numerically exceed 1;
    that is surfaced through :attr:`rho_w_exceeds_one` rather than rejected.
    """

    rho_w: float
    rho_z: float
    rho_11: float
    rho_01: float

    @property
    def rho_w_exceeds_one(self) -> bool:
        return self.rho_w > 1.0


def estimate_rho_w(s: ObservedSample) -> float:
    """P(W=1) estimated as the mean of t_i / p_i."""
    return float(np.mean(s.t / s.p))


def estimate_marginals(s: ObservedSample) -> MarginalProbabilities:
    return MarginalProbabilities(
        rho_w=estimate_rho_w(s),
        rho_z=float(np.mean(s.z)),
        rho_11=float(np.mean(s.t)),
        rho_01=float(np.mean((1.0 - s.t) * s.z)),
    )


def _weighted_quantile_nonneg(y: np.ndarray, w: np.ndarray, alpha: float) -> float:
    """Smallest tau where sum w_i (1{y_i<=tau} - alpha) turns >= 0; w_i >= 0."""
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cum = np.cumsum(w[order])
    target = alpha * cum[-1]
    hit = np.nonzero(cum >= target - 1e-12 * max(1.0, abs(target)))[0]
    return float(ys[hit[0]])


def _signed_step_root(y: np.ndarray, w: np.ndarray, alpha: float) -> float:
    """Root of the step function G(tau) = sum w_i (1{y_i<=tau} - alpha).

    Weights may be negative, so G is not monotone.  Candidates are the sign
    changes between consecutive jump points; among them the one with the
    smallest |G| just after the crossing wins, ties broken by smallest tau.
    """
    total = w.sum()
    uy, inv = np.unique(y, return_inverse=True)
    jump = np.zeros_like(uy)
    np.add.at(jump, inv, w)
    g = np.cumsum(jump) - alpha * total
    g_prev = np.concatenate(([-alpha * total], g[:-1]))
    sign = np.sign(np.where(np.abs(g) < 1e-12, 0.0, g))
    sign_prev = np.sign(np.where(np.abs(g_prev) < 1e-12, 0.0, g_prev))
    crossing = np.nonzero(sign != sign_prev)[0]
    if crossing.size == 0:
        raise NoCrossing("estimating step function never changes sign")
    residuals = np.abs(g[crossing])
    best = crossing[np.argmin(residuals)]  # argmin returns first min: smallest tau on ties
    return float(uy[best])


def solve_tau1_simple(s: ObservedSample, spec: EstimandSpec) -> float:
    """Zero of sum t_i u(y_i, tau) / p_i over tau."""
    if s.t.sum() == 0:
        raise NoCompliersObserved("no t = 1 rows; tau1 equation has no solution")
    w = s.t / s.p
    if spec.is_mean:
        return float(np.sum(w * s.y) / np.sum(w))
    mask = s.t == 1.0
    return _weighted_quantile_nonneg(s.y[mask], w[mask], spec.alpha)


def solve_tau0_simple(s: ObservedSample, spec: EstimandSpec) -> float:
    """Zero of sum w0_i u(y_i, tau) over tau, weights possibly negative."""
    w0 = control_weights(s)
    if spec.is_mean:
        denom = np.sum(w0)
        if abs(denom) < _SINGULAR_TOL:
            raise DegenerateWeights("sum of tau0 weights is numerically zero")
        return float(np.sum(w0 * s.y) / denom)
    mask = w0 != 0.0
    if not mask.any():
        raise DegenerateWeights("all tau0 weights vanish")
    return _signed_step_root(s.y[mask], w0[mask], spec.alpha)


def _silverman_bandwidth(values: np.ndarray) -> float:
    m = values.size
    sd = values.std(ddof=1) if m > 1 else 0.0
    if sd <= 0.0:
        sd = max(abs(float(values[0])) * 1e-3, 1e-3)
    return 1.06 * sd * m ** (-0.2)


def _kde_slope(y: np.ndarray, weights: np.ndarray, support: np.ndarray, tau: float) -> float:
    """Gaussian-kernel estimate of E[weight * du/dtau] for the quantile estimand."""
    h = _silverman_bandwidth(support)
    kern = np.exp(-0.5 * ((y - tau) / h) ** 2) / (h * np.sqrt(2.0 * np.pi))
    return float(np.mean(weights * kern))


def compute_derivative_matrices(
    s: ObservedSample, spec: EstimandSpec, tau1: float, tau0: float
) -> DerivativeMatrices:
    """Inverse slopes a1, a0 of the two estimating equations at (tau1, tau0).

    Mean: du/dtau = -1 so the slopes are -mean(t/p) and -mean(w0).  Quantile:
    du/dtau is a point mass at tau, estimated by a Gaussian kernel density of
    the weighted outcomes with Silverman's bandwidth.
    """
    w1 = s.t / s.p
    w0 = control_weights(s)
    if spec.is_mean:
        d1 = -float(np.mean(w1))
        d0 = -float(np.mean(w0))
    else:
        d1 = _kde_slope(s.y, w1, s.y[s.t == 1.0], tau1)
        d0 = _kde_slope(s.y, w0, s.y[w0 != 0.0], tau0)
    if abs(d1) < _SINGULAR_TOL:
        raise SingularDerivative("tau1 equation slope is numerically zero")
    if abs(d0) < _SINGULAR_TOL:
        raise SingularDerivative("tau0 equation slope is numerically zero")
    return DerivativeMatrices(a1=1.0 / d1, a0=1.0 / d0, tau1=tau1, tau0=tau0)


def influence_values(
    s: ObservedSample, spec: EstimandSpec, tau1: float, tau0: float, a1: float, a0: float
) -> np.ndarray:
    """Per-observation influence values of the simple estimator."""
    w0 = control_weights(s)
    return -a1 * u_value(spec, s.y, tau1) * s.t / s.p + a0 * u_value(spec, s.y, tau0) * w0


def equation_residuals(s: ObservedSample, spec: EstimandSpec, tau1: float, tau0: float) -> tuple:
    r1 = float(np.sum(s.t * u_value(spec, s.y, tau1) / s.p))
    r0 = float(np.sum(control_weights(s) * u_value(spec, s.y, tau0)))
    return r1, r0


def simple_estimate(
    s: ObservedSample, spec: EstimandSpec, level: float = 0.95
) -> CausalEstimate:
    """Assemble the simple estimator with its asymptotic standard error."""
    tau1 = solve_tau1_simple(s, spec)
    tau0 = solve_tau0_simple(s, spec)
    deriv = compute_derivative_matrices(s, spec, tau1, tau0)
    phi = influence_values(s, spec, tau1, tau0, deriv.a1, deriv.a0)
    se = float(np.sqrt(np.mean(phi**2) / s.n))
    r1, r0 = equation_residuals(s, spec, tau1, tau0)
    marginals = estimate_marginals(s)
    return CausalEstimate.from_components(
        tau1,
        tau0,
        se,
        level,
        s.n,
        "Simple",
        diagnostics={
            "residual_tau1": r1,
            "residual_tau0": r0,
            "a1": deriv.a1,
            "a0": deriv.a0,
            "rho_w": marginals.rho_w,
            "rho_w_exceeds_one": marginals.rho_w_exceeds_one,
        },
    )


def wald_no_covariate(s: ObservedSample) -> float:
    """Covariate-free ratio estimator: arm mean difference over compliance rate."""
    n_treat = s.z.sum()
    n_ctrl = (1.0 - s.z).sum()
    if n_treat == 0 or n_ctrl == 0:
        raise EmptyArm("both assignment arms must be nonempty")
    if s.t.sum() == 0:
        raise NoCompliersObserved("no treated units; compliance rate is zero")
    diff = s.y[s.z == 1.0].mean() - s.y[s.z == 0.0].mean()
    return float(diff / (s.t.sum() / n_treat))
