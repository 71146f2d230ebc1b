"""Core data model: observed samples, estimand specification, estimates.

The observed data are (x, z, t, y) with a known per-row assignment
probability p, following the one-sided noncompliance structure t = z * w
where the compliance status w is latent whenever z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import (
    LengthMismatch,
    NonBinaryAssignment,
    OneSidedViolation,
    PropensityOutOfBounds,
)

DEFAULT_PROPENSITY_CLIP = 0.01


def _as_float_array(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise LengthMismatch(f"column '{name}' must be one-dimensional")
    return a


@dataclass(frozen=True)
class ObservedSample:
    """Validated (x, z, t, y, p) dataset.

    Use :meth:`validate` to construct from raw columns; the bare constructor
    performs no checking and is reserved for internal subsetting.
    """

    x: np.ndarray  # (n, d) covariates
    z: np.ndarray  # (n,) binary assignment
    t: np.ndarray  # (n,) binary treatment received
    y: np.ndarray  # (n,) outcomes
    p: np.ndarray  # (n,) known assignment probabilities
    eps: float = DEFAULT_PROPENSITY_CLIP

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @classmethod
    def validate(
        cls,
        x,
        z,
        t,
        y,
        p,
        eps: float = DEFAULT_PROPENSITY_CLIP,
        standardize: bool = False,
    ) -> "ObservedSample":
        """Validate raw columns and return an immutable sample.

        Raises LengthMismatch, NonBinaryAssignment, OneSidedViolation or
        PropensityOutOfBounds on invalid input.  When ``standardize`` is set,
        every covariate column with more than two distinct values is centered
        and scaled to unit standard deviation.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] == 1 and x.shape[1] > 1 and len(np.asarray(z).ravel()) == x.shape[1]:
            x = x.T
        z = _as_float_array(z, "z")
        t = _as_float_array(t, "t")
        y = _as_float_array(y, "y")
        p = np.asarray(p, dtype=float)
        if p.ndim == 0:
            p = np.full_like(y, float(p))
        n = y.shape[0]
        if n < 1:
            raise LengthMismatch("sample must contain at least one row")
        for name, col in (("z", z), ("t", t), ("p", p)):
            if col.shape[0] != n:
                raise LengthMismatch(f"column '{name}' has length {col.shape[0]}, expected {n}")
        if x.shape[0] != n:
            raise LengthMismatch(f"x has {x.shape[0]} rows, expected {n}")
        if not np.all(np.isin(z, (0.0, 1.0))):
            raise NonBinaryAssignment("z must be 0/1")
        if not np.all(np.isin(t, (0.0, 1.0))):
            raise NonBinaryAssignment("t must be 0/1")
        if np.any((t == 1.0) & (z == 0.0)):
            raise OneSidedViolation("t = 1 requires z = 1 under one-sided noncompliance")
        if np.any(~np.isfinite(p)) or np.any(p < eps) or np.any(p > 1.0 - eps):
            raise PropensityOutOfBounds(f"p must lie in [{eps}, {1 - eps}]")
        if standardize:
            x = x.copy()
            for j in range(x.shape[1]):
                if np.unique(x[:, j]).size > 2:
                    sd = x[:, j].std(ddof=1) if n > 1 else 0.0
                    if sd > 0:
                        x[:, j] = (x[:, j] - x[:, j].mean()) / sd
        sample = cls(x=x.copy(), z=z.copy(), t=t.copy(), y=y.copy(), p=p.copy(), eps=eps)
        for a in (sample.x, sample.z, sample.t, sample.y, sample.p):
            a.setflags(write=False)
        return sample

    def subset(self, idx: np.ndarray) -> "ObservedSample":
        """Row subset sharing validation status with the parent."""
        sub = ObservedSample(
            x=self.x[idx], z=self.z[idx], t=self.t[idx], y=self.y[idx], p=self.p[idx], eps=self.eps
        )
        for a in (sub.x, sub.z, sub.t, sub.y, sub.p):
            a.setflags(write=False)
        return sub


# validate_sample is the operation-style alias for ObservedSample.validate.
def validate_sample(x, z, t, y, p, eps: float = DEFAULT_PROPENSITY_CLIP, standardize: bool = False) -> ObservedSample:
    return ObservedSample.validate(x, z, t, y, p, eps=eps, standardize=standardize)


@dataclass(frozen=True)
class EstimandSpec:
    """Moment function selector: mean (u = y - tau) or quantile (u = 1{y <= tau} - alpha)."""

    kind: str  # "mean" | "quantile"
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("mean", "quantile"):
            raise ValueError(f"unknown estimand kind {self.kind!r}")
        if self.kind == "quantile":
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise ValueError("quantile estimand requires alpha in (0, 1)")
        elif self.alpha is not None:
            raise ValueError("mean estimand takes no alpha")

    @classmethod
    def mean(cls) -> "EstimandSpec":
        return cls(kind="mean")

    @classmethod
    def quantile(cls, alpha: float) -> "EstimandSpec":
        return cls(kind="quantile", alpha=alpha)

    @property
    def is_mean(self) -> bool:
        return self.kind == "mean"


def u_value(spec: EstimandSpec, y, tau):
    """Evaluate the moment function u(y, tau); vectorized over y."""
    y = np.asarray(y, dtype=float)
    if spec.is_mean:
        return y - tau
    return (y <= tau).astype(float) - spec.alpha


def control_weights(s: ObservedSample) -> np.ndarray:
    """Per-row weight (1-z)/(1-p) - (z-t)/p entering the tau0 equations."""
    return (1.0 - s.z) / (1.0 - s.p) - (s.z - s.t) / s.p


@dataclass(frozen=True)
class DerivativeMatrices:
    """Scalar inverse-slope factors of the two estimating equations.

    a1 inverts the empirical mean of (t/p) * du/dtau at tau1; a0 inverts the
    same construction with the control weights at tau0.  For the mean
    estimand du/dtau = -1, so a1 = -1/mean(t/p) analytically.
    """

    a1: float
    a0: float
    tau1: float
    tau0: float


@dataclass(frozen=True)
class CausalEstimate:
    """Point estimate with influence-function standard error and CI."""

    tau1: float
    tau0: float
    tau: float
    se_tau: float
    ci_lower: float
    ci_upper: float
    n_used: int
    method: str
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_components(
        cls,
        tau1: float,
        tau0: float,
        se_tau: float,
        level: float,
        n_used: int,
        method: str,
        diagnostics: Optional[dict] = None,
    ) -> "CausalEstimate":
        tau = tau1 - tau0
        zq = float(norm.ppf(0.5 + level / 2.0))
        return cls(
            tau1=tau1,
            tau0=tau0,
            tau=tau,
            se_tau=se_tau,
            ci_lower=tau - zq * se_tau,
            ci_upper=tau + zq * se_tau,
            n_used=n_used,
            method=method,
            diagnostics=diagnostics or {},
        )
