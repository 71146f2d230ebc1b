"""Cross-fitted efficient estimator built on the augmented estimating equations.

Each equation is the simple one plus an augmentation term proportional to
(z - p), built from nuisance predictions fitted on the complementary fold.
The scalar inverse-slope factor multiplies both terms of each equation, so
root finding proceeds on the factor-free form; the factors re-enter only in
the influence-function variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import DegenerateWeights, NoCrossing, SingularDenominator
from .learners import NuisancePredictors
from .model import (
    CausalEstimate,
    EstimandSpec,
    ObservedSample,
    control_weights,
    u_value,
)
from .simple import (
    compute_derivative_matrices,
    influence_values,
    solve_tau0_simple,
    solve_tau1_simple,
)

_BISECT_TOL = 1e-10


@dataclass(frozen=True)
class CrossFitPlan:
    """Partition of {0..n-1} into k folds of near-equal size.

    mode "sequential" takes contiguous blocks (the first fold has floor(n/k)
    rows); mode "random" permutes rows first with the given seed.
    k = 1 disables sample splitting: nuisances are fitted and the equations
    solved on the full sample, as appropriate for the no-covariate case.
    """

    n: int
    k: int = 2
    mode: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.n < self.k:
            raise ValueError("need n >= k >= 1")
        if self.mode not in ("sequential", "random"):
            raise ValueError(f"unknown fold mode {self.mode!r}")

    def folds(self) -> List[np.ndarray]:
        if self.mode == "random":
            order = np.random.default_rng(np.random.SeedSequence([self.seed, 11])).permutation(self.n)
        else:
            order = np.arange(self.n)
        base = self.n // self.k
        sizes = [base] * self.k
        for i in range(self.n - base * self.k):
            sizes[-(i + 1)] += 1  # remainder goes to the later folds
        out = []
        start = 0
        for size in sizes:
            out.append(np.sort(order[start : start + size]))
            start += size
        return out


@dataclass(frozen=True)
class EfficientDiagnostics:
    fold_tau1: List[float]
    fold_tau0: List[float]
    fold_a1: List[float]
    fold_a0: List[float]
    residual_tau1: float
    residual_tau0: float
    eif_mean: float
    se_tau_refreshed_a: float
    learner: str
    nuisance_metadata: list = field(default_factory=list)


def _bisect(g: Callable[[float], float], lo: float, hi: float, tol: float = _BISECT_TOL) -> float:
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        raise NoCrossing("no sign change on the bracketing interval")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tau1_equation(
    pred: NuisancePredictors, s: ObservedSample, spec: EstimandSpec, tau: float
) -> float:
    """Factor-free tau1 equation value (mean over the evaluation fold)."""
    q = pred.q_hat(s.x)
    aug = pred.mu1_hat(s.x, tau) * q * (s.z - s.p) / s.p
    return float(np.mean(-u_value(spec, s.y, tau) * s.t / s.p + aug))


def tau0_equation(
    pred: NuisancePredictors, s: ObservedSample, spec: EstimandSpec, tau: float
) -> float:
    """Factor-free tau0 equation value (mean over the evaluation fold)."""
    q = pred.q_hat(s.x)
    aug = (
        pred.mu3_hat(s.x, tau) / (1.0 - s.p) + pred.mu2_hat(s.x, tau) * (1.0 - q) / s.p
    ) * (s.z - s.p)
    return float(np.mean(u_value(spec, s.y, tau) * control_weights(s) + aug))


def solve_tau1_efficient(
    pred: NuisancePredictors,
    s: ObservedSample,
    spec: EstimandSpec,
    a1: float = 1.0,
    use_closed_form: bool = True,
) -> float:
    """Solve the augmented tau1 equation on the evaluation fold.

    The scalar a1 multiplies the whole equation and cancels from the root;
    it is accepted for interface symmetry.  The mean-estimand closed form is
    validated against bisection in the test suite.
    """
    if spec.is_mean and use_closed_form:
        # the equation is affine in tau (u is linear and every mu predictor
        # is affine in tau), so two evaluations determine the root exactly
        g0 = tau1_equation(pred, s, spec, 0.0)
        g1 = tau1_equation(pred, s, spec, 1.0)
        slope = g1 - g0
        if abs(slope) < 1e-12:
            raise SingularDenominator("tau1 equation has zero slope in tau")
        return -g0 / slope
    lo, hi = float(s.y.min()) - 1.0, float(s.y.max()) + 1.0
    return _bisect(lambda tau: tau1_equation(pred, s, spec, tau), lo, hi)


def solve_tau0_efficient(
    pred: NuisancePredictors,
    s: ObservedSample,
    spec: EstimandSpec,
    a0: float = 1.0,
    use_closed_form: bool = True,
) -> float:
    """Solve the augmented tau0 equation on the evaluation fold."""
    if spec.is_mean and use_closed_form:
        g0 = tau0_equation(pred, s, spec, 0.0)
        g1 = tau0_equation(pred, s, spec, 1.0)
        slope = g1 - g0
        if abs(slope) < 1e-12:
            raise DegenerateWeights("tau0 equation has zero slope in tau")
        return -g0 / slope
    lo, hi = float(s.y.min()) - 1.0, float(s.y.max()) + 1.0
    return _bisect(lambda tau: tau0_equation(pred, s, spec, tau), lo, hi)


def eif_variance(
    s: ObservedSample,
    spec: EstimandSpec,
    tau1: float,
    tau0: float,
    q: np.ndarray,
    m1: np.ndarray,
    m2: np.ndarray,
    m3: np.ndarray,
    a1,
    a0,
) -> float:
    """Empirical second moment of the efficient influence function.

    q, m1, m2, m3 are each observation's out-of-fold nuisance predictions at
    (tau1, tau0); a1, a0 may be scalars or per-observation fold-level arrays.
    Returns the variance estimate; the standard error is sqrt(variance / n).
    """
    phi = eif_values(s, spec, tau1, tau0, q, m1, m2, m3, a1, a0)
    return float(np.mean(phi**2))


def eif_values(s, spec, tau1, tau0, q, m1, m2, m3, a1, a0) -> np.ndarray:
    a1 = np.asarray(a1, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    phi1 = a1 * m1 * q / s.p + a0 * (m3 / (1.0 - s.p) + m2 * (1.0 - q) / s.p)
    w0 = control_weights(s)
    phi_s = -a1 * u_value(spec, s.y, tau1) * s.t / s.p + a0 * u_value(spec, s.y, tau0) * w0
    return phi1 * (s.z - s.p) + phi_s


def efficient_estimate(
    s: ObservedSample,
    spec: EstimandSpec,
    learner,
    plan: Optional[CrossFitPlan] = None,
    level: float = 0.95,
    seed: Optional[int] = None,
    method_label: str = "Efficient",
) -> CausalEstimate:
    """Cross-fitted efficient estimate.

    For each fold the learner is fitted on the complementary rows together
    with the inverse-slope factors (at the full-sample simple initial tau);
    the augmented equations are then solved on the fold, and fold solutions
    are averaged.  The variance uses each observation's out-of-fold fit.
    """
    plan = plan or CrossFitPlan(n=s.n, k=2, mode="random", seed=0 if seed is None else seed)
    if plan.n != s.n:
        raise ValueError("plan size does not match sample size")
    tau1_init = solve_tau1_simple(s, spec)
    tau0_init = solve_tau0_simple(s, spec)

    folds = plan.folds()
    fold_tau1, fold_tau0, fold_a1, fold_a0 = [], [], [], []
    preds: List[NuisancePredictors] = []
    fit_samples = []
    eval_samples = []
    for k, eval_idx in enumerate(folds):
        if plan.k == 1:
            fit_s = s
        else:
            comp = np.concatenate([folds[j] for j in range(plan.k) if j != k])
            fit_s = s.subset(np.sort(comp))
        eval_s = s.subset(eval_idx)
        pred = learner.fit(fit_s, spec, tau1_init, tau0_init, seed=seed)
        deriv = compute_derivative_matrices(fit_s, spec, tau1_init, tau0_init)
        fold_tau1.append(solve_tau1_efficient(pred, eval_s, spec, deriv.a1))
        fold_tau0.append(solve_tau0_efficient(pred, eval_s, spec, deriv.a0))
        fold_a1.append(deriv.a1)
        fold_a0.append(deriv.a0)
        preds.append(pred)
        fit_samples.append(fit_s)
        eval_samples.append(eval_s)

    tau1 = float(np.mean(fold_tau1))
    tau0 = float(np.mean(fold_tau0))

    # out-of-fold nuisance predictions, stitched back to the original row order
    n = s.n
    q = np.empty(n)
    m1 = np.empty(n)
    m2 = np.empty(n)
    m3 = np.empty(n)
    a1_arr = np.empty(n)
    a0_arr = np.empty(n)
    for k, eval_idx in enumerate(folds):
        xs = eval_samples[k].x
        q[eval_idx] = preds[k].q_hat(xs)
        m1[eval_idx] = preds[k].mu1_hat(xs, tau1)
        m2[eval_idx] = preds[k].mu2_hat(xs, tau0)
        m3[eval_idx] = preds[k].mu3_hat(xs, tau0)
        a1_arr[eval_idx] = fold_a1[k]
        a0_arr[eval_idx] = fold_a0[k]

    phi = eif_values(s, spec, tau1, tau0, q, m1, m2, m3, a1_arr, a0_arr)
    se = float(np.sqrt(np.mean(phi**2) / n))

    # alternative variance with the slope factors refreshed at the final tau
    ra1 = np.empty(n)
    ra0 = np.empty(n)
    for k, eval_idx in enumerate(folds):
        deriv = compute_derivative_matrices(fit_samples[k], spec, tau1, tau0)
        ra1[eval_idx] = deriv.a1
        ra0[eval_idx] = deriv.a0
    phi_ref = eif_values(s, spec, tau1, tau0, q, m1, m2, m3, ra1, ra0)
    se_ref = float(np.sqrt(np.mean(phi_ref**2) / n))

    res1 = float(np.mean([tau1_equation(preds[k], eval_samples[k], spec, fold_tau1[k]) for k in range(plan.k)]))
    res0 = float(np.mean([tau0_equation(preds[k], eval_samples[k], spec, fold_tau0[k]) for k in range(plan.k)]))

    diag = EfficientDiagnostics(
        fold_tau1=[float(v) for v in fold_tau1],
        fold_tau0=[float(v) for v in fold_tau0],
        fold_a1=[float(v) for v in fold_a1],
        fold_a0=[float(v) for v in fold_a0],
        residual_tau1=res1,
        residual_tau0=res0,
        eif_mean=float(np.mean(phi)),
        se_tau_refreshed_a=se_ref,
        learner=getattr(learner, "label", type(learner).__name__),
        nuisance_metadata=[p.metadata for p in preds],
    )
    return CausalEstimate.from_components(
        tau1, tau0, se, level, n, method_label, diagnostics={"efficient": diag}
    )


def solve_robust(
    s: ObservedSample,
    spec: EstimandSpec,
    phi: Callable[[np.ndarray], np.ndarray],
    level: float = 0.95,
) -> CausalEstimate:
    """Estimator from the robust family: simple equations augmented by
    phi(x) * (z - p) with a user-chosen phi returning an (n, 2) array whose
    columns augment the tau1 and tau0 equations respectively."""
    tau1_init = solve_tau1_simple(s, spec)
    tau0_init = solve_tau0_simple(s, spec)
    deriv = compute_derivative_matrices(s, spec, tau1_init, tau0_init)
    phi_vals = np.atleast_2d(np.asarray(phi(s.x), dtype=float))
    if phi_vals.shape != (s.n, 2):
        raise ValueError(f"phi must return shape ({s.n}, 2)")
    zp = s.z - s.p
    c1 = float(np.sum(phi_vals[:, 0] * zp))
    c0 = float(np.sum(phi_vals[:, 1] * zp))

    if spec.is_mean:
        w1 = s.t / s.p
        tau1 = float((np.sum(w1 * s.y) - c1 / deriv.a1) / np.sum(w1))
        w0 = control_weights(s)
        denom = float(np.sum(w0))
        if abs(denom) < 1e-12:
            raise DegenerateWeights("sum of tau0 weights is numerically zero")
        tau0 = float((np.sum(w0 * s.y) + c0 / deriv.a0) / denom)
    else:
        lo, hi = float(s.y.min()) - 1.0, float(s.y.max()) + 1.0
        tau1 = _bisect(
            lambda tau: float(-deriv.a1 * np.sum(u_value(spec, s.y, tau) * s.t / s.p) + c1), lo, hi
        )
        w0 = control_weights(s)
        tau0 = _bisect(
            lambda tau: float(deriv.a0 * np.sum(u_value(spec, s.y, tau) * w0) + c0), lo, hi
        )

    deriv_final = compute_derivative_matrices(s, spec, tau1, tau0)
    phi_s = influence_values(s, spec, tau1, tau0, deriv_final.a1, deriv_final.a0)
    phi_full = (phi_vals[:, 0] + phi_vals[:, 1]) * zp + phi_s
    se = float(np.sqrt(np.mean(phi_full**2) / s.n))
    return CausalEstimate.from_components(
        tau1,
        tau0,
        se,
        level,
        s.n,
        "Robust",
        diagnostics={"a1": deriv_final.a1, "a0": deriv_final.a0},
    )
