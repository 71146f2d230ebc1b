"""Simulation scenarios, integration ground truths, Monte Carlo harness.

Both scenarios draw each covariate from Uniform(1, 5 - sqrt(d)), assign with
p(x) = sin(pi x0)/4 + 1/2 and comply with q(x) = cos(2 pi x0)/4 + 1/2 where
x0 is the covariate sum, so the law of x0 is a shifted, scaled Irwin-Hall
distribution and the target effect reduces to one-dimensional integrals.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad

from .efficient import CrossFitPlan, efficient_estimate
from .errors import QuadratureFailure, ReplicationBudgetExceeded
from .learners import KernelLearner, MlpLearner, OracleLearner
from .mlp import MlpConfig
from .model import CausalEstimate, EstimandSpec, ObservedSample
from .simple import simple_estimate

SCENARIO_DIMS = {1: (1, 4, 9), 2: (4, 9)}


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: int
    d: int
    n: int

    def __post_init__(self):
        if self.scenario not in SCENARIO_DIMS:
            raise ValueError("scenario must be 1 or 2")
        if self.d not in SCENARIO_DIMS[self.scenario]:
            raise ValueError(f"scenario {self.scenario} supports d in {SCENARIO_DIMS[self.scenario]}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def support_width(self) -> float:
        return 4.0 - math.sqrt(self.d)


def propensity(x0):
    return np.sin(np.pi * np.asarray(x0, dtype=float)) / 4.0 + 0.5


def compliance(x0):
    return np.cos(2.0 * np.pi * np.asarray(x0, dtype=float)) / 4.0 + 0.5


def irwin_hall_pdf(d: int, u: float) -> float:
    """Density of the sum of d iid Uniform(0,1) draws.

    The alternating sum is accumulated with exact (fsum) summation: for
    d = 9 individual terms reach ~1e5 near u = d and naive summation loses
    digits to cancellation.
    """
    u = float(u)
    if u < 0.0 or u > d:
        return 0.0
    terms = [
        (-1.0) ** k * math.comb(d, k) * (u - k) ** (d - 1)
        for k in range(int(math.floor(u)) + 1)
        if u - k >= 0.0
    ]
    return math.fsum(terms) / math.factorial(d - 1)


def x0_density(spec: ScenarioSpec, x: float) -> float:
    """Density of the covariate sum x0 on [d, d(5 - sqrt(d))]."""
    c = spec.support_width
    return irwin_hall_pdf(spec.d, (x - spec.d) / c) / c


def _complier_moments(spec: ScenarioSpec) -> tuple:
    lo, hi = float(spec.d), spec.d * (5.0 - math.sqrt(spec.d))

    def integrate(f):
        val, err = quad(f, lo, hi, epsabs=1e-9, epsrel=1e-10, limit=500)
        if not np.isfinite(val) or err > 1e-6:
            raise QuadratureFailure(f"integral error estimate {err}")
        return val

    den = integrate(lambda x: compliance(x) * x0_density(spec, x))
    ex = integrate(lambda x: x * compliance(x) * x0_density(spec, x)) / den
    ex2 = integrate(lambda x: x * x * compliance(x) * x0_density(spec, x)) / den
    return ex, ex2


def true_tau(spec: ScenarioSpec) -> float:
    """Ground-truth complier average effect by adaptive quadrature."""
    ex, ex2 = _complier_moments(spec)
    if spec.scenario == 1:
        return 1.0 + 2.0 * ex
    return 2.0 + 3.0 * ex - 0.1 * ex2


def true_nuisances(spec: ScenarioSpec):
    """True (q, mu1, mu2, mu3) in the u-expectation convention of the learners.

    Defined for the mean estimand; the mu functions take (X, tau) and return
    the conditional outcome mean minus tau.
    """
    scen = spec.scenario

    def q_fn(X):
        return compliance(np.atleast_2d(X).sum(axis=1))

    def make(outcome_mean):
        def mu(X, tau):
            x0 = np.atleast_2d(X).sum(axis=1)
            return outcome_mean(x0) - tau
        return mu

    if scen == 1:
        mu1 = make(lambda x0: 2.0 + 4.0 * x0)
        mu2 = make(lambda x0: 1.0 + 2.0 * x0)
        mu3 = make(lambda x0: 1.0 + 2.0 * x0)
    else:
        mu1 = make(lambda x0: 4.0 + 6.0 * x0 + 0.1 * x0**2)
        mu2 = make(lambda x0: 1.0 + 2.0 * x0 + 0.2 * x0**2)
        mu3 = make(lambda x0: 1.0 + compliance(x0) + (2.0 + compliance(x0)) * x0 + 0.2 * x0**2)
    return q_fn, mu1, mu2, mu3


def generate_dataset(spec: ScenarioSpec, seed: int):
    """Draw one dataset; returns (ObservedSample, latents dict).

    Latents (w, y1, y0) are withheld from estimators and exist for oracle
    checks only.  Deterministic in (spec, seed).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    x = rng.uniform(1.0, 5.0 - math.sqrt(spec.d), size=(spec.n, spec.d))
    x0 = x.sum(axis=1)
    p = propensity(x0)
    q = compliance(x0)
    z = (rng.random(spec.n) < p).astype(float)
    w = (rng.random(spec.n) < q).astype(float)
    eps = rng.standard_normal(spec.n)
    if spec.scenario == 1:
        y1 = 2.0 + 4.0 * x0 + eps
        y0 = 1.0 + 2.0 * x0 + eps
    else:
        y1 = 2.0 + 2.0 * w + (4.0 + 2.0 * w) * x0 + 0.1 * x0**2 + eps
        y0 = 1.0 + w + (2.0 + w) * x0 + 0.2 * x0**2 + eps
    t = z * w
    y = t * y1 + (1.0 - t) * y0
    sample = ObservedSample.validate(x, z, t, y, p)
    return sample, {"w": w, "y1": y1, "y0": y0}


KNOWN_METHODS = ("simple", "eff-kernel", "eff-mlp", "eff-oracle")


def make_estimator(
    method: str,
    spec: ScenarioSpec,
    estimand: Optional[EstimandSpec] = None,
    n_folds: int = 2,
    split_mode: str = "random",
    mlp_config: Optional[MlpConfig] = None,
    level: float = 0.95,
) -> Callable[[ObservedSample, int], CausalEstimate]:
    """Bind a method name to a (sample, seed) -> estimate callable."""
    estimand = estimand or EstimandSpec.mean()

    if method == "simple":
        return lambda s, seed: simple_estimate(s, estimand, level=level)

    if method == "eff-kernel":
        learner = KernelLearner()
        label = "Eff-kernel"
    elif method == "eff-mlp":
        learner = MlpLearner(mlp_config)
        label = "Eff-NN"
    elif method == "eff-oracle":
        learner = OracleLearner(*true_nuisances(spec))
        label = "Eff-oracle"
    else:
        raise ValueError(f"unknown method {method!r}")

    def run(s: ObservedSample, seed: int) -> CausalEstimate:
        plan = CrossFitPlan(n=s.n, k=n_folds, mode=split_mode, seed=seed)
        return efficient_estimate(
            s, estimand, learner, plan=plan, level=level, seed=seed, method_label=label
        )

    return run


@dataclass(frozen=True)
class McRow:
    method: str
    mean: float
    bias: float
    sd: Optional[float]
    rmse: float
    sd_hat: Optional[float]
    coverage: Optional[float]
    failures: int


@dataclass(frozen=True)
class McReport:
    rows: List[McRow]
    replications: int
    truth: float
    runtime_seconds: float
    estimates: dict = field(default_factory=dict)  # method -> per-replication taus

    def to_text(self) -> str:
        header = f"{'Method':<12}{'Mean':>10}{'Bias':>10}{'SD':>8}{'RMSE':>8}{'SD_hat':>8}{'cvg95':>7}{'fail':>6}"
        lines = [f"truth = {self.truth:.4f}   R = {self.replications}", header]
        for r in self.rows:
            sd = f"{r.sd:.3f}" if r.sd is not None else "-"
            sd_hat = f"{r.sd_hat:.3f}" if r.sd_hat is not None else "-"
            cvg = f"{r.coverage:.3f}" if r.coverage is not None else "-"
            lines.append(
                f"{r.method:<12}{r.mean:>10.4f}{r.bias:>10.4f}{sd:>8}{r.rmse:>8.3f}{sd_hat:>8}{cvg:>7}{r.failures:>6}"
            )
        return "\n".join(lines)

    def to_csv_rows(self) -> List[List[str]]:
        rows = [["method", "mean", "bias", "sd", "rmse", "sd_hat", "coverage", "failures"]]
        for r in self.rows:
            rows.append(
                [
                    r.method,
                    repr(r.mean),
                    repr(r.bias),
                    "" if r.sd is None else repr(r.sd),
                    repr(r.rmse),
                    "" if r.sd_hat is None else repr(r.sd_hat),
                    "" if r.coverage is None else repr(r.coverage),
                    str(r.failures),
                ]
            )
        return rows


def _one_replication(spec, methods, estimators, base_seed, idx, truth):
    child = int(np.random.SeedSequence([int(base_seed), int(idx)]).generate_state(1)[0])
    sample, _ = generate_dataset(spec, child)
    out = {}
    for method in methods:
        try:
            est = estimators[method](sample, child)
            out[method] = (est.tau, est.se_tau, float(est.ci_lower <= truth <= est.ci_upper))
        except Exception as exc:  # recorded against the failure budget
            out[method] = ("fail", type(exc).__name__, 0.0)
    return idx, out


def run_monte_carlo(
    spec: ScenarioSpec,
    methods: Sequence[str],
    replications: int,
    base_seed: int,
    workers: int = 1,
    estimand: Optional[EstimandSpec] = None,
    n_folds: int = 2,
    split_mode: str = "random",
    mlp_config: Optional[MlpConfig] = None,
    failure_budget: float = 0.01,
) -> McReport:
    """Seeded Monte Carlo study; deterministic in (base_seed, R) for any
    worker count.  Aborts if any method fails on more than ``failure_budget``
    of the replications."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    methods = list(methods)
    estimators = {
        m: make_estimator(m, spec, estimand=estimand, n_folds=n_folds, split_mode=split_mode, mlp_config=mlp_config)
        for m in methods
    }
    truth = true_tau(spec)
    start = time.perf_counter()
    if workers > 1:
        results = Parallel(n_jobs=workers)(
            delayed(_one_replication)(spec, methods, estimators, base_seed, i, truth)
            for i in range(replications)
        )
    else:
        results = [
            _one_replication(spec, methods, estimators, base_seed, i, truth)
            for i in range(replications)
        ]
    results.sort(key=lambda r: r[0])
    runtime = time.perf_counter() - start

    rows = []
    estimates = {}
    allowed = max(0, int(math.floor(failure_budget * replications)))
    for method in methods:
        taus, sds, cvgs = [], [], []
        failures = 0
        for _, rep in results:
            val = rep[method]
            if val[0] == "fail":
                failures += 1
            else:
                taus.append(val[0])
                sds.append(val[1])
                cvgs.append(val[2])
        if failures > allowed:
            raise ReplicationBudgetExceeded(
                f"method {method} failed {failures}/{replications} replications"
            )
        taus_arr = np.asarray(taus)
        r = taus_arr.size
        mean = float(taus_arr.mean())
        bias = mean - truth
        sd = float(taus_arr.std(ddof=1)) if r > 1 else None
        rmse = float(np.sqrt(np.mean((taus_arr - truth) ** 2)))
        rows.append(
            McRow(
                method=method,
                mean=mean,
                bias=bias,
                sd=sd,
                rmse=rmse,
                sd_hat=float(np.mean(sds)) if sds else None,
                coverage=float(np.mean(cvgs)) if cvgs else None,
                failures=failures,
            )
        )
        estimates[method] = taus_arr
    return McReport(
        rows=rows,
        replications=replications,
        truth=truth,
        runtime_seconds=runtime,
        estimates=estimates,
    )
