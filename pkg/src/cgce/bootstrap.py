"""Nonparametric bootstrap protocol for observational analyses.

Draws row resamples with replacement, reruns the configured estimators and
summarizes with outlier-robust statistics: median point estimate, MAD-based
standard deviation (1.4826 * MAD) and the median of per-resample asymptotic
standard deviations.  Coverage is measured against the full-data estimate.
Mean-based summaries are reported alongside so the reader can compare.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from joblib import Parallel, delayed

from .errors import ReplicationBudgetExceeded
from .model import CausalEstimate, ObservedSample


def mad_sd(values: np.ndarray) -> float:
    """Robust scale: 1.4826 * median absolute deviation from the median."""
    values = np.asarray(values, dtype=float)
    med = np.median(values)
    return float(1.4826 * np.median(np.abs(values - med)))


@dataclass(frozen=True)
class BootstrapRow:
    method: str
    full_estimate: float
    full_se: float
    median: float
    mean: float
    mad_sd: Optional[float]
    sd: Optional[float]
    median_sd_hat: Optional[float]
    coverage: Optional[float]
    failures: int


@dataclass(frozen=True)
class BootstrapReport:
    rows: List[BootstrapRow]
    replications: int
    runtime_seconds: float

    def to_text(self) -> str:
        header = (
            f"{'Method':<12}{'Full':>9}{'Median':>9}{'Mean':>9}{'MAD-SD':>9}{'SD':>8}"
            f"{'med SDh':>9}{'cvg95':>7}{'fail':>6}"
        )
        lines = [f"bootstrap B = {self.replications}", header]
        for r in self.rows:
            fmt = lambda v, w: (f"{v:>{w}.3f}" if v is not None else " " * (w - 1) + "-")
            lines.append(
                f"{r.method:<12}{r.full_estimate:>9.3f}{r.median:>9.3f}{r.mean:>9.3f}"
                f"{fmt(r.mad_sd, 9)}{fmt(r.sd, 8)}{fmt(r.median_sd_hat, 9)}{fmt(r.coverage, 7)}{r.failures:>6}"
            )
        return "\n".join(lines)

    def to_csv_rows(self) -> List[List[str]]:
        rows = [
            [
                "method",
                "full_estimate",
                "full_se",
                "median",
                "mean",
                "mad_sd",
                "sd",
                "median_sd_hat",
                "coverage",
                "failures",
            ]
        ]
        for r in self.rows:
            opt = lambda v: "" if v is None else repr(v)
            rows.append(
                [
                    r.method,
                    repr(r.full_estimate),
                    repr(r.full_se),
                    repr(r.median),
                    repr(r.mean),
                    opt(r.mad_sd),
                    opt(r.sd),
                    opt(r.median_sd_hat),
                    opt(r.coverage),
                    str(r.failures),
                ]
            )
        return rows


def _one_resample(sample, estimators, methods, base_seed, idx, truths):
    rng = np.random.default_rng(np.random.SeedSequence([int(base_seed), int(idx), 5]))
    rows = rng.integers(0, sample.n, size=sample.n)
    resample = sample.subset(rows)
    child = int(np.random.SeedSequence([int(base_seed), int(idx), 6]).generate_state(1)[0])
    out = {}
    for method in methods:
        try:
            est = estimators[method](resample, child)
            covered = float(est.ci_lower <= truths[method] <= est.ci_upper)
            out[method] = (est.tau, est.se_tau, covered)
        except Exception as exc:
            out[method] = ("fail", type(exc).__name__, 0.0)
    return idx, out


def run_bootstrap(
    sample: ObservedSample,
    estimators: Dict[str, Callable[[ObservedSample, int], CausalEstimate]],
    replications: int,
    base_seed: int,
    workers: int = 1,
    failure_budget: float = 0.02,
) -> BootstrapReport:
    if replications < 1:
        raise ValueError("replications must be >= 1")
    methods = list(estimators)
    full = {m: estimators[m](sample, int(base_seed)) for m in methods}
    truths = {m: full[m].tau for m in methods}
    start = time.perf_counter()
    if workers > 1:
        results = Parallel(n_jobs=workers)(
            delayed(_one_resample)(sample, estimators, methods, base_seed, i, truths)
            for i in range(replications)
        )
    else:
        results = [
            _one_resample(sample, estimators, methods, base_seed, i, truths)
            for i in range(replications)
        ]
    results.sort(key=lambda r: r[0])
    runtime = time.perf_counter() - start

    allowed = max(0, int(math.floor(failure_budget * replications)))
    rows = []
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
                f"method {method} failed {failures}/{replications} resamples"
            )
        taus_arr = np.asarray(taus)
        many = taus_arr.size > 1
        rows.append(
            BootstrapRow(
                method=method,
                full_estimate=full[method].tau,
                full_se=full[method].se_tau,
                median=float(np.median(taus_arr)),
                mean=float(taus_arr.mean()),
                mad_sd=mad_sd(taus_arr) if many else None,
                sd=float(taus_arr.std(ddof=1)) if many else None,
                median_sd_hat=float(np.median(sds)) if sds else None,
                coverage=float(np.mean(cvgs)) if cvgs else None,
                failures=failures,
            )
        )
    return BootstrapReport(rows=rows, replications=replications, runtime_seconds=runtime)
