"""Nuisance learners: kernel regression, in-repo MLP, oracle and constant fits.

Every learner produces a :class:`NuisancePredictors` bundle with the four
fitted functions q_hat, mu1_hat, mu2_hat, mu3_hat.  The mu predictors return
the conditional expectation of u(Y, tau) *without* the inverse-slope factor;
callers apply that factor where the estimating equations need it.

Subgroup structure (fixed by the data model): q regresses t on x over
{z = 1}; mu1 over {z = 1, t = 1}; mu2 over {z = 1, t = 0}; mu3 over {z = 0}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EmptySubgroup
from .kernels import KernelSpec, default_bandwidth, product_kernel_matrix
from .mlp import Mlp, MlpConfig
from .model import EstimandSpec, ObservedSample


@dataclass(frozen=True)
class NuisancePredictors:
    """Fitted nuisance functions for one fold.

    q_hat(X) -> array in [0, 1]; mu*_hat(X, tau) -> array of conditional
    u-expectations.  All predictors are deterministic once fitted.
    """

    q_hat: Callable[[np.ndarray], np.ndarray]
    mu1_hat: Callable[[np.ndarray, float], np.ndarray]
    mu2_hat: Callable[[np.ndarray, float], np.ndarray]
    mu3_hat: Callable[[np.ndarray, float], np.ndarray]
    metadata: dict = field(default_factory=dict)


def _subgroups(fold: ObservedSample) -> dict:
    masks = {
        "q": fold.z == 1.0,
        "mu1": (fold.z == 1.0) & (fold.t == 1.0),
        "mu2": (fold.z == 1.0) & (fold.t == 0.0),
        "mu3": fold.z == 0.0,
    }
    for name, mask in masks.items():
        if not mask.any():
            raise EmptySubgroup(name)
    return masks


class _NWFit:
    """One Nadaraya-Watson regression with cached normalized query weights."""

    def __init__(self, x: np.ndarray, y: np.ndarray, spec: KernelSpec):
        self.x = x
        self.y = y
        self.spec = spec
        self.mean = float(y.mean())
        self._cache_key = None
        self._cache_ref = None  # keeps the cached query alive so id() stays unique
        self._cache_w = None

    def weights(self, query_x: np.ndarray) -> np.ndarray:
        key = (id(query_x), query_x.shape)
        if self._cache_key == key:
            return self._cache_w
        k = product_kernel_matrix(self.x, query_x, self.spec)
        denom = k.sum(axis=1)
        fallback = np.abs(denom) < self.spec.eta
        k = k / np.where(fallback, 1.0, denom)[:, None]
        if fallback.any():
            # underflowed rows revert to the subgroup's global mean
            k[fallback] = 1.0 / self.x.shape[0]
        self._cache_key, self._cache_ref, self._cache_w = key, query_x, k
        return k

    def predict(self, query_x: np.ndarray, values: Optional[np.ndarray] = None) -> np.ndarray:
        v = self.y if values is None else values
        return self.weights(query_x) @ v


class KernelLearner:
    """Product-kernel Nadaraya-Watson fits with the default bandwidth rule."""

    label = "kernel"

    def __init__(self, eta: float = 1e-8):
        self.eta = eta

    def fit(
        self,
        fold: ObservedSample,
        spec: EstimandSpec,
        tau1_init: float,
        tau0_init: float,
        seed: Optional[int] = None,
    ) -> NuisancePredictors:
        masks = _subgroups(fold)
        d = fold.d
        fits = {}
        for name, mask in masks.items():
            xs = fold.x[mask]
            target = fold.t[mask] if name == "q" else fold.y[mask]
            m = xs.shape[0]
            sigma = xs.std(axis=0, ddof=1) if m > 1 else np.ones(d)
            h = default_bandwidth(d, max(m, 2), np.where(sigma > 0, sigma, 1.0))
            fits[name] = _NWFit(xs, target, KernelSpec(d=d, h=h, eta=self.eta))

        def q_hat(X):
            return np.clip(fits["q"].predict(X), 0.0, 1.0)

        def make_mu(name):
            fit = fits[name]
            if spec.is_mean:
                def mu(X, tau):
                    return fit.predict(X) - tau
            else:
                alpha = spec.alpha
                def mu(X, tau):
                    return fit.weights(X) @ ((fit.y <= tau).astype(float) - alpha)
            return mu

        return NuisancePredictors(
            q_hat=q_hat,
            mu1_hat=make_mu("mu1"),
            mu2_hat=make_mu("mu2"),
            mu3_hat=make_mu("mu3"),
            metadata={
                "learner": self.label,
                "subgroup_sizes": {k: int(v.sum()) for k, v in masks.items()},
            },
        )


def fit_nuisances_kernel(
    fold: ObservedSample,
    spec: EstimandSpec,
    tau1_init: float = 0.0,
    tau0_init: float = 0.0,
    eta: float = 1e-8,
) -> NuisancePredictors:
    return KernelLearner(eta=eta).fit(fold, spec, tau1_init, tau0_init)


class MlpLearner:
    """From-scratch MLP fits; one network per nuisance target.

    For the quantile estimand the u targets are frozen at the initial tau
    values; the resulting augmentation keeps mean zero for any fixed
    predictor, so consistency of the downstream estimator is unaffected.
    """

    label = "mlp"

    def __init__(self, cfg: Optional[MlpConfig] = None):
        self.cfg = cfg or MlpConfig()

    def fit(
        self,
        fold: ObservedSample,
        spec: EstimandSpec,
        tau1_init: float,
        tau0_init: float,
        seed: Optional[int] = None,
    ) -> NuisancePredictors:
        masks = _subgroups(fold)
        for name, mask in masks.items():
            if int(mask.sum()) * (1.0 - self.cfg.validation_fraction) < 8.0 or int(mask.sum()) < 10:
                raise EmptySubgroup(name)
        root = np.random.SeedSequence([0 if seed is None else int(seed), 7])
        children = root.spawn(4)
        nets = {}
        iters = {}
        for child, (name, mask) in zip(children, masks.items()):
            rng = np.random.default_rng(child)
            xs = fold.x[mask]
            if name == "q":
                target = fold.t[mask]
                min_delta = self.cfg.min_delta_q
                logistic = self.cfg.q_loss == "cross_entropy"
            else:
                tau = tau1_init if name == "mu1" else tau0_init
                ys = fold.y[mask]
                if spec.is_mean:
                    target = ys
                else:
                    target = (ys <= tau).astype(float) - spec.alpha
                min_delta = self.cfg.min_delta_mu
                logistic = False
            net = Mlp(fold.d, self.cfg, rng, logistic=logistic)
            net.fit(xs, target, min_delta, rng)
            nets[name] = net
            iters[name] = net.n_iter_

        def q_hat(X):
            return np.clip(nets["q"].predict(X), 0.0, 1.0)

        def make_mu(name):
            net = nets[name]
            if spec.is_mean:
                def mu(X, tau):
                    return net.predict(X) - tau
            else:
                def mu(X, tau):  # trained at the initial tau; tau argument unused
                    return net.predict(X)
            return mu

        return NuisancePredictors(
            q_hat=q_hat,
            mu1_hat=make_mu("mu1"),
            mu2_hat=make_mu("mu2"),
            mu3_hat=make_mu("mu3"),
            metadata={
                "learner": self.label,
                "iterations": iters,
                "subgroup_sizes": {k: int(v.sum()) for k, v in masks.items()},
            },
        )


def fit_nuisances_mlp(
    fold: ObservedSample,
    spec: EstimandSpec,
    tau1_init: float,
    tau0_init: float,
    cfg: Optional[MlpConfig] = None,
    seed: Optional[int] = None,
) -> NuisancePredictors:
    return MlpLearner(cfg).fit(fold, spec, tau1_init, tau0_init, seed=seed)


class OracleLearner:
    """Wraps user-supplied true nuisance functions unchanged."""

    label = "oracle"

    def __init__(self, true_q, true_mu1, true_mu2, true_mu3):
        self.true_q = true_q
        self.true_mu1 = true_mu1
        self.true_mu2 = true_mu2
        self.true_mu3 = true_mu3

    def fit(self, fold, spec, tau1_init, tau0_init, seed=None) -> NuisancePredictors:
        return NuisancePredictors(
            q_hat=lambda X: np.clip(np.asarray(self.true_q(X), dtype=float), 0.0, 1.0),
            mu1_hat=self.true_mu1,
            mu2_hat=self.true_mu2,
            mu3_hat=self.true_mu3,
            metadata={"learner": self.label},
        )


def oracle_nuisances(true_q, true_mu1, true_mu2, true_mu3) -> NuisancePredictors:
    return OracleLearner(true_q, true_mu1, true_mu2, true_mu3).fit(None, None, 0.0, 0.0)


class ConstantLearner:
    """Fits each nuisance as its subgroup mean (the no-covariate special case)."""

    label = "constant"

    def fit(self, fold: ObservedSample, spec: EstimandSpec, tau1_init, tau0_init, seed=None):
        masks = _subgroups(fold)
        q_bar = float(fold.t[masks["q"]].mean())
        ys = {name: fold.y[masks[name]] for name in ("mu1", "mu2", "mu3")}

        def make_mu(name):
            vals = ys[name]
            if spec.is_mean:
                mean = float(vals.mean())
                def mu(X, tau):
                    return np.full(X.shape[0], mean - tau)
            else:
                alpha = spec.alpha
                def mu(X, tau):
                    return np.full(X.shape[0], float(np.mean(vals <= tau)) - alpha)
            return mu

        return NuisancePredictors(
            q_hat=lambda X: np.full(X.shape[0], q_bar),
            mu1_hat=make_mu("mu1"),
            mu2_hat=make_mu("mu2"),
            mu3_hat=make_mu("mu3"),
            metadata={"learner": self.label},
        )


class ZeroLearner:
    """All nuisances identically zero; reduces the efficient to the simple estimator."""

    label = "zero"

    def fit(self, fold, spec, tau1_init, tau0_init, seed=None) -> NuisancePredictors:
        def zero1(X):
            return np.zeros(np.atleast_2d(X).shape[0])

        def zero2(X, tau):
            return np.zeros(np.atleast_2d(X).shape[0])

        return NuisancePredictors(
            q_hat=zero1, mu1_hat=zero2, mu2_hat=zero2, mu3_hat=zero2, metadata={"learner": self.label}
        )
