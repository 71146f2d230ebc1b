"""Minimal fully-connected network trained by full-batch Adam.

Implemented in numpy (float32) so that nuisance fits stay hermetic and
deterministic under a fixed seed.  Early stopping monitors a held-out
validation split; the best validation weights are restored on exit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingDiverged


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: int = 4
    width: int = 512
    learning_rate: float = 0.01
    max_iter: int = 800
    min_iter: int = 50
    patience: int = 10
    min_delta_q: float = 1e-6
    min_delta_mu: float = 1e-4
    validation_fraction: float = 0.2
    q_loss: str = "mse"  # "mse" | "cross_entropy"

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1 or self.max_iter < 1 or self.min_iter < 1:
            raise ValueError("layer, width and iteration counts must be positive")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.q_loss not in ("mse", "cross_entropy"):
            raise ValueError(f"unknown q_loss {self.q_loss!r}")


class Mlp:
    """ReLU network with scalar output; squared-error or logistic loss."""

    def __init__(self, n_in: int, cfg: MlpConfig, rng: np.random.Generator, logistic: bool = False):
        self.cfg = cfg
        self.logistic = logistic
        sizes = [n_in] + [cfg.width] * cfg.hidden_layers + [1]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append((rng.standard_normal((fan_in, fan_out)) * scale).astype(np.float32))
            self.biases.append(np.zeros(fan_out, dtype=np.float32))
        self._x_mean = None
        self._x_scale = None
        self.n_iter_ = 0

    def _forward(self, x):
        acts = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
            acts.append(x)
        out = x @ self.weights[-1] + self.biases[-1]
        return acts, out

    def _loss(self, out, target):
        if self.logistic:
            # stable log(1 + exp(-|o|)) form of the logistic loss
            o = out.ravel()
            return float(np.mean(np.maximum(o, 0.0) - o * target + np.log1p(np.exp(-np.abs(o)))))
        return float(np.mean((out.ravel() - target) ** 2))

    def fit(self, x: np.ndarray, target: np.ndarray, min_delta: float, rng: np.random.Generator) -> "Mlp":
        x = np.asarray(x, dtype=np.float32)
        target = np.asarray(target, dtype=np.float32).ravel()
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-8] = 1.0
        self._x_mean, self._x_scale = mean, scale
        x = (x - mean) / scale

        n = x.shape[0]
        perm = rng.permutation(n)
        n_val = max(1, int(round(self.cfg.validation_fraction * n)))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        xt, yt = x[train_idx], target[train_idx]
        xv, yv = x[val_idx], target[val_idx]

        lr = self.cfg.learning_rate
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        m_w = [np.zeros_like(w) for w in self.weights]
        v_w = [np.zeros_like(w) for w in self.weights]
        m_b = [np.zeros_like(b) for b in self.biases]
        v_b = [np.zeros_like(b) for b in self.biases]

        best_val = np.inf
        best_state = None
        stall = 0
        for it in range(1, self.cfg.max_iter + 1):
            acts, out = self._forward(xt)
            o = out.ravel()
            if self.logistic:
                grad_out = (1.0 / (1.0 + np.exp(-o)) - yt) / yt.size
            else:
                grad_out = 2.0 * (o - yt) / yt.size
            if not np.isfinite(grad_out).all():
                raise TrainingDiverged("non-finite training loss gradient")
            delta = grad_out[:, None].astype(np.float32)
            grads_w = [None] * len(self.weights)
            grads_b = [None] * len(self.biases)
            for li in range(len(self.weights) - 1, -1, -1):
                grads_w[li] = acts[li].T @ delta
                grads_b[li] = delta.sum(axis=0)
                if li > 0:
                    delta = (delta @ self.weights[li].T) * (acts[li] > 0)
            t = it
            for li in range(len(self.weights)):
                for p, g, m, v in (
                    (self.weights[li], grads_w[li], m_w[li], v_w[li]),
                    (self.biases[li], grads_b[li], m_b[li], v_b[li]),
                ):
                    m *= beta1
                    m += (1 - beta1) * g
                    v *= beta2
                    v += (1 - beta2) * g**2
                    m_hat = m / (1 - beta1**t)
                    v_hat = v / (1 - beta2**t)
                    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
            _, val_out = self._forward(xv)
            val_loss = self._loss(val_out, yv)
            if not np.isfinite(val_loss):
                raise TrainingDiverged("non-finite validation loss")
            if val_loss < best_val - min_delta:
                best_val = val_loss
                best_state = ([w.copy() for w in self.weights], [b.copy() for b in self.biases])
                stall = 0
            else:
                stall += 1
            if it >= self.cfg.min_iter and stall >= self.cfg.patience:
                break
        self.n_iter_ = it
        if best_state is not None:
            self.weights, self.biases = best_state
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = (np.asarray(x, dtype=np.float32) - self._x_mean) / self._x_scale
        _, out = self._forward(x)
        o = out.ravel().astype(float)
        if self.logistic:
            return 1.0 / (1.0 + np.exp(-o))
        return o
