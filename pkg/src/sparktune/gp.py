"""Gaussian process surrogate over encoded configurations and run contexts.

The model input for an observation is the encoded configuration concatenated
with a min-max-normalized context vector. The kernel is Matern-5/2 with one
lengthscale per input dimension. Targets are standardized internally; the
prediction interface is in raw objective units.

Posterior at a query x given inputs X, targets Y and noise variance tau2:

    mean(x) = K(X, x)^T (K(X, X) + tau2 I)^-1 Y
    var(x)  = k(x, x) + tau2 - K(X, x)^T (K(X, X) + tau2 I)^-1 K(X, x)

computed through a Cholesky factorization of the regularized Gram matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .metrics import RuntimeMetrics
from .space import Configuration, SearchSpace, encode

JITTER = 1e-8
LOO_MAX = 10
CV_FOLDS = 5

_SQRT5 = math.sqrt(5.0)

# log-space bounds of the hyperparameter search
_LS_BOUNDS = (1e-2, 1e2)
_SIG_BOUNDS = (1e-2, 1e2)
_NOISE_BOUNDS = (1e-6, 1.0)
_N_RESTARTS = 5
_MAX_OPT_ITERS = 100


@dataclass(frozen=True)
class ContextVector:
    """Execution-environment descriptors attached to an observation."""

    data_size: float
    extra: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not math.isfinite(self.data_size) or self.data_size <= 0:
            raise ValueError(f"data_size must be finite and positive, got {self.data_size}")
        object.__setattr__(self, "extra", tuple(float(v) for v in self.extra))

    def as_array(self) -> np.ndarray:
        return np.array([self.data_size, *self.extra])

    def to_document(self) -> dict:
        return {"data_size": self.data_size, "extra": list(self.extra)}

    @classmethod
    def from_document(cls, doc) -> "ContextVector":
        return cls(float(doc["data_size"]), tuple(doc.get("extra", ())))


@dataclass(frozen=True)
class Observation:
    """One evaluated configuration with its objective, context, and metrics."""

    config: Configuration
    objective: float
    context: ContextVector
    metrics: RuntimeMetrics | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.objective):
            raise ValueError(f"objective must be finite, got {self.objective}")

    def to_document(self) -> dict:
        return {
            "config": self.config.to_document(),
            "objective": self.objective,
            "context": self.context.to_document(),
            "metrics": self.metrics.to_document() if self.metrics else None,
        }

    @classmethod
    def from_document(cls, doc) -> "Observation":
        metrics = doc.get("metrics")
        return cls(
            config=Configuration(doc["config"]),
            objective=float(doc["objective"]),
            context=ContextVector.from_document(doc["context"]),
            metrics=RuntimeMetrics.from_document(metrics) if metrics else None,
        )


@dataclass(frozen=True)
class KernelParams:
    """Matern-5/2 hyperparameters: signal variance, per-dimension
    lengthscales, observation noise variance."""

    signal_variance: float
    lengthscales: tuple[float, ...]
    noise_variance: float

    def __post_init__(self) -> None:
        if self.signal_variance <= 0 or self.noise_variance < 0:
            raise ValueError("variances must be positive (noise may be 0)")
        if any(l <= 0 for l in self.lengthscales):
            raise ValueError("lengthscales must be positive")
        object.__setattr__(self, "lengthscales", tuple(float(l) for l in self.lengthscales))

    def to_document(self) -> dict:
        return {
            "signal_variance": self.signal_variance,
            "lengthscales": list(self.lengthscales),
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_document(cls, doc) -> "KernelParams":
        return cls(
            signal_variance=float(doc["signal_variance"]),
            lengthscales=tuple(doc["lengthscales"]),
            noise_variance=float(doc["noise_variance"]),
        )


def matern52(a: np.ndarray, b: np.ndarray, params: KernelParams) -> float:
    """Matern-5/2 covariance between two input vectors.

    k(r) = s2 * (1 + sqrt(5) r + 5 r^2 / 3) * exp(-sqrt(5) r) with r the
    Euclidean distance after dividing each dimension by its lengthscale.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ls = np.asarray(params.lengthscales)
    if a.shape != b.shape or a.shape != ls.shape:
        raise ValueError("input and lengthscale dimensions must agree")
    r = math.sqrt(float(np.sum(((a - b) / ls) ** 2)))
    return params.signal_variance * (1.0 + _SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-_SQRT5 * r)


def _kernel_matrix(A: np.ndarray, B: np.ndarray, params: KernelParams) -> np.ndarray:
    ls = np.asarray(params.lengthscales)
    sa = A / ls
    sb = B / ls
    d2 = np.sum(sa**2, axis=1)[:, None] + np.sum(sb**2, axis=1)[None, :] - 2.0 * sa @ sb.T
    r = np.sqrt(np.maximum(d2, 0.0))
    return params.signal_variance * (1.0 + _SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-_SQRT5 * r)


def _neg_log_marginal(X: np.ndarray, y: np.ndarray, params: KernelParams) -> float:
    n = len(y)
    K = _kernel_matrix(X, X, params)
    K[np.diag_indices_from(K)] += params.noise_variance + JITTER
    try:
        cf = cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return float("inf")
    alpha = cho_solve(cf, y, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return 0.5 * float(y @ alpha) + 0.5 * logdet + 0.5 * n * math.log(2.0 * math.pi)


def _nll_and_grad(X: np.ndarray, y: np.ndarray, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient.

    theta = [log s2, log tau2, log l_1 .. log l_d]. The gradient uses
    d(NLL)/d(theta_j) = 0.5 tr((Kinv - alpha alpha^T) dK/d(theta_j)); for
    the Matern-5/2 kernel dK/d(log l_j) = (5/3) s2 (1 + sqrt5 r) e^{-sqrt5 r}
    elementwise-times the per-dimension scaled squared differences.
    """
    n, d = X.shape
    s2 = math.exp(theta[0])
    t2 = math.exp(theta[1])
    ls = np.exp(theta[2:])
    Xs = X / ls
    U = (Xs[:, None, :] - Xs[None, :, :]) ** 2  # (n, n, d)
    r = np.sqrt(np.maximum(U.sum(axis=2), 0.0))
    decay = s2 * np.exp(-_SQRT5 * r)
    Km = decay * (1.0 + _SQRT5 * r + 5.0 * r * r / 3.0)
    K = Km + (t2 + JITTER) * np.eye(n)
    try:
        cf = cho_factor(K, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return float("inf"), np.zeros(d + 2)
    alpha = cho_solve(cf, y, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    nll = 0.5 * float(y @ alpha) + 0.5 * logdet + 0.5 * n * math.log(2.0 * math.pi)
    Kinv = cho_solve(cf, np.eye(n), check_finite=False)
    P = Kinv - np.outer(alpha, alpha)
    grad = np.empty(d + 2)
    grad[0] = 0.5 * float(np.sum(P * Km))
    grad[1] = 0.5 * t2 * float(np.trace(P))
    W = 0.5 * (5.0 / 3.0) * P * decay * (1.0 + _SQRT5 * r)
    grad[2:] = np.einsum("ij,ijk->k", W, U)
    return nll, grad


def _fit_hyperparams(X: np.ndarray, y: np.ndarray) -> KernelParams:
    """Maximize the log marginal likelihood by multi-start gradient ascent
    (bounded L-BFGS in log space). Deterministic: restarts come from a
    fixed seed."""
    from scipy.optimize import minimize

    d = X.shape[1]
    bounds = np.empty((d + 2, 2))
    bounds[0] = np.log(_SIG_BOUNDS)
    bounds[1] = np.log(_NOISE_BOUNDS)
    bounds[2:] = np.log(_LS_BOUNDS)

    def unpack(theta: np.ndarray) -> KernelParams:
        return KernelParams(
            signal_variance=math.exp(theta[0]),
            lengthscales=tuple(np.exp(theta[2:])),
            noise_variance=math.exp(theta[1]),
        )

    rng = np.random.default_rng(0)
    starts = [np.concatenate(([0.0], [math.log(1e-3)], np.zeros(d)))]
    for _ in range(_N_RESTARTS - 1):
        start = np.concatenate(
            (
                rng.uniform(math.log(0.5), math.log(2.0), 1),
                rng.uniform(math.log(1e-5), math.log(0.1), 1),
                rng.uniform(math.log(0.1), math.log(10.0), d),
            )
        )
        starts.append(start)

    best_theta, best_val = starts[0], float("inf")
    for theta0 in starts:
        res = minimize(
            lambda t: _nll_and_grad(X, y, t),
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": _MAX_OPT_ITERS},
        )
        if res.fun < best_val:
            best_val, best_theta = float(res.fun), res.x
    return unpack(best_theta)


class GpSurrogate:
    """Fitted GP over (encoded configuration, normalized context) inputs.

    Construct through fit() or from_arrays(); instances are immutable in use.
    """

    def __init__(
        self,
        space: SearchSpace,
        kernel: KernelParams,
        inputs: np.ndarray,
        targets: np.ndarray,
        context_lo: np.ndarray,
        context_hi: np.ndarray,
    ):
        inputs = np.asarray(inputs, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if inputs.ndim != 2 or len(inputs) != len(targets) or len(targets) == 0:
            raise ValueError("inputs must be (n, d) with matching non-empty targets")
        if len(kernel.lengthscales) != inputs.shape[1]:
            raise ValueError("one lengthscale per input dimension required")
        self.space = space
        self.kernel = kernel
        self.train_inputs = inputs
        self.train_targets = targets
        self.context_lo = np.asarray(context_lo, dtype=float)
        self.context_hi = np.asarray(context_hi, dtype=float)
        self.target_mean = float(np.mean(targets))
        std = float(np.std(targets))
        self.target_std = std if std > 0 else 1.0
        self._y_std = (targets - self.target_mean) / self.target_std
        K = _kernel_matrix(inputs, inputs, kernel)
        K[np.diag_indices_from(K)] += kernel.noise_variance + JITTER
        self._chol = cho_factor(K, lower=True, check_finite=False)
        self._alpha = cho_solve(self._chol, self._y_std, check_finite=False)
        n_ctx = len(self.context_lo)
        self._mean_context = (
            np.mean(inputs[:, inputs.shape[1] - n_ctx :], axis=0) if n_ctx else np.empty(0)
        )

    @property
    def n_observations(self) -> int:
        return len(self.train_targets)

    @property
    def context_dim(self) -> int:
        return len(self.context_lo)

    def _normalize_context(self, ctx: np.ndarray) -> np.ndarray:
        span = self.context_hi - self.context_lo
        out = np.empty_like(ctx, dtype=float)
        for i in range(len(ctx)):
            if span[i] > 0:
                out[i] = (ctx[i] - self.context_lo[i]) / span[i]
            else:
                out[i] = 0.5
        return out

    def encode_input(self, config: Configuration, context: ContextVector | None) -> np.ndarray:
        z = encode(config, self.space)
        if self.context_dim == 0:
            return z
        if context is None:
            ctx = self._mean_context
        else:
            raw = context.as_array()
            if len(raw) != self.context_dim:
                raise ValueError(
                    f"context has {len(raw)} components, model expects {self.context_dim}"
                )
            ctx = self._normalize_context(raw)
        return np.concatenate([z, ctx])

    def predict(self, config: Configuration, context: ContextVector | None = None) -> tuple[float, float]:
        """Posterior mean and variance (raw objective units) at one config.

        With context omitted, the mean training context is used.
        """
        means, variances = self.predict_encoded(self.encode_input(config, context)[None, :])
        return float(means[0]), float(variances[0])

    def predict_batch(
        self,
        configs: Sequence[Configuration],
        context: ContextVector | None = None,
        contexts: Sequence[ContextVector] | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        if contexts is not None:
            if len(contexts) != len(configs):
                raise ValueError("one context per config required")
            Z = np.stack([self.encode_input(c, ctx) for c, ctx in zip(configs, contexts)])
        else:
            Z = np.stack([self.encode_input(c, context) for c in configs])
        return self.predict_encoded(Z)

    def predict_encoded(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior over pre-encoded input rows (already context-normalized)."""
        Z = np.asarray(Z, dtype=float)
        k_star = _kernel_matrix(self.train_inputs, Z, self.kernel)
        mean_std = k_star.T @ self._alpha
        v = cho_solve(self._chol, k_star, check_finite=False)
        prior = self.kernel.signal_variance + self.kernel.noise_variance
        var_std = prior - np.sum(k_star * v, axis=0)
        var_std = np.maximum(var_std, 0.0)
        mean = mean_std * self.target_std + self.target_mean
        var = var_std * self.target_std**2
        return mean, var

    def to_document(self) -> dict:
        return {
            "kernel": self.kernel.to_document(),
            "inputs": self.train_inputs.tolist(),
            "targets": self.train_targets.tolist(),
            "context_lo": self.context_lo.tolist(),
            "context_hi": self.context_hi.tolist(),
        }

    @classmethod
    def from_document(cls, doc, space: SearchSpace) -> "GpSurrogate":
        return cls(
            space=space,
            kernel=KernelParams.from_document(doc["kernel"]),
            inputs=np.array(doc["inputs"], dtype=float),
            targets=np.array(doc["targets"], dtype=float),
            context_lo=np.array(doc["context_lo"], dtype=float),
            context_hi=np.array(doc["context_hi"], dtype=float),
        )


def _design_matrix(
    observations: Sequence[Observation], space: SearchSpace
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    configs = np.stack([encode(o.config, space) for o in observations])
    ctx_raw = np.stack([o.context.as_array() for o in observations])
    lo = ctx_raw.min(axis=0)
    hi = ctx_raw.max(axis=0)
    span = hi - lo
    ctx_norm = np.where(span > 0, (ctx_raw - lo) / np.where(span > 0, span, 1.0), 0.5)
    return np.hstack([configs, ctx_norm]), np.array([o.objective for o in observations]), lo, hi


def fit(observations: Sequence[Observation], space: SearchSpace) -> GpSurrogate:
    """Fit a surrogate: encode inputs, standardize targets, and pick kernel
    hyperparameters by maximizing the log marginal likelihood."""
    if len(observations) == 0:
        raise ValueError("cannot fit a surrogate on zero observations")
    lengths = {len(o.context.extra) for o in observations}
    if len(lengths) > 1:
        raise ValueError("all observation contexts must have the same length")
    X, y, lo, hi = _design_matrix(observations, space)
    mean = float(np.mean(y))
    std = float(np.std(y))
    y_std = (y - mean) / (std if std > 0 else 1.0)
    kernel = _fit_hyperparams(X, y_std)
    return GpSurrogate(space, kernel, X, y, lo, hi)


def concordant_pair_count(a: np.ndarray, b: np.ndarray) -> float:
    """Number of index pairs i<j on which a and b order identically.

    A tie in either sequence contributes 0.5. Both strict agreements and the
    tie credit are counted over all n(n-1)/2 pairs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length 1-d arrays")
    da = np.sign(a[:, None] - a[None, :])
    db = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(len(a), k=1)
    prod = da[iu] * db[iu]
    tie = (da[iu] == 0) | (db[iu] == 0)
    return float(np.sum(prod > 0) + 0.5 * np.sum(tie))


def _fold_assignment(n: int) -> list[np.ndarray]:
    if n <= LOO_MAX:
        return [np.array([i]) for i in range(n)]
    return [np.arange(n)[np.arange(n) % CV_FOLDS == f] for f in range(CV_FOLDS)]


def cross_validated_means(
    observations: Sequence[Observation],
    space: SearchSpace,
    kernel: KernelParams,
) -> np.ndarray:
    """Held-out predictive means, one per observation.

    Folds are leave-one-out up to 10 observations, else 5 round-robin folds.
    Each fold model reuses the given kernel hyperparameters and refactorizes
    the posterior on the remaining observations.
    """
    n = len(observations)
    if n < 2:
        raise ValueError("need at least 2 observations for cross-validation")
    X, y, lo, hi = _design_matrix(observations, space)
    preds = np.empty(n)
    for fold in _fold_assignment(n):
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        sub = GpSurrogate(space, kernel, X[mask], y[mask], lo, hi)
        means, _ = sub.predict_encoded(X[fold])
        preds[fold] = means
    return preds


def generalization_weight(observations: Sequence[Observation], space: SearchSpace) -> float:
    """Concordance of cross-validated predictions with observed objectives,
    scaled to [0, 1]: 2 n_s / (|D| (|D| - 1))."""
    n = len(observations)
    if n < 2:
        raise ValueError("need at least 2 observations")
    model = fit(observations, space)
    preds = cross_validated_means(observations, space, model.kernel)
    y = np.array([o.objective for o in observations])
    n_s = concordant_pair_count(preds, y)
    return 2.0 * n_s / (n * (n - 1))
