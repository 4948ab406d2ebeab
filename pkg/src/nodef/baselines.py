"""Comparison models: NAIVE logistic regression and an exponential-delay EM model.

NAIVE treats every not-yet-converted sample as a true negative.  The
exponential model keeps the hidden-conversion EM treatment but replaces the
kernel hazard with a one-parameter exponential delay: rate(x) = exp(wd . x),
density rate * exp(-rate * d).  Unlike the kernel model this delay
distribution is proper (integrates to 1), so eventual and infinite-horizon
predictions coincide.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .trainer import LBFGS_GTOL, LBFGS_MAX_ITERS, NumericalError, _w_value_grad, lbfgs_maximize
from .types import partition_indices

__all__ = [
    "DfmParams",
    "DfmFitResult",
    "fit_naive",
    "fit_dfm",
    "dfm_rate",
    "dfm_delay_density",
    "dfm_predict",
    "dfm_predict_many",
]

# exp overflow guard on the linear rate score; gradients are exact below it
_RATE_CLIP = 500.0


@dataclass(frozen=True)
class DfmParams:
    """Conversion weights wc and delay-rate weights wd, both length M."""

    wc: np.ndarray
    wd: np.ndarray

    def __post_init__(self):
        wc = np.asarray(self.wc, dtype=float).copy()
        wd = np.asarray(self.wd, dtype=float).copy()
        if wc.ndim != 1 or wc.shape != wd.shape:
            raise ValueError("wc and wd must be matching vectors")
        if not (np.all(np.isfinite(wc)) and np.all(np.isfinite(wd))):
            raise ValueError("weights must be finite")
        wc.setflags(write=False)
        wd.setflags(write=False)
        object.__setattr__(self, "wc", wc)
        object.__setattr__(self, "wd", wd)

    @property
    def M(self):
        return len(self.wc)


@dataclass(frozen=True)
class DfmFitResult:
    params: DfmParams
    q_trace: list
    iterations: int
    converged: bool


def fit_naive(dataset, lam=0.1):
    """Ridge logistic regression on the observed labels; returns the weights.

    Identical in form to the EM trainer's w-step with all posteriors pinned
    to q1=0, which is exactly the unobserved-means-negative assumption.
    """
    if len(dataset) == 0:
        raise ValueError("cannot fit an empty dataset")
    y = dataset.labels
    X = dataset.X
    X1 = X[y == 1]
    X0 = X[y == 0]
    res = lbfgs_maximize(
        lambda w: _w_value_grad(w, X1, X0, np.zeros(len(X0)), lam),
        np.zeros(dataset.M),
    )
    return res.x


def _rate(X, wd):
    return np.exp(np.minimum(X @ wd, _RATE_CLIP))


def _d_value_grad(wd, X1, d1, X0, e0, q1, lam):
    """Delay part of the exponential model's Q, and its gradient.

    Positives contribute log density = zd - exp(zd)*d; negatives contribute
    q1 * log survival = -q1 * exp(zd)*e.
    """
    zd1 = np.minimum(X1 @ wd, _RATE_CLIP)
    r1 = np.exp(zd1)
    r0 = _rate(X0, wd)
    value = (zd1 - r1 * d1).sum() - (q1 * r0 * e0).sum() - 0.5 * lam * (wd @ wd)
    grad = X1.T @ (1.0 - r1 * d1) - X0.T @ (q1 * r0 * e0) - lam * wd
    return value, grad


def fit_dfm(dataset, lambdas=(0.1, 0.1), max_iters=100, tol=1e-6, on_iteration=None):
    """EM fit of the exponential-delay model; same loop shape as the kernel trainer.

    lambdas is (ridge on wc, ridge on wd); a single number applies to both.
    Expects times already normalized upstream (the CLI scales by the maximum
    observed training delay).
    """
    if np.isscalar(lambdas):
        lambdas = (float(lambdas), float(lambdas))
    lam_c, lam_d = lambdas
    i1, i0 = partition_indices(dataset)
    X = dataset.X
    X1, X0 = X[i1], X[i0]
    d1 = dataset.positive_delays
    e0 = dataset.elapsed[i0]
    M = dataset.M
    wc = np.zeros(M)
    wd = np.zeros(M)

    q_trace = []
    converged = False
    iterations = 0
    prev_q = None
    for j in range(1, max_iters + 1):
        wc_prev, wd_prev = wc, wd
        # posterior over the hidden flag: expit(wc.x + log survival)
        q1 = expit(X0 @ wc - _rate(X0, wd) * e0)

        res_c = lbfgs_maximize(
            lambda w: _w_value_grad(w, X1, X0, q1, lam_c), wc,
            LBFGS_MAX_ITERS, LBFGS_GTOL,
        )
        wc = res_c.x
        res_d = lbfgs_maximize(
            lambda w: _d_value_grad(w, X1, d1, X0, e0, q1, lam_d), wd,
            LBFGS_MAX_ITERS, LBFGS_GTOL,
        )
        wd = res_d.x

        q = res_c.value + res_d.value
        if not np.isfinite(q):
            raise NumericalError(f"non-finite Q at iteration {j}")
        if prev_q is not None and q - prev_q < -1e-8:
            # reject the iterate: keep the last accepted state and stop
            warnings.warn(
                f"Q decreased by {prev_q - q:.3e} at iteration {j}; "
                "stopping on numerical trouble",
                RuntimeWarning,
            )
            wc, wd = wc_prev, wd_prev
            break
        iterations = j
        q_trace.append(float(q))
        if on_iteration is not None:
            on_iteration(j, float(q))
        if prev_q is not None and q - prev_q < tol:
            converged = True
            break
        prev_q = q

    return DfmFitResult(
        params=DfmParams(wc=wc, wd=wd),
        q_trace=q_trace,
        iterations=iterations,
        converged=converged,
    )


def dfm_rate(x, params):
    x = np.asarray(x, dtype=float)
    return float(np.exp(min(params.wd @ x, _RATE_CLIP)))


def dfm_delay_density(times, x, params):
    """Exponential delay density rate * exp(-rate * t), vectorized over times."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    r = dfm_rate(x, params)
    out = r * np.exp(-r * times)
    return float(out) if out.ndim == 0 else out


def dfm_predict(x, params, E=None):
    """Conversion probability: eventual if E is None/inf, else within horizon E."""
    x = np.asarray(x, dtype=float)
    p = float(expit(params.wc @ x))
    if E is None or E == np.inf:
        return p
    if E < 0:
        raise ValueError(f"horizon must be nonnegative, got {E!r}")
    return p * (1.0 - np.exp(-dfm_rate(x, params) * E))


def dfm_predict_many(X, params, times=None):
    """Batch ``dfm_predict``; ``times`` is a scalar or per-row horizons."""
    X = np.asarray(X, dtype=float)
    p = expit(X @ params.wc)
    if times is None:
        return p
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("horizons must be nonnegative")
    times = np.broadcast_to(np.atleast_1d(times), (X.shape[0],))
    r = np.exp(np.minimum(X @ params.wd, _RATE_CLIP))
    return p * (1.0 - np.exp(-r * times))
