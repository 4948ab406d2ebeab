"""The time-delay model: intensity, hazard, survival, delay density, predictions.

The hazard at time d is a sum of Gaussian bumps anchored at the pseudo-points,
each scaled by a sigmoid intensity of the feature vector:

    hazard(d)   = sum_l sigmoid(V_l . x) * k(t_l, d)
    survival(d) = exp(-sum_l sigmoid(V_l . x) * integral_0^d k(t_l, .))
    density(d)  = survival(d) * hazard(d)

Note the density is defective: survival(inf) > 0 because the total hazard
mass is finite, so the density integrates to 1 - survival(inf) < 1.  The
"converted by horizon E" prediction therefore approaches a ceiling strictly
below the eventual-conversion probability as E grows; values are reported
exactly as the formulas give them, without renormalization.

Scalar operations take one feature vector; the ``*_many`` variants evaluate
a batch of rows against per-row times.  All functions are pure and safe for
data-parallel scoring.
"""

import numpy as np
from scipy.special import expit

from .kernel import gauss_kernel, kernel_integral_0_to

__all__ = [
    "intensity",
    "hazard",
    "survival",
    "delay_density",
    "prob_no_conversion_yet",
    "predict_eventual",
    "predict_by_time",
    "intensity_matrix",
    "hazard_many",
    "log_survival_many",
    "survival_many",
    "delay_density_many",
    "predict_eventual_many",
    "predict_by_time_many",
]


def _check_dims(x, weights, what="weights"):
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.shape[-1] != w.shape[-1]:
        raise ValueError(
            f"feature vector has length {x.shape[-1]} but {what} expect {w.shape[-1]}"
        )
    return x, w


def _check_time(t, name="time"):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError(f"{name} must be >= 0")
    return t


def intensity(x, v_row):
    """Kernel-bump height for one pseudo-point: sigmoid(v_row . x), in (0, 1)."""
    x, v = _check_dims(x, v_row, "intensity weights")
    return float(expit(v @ x))


def intensity_matrix(X, V):
    """All intensities for a batch: sigmoid(X V^T), shape (n, L)."""
    X, V = _check_dims(X, V, "intensity weights")
    return expit(X @ V.T)


def hazard(d, x, V, grid):
    """Instantaneous conversion rate at delay d for features x."""
    d = _check_time(d, "delay")
    x, V = _check_dims(x, V, "intensity weights")
    alphas = expit(V @ x)
    return float(alphas @ gauss_kernel(grid.points, d, grid.bandwidth))


def hazard_many(times, X, V, grid):
    """Row-wise hazard: times[i] evaluated with features X[i]."""
    times = _check_time(times, "times")
    A = intensity_matrix(X, V)
    K = gauss_kernel(grid.points[None, :], times[:, None], grid.bandwidth)
    return np.sum(A * K, axis=1)


def log_survival_many(times, X, V, grid):
    """Row-wise log survival: -sum_l alpha_l * integral_0^t k(t_l, .)."""
    times = _check_time(times, "times")
    A = intensity_matrix(X, V)
    C = kernel_integral_0_to(times[:, None], grid.points[None, :], grid.bandwidth)
    return -np.sum(A * C, axis=1)


def survival_many(times, X, V, grid):
    return np.exp(log_survival_many(times, X, V, grid))


def survival(d, x, V, grid):
    """Probability the conversion has not happened by delay d; s(0) = 1."""
    x = np.asarray(x, dtype=float)
    return float(survival_many(np.atleast_1d(d), x[None, :], V, grid)[0])


def delay_density(d, x, V, grid):
    """Delay density survival(d) * hazard(d); equals hazard(d) at d=0."""
    return survival(d, x, V, grid) * hazard(d, x, V, grid)


def delay_density_many(times, X, V, grid):
    return survival_many(times, X, V, grid) * hazard_many(times, X, V, grid)


def prob_no_conversion_yet(e, x, V, grid):
    """Probability an eventually-converting sample is still unobserved at elapsed time e.

    Identical to ``survival(e, ...)``; named separately because it is the
    censoring term of the likelihood rather than a delay statement.
    """
    return survival(e, x, V, grid)


def predict_eventual(x, w):
    """Probability of eventual conversion, regardless of horizon: sigmoid(w . x)."""
    x, w = _check_dims(x, w, "conversion weights")
    return float(expit(w @ x))


def predict_eventual_many(X, w):
    X, w = _check_dims(X, w, "conversion weights")
    return expit(X @ w)


def predict_by_time(x, E, params, grid):
    """Probability of converting within horizon E: p(eventual) * (1 - survival(E)).

    Zero at E=0, nondecreasing in E, and bounded above by the eventual
    probability (strictly, by its defective ceiling).
    """
    E = _check_time(E, "horizon")
    return predict_eventual(x, params.w) * (1.0 - survival(E, x, params.V, grid))


def predict_by_time_many(X, times, params, grid):
    """Batch ``predict_by_time``; ``times`` is a scalar or per-row horizons."""
    X = np.asarray(X, dtype=float)
    times = _check_time(times, "horizon")
    times = np.broadcast_to(np.atleast_1d(times), (X.shape[0],))
    s = survival_many(times, X, params.V, grid)
    return predict_eventual_many(X, params.w) * (1.0 - s)
