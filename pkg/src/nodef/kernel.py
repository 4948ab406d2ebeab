"""Gaussian kernel on the time axis and its two closed-form integrals.

The hazard construction only needs three quantities per kernel: the point
value k(t_l, tau), the integral of k over [0, a], and the integral over
[a, inf).  For the Gaussian all three are analytic (the integrals via erf),
which is what keeps training cheap.  Other kernels with analytic integrals
could implement the same triple.
"""

import math

import numpy as np
from scipy.special import erf

from .types import PseudoGrid

__all__ = [
    "gauss_kernel",
    "kernel_integral_0_to",
    "kernel_integral_to_inf",
    "make_grid",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


def _check_bandwidth(h):
    if not np.all(np.asarray(h) > 0):
        raise ValueError(f"bandwidth must be positive, got {h!r}")


def _check_nonneg(a, name):
    if np.any(np.asarray(a) < 0):
        raise ValueError(f"{name} must be >= 0")


def gauss_kernel(t_l, tau, h):
    """Gaussian similarity exp(-(t_l - tau)^2 / (2 h^2)), in (0, 1].

    Symmetric in (t_l, tau); broadcasts over array arguments.
    """
    _check_bandwidth(h)
    diff = np.asarray(t_l, dtype=float) - np.asarray(tau, dtype=float)
    return np.exp(-(diff * diff) / (2.0 * h * h))


def kernel_integral_0_to(a, t_l, h):
    """Integral of gauss_kernel(t_l, .) over [0, a], for a >= 0.

    Closed form: -h * sqrt(pi/2) * [erf((t_l - a)/(sqrt(2) h)) - erf(t_l/(sqrt(2) h))].
    Nonnegative and nondecreasing in a.
    """
    _check_bandwidth(h)
    _check_nonneg(a, "upper limit a")
    t_l = np.asarray(t_l, dtype=float)
    a = np.asarray(a, dtype=float)
    s = _SQRT2 * h
    return -h * _SQRT_HALF_PI * (erf((t_l - a) / s) - erf(t_l / s))


def kernel_integral_to_inf(a, t_l, h):
    """Integral of gauss_kernel(t_l, .) over [a, inf), for a >= 0.

    Closed form: h * sqrt(pi/2) * [1 + erf((t_l - a)/(sqrt(2) h))].
    Nonincreasing in a, bounded by the full mass h * sqrt(2 pi).
    """
    _check_bandwidth(h)
    _check_nonneg(a, "lower limit a")
    t_l = np.asarray(t_l, dtype=float)
    a = np.asarray(a, dtype=float)
    return h * _SQRT_HALF_PI * (1.0 + erf((t_l - a) / (_SQRT2 * h)))


def make_grid(L, t_max, bandwidth=None):
    """Build L equally spaced pseudo-points on [0, t_max].

    The bandwidth defaults to half the point spacing, t_max / (2 (L - 1)),
    the rule that produces smooth estimated delay distributions; pass
    ``bandwidth`` to override it.
    """
    if int(L) != L or L < 2:
        raise ValueError(f"L must be an integer >= 2, got {L!r}")
    if not t_max > 0:
        raise ValueError(f"t_max must be > 0, got {t_max!r}")
    points = np.linspace(0.0, float(t_max), int(L))
    if bandwidth is None:
        bandwidth = float(t_max) / (2.0 * (L - 1))
    return PseudoGrid(points=points, bandwidth=float(bandwidth))
