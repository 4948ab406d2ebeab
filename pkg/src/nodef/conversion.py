"""Logistic conversion classifier p(c | x; w) and its log-probability gradient.

Kept behind a two-function surface (probability, gradient of the log) so a
different differentiable classifier could replace it; only the logistic
version exists.
"""

import numpy as np
from scipy.special import expit

__all__ = ["conv_prob", "grad_log_conv"]


def _check(x, w, c):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != w.shape:
        raise ValueError(f"x has shape {x.shape} but w has shape {w.shape}")
    if c not in (0, 1):
        raise ValueError(f"class must be 0 or 1, got {c!r}")
    return x, w


def conv_prob(x, w, c):
    """p(c | x; w): sigmoid(w . x) for c=1, its complement for c=0."""
    x, w = _check(x, w, c)
    p1 = expit(w @ x)
    return float(p1 if c == 1 else 1.0 - p1)


def grad_log_conv(x, w, c):
    """Gradient of log p(c | x; w) in w: x (1 - p1) for c=1, -x p1 for c=0."""
    x, w = _check(x, w, c)
    p1 = expit(w @ x)
    return x * (1.0 - p1) if c == 1 else -x * p1
