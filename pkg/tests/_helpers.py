"""Shared test fixtures: dataset builders and independent numeric oracles.

The oracles here deliberately avoid the package's closed forms: kernel
integrals go through quadrature, gradients through central differences, AUC
through all-pairs counting, so each test compares two independent routes.
"""

import numpy as np
from scipy.integrate import quad
from scipy.special import expit

from nodef.types import Dataset, Sample

# ---- known-law task: logistic conversion + mixture delays + censoring ----

TASK_W = np.array([1.5, -2.0, 1.0, 0.5, -1.0])
TASK_B = 0.3
TASK_MIX_P = (0.5, 0.35, 0.15)
TASK_MIX_MEANS = (1.0, 4.0, 7.0)


def _draw_truncnorm(rng, mean, sd=1.0, lo=0.0, hi=10.0):
    while True:
        v = rng.normal(mean, sd)
        if lo <= v <= hi:
            return float(v)


def delayed_task(seed, n, m=5):
    """Censored conversion task with known ground truth.

    Returns (dataset, true_eventual_labels, censored_fraction): true labels
    follow a fixed logistic law, delays a three-part truncated-normal
    mixture, and each sample's window cuts off at its own elapsed time.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, (n, m))
    c = rng.random(n) < expit(X @ TASK_W[:m] + TASK_B)
    comp = rng.choice(3, size=n, p=TASK_MIX_P)
    e = rng.uniform(0.0, 9.0, n)
    samples = []
    censored = 0
    for i in range(n):
        if c[i]:
            d = _draw_truncnorm(rng, TASK_MIX_MEANS[comp[i]])
            if d <= e[i]:
                samples.append(Sample(X[i], 1, d, float(e[i])))
            else:
                samples.append(Sample(X[i], 0, None, float(e[i])))
                censored += 1
        else:
            samples.append(Sample(X[i], 0, None, float(e[i])))
    frac = censored / max(int(c.sum()), 1)
    return Dataset(tuple(samples), m), np.asarray(c, dtype=int), frac


def small_dataset(seed, n=30, m=4, with_bias=True):
    """Random mixed-label dataset; features include an appended bias column."""
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        x = rng.normal(0.0, 1.0, m)
        if with_bias:
            x = np.append(x, 1.0)
        e = float(rng.uniform(0.5, 10.0))
        if rng.random() < 0.5:
            samples.append(Sample(x, 1, float(rng.uniform(0.0, e)), e))
        else:
            samples.append(Sample(x, 0, None, e))
    return Dataset(tuple(samples), m + 1 if with_bias else m)


def all_positive_dataset(seed, n=25, m=3):
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        x = np.append(rng.normal(0.0, 1.0, m), 1.0)
        e = float(rng.uniform(1.0, 8.0))
        samples.append(Sample(x, 1, float(rng.uniform(0.0, e)), e))
    return Dataset(tuple(samples), m + 1)


# ---- independent oracles ----

def quad_kernel_integral(t_l, a, b, h):
    """Quadrature of the Gaussian bump exp(-(t_l - u)^2 / (2 h^2)) over [a, b].

    The adaptive sampler can miss a narrow bump sitting far inside a wide or
    infinite interval, so the bump location is handed over as a breakpoint
    and infinite intervals are split where the bump has decayed.
    """
    f = lambda u: np.exp(-((t_l - u) ** 2) / (2.0 * h * h))
    kw = dict(epsabs=1e-13, epsrel=1e-13, limit=500)
    if np.isinf(b):
        cut = max(a, t_l + 12.0 * h)
        pts = [p for p in (t_l - h, t_l, t_l + h) if a < p < cut]
        head, _ = quad(f, a, cut, points=pts or None, **kw)
        tail, _ = quad(f, cut, np.inf, **kw)
        return head + tail
    pts = [p for p in (t_l - h, t_l, t_l + h) if a < p < b]
    val, _ = quad(f, a, b, points=pts or None, **kw)
    return val


def central_diff(f, x, step=1e-5):
    """Central finite differences of scalar f at x, one array per coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += step
        lo.flat[i] -= step
        g.flat[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def rel_err(a, b, floor=1e-3):
    """Elementwise |a-b| over a floored magnitude; floor absorbs FD noise near 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def pairwise_auc(predictions, labels):
    """O(n^2) positive/negative pair count with ties at 1/2."""
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=int)
    pos = p[y == 1]
    neg = p[y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(pos) * len(neg))


def local_maxima(times, values):
    """Times of local maxima, endpoints included."""
    out = []
    v = np.asarray(values, dtype=float)
    for i in range(len(v)):
        left = v[i - 1] if i > 0 else -np.inf
        right = v[i + 1] if i < len(v) - 1 else -np.inf
        if v[i] > left and v[i] > right:
            out.append(float(times[i]))
    return out
