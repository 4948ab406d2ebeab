"""Shared data model: samples, datasets, the pseudo-point grid and model parameters.

An unobserved conversion is represented by an *absent* delay (``d=None``),
never by a sentinel value, so that missingness can never leak into
arithmetic.  All types are immutable after construction and safe to share
across threads.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Sample",
    "Dataset",
    "PseudoGrid",
    "NoDeFParams",
    "TrainConfig",
    "Posteriors",
    "partition_indices",
]


def _as_readonly_vector(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sample:
    """One conversion-log row: features x, observed label y, delay d, elapsed time e.

    ``d`` is present iff ``y == 1``; an unconverted sample carries no delay.
    Times are in model time units (whatever the ingestion pipeline produced).
    """

    x: np.ndarray
    y: int
    d: float | None
    e: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_readonly_vector(self.x, "x"))
        if self.y not in (0, 1):
            raise ValueError(f"y must be 0 or 1, got {self.y!r}")
        e = float(self.e)
        if not np.isfinite(e) or e < 0:
            raise ValueError(f"elapsed time must be finite and >= 0, got {self.e!r}")
        object.__setattr__(self, "e", e)
        if self.y == 1:
            if self.d is None:
                raise ValueError("converted sample (y=1) requires an observed delay")
            d = float(self.d)
            if not np.isfinite(d) or d < 0:
                raise ValueError(f"delay must be finite and >= 0, got {self.d!r}")
            if d > e:
                raise ValueError(f"delay {d} exceeds elapsed time {e}")
            object.__setattr__(self, "d", d)
        elif self.d is not None:
            raise ValueError("unconverted sample (y=0) must not carry a delay")


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples with a fixed feature dimensionality M."""

    samples: tuple
    M: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        for i, s in enumerate(self.samples):
            if len(s.x) != self.M:
                raise ValueError(
                    f"sample {i} has {len(s.x)} features, expected M={self.M}"
                )

    def __len__(self):
        return len(self.samples)

    @cached_property
    def X(self):
        """Feature matrix, shape (n, M)."""
        if not self.samples:
            return np.zeros((0, self.M))
        X = np.stack([s.x for s in self.samples])
        X.setflags(write=False)
        return X

    @cached_property
    def labels(self):
        y = np.array([s.y for s in self.samples], dtype=int)
        y.setflags(write=False)
        return y

    @cached_property
    def elapsed(self):
        e = np.array([s.e for s in self.samples], dtype=float)
        e.setflags(write=False)
        return e

    @cached_property
    def positive_delays(self):
        """Delays of the converted samples, aligned with ``partition_indices``'s I1."""
        d = np.array([s.d for s in self.samples if s.y == 1], dtype=float)
        d.setflags(write=False)
        return d


def partition_indices(dataset):
    """Split sample indices into (I1, I0): converted and not-yet-converted.

    Returns two ascending integer index arrays that partition
    ``range(len(dataset))``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot partition an empty dataset")
    y = dataset.labels
    return np.flatnonzero(y == 1), np.flatnonzero(y == 0)


@dataclass(frozen=True)
class PseudoGrid:
    """L equally spaced time points t_1..t_L plus the kernel bandwidth h."""

    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        pts = _as_readonly_vector(self.points, "grid points")
        if len(pts) < 2:
            raise ValueError("grid needs at least 2 points")
        if pts[0] < 0:
            raise ValueError("grid points must be nonnegative")
        diffs = np.diff(pts)
        if np.any(diffs <= 0):
            raise ValueError("grid points must be strictly increasing")
        spacing = diffs[0]
        if np.max(np.abs(diffs - spacing)) > 1e-9 * max(spacing, 1.0):
            raise ValueError("grid points must be equally spaced")
        object.__setattr__(self, "points", pts)
        h = float(self.bandwidth)
        if not np.isfinite(h) or h <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", h)

    @property
    def L(self):
        return len(self.points)

    @property
    def spacing(self):
        return float(self.points[1] - self.points[0])


@dataclass(frozen=True)
class NoDeFParams:
    """Conversion weights w (length M) and intensity weight matrix V (L x M)."""

    w: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        w = _as_readonly_vector(self.w, "w")
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 2:
            raise ValueError(f"V must be a matrix, got shape {V.shape}")
        if not np.all(np.isfinite(V)):
            raise ValueError("V must be finite")
        if V.shape[1] != len(w):
            raise ValueError(
                f"V has {V.shape[1]} columns but w has length {len(w)}"
            )
        V = V.copy()
        V.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "V", V)

    @property
    def M(self):
        return len(self.w)

    @property
    def L(self):
        return self.V.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """Training settings: grid size, ridge strengths and the outer-loop stop rule.

    ``seed`` feeds the optional random jitter applied to the all-zero
    initial parameters; with ``init_jitter=0`` (the default) initialization
    is exactly zero and the seed is unused.
    """

    L: int = 20
    lambda_w: float = 0.1
    lambda_V: float = 0.1
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    init_jitter: float = 0.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        if self.lambda_w < 0 or self.lambda_V < 0:
            raise ValueError("ridge strengths must be >= 0")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol!r}")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be >= 0")


@dataclass(frozen=True)
class Posteriors:
    """Per-negative-sample distribution (q0, q1) over the hidden conversion flag."""

    q: dict = field(default_factory=dict)

    def __post_init__(self):
        q = dict(self.q)
        for i, (q0, q1) in q.items():
            if not (0.0 <= q0 <= 1.0 and 0.0 <= q1 <= 1.0):
                raise ValueError(f"posterior for sample {i} outside [0, 1]: ({q0}, {q1})")
            if abs(q0 + q1 - 1.0) > 1e-12:
                raise ValueError(f"posterior for sample {i} does not sum to 1: ({q0}, {q1})")
            q[i] = (float(q0), float(q1))
        object.__setattr__(self, "q", q)

    def __len__(self):
        return len(self.q)

    def __getitem__(self, i):
        return self.q[i]

    def arrays(self, indices):
        """(q0, q1) arrays aligned with ``indices``; raises if coverage differs."""
        indices = np.asarray(indices, dtype=int)
        if set(self.q) != set(indices.tolist()):
            raise ValueError("posteriors do not cover exactly the negative samples")
        q0 = np.array([self.q[i][0] for i in indices])
        q1 = np.array([self.q[i][1] for i in indices])
        return q0, q1
