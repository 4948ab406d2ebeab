"""Evaluation metrics and validation-set hyperparameter search."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .model_io import train_bundle
from .trainer import NumericalError
from .types import TrainConfig

__all__ = [
    "SingleClassError",
    "MetricsReport",
    "log_loss",
    "accuracy",
    "auc",
    "evaluate",
    "DEFAULT_GRIDS",
    "GridSearchResult",
    "grid_search",
]

_CLIP = 1e-15

# validation search ranges for the kernel model; the exponential model reuses
# the lambda ranges and the naive model only the first
DEFAULT_GRIDS = {
    "L": (10, 20, 30),
    "lambda_w": (1.0, 0.1, 0.01),
    "lambda_V": (1.0, 0.1, 0.01),
}


class SingleClassError(ValueError):
    """Raised when a ranking metric needs both classes and got one."""


def _check_pair(predictions, labels):
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} must match")
    if p.size == 0:
        raise ValueError("need at least one sample")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return p, y.astype(int)


@dataclass(frozen=True)
class MetricsReport:
    log_loss: float
    accuracy: float
    auc: float
    n: int

    def to_dict(self):
        return {
            "log_loss": self.log_loss,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "n": self.n,
        }

    def to_line(self):
        return (
            f"log_loss={self.log_loss:.6f} accuracy={self.accuracy:.6f} "
            f"auc={self.auc:.6f} n={self.n}"
        )


def log_loss(predictions, labels):
    """Mean negative log likelihood; predictions clipped away from 0 and 1."""
    p, y = _check_pair(predictions, labels)
    p = np.clip(p, _CLIP, 1.0 - _CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def accuracy(predictions, labels, threshold=0.5):
    """Fraction correct; a prediction exactly at the threshold counts positive."""
    p, y = _check_pair(predictions, labels)
    return float(np.mean((p >= threshold).astype(int) == y))


def auc(predictions, labels):
    """Probability a random positive outranks a random negative, ties at 1/2.

    Computed from tie-averaged ranks, equivalent to the Mann-Whitney
    statistic over all positive/negative pairs.
    """
    p, y = _check_pair(predictions, labels)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise SingleClassError("AUC needs at least one sample of each class")
    ranks = rankdata(p)
    r1 = ranks[y == 1].sum()
    return float((r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def evaluate(predictions, labels):
    return MetricsReport(
        log_loss=log_loss(predictions, labels),
        accuracy=accuracy(predictions, labels),
        auc=auc(predictions, labels),
        n=len(np.asarray(labels)),
    )


@dataclass(frozen=True)
class GridSearchResult:
    config: TrainConfig
    report: MetricsReport
    evaluated: tuple  # (config, report) per grid point that fitted


def _grid_configs(kind, grids, base):
    """Enumerate candidate configs; irrelevant axes collapse to one value."""
    ls = grids["L"] if kind == "nodef" else (base.L,)
    lws = grids["lambda_w"]
    lvs = grids["lambda_V"] if kind in ("nodef", "dfm") else (base.lambda_V,)
    out = []
    for L in ls:
        for lw in lws:
            for lv in lvs:
                out.append(
                    TrainConfig(
                        L=L, lambda_w=lw, lambda_V=lv,
                        max_iters=base.max_iters, tol=base.tol, seed=base.seed,
                        init_jitter=base.init_jitter,
                    )
                )
    return out


def grid_search(train, validation, grids=None, kind="nodef", base_config=None,
                transform_kind=None, standardize=True, on_point=None):
    """Fit every grid point on train, score on validation, pick by log loss.

    Validation predictions use each sample's own elapsed time as the horizon
    (the observed window is the ground truth the labels encode).  Ties break
    toward smaller L, then larger lambda_w, then larger lambda_V, so the
    winner is independent of enumeration order.  Grid points whose fit fails
    are skipped with a warning; all of them failing is an error.
    """
    grids = dict(DEFAULT_GRIDS, **(grids or {}))
    base = base_config or TrainConfig()
    configs = _grid_configs(kind, grids, base)
    if not configs:
        raise ValueError("empty grid")
    horizons = validation.elapsed
    results = []
    for cfg in configs:
        try:
            bundle, _ = train_bundle(
                train, kind, cfg,
                transform_kind=transform_kind, standardize=standardize,
            )
            preds = bundle.predict(validation.X, horizons)
            report = evaluate(preds, validation.labels)
        except (NumericalError, ValueError) as exc:
            warnings.warn(f"grid point {cfg} failed: {exc}", RuntimeWarning)
            continue
        results.append((cfg, report))
        if on_point is not None:
            on_point(cfg, report)
    if not results:
        raise NumericalError("every grid point failed to fit")
    best = min(
        results,
        key=lambda cr: (cr[1].log_loss, cr[0].L, -cr[0].lambda_w, -cr[0].lambda_V),
    )
    return GridSearchResult(config=best[0], report=best[1], evaluated=tuple(results))
