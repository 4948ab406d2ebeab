"""Model bundles: fitted parameters plus the preprocessing needed to use them.

A bundle carries everything prediction needs: the model kind, its weights,
the pseudo-point grid (kernel model only), the fitted time transform and the
feature scaler.  Serialization is a flat key=value text file with floats
written at full decimal precision, so save/load round-trips bit-exactly and
identical training runs produce byte-identical files.
"""

from dataclasses import dataclass

import numpy as np

from . import delay
from .baselines import (
    DfmParams,
    dfm_delay_density,
    dfm_predict_many,
    fit_dfm,
    fit_naive,
)
from .data import (
    FeatureScaler,
    TimeTransform,
    append_bias,
    fit_feature_scaler,
    fit_time_transform,
    prepare_dataset,
)
from .kernel import make_grid
from .trainer import fit
from .types import NoDeFParams, PseudoGrid

__all__ = [
    "FORMAT_NAME",
    "FORMAT_VERSION",
    "ModelBundle",
    "save_model",
    "load_model",
    "train_bundle",
]

FORMAT_NAME = "nodef-model"
FORMAT_VERSION = 1

_KINDS = ("nodef", "dfm", "naive")


@dataclass(frozen=True)
class ModelBundle:
    """A trained model of any kind, in raw-data units at the interface.

    predict and density take raw features and raw times; the stored scaler
    and transform convert to model units internally.
    """

    kind: str
    params: object
    grid: PseudoGrid | None
    transform: TimeTransform
    scaler: FeatureScaler
    n_features_raw: int

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "nodef" and self.grid is None:
            raise ValueError("kernel model requires a grid")

    def _model_features(self, X_raw):
        X_raw = np.asarray(X_raw, dtype=float)
        if X_raw.ndim == 1:
            X_raw = X_raw[None, :]
        if X_raw.shape[1] != self.n_features_raw:
            raise ValueError(
                f"model expects {self.n_features_raw} raw features, "
                f"got {X_raw.shape[1]}"
            )
        return append_bias(self.scaler.apply(X_raw))

    def predict(self, X_raw, horizon=None):
        """Conversion probabilities; horizon None means eventual conversion.

        horizon is in raw time units, a scalar or one value per row.  The
        naive model has no delay component and ignores it.
        """
        X = self._model_features(X_raw)
        if self.kind == "naive":
            return delay.predict_eventual_many(X, self.params)
        if horizon is None:
            if self.kind == "dfm":
                return dfm_predict_many(X, self.params)
            return delay.predict_eventual_many(X, self.params.w)
        horizon = np.asarray(horizon, dtype=float)
        if np.any(horizon < 0):
            raise ValueError("horizon must be nonnegative")
        h_model = self.transform.apply(horizon)
        if self.kind == "dfm":
            return dfm_predict_many(X, self.params, h_model)
        return delay.predict_by_time_many(X, h_model, self.params, self.grid)

    def density(self, x_raw, times_raw):
        """Raw-time delay density for one feature vector over raw times.

        The model works in transformed time, so the chain rule factor
        d(transform)/dt converts the curve back to raw units.
        """
        if self.kind == "naive":
            raise ValueError("naive model has no delay model")
        times_raw = np.asarray(times_raw, dtype=float)
        x = self._model_features(x_raw)[0]
        t_model = np.atleast_1d(self.transform.apply(times_raw))
        jac = self.transform.derivative(times_raw)
        if self.kind == "dfm":
            f_model = dfm_delay_density(t_model, x, self.params)
        else:
            f_model = delay.delay_density_many(
                t_model, np.broadcast_to(x, (len(t_model), len(x))),
                self.params.V, self.grid,
            )
        return f_model * jac


def _fmt(v):
    return repr(float(v))


def _fmt_vec(a):
    return ",".join(_fmt(v) for v in np.asarray(a, dtype=float).ravel())


def _parse_vec(s):
    return np.array([float(v) for v in s.split(",")]) if s else np.zeros(0)


def save_model(bundle, path):
    """Write the bundle as versioned key=value lines, fixed key order."""
    lines = [
        f"format={FORMAT_NAME}",
        f"version={FORMAT_VERSION}",
        f"kind={bundle.kind}",
        f"n_features_raw={bundle.n_features_raw}",
        f"standardize={int(bundle.scaler.enabled)}",
        f"scaler_mean={_fmt_vec(bundle.scaler.mean)}",
        f"scaler_std={_fmt_vec(bundle.scaler.std)}",
        f"transform_kind={bundle.transform.kind}",
        f"transform_scale={_fmt(bundle.transform.scale)}",
    ]
    if bundle.kind == "nodef":
        lines += [
            f"L={bundle.grid.L}",
            f"bandwidth={_fmt(bundle.grid.bandwidth)}",
            f"grid_points={_fmt_vec(bundle.grid.points)}",
            f"M={bundle.params.M}",
            f"w={_fmt_vec(bundle.params.w)}",
            f"V={_fmt_vec(bundle.params.V)}",
        ]
    elif bundle.kind == "dfm":
        lines += [
            f"M={bundle.params.M}",
            f"wc={_fmt_vec(bundle.params.wc)}",
            f"wd={_fmt_vec(bundle.params.wd)}",
        ]
    else:
        lines += [
            f"M={len(bundle.params)}",
            f"w={_fmt_vec(bundle.params)}",
        ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    kv = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            kv[key] = value
    if kv.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a model file (format={kv.get('format')!r})")
    if int(kv.get("version", -1)) != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model version {kv.get('version')!r}")
    kind = kv["kind"]
    scaler = FeatureScaler(
        _parse_vec(kv["scaler_mean"]),
        _parse_vec(kv["scaler_std"]),
        enabled=bool(int(kv["standardize"])),
    )
    transform = TimeTransform(kv["transform_kind"], float(kv["transform_scale"]))
    n_raw = int(kv["n_features_raw"])
    m = int(kv["M"])
    if kind == "nodef":
        grid = PseudoGrid(_parse_vec(kv["grid_points"]), float(kv["bandwidth"]))
        if grid.L != int(kv["L"]):
            raise ValueError(f"{path}: grid has {grid.L} points but L={kv['L']}")
        params = NoDeFParams(_parse_vec(kv["w"]), _parse_vec(kv["V"]).reshape(grid.L, m))
        bundle_grid = grid
    elif kind == "dfm":
        params = DfmParams(_parse_vec(kv["wc"]), _parse_vec(kv["wd"]))
        bundle_grid = None
    elif kind == "naive":
        params = _parse_vec(kv["w"])
        bundle_grid = None
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return ModelBundle(
        kind=kind,
        params=params,
        grid=bundle_grid,
        transform=transform,
        scaler=scaler,
        n_features_raw=n_raw,
    )


def _default_transform(dataset, kind, transform_kind):
    """Fit the time transform per model kind on the raw training times.

    The exponential model normalizes by the maximum observed training delay;
    the kernel model's default log-scales against all delay and elapsed
    times so model times land in [0, 1].  The naive model ignores time.
    """
    if kind == "naive":
        return TimeTransform("identity")
    if kind == "dfm":
        times = dataset.positive_delays
        if times.size == 0:
            times = dataset.elapsed  # no observed delay to normalize by
        return fit_time_transform(times, transform_kind or "max_scale")
    times = np.concatenate([dataset.positive_delays, dataset.elapsed])
    return fit_time_transform(times, transform_kind or "log1p_maxscale")


def train_bundle(dataset, kind, config, transform_kind=None, standardize=True,
                 on_iteration=None):
    """Fit the full pipeline on a raw dataset; returns (bundle, fit result).

    The fit result is None for the naive model (single convex fit, no EM
    trace).
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    scaler = fit_feature_scaler(dataset.X, standardize)
    transform = _default_transform(dataset, kind, transform_kind)
    prepared = prepare_dataset(dataset, transform, scaler)

    result = None
    if kind == "nodef":
        t_max = max(
            float(np.max(prepared.elapsed)),
            float(np.max(prepared.positive_delays)) if len(prepared.positive_delays) else 0.0,
        )
        if t_max <= 0:
            raise ValueError("all training times are zero; cannot place a grid")
        grid = make_grid(config.L, t_max)
        result = fit(prepared, config, grid, on_iteration=on_iteration)
        params = result.params
    elif kind == "dfm":
        grid = None
        result = fit_dfm(
            prepared,
            (config.lambda_w, config.lambda_V),
            config.max_iters,
            config.tol,
            on_iteration=on_iteration,
        )
        params = result.params
    else:
        grid = None
        params = fit_naive(prepared, config.lambda_w)

    bundle = ModelBundle(
        kind=kind,
        params=params,
        grid=grid,
        transform=transform,
        scaler=scaler,
        n_features_raw=dataset.M,
    )
    return bundle, result
