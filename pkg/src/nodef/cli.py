"""Command-line front end: synth, train, predict, eval, density, gridsearch.

Conventions:
  - human-readable output goes to stderr; machine-readable output goes to
    files or stdout, so commands compose in pipelines
  - exit 0 on success, 1 on runtime or numerical failure, 2 on usage errors
  - a --config file of key=value lines can supply any flag; flags given on
    the command line win
  - --threads 1 (the default) makes training bitwise deterministic
"""

import argparse
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .data import (
    SYNTH_ELAPSED,
    SYNTH_PATTERNS,
    SECONDS_PER_DAY,
    dataset_to_log,
    generate_synthetic,
    load_csv,
    read_features,
    read_log,
    write_csv,
)
from .metrics import DEFAULT_GRIDS, SingleClassError, evaluate, grid_search
from .model_io import load_model, save_model, train_bundle
from .trainer import NumericalError
from .types import TrainConfig


class UsageError(Exception):
    """Bad invocation or unusable input; mapped to exit code 2."""


def _config_tokens(path):
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    tokens = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            tokens.append(f"--{key.strip()}={value.strip()}")
    return tokens


def _expand_configs(argv):
    """Splice --config file entries in as flags, before the explicit flags.

    argparse takes the last occurrence of a repeated flag, so command-line
    values override the file.
    """
    sub_idx = next((i for i, a in enumerate(argv) if not a.startswith("-")), None)
    if sub_idx is None:
        return argv
    paths = []
    i = 0
    while i < len(argv):
        if argv[i] == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a path")
            paths.append(argv[i + 1])
            i += 2
            continue
        if argv[i].startswith("--config="):
            paths.append(argv[i].partition("=")[2])
        i += 1
    if not paths:
        return argv
    extra = []
    for p in paths:
        extra.extend(_config_tokens(p))
    return argv[: sub_idx + 1] + extra + argv[sub_idx + 1 :]


def _add_common(sp):
    sp.add_argument("--threads", type=int, default=1,
                    help="BLAS thread cap; 1 gives bitwise determinism (default 1)")
    sp.add_argument("--config", metavar="FILE",
                    help="key=value file supplying any flag of this command")


def _add_train_config(sp):
    sp.add_argument("--L", type=int, default=20, help="pseudo-point count")
    sp.add_argument("--lambda_w", type=float, default=0.1, help="ridge on w")
    sp.add_argument("--lambda_V", type=float, default=0.1, help="ridge on V")
    sp.add_argument("--max_iters", type=int, default=100, help="EM iteration cap")
    sp.add_argument("--tol", type=float, default=1e-6, help="EM stop tolerance on Q")
    sp.add_argument("--seed", type=int, default=0, help="init jitter seed")
    sp.add_argument("--init_jitter", type=float, default=0.0,
                    help="stddev of random init around zero (default 0)")
    sp.add_argument("--transform", choices=["identity", "log1p_maxscale", "max_scale"],
                    default=None, help="time transform (default: per model kind)")
    sp.add_argument("--no-standardize", action="store_true",
                    help="skip per-feature z-scoring")


def build_parser():
    p = argparse.ArgumentParser(
        prog="nodef",
        description="Delayed-feedback conversion modeling: kernel-hazard model, "
                    "exponential baseline, naive logistic baseline.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate the three-pattern synthetic dataset")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--mode", choices=["paper_faithful", "consistent"],
                    default="paper_faithful",
                    help="paper_faithful flips labels uniformly; consistent keeps y=1")
    sp.add_argument("-o", "--output", required=True, help="output CSV path")
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="fit a model and write a model file")
    sp.add_argument("data", help="conversion-log CSV")
    sp.add_argument("--model", choices=["nodef", "dfm", "naive"], default="nodef")
    sp.add_argument("--snapshot", type=int, required=True,
                    help="snapshot timestamp (epoch seconds) labels are taken at")
    _add_train_config(sp)
    sp.add_argument("-o", "--output", required=True, help="model file path")
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="write one conversion probability per row")
    sp.add_argument("model", help="model file")
    sp.add_argument("data", help="conversion-log CSV (labels ignored)")
    sp.add_argument("--horizon", default="inf",
                    help="prediction horizon in days, or 'inf' for eventual (default)")
    sp.add_argument("-o", "--output", default=None, help="output path (default stdout)")
    _add_common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("eval", help="score a model against labeled data")
    sp.add_argument("model", help="model file")
    sp.add_argument("data", help="conversion-log CSV")
    sp.add_argument("--snapshot", type=int, required=True,
                    help="snapshot timestamp (epoch seconds) labels are taken at")
    _add_common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("density", help="export delay-density curves")
    sp.add_argument("model", help="model file (kernel or exponential kind)")
    sp.add_argument("--features", required=True,
                    help="CSV of feature vectors (header f1..fM)")
    sp.add_argument("--t-max", type=float, default=None,
                    help="curve endpoint in days (default: the model's fitted range)")
    sp.add_argument("--points", type=int, default=200, help="grid resolution")
    sp.add_argument("-o", "--output", default=None, help="output path (default stdout)")
    _add_common(sp)
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("gridsearch", help="pick hyperparameters on a validation set")
    sp.add_argument("train_data", help="training CSV")
    sp.add_argument("val_data", help="validation CSV")
    sp.add_argument("--train-snapshot", type=int, required=True)
    sp.add_argument("--val-snapshot", type=int, required=True)
    sp.add_argument("--model", choices=["nodef", "dfm", "naive"], default="nodef")
    sp.add_argument("--L_grid", default=None, help="comma list, default 10,20,30")
    sp.add_argument("--lambda_w_grid", default=None, help="comma list, default 1.0,0.1,0.01")
    sp.add_argument("--lambda_V_grid", default=None, help="comma list, default 1.0,0.1,0.01")
    _add_train_config(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_gridsearch)

    return p


def _require_file(path):
    if not os.path.exists(path):
        raise UsageError(f"file not found: {path}")
    return path


def _load_dataset(path, snapshot):
    try:
        return load_csv(_require_file(path), snapshot)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_bundle(path):
    try:
        return load_model(_require_file(path))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _train_config(args):
    try:
        return TrainConfig(
            L=args.L, lambda_w=args.lambda_w, lambda_V=args.lambda_V,
            max_iters=args.max_iters, tol=args.tol, seed=args.seed,
            init_jitter=args.init_jitter,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_stream(path):
    return open(path, "w") if path else sys.stdout


def cmd_synth(args):
    dataset = generate_synthetic(args.seed, args.mode)
    write_csv(dataset_to_log(dataset), args.output)
    offset = 0
    for k, (count, _, delay_mean) in enumerate(SYNTH_PATTERNS, start=1):
        pos = sum(s.y for s in dataset.samples[offset : offset + count])
        print(f"pattern {k}: {count} samples, delay mean {delay_mean}, "
              f"{pos} observed positives", file=sys.stderr)
        offset += count
    snapshot = int(SYNTH_ELAPSED * SECONDS_PER_DAY)
    print(f"wrote {len(dataset)} rows to {args.output}; "
          f"label with --snapshot {snapshot}", file=sys.stderr)
    return 0


def cmd_train(args):
    dataset = _load_dataset(args.data, args.snapshot)
    config = _train_config(args)

    def progress(j, q):
        print(f"iter={j} Q={q:.6f}", file=sys.stderr)

    bundle, result = train_bundle(
        dataset, args.model, config,
        transform_kind=args.transform,
        standardize=not args.no_standardize,
        on_iteration=progress,
    )
    save_model(bundle, args.output)
    if result is not None:
        print(f"converged={result.converged} iterations={result.iterations}",
              file=sys.stderr)
    else:
        print("fitted (single convex problem, no EM trace)", file=sys.stderr)
    print(f"wrote model to {args.output}", file=sys.stderr)
    return 0


def _parse_horizon(text):
    if text == "inf":
        return None
    try:
        h = float(text)
    except ValueError:
        raise UsageError(f"horizon must be a number or 'inf', got {text!r}") from None
    if not (np.isfinite(h) and h >= 0):
        raise UsageError(f"horizon must be nonnegative, got {text!r}")
    return h


def cmd_predict(args):
    bundle = _load_bundle(args.model)
    try:
        log = read_log(_require_file(args.data))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if log.M != bundle.n_features_raw:
        raise UsageError(
            f"model expects M={bundle.n_features_raw} features, data has {log.M}"
        )
    horizon = _parse_horizon(args.horizon)
    X = np.stack([r.features for r in log.records]) if len(log) else np.zeros((0, log.M))
    preds = bundle.predict(X, horizon)
    out = _out_stream(args.output)
    try:
        for v in preds:
            out.write(repr(float(v)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{len(preds)} predictions", file=sys.stderr)
    return 0


def cmd_eval(args):
    bundle = _load_bundle(args.model)
    dataset = _load_dataset(args.data, args.snapshot)
    if dataset.M != bundle.n_features_raw:
        raise UsageError(
            f"model expects M={bundle.n_features_raw} features, data has {dataset.M}"
        )
    labels = dataset.labels
    window = evaluate(bundle.predict(dataset.X, dataset.elapsed), labels)
    eventual = evaluate(bundle.predict(dataset.X, None), labels)
    print(f"mode=window {window.to_line()}")
    print(f"mode=eventual {eventual.to_line()}")
    print("window scores each row at its own elapsed time; "
          "eventual ignores the horizon", file=sys.stderr)
    return 0


def cmd_density(args):
    bundle = _load_bundle(args.model)
    if bundle.kind == "naive":
        raise UsageError("naive model has no delay model")
    try:
        X = read_features(_require_file(args.features))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if X.shape[1] != bundle.n_features_raw:
        raise UsageError(
            f"model expects M={bundle.n_features_raw} features, data has {X.shape[1]}"
        )
    if args.points < 2:
        raise UsageError("need at least 2 grid points")
    t_max = args.t_max
    if t_max is None:
        top = bundle.grid.points[-1] if bundle.kind == "nodef" else 1.0
        t_max = float(bundle.transform.inverse(top))
    if not (np.isfinite(t_max) and t_max > 0):
        raise UsageError(f"t-max must be positive, got {t_max!r}")
    times = np.linspace(0.0, t_max, args.points)
    out = _out_stream(args.output)
    try:
        out.write("vector,time,density,normalized\n")
        for i in range(X.shape[0]):
            f = bundle.density(X[i], times)
            peak = f.max()
            fn = f / peak if peak > 0 else np.zeros_like(f)
            for t, fv, fnv in zip(times, f, fn):
                out.write(f"{i},{repr(float(t))},{repr(float(fv))},{repr(float(fnv))}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{X.shape[0]} curves over [0, {t_max}]", file=sys.stderr)
    return 0


def _parse_grid(text, cast):
    try:
        values = tuple(cast(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad grid list {text!r}") from None
    if not values:
        raise UsageError("empty grid list")
    return values


def cmd_gridsearch(args):
    train = _load_dataset(args.train_data, args.train_snapshot)
    validation = _load_dataset(args.val_data, args.val_snapshot)
    grids = dict(DEFAULT_GRIDS)
    if args.L_grid:
        grids["L"] = _parse_grid(args.L_grid, int)
    if args.lambda_w_grid:
        grids["lambda_w"] = _parse_grid(args.lambda_w_grid, float)
    if args.lambda_V_grid:
        grids["lambda_V"] = _parse_grid(args.lambda_V_grid, float)
    base = _train_config(args)

    def progress(cfg, report):
        print(f"L={cfg.L} lambda_w={cfg.lambda_w} lambda_V={cfg.lambda_V} "
              f"{report.to_line()}", file=sys.stderr)

    result = grid_search(
        train, validation, grids, kind=args.model, base_config=base,
        transform_kind=args.transform, standardize=not args.no_standardize,
        on_point=progress,
    )
    cfg = result.config
    print(f"L={cfg.L} lambda_w={cfg.lambda_w} lambda_V={cfg.lambda_V} "
          f"{result.report.to_line()}")
    print(f"searched {len(result.evaluated)} grid points", file=sys.stderr)
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = _expand_configs(argv)
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, SingleClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
