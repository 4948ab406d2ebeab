"""End-to-end command-line tests; every command runs as a real subprocess."""

import subprocess
import sys

import numpy as np
import pytest

SNAPSHOT = 864000  # ten days of epoch seconds, the synthetic window end


def run_cli(*args, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "nodef", *map(str, args)],
        capture_output=True, text=True, **kwargs,
    )


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One synthetic CSV plus a trained model of each kind, shared read-only."""
    d = tmp_path_factory.mktemp("cli")
    csv = d / "syn.csv"
    r = run_cli("synth", "--seed", 3, "-o", csv)
    assert r.returncode == 0, r.stderr
    for kind in ("nodef", "dfm", "naive"):
        r = run_cli(
            "train", csv, "--model", kind, "--snapshot", SNAPSHOT,
            "--L", 5, "--max_iters", 5, "-o", d / f"{kind}.model",
        )
        assert r.returncode == 0, r.stderr
    return d


def test_help_exits_zero():
    assert run_cli("--help").returncode == 0
    assert run_cli("train", "--help").returncode == 0


def test_unknown_flag_is_usage_error():
    assert run_cli("synth", "--seed", 1, "--bogus", "-o", "x.csv").returncode == 2


def test_missing_subcommand_is_usage_error():
    assert run_cli().returncode == 2


def test_bad_synth_mode_is_usage_error(tmp_path):
    r = run_cli("synth", "--seed", 1, "--mode", "warped", "-o", tmp_path / "x.csv")
    assert r.returncode == 2


def test_missing_data_file_is_usage_error(tmp_path):
    r = run_cli(
        "train", tmp_path / "absent.csv", "--snapshot", SNAPSHOT,
        "-o", tmp_path / "m.model",
    )
    assert r.returncode == 2
    assert "not found" in r.stderr


def test_synth_shape_and_summary(workdir):
    lines = (workdir / "syn.csv").read_text().splitlines()
    assert len(lines) == 201  # header plus 200 rows
    assert lines[0].startswith("click_ts,conv_ts,f1")


def test_synth_is_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert run_cli("synth", "--seed", 11, "-o", a).returncode == 0
    assert run_cli("synth", "--seed", 11, "-o", b).returncode == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_is_deterministic(workdir, tmp_path):
    m1 = tmp_path / "m1.model"
    m2 = tmp_path / "m2.model"
    args = ("train", workdir / "syn.csv", "--snapshot", SNAPSHOT,
            "--L", 4, "--max_iters", 3, "--threads", 1)
    assert run_cli(*args, "-o", m1).returncode == 0
    assert run_cli(*args, "-o", m2).returncode == 0
    assert m1.read_bytes() == m2.read_bytes()


def test_train_reports_progress(workdir, tmp_path):
    r = run_cli(
        "train", workdir / "syn.csv", "--snapshot", SNAPSHOT,
        "--L", 4, "--max_iters", 3, "-o", tmp_path / "m.model",
    )
    assert r.returncode == 0
    assert "iter=1 Q=" in r.stderr
    assert "converged=" in r.stderr
    assert r.stdout == ""  # human-readable chatter stays on stderr


def _predictions(workdir, model, *extra):
    r = run_cli("predict", workdir / f"{model}.model", workdir / "syn.csv", *extra)
    assert r.returncode == 0, r.stderr
    return np.array([float(v) for v in r.stdout.split()])


@pytest.mark.parametrize("kind", ["nodef", "dfm"])
def test_predict_zero_horizon_is_zero(workdir, kind):
    preds = _predictions(workdir, kind, "--horizon", "0")
    assert preds.shape == (200,)
    assert np.all(preds == 0.0)


def test_predict_monotone_in_horizon(workdir):
    p1 = _predictions(workdir, "nodef", "--horizon", "1")
    p2 = _predictions(workdir, "nodef", "--horizon", "2")
    pinf = _predictions(workdir, "nodef")
    assert np.all(p1 <= p2)
    assert np.all(p2 <= pinf)
    assert np.all((0.0 < pinf) & (pinf < 1.0))


def test_naive_predictions_ignore_horizon(workdir):
    pinf = _predictions(workdir, "naive")
    p3 = _predictions(workdir, "naive", "--horizon", "3")
    np.testing.assert_array_equal(pinf, p3)


def test_predict_bad_horizon_is_usage_error(workdir):
    for bad in ("soon", "-1"):
        r = run_cli("predict", workdir / "nodef.model", workdir / "syn.csv",
                    "--horizon", bad)
        assert r.returncode == 2, bad


def test_predict_writes_output_file(workdir, tmp_path):
    out = tmp_path / "p.txt"
    r = run_cli("predict", workdir / "naive.model", workdir / "syn.csv", "-o", out)
    assert r.returncode == 0
    assert len(out.read_text().splitlines()) == 200


def test_predict_dimension_mismatch(workdir, tmp_path):
    small = tmp_path / "small.csv"
    small.write_text("click_ts,conv_ts,f1,f2\n0,100,1.0,2.0\n0,,0.5,1.5\n")
    r = run_cli("predict", workdir / "nodef.model", small)
    assert r.returncode == 2
    assert "M=10" in r.stderr


def test_eval_prints_both_modes(workdir):
    r = run_cli("eval", workdir / "nodef.model", workdir / "syn.csv",
                "--snapshot", SNAPSHOT)
    assert r.returncode == 0, r.stderr
    lines = r.stdout.splitlines()
    assert lines[0].startswith("mode=window ")
    assert lines[1].startswith("mode=eventual ")
    for line in lines:
        assert "n=200" in line
        assert "auc=" in line


def test_eval_is_deterministic(workdir):
    args = ("eval", workdir / "dfm.model", workdir / "syn.csv",
            "--snapshot", SNAPSHOT, "--threads", 1)
    r1 = run_cli(*args)
    r2 = run_cli(*args)
    assert r1.returncode == r2.returncode == 0
    assert r1.stdout == r2.stdout


def test_eval_single_class_fails(workdir, tmp_path):
    csv = tmp_path / "onesided.csv"
    rows = ["click_ts,conv_ts,f1,f2"]
    rows += [f"0,{3600 * (i + 1)},{i / 10},{1.0 - i / 10}" for i in range(12)]
    csv.write_text("\n".join(rows) + "\n")
    model = tmp_path / "naive2.model"
    r = run_cli("train", csv, "--model", "naive", "--snapshot", SNAPSHOT,
                "-o", model)
    assert r.returncode == 0, r.stderr
    r = run_cli("eval", model, csv, "--snapshot", SNAPSHOT)
    assert r.returncode == 1
    assert "error:" in r.stderr


def _features_csv(path, rows):
    m = len(rows[0])
    header = ",".join(f"f{j + 1}" for j in range(m))
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in rows)
    path.write_text(header + "\n" + body + "\n")


def _density_table(r):
    rows = [line.split(",") for line in r.stdout.splitlines()[1:]]
    data = np.array([[float(c) for c in row] for row in rows])
    return {int(v): data[data[:, 0] == v][:, 1:] for v in np.unique(data[:, 0])}


def test_density_normalization(workdir, tmp_path):
    feats = tmp_path / "f.csv"
    _features_csv(feats, [np.zeros(10), np.ones(10)])
    r = run_cli("density", workdir / "nodef.model", "--features", feats,
                "--points", 50)
    assert r.returncode == 0, r.stderr
    assert r.stdout.splitlines()[0] == "vector,time,density,normalized"
    curves = _density_table(r)
    assert set(curves) == {0, 1}
    for curve in curves.values():
        assert curve.shape == (50, 3)
        assert curve[:, 2].max() == 1.0  # per-curve max normalization
        assert np.all(curve[:, 1] >= 0.0)


def test_density_rejects_naive_model(workdir, tmp_path):
    feats = tmp_path / "f.csv"
    _features_csv(feats, [np.zeros(10)])
    r = run_cli("density", workdir / "naive.model", "--features", feats)
    assert r.returncode == 2
    assert "no delay model" in r.stderr


def test_density_zero_weights_ignore_features(workdir, tmp_path):
    # zero out the intensity weights in a copy of the model file; curves must
    # then coincide for any two feature vectors
    text = (workdir / "nodef.model").read_text()
    lines = text.splitlines()
    v_idx = next(i for i, l in enumerate(lines) if l.startswith("V="))
    n_vals = len(lines[v_idx][2:].split(","))
    lines[v_idx] = "V=" + ",".join(["0.0"] * n_vals)
    flat = tmp_path / "flat.model"
    flat.write_text("\n".join(lines) + "\n")
    feats = tmp_path / "f.csv"
    _features_csv(feats, [np.zeros(10), np.arange(10.0)])
    r = run_cli("density", flat, "--features", feats, "--points", 40)
    assert r.returncode == 0, r.stderr
    curves = _density_table(r)
    np.testing.assert_array_equal(curves[0], curves[1])


def test_config_file_supplies_flags_and_cli_wins(workdir, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("L=4\nmax_iters=2\n# a comment\n\n")
    model = tmp_path / "m.model"
    r = run_cli(
        "train", workdir / "syn.csv", "--snapshot", SNAPSHOT,
        "--config", cfg, "--L", 6, "-o", model,
    )
    assert r.returncode == 0, r.stderr
    assert "L=6" in model.read_text().splitlines()  # command line beat the file
    assert "iter=1 Q=" in r.stderr
    assert "iter=3 Q=" not in r.stderr  # max_iters=2 came from the file


def test_missing_config_file_is_usage_error(workdir, tmp_path):
    r = run_cli(
        "train", workdir / "syn.csv", "--snapshot", SNAPSHOT,
        "--config", tmp_path / "none.cfg", "-o", tmp_path / "m.model",
    )
    assert r.returncode == 2
    assert "config file not found" in r.stderr


def test_threads_must_be_positive(workdir):
    r = run_cli("eval", workdir / "naive.model", workdir / "syn.csv",
                "--snapshot", SNAPSHOT, "--threads", 0)
    assert r.returncode == 2


def test_gridsearch_reports_winner(workdir):
    r = run_cli(
        "gridsearch", workdir / "syn.csv", workdir / "syn.csv",
        "--train-snapshot", SNAPSHOT, "--val-snapshot", SNAPSHOT,
        "--L_grid", "4", "--lambda_w_grid", "0.1,1.0", "--lambda_V_grid", "0.1",
        "--max_iters", 2,
    )
    assert r.returncode == 0, r.stderr
    winner = r.stdout.splitlines()[-1]
    assert winner.startswith("L=4 lambda_w=")
    assert "log_loss=" in winner
    assert "searched 2 grid points" in r.stderr
