import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from nodef.model_io import (
    FORMAT_NAME,
    FORMAT_VERSION,
    ModelBundle,
    load_model,
    save_model,
    train_bundle,
)
from nodef.types import TrainConfig

from _helpers import delayed_task


def _trained(kind, seed=150, n=120, **kwargs):
    ds, _, _ = delayed_task(seed, n=n)
    cfg = TrainConfig(L=6, max_iters=15)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        bundle, result = train_bundle(ds, kind, cfg, **kwargs)
    return ds, bundle, result


@pytest.mark.parametrize("kind", ["nodef", "dfm", "naive"])
def test_round_trip_preserves_predictions_exactly(kind, tmp_path):
    ds, bundle, _ = _trained(kind)
    path = tmp_path / "model.txt"
    save_model(bundle, path)
    back = load_model(path)
    assert back.kind == kind
    assert back.n_features_raw == ds.M
    assert back.transform.kind == bundle.transform.kind
    assert back.transform.scale == bundle.transform.scale
    p0 = bundle.predict(ds.X, 2.5)
    p1 = back.predict(ds.X, 2.5)
    np.testing.assert_array_equal(p0, p1)
    e0 = bundle.predict(ds.X)
    e1 = back.predict(ds.X)
    np.testing.assert_array_equal(e0, e1)


@pytest.mark.parametrize("kind", ["nodef", "dfm", "naive"])
def test_resave_is_byte_identical(kind, tmp_path):
    _, bundle, _ = _trained(kind, seed=151)
    p1 = tmp_path / "a.txt"
    p2 = tmp_path / "b.txt"
    save_model(bundle, p1)
    save_model(load_model(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_parameters_bitwise(tmp_path):
    _, bundle, _ = _trained("nodef", seed=152)
    path = tmp_path / "m.txt"
    save_model(bundle, path)
    back = load_model(path)
    np.testing.assert_array_equal(back.params.w, bundle.params.w)
    np.testing.assert_array_equal(back.params.V, bundle.params.V)
    np.testing.assert_array_equal(back.grid.points, bundle.grid.points)
    assert back.grid.bandwidth == bundle.grid.bandwidth
    np.testing.assert_array_equal(back.scaler.mean, bundle.scaler.mean)
    np.testing.assert_array_equal(back.scaler.std, bundle.scaler.std)


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("hello world\n")
    with pytest.raises(ValueError):
        load_model(path)
    path.write_text("format=something-else\nversion=1\n")
    with pytest.raises(ValueError, match="not a model file"):
        load_model(path)


def test_load_rejects_unknown_version(tmp_path):
    _, bundle, _ = _trained("naive", seed=153)
    path = tmp_path / "m.txt"
    save_model(bundle, path)
    text = path.read_text().replace(
        f"version={FORMAT_VERSION}", f"version={FORMAT_VERSION + 1}"
    )
    path.write_text(text)
    with pytest.raises(ValueError, match="version"):
        load_model(path)


def test_load_rejects_inconsistent_grid(tmp_path):
    _, bundle, _ = _trained("nodef", seed=154)
    path = tmp_path / "m.txt"
    save_model(bundle, path)
    text = path.read_text().replace("L=6", "L=7")
    path.write_text(text)
    with pytest.raises(ValueError, match="grid"):
        load_model(path)


def test_format_header_present(tmp_path):
    _, bundle, _ = _trained("dfm", seed=155)
    path = tmp_path / "m.txt"
    save_model(bundle, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"format={FORMAT_NAME}"
    assert lines[1] == f"version={FORMAT_VERSION}"
    assert lines[2] == "kind=dfm"


def test_predict_checks_raw_feature_count():
    ds, bundle, _ = _trained("nodef", seed=156)
    with pytest.raises(ValueError, match=str(ds.M)):
        bundle.predict(np.ones((3, ds.M + 2)))


def test_predict_eventual_vs_horizon_ordering():
    ds, bundle, _ = _trained("nodef", seed=157)
    eventual = bundle.predict(ds.X)
    by2 = bundle.predict(ds.X, 2.0)
    by5 = bundle.predict(ds.X, 5.0)
    assert np.all(by2 <= by5 + 1e-15)
    assert np.all(by5 <= eventual + 1e-15)
    assert np.all(bundle.predict(ds.X, 0.0) == 0.0)


def test_predict_per_row_horizons():
    ds, bundle, _ = _trained("nodef", seed=158)
    times = np.linspace(0.5, 6.0, len(ds))
    per_row = bundle.predict(ds.X, times)
    for i in (0, 7, len(ds) - 1):
        one = bundle.predict(ds.X[i], float(times[i]))
        assert per_row[i] == pytest.approx(float(one[0]), rel=1e-14)


def test_naive_ignores_horizon():
    ds, bundle, _ = _trained("naive", seed=159)
    a = bundle.predict(ds.X)
    b = bundle.predict(ds.X, 3.0)
    np.testing.assert_array_equal(a, b)


def test_density_rejects_naive():
    ds, bundle, _ = _trained("naive", seed=160)
    with pytest.raises(ValueError, match="delay"):
        bundle.density(ds.X[0], np.linspace(0, 5, 10))


@pytest.mark.parametrize("kind", ["nodef", "dfm"])
def test_density_jacobian_consistent_with_predictions(kind):
    # integrating the raw-unit density against raw time must reproduce the
    # conversion mass 1 - s(E), i.e. predict(E)/predict_eventual
    ds, bundle, _ = _trained(kind, seed=161)
    x = ds.X[3]
    E = 4.0
    mass, _ = quad(
        lambda t: float(bundle.density(x, t)[0]), 0.0, E,
        epsabs=1e-10, epsrel=1e-10, limit=300,
    )
    p_by = float(bundle.predict(x, E)[0])
    p_ev = float(bundle.predict(x)[0])
    assert mass == pytest.approx(p_by / p_ev, abs=1e-6)


def test_default_transforms_per_kind():
    _, nodef_b, _ = _trained("nodef", seed=162)
    _, dfm_b, _ = _trained("dfm", seed=162)
    _, naive_b, _ = _trained("naive", seed=162)
    assert nodef_b.transform.kind == "log1p_maxscale"
    assert dfm_b.transform.kind == "max_scale"
    assert naive_b.transform.kind == "identity"


def test_transform_kind_override():
    _, bundle, _ = _trained("nodef", seed=163, transform_kind="identity")
    assert bundle.transform.kind == "identity"


def test_grid_spans_prepared_times():
    ds, bundle, _ = _trained("nodef", seed=164)
    top = bundle.grid.points[-1]
    t_elapsed = bundle.transform.apply(ds.elapsed)
    t_delays = bundle.transform.apply(ds.positive_delays)
    assert top == pytest.approx(max(t_elapsed.max(), t_delays.max()), rel=1e-12)


def test_naive_has_no_fit_result():
    _, _, result = _trained("naive", seed=165)
    assert result is None


def test_standardize_toggle_recorded():
    ds, bundle, _ = _trained("nodef", seed=166, standardize=False)
    assert not bundle.scaler.enabled
    # raw features flow through untouched
    np.testing.assert_array_equal(bundle.scaler.apply(ds.X), ds.X)


def test_train_bundle_rejects_unknown_kind():
    ds, _, _ = delayed_task(167, n=30)
    with pytest.raises(ValueError, match="kind"):
        train_bundle(ds, "boosted", TrainConfig())


def test_bundle_validation():
    with pytest.raises(ValueError):
        ModelBundle(
            kind="nodef", params=None, grid=None,
            transform=None, scaler=None, n_features_raw=3,
        )
