import numpy as np
import pytest

from trendoco import envgen, oracle


def test_zero_kinks_is_exactly_linear():
    spec = envgen.PiecewiseLinearSpec(n=50, kinks=0, budget=0.0, seed=1)
    w, stream = envgen.gen_piecewise_linear(spec, noise=0.0)
    assert oracle.tv_variation(w, 1) == 0.0
    assert len(stream) == 50


def test_single_kink_hits_budget_with_one_slope_change():
    spec = envgen.PiecewiseLinearSpec(n=64, kinks=1, budget=0.5, seed=2)
    w, _ = envgen.gen_piecewise_linear(spec, noise=0.0)
    d2 = np.diff(w[:, 0], 2)
    nonzero = np.flatnonzero(np.abs(d2) > 1e-15)
    assert nonzero.size == 1
    assert abs(d2[nonzero[0]]) * 64 == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("n,budget,kinks", [(64, 1.0, 3), (257, 4.0, 8),
                                            (1024, 8.0, 8), (8192, 8.0, 8)])
def test_budget_exactness(n, budget, kinks):
    spec = envgen.PiecewiseLinearSpec(n=n, kinks=kinks, budget=budget, seed=5)
    w, _ = envgen.gen_piecewise_linear(spec, noise=0.0)
    assert oracle.tv_variation(w, 1) == pytest.approx(budget, abs=1e-9)
    assert np.abs(w).max() <= 1.0


def test_multidimensional_budget_split():
    spec = envgen.PiecewiseLinearSpec(n=128, d=3, kinks=4, budget=3.0, seed=7)
    w, stream = envgen.gen_piecewise_linear(spec, noise=0.02)
    assert w.shape == (128, 3)
    assert oracle.tv_variation(w, 1) == pytest.approx(3.0, abs=1e-9)
    assert stream[0].dimension == 3


def test_reproducibility():
    spec = envgen.PiecewiseLinearSpec(n=100, kinks=5, budget=2.0, seed=11)
    w1, s1 = envgen.gen_piecewise_linear(spec)
    w2, s2 = envgen.gen_piecewise_linear(spec)
    assert np.array_equal(w1, w2)
    assert all(np.array_equal(a.target, b.target) for a, b in zip(s1, s2))


def test_targets_stay_in_box():
    spec = envgen.PiecewiseLinearSpec(n=200, kinks=6, budget=4.0, seed=13)
    w, stream = envgen.gen_piecewise_linear(spec, noise=0.3)
    targets = np.stack([loss.target for loss in stream])
    assert np.abs(targets).max() <= 1.0
    assert np.abs(w).max() <= 1.0


def test_infeasible_budget_rejected_with_diagnostic():
    with pytest.raises(envgen.InfeasibleSpecError, match="amplitude"):
        # A single mid-horizon kink absorbing this budget cannot stay in
        # the box (seed 0 draws an interior kink position).
        envgen.gen_piecewise_linear(
            envgen.PiecewiseLinearSpec(n=512, kinks=1, budget=20.0, seed=0))


def test_positive_budget_needs_a_kink():
    with pytest.raises(envgen.InfeasibleSpecError):
        envgen.gen_piecewise_linear(
            envgen.PiecewiseLinearSpec(n=32, kinks=0, budget=1.0, seed=0))


def test_spec_validation():
    with pytest.raises(ValueError):
        envgen.PiecewiseLinearSpec(n=3, kinks=0, budget=0.0)
    with pytest.raises(ValueError):
        envgen.PiecewiseLinearSpec(n=10, kinks=0, budget=-1.0)
    with pytest.raises(ValueError):
        envgen.PiecewiseLinearSpec(n=10, kinks=0, budget=0.0, box=1.5)
    with pytest.raises(ValueError):
        envgen.PiecewiseLinearSpec(n=10, kinks=9, budget=0.0)


# -- CSV ingestion -------------------------------------------------------------


def write_csv(path, text):
    path.write_text(text)
    return str(path)


def test_two_row_minmax_normalization(tmp_path):
    path = write_csv(tmp_path / "a.csv", "t,value\n1,0\n2,10\n")
    series = envgen.ingest_csv(path, columns=["value"])
    assert series.values[:, 0].tolist() == [-1.0, 1.0]


def test_nan_cell_named_in_error(tmp_path):
    path = write_csv(tmp_path / "b.csv", "t,value\n1,0\n2,nan\n3,4\n")
    with pytest.raises(ValueError, match="row 2.*value"):
        envgen.ingest_csv(path, columns=["value"])


def test_non_numeric_cell_named_in_error(tmp_path):
    path = write_csv(tmp_path / "c.csv", "t,value\n1,0\n2,oops\n")
    with pytest.raises(ValueError, match="row 2"):
        envgen.ingest_csv(path, columns=["value"])


def test_unknown_column_rejected(tmp_path):
    path = write_csv(tmp_path / "d.csv", "t,value\n1,0\n")
    with pytest.raises(ValueError, match="unknown column"):
        envgen.ingest_csv(path, columns=["nope"])


def test_empty_file_and_missing_file(tmp_path):
    path = write_csv(tmp_path / "e.csv", "")
    with pytest.raises(ValueError, match="empty"):
        envgen.ingest_csv(path)
    with pytest.raises(FileNotFoundError):
        envgen.ingest_csv(tmp_path / "missing.csv")


def test_round_trip_denormalization(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.uniform(-5, 17, size=20)
    body = "t,x\n" + "\n".join(f"{i},{float(v)!r}" for i, v in enumerate(raw))
    path = write_csv(tmp_path / "f.csv", body + "\n")
    series = envgen.ingest_csv(path, columns=["x"])
    assert np.abs(series.values).max() <= 1.0 + 1e-12
    back = series.denormalize()
    assert np.allclose(back[:, 0], raw, atol=1e-12)


def test_autodetect_numeric_columns(tmp_path):
    path = write_csv(tmp_path / "g.csv", "date,open,close\n2020-01-01,1,2\n2020-01-02,3,4\n")
    series = envgen.ingest_csv(path)
    assert series.columns == ["open", "close"]
    assert series.values.shape == (2, 2)
