import dataclasses

import numpy as np
import pytest

from leverage_classifier import Dataset, Hyperplane
from leverage_classifier.cli import main
from leverage_classifier.harness import (RESULT_COLUMNS, SUMMARY_COLUMNS, TIMING_COLUMNS,
                                         CSVFormatError, ExperimentConfig, emit_projection,
                                         full_reference, load_labeled_csv, prepare_data,
                                         read_table, run_simulation, run_timing, write_table)


def tiny(tmp_path, **kw):
    base = dict(scenario="NormMix", N=2000, p=4, n0=100, n_list=(200,), reps=1,
                criteria=("FULL", "A", "L", "UNIF"), seed=3, out=str(tmp_path / "out"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_tiny_run_row_count(tmp_path):
    cfg = tiny(tmp_path, reps=2, n_list=(150, 200))
    res = run_simulation(cfg)
    assert len(res) == 2 * 4 * 2
    header, rows = read_table(tmp_path / "out" / "results.csv")
    assert header == RESULT_COLUMNS and len(rows) == 16
    header, rows = read_table(tmp_path / "out" / "summary.csv")
    assert header == SUMMARY_COLUMNS and len(rows) == 4 * 2
    assert all(r.ok for r in res)
    for r in res:
        assert 0 <= r.accuracy_pct <= 100
        assert min(r.t_pilot_s, r.t_probs_s, r.t_draw_s, r.t_fit_s) >= 0


def test_full_control_row(tmp_path):
    res = run_simulation(tiny(tmp_path))
    full = [r for r in res if r.criterion == "FULL"]
    assert len(full) == 1 and full[0].mse == 0.0


def test_failed_cells_are_recorded(tmp_path):
    # a pilot below the minimum size fails; uniform cells still run
    res = run_simulation(tiny(tmp_path, n0=10, criteria=("A", "UNIF")))
    by = {r.criterion: r for r in res}
    assert by["A"].error_code == "ValueError" and np.isnan(by["A"].mse)
    assert by["UNIF"].ok and np.isfinite(by["UNIF"].mse)
    _, rows = read_table(tmp_path / "out" / "results.csv")
    assert rows[0][RESULT_COLUMNS.index("error_code")] == "ValueError"


def test_deterministic_output(tmp_path):
    a = run_simulation(tiny(tmp_path, out=str(tmp_path / "a"), reps=2))
    b = run_simulation(tiny(tmp_path, out=str(tmp_path / "b"), reps=2, workers=2))
    key = lambda r: (r.criterion, r.n, r.rep, r.seed, r.mse, r.accuracy_pct, r.error_code)
    assert [key(r) for r in a] == [key(r) for r in b]


def test_reference_cache(tmp_path):
    cfg = tiny(tmp_path)
    train, _ = prepare_data(cfg)
    b1, lam1, _ = full_reference(train, cfg, tmp_path / "cache")
    assert len(list((tmp_path / "cache").glob("full_*.npz"))) == 1
    b2, lam2, _ = full_reference(train, cfg, tmp_path / "cache")
    np.testing.assert_array_equal(b1.as_vector(), b2.as_vector())
    assert lam1 == lam2


def test_split_sizes(tmp_path):
    train, test = prepare_data(tiny(tmp_path, test_size=500))
    assert train.N == 2000 and test.N == 500


# -- CSV input -------------------------------------------------------------

def write(path, text):
    path.write_text(text)
    return path


def test_threshold_labels(tmp_path):
    p = write(tmp_path / "t.csv", "resp,a,b\n5,1,2\n10,2,0\n15,4,1\n")
    ld = load_labeled_csv(p, "resp", threshold=10)
    np.testing.assert_array_equal(ld.dataset.y, [-1, -1, 1])
    np.testing.assert_array_equal(ld.response, [5, 10, 15])


def test_standardization(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(5.0, 3.0, size=(300, 3)) * [1, 100, 1e-3]
    y = np.where(rng.random(300) < 0.5, 1, -1)
    write_table(tmp_path / "d.csv", ["y", "a", "b", "c"], np.column_stack([y, X]))
    ld = load_labeled_csv(tmp_path / "d.csv", "y")
    assert np.abs(ld.dataset.X.mean(axis=0)).max() < 1e-10
    assert np.abs(ld.dataset.X.std(axis=0) - 1).max() < 1e-10
    np.testing.assert_allclose(ld.transform(X), ld.dataset.X, rtol=0, atol=1e-12)
    assert ld.feature_names == ["a", "b", "c"]


def test_malformed_rows_report_lines(tmp_path):
    p = write(tmp_path / "m.csv", "y,a\n1,0.5\n-1,abc\n1\n-1,2\n")
    with pytest.raises(CSVFormatError, match=r"line 3.*line 4"):
        load_labeled_csv(p, "y")


def test_missing_and_constant_columns(tmp_path):
    p = write(tmp_path / "c.csv", "y,a,b\n1,1,7\n-1,2,7\n1,3,7\n")
    with pytest.raises(CSVFormatError, match="missing label"):
        load_labeled_csv(p, "z")
    with pytest.raises(CSVFormatError, match="missing feature"):
        load_labeled_csv(p, "y", feature_columns=["a", "q"])
    with pytest.raises(CSVFormatError, match="constant"):
        load_labeled_csv(p, "y")
    with pytest.raises(CSVFormatError, match=r"\+1/-1"):
        load_labeled_csv(write(tmp_path / "l.csv", "y,a\n2,1\n1,2\n"), "y")
    with pytest.raises(FileNotFoundError):
        load_labeled_csv(tmp_path / "nope.csv", "y")


def test_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(50, 4)) * 10.0 ** rng.integers(-8, 8, size=(50, 4))
    write_table(tmp_path / "r.csv", ["a", "b", "c", "d"], vals)
    header, rows = read_table(tmp_path / "r.csv")
    assert header == ["a", "b", "c", "d"]
    np.testing.assert_allclose(np.array(rows), vals, rtol=1e-12, atol=0)


# -- projection ------------------------------------------------------------

def test_projection_rank_two(tmp_path):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 2)) @ [[2.0, 0.5], [0.0, 1.0]]
    data = Dataset(X, np.where(X[:, 0] > 0, 1, -1))
    emit_projection(data, {"h": Hyperplane(0.5, [1.0, -1.0])}, tmp_path / "p.csv")
    header, rows = read_table(tmp_path / "p.csv")
    assert header == ["pc1", "pc2", "label", "f_h"]
    arr = np.array(rows)
    assert arr.shape[0] == 100
    Z = arr[:, :2]
    Xc = X - X.mean(axis=0)
    # a rotation: all pairwise Gram entries are preserved
    np.testing.assert_allclose(Z @ Z.T, Xc @ Xc.T, atol=1e-9)
    np.testing.assert_allclose(arr[:, 3], 0.5 + X @ [1.0, -1.0], rtol=1e-12)


def test_projection_variance_order(tmp_path):
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=(500, 6)) * [3, 1, 2, 1, 1, 0.5], np.ones(500))
    emit_projection(data, [Hyperplane.zeros(6)], tmp_path / "p.csv")
    _, rows = read_table(tmp_path / "p.csv")
    arr = np.array(rows)
    assert arr[:, 0].var() >= arr[:, 1].var()
    # the first component captures the largest possible variance
    assert arr[:, 0].var() >= 0.99 * np.linalg.eigvalsh(np.cov(data.X.T, bias=True)).max()


# -- config and CLI --------------------------------------------------------

def test_config_file_and_overrides(tmp_path):
    p = write(tmp_path / "exp.cfg", "scenario = T3\nN = 3000\nn_list = 100, 200\n"
                                    "lambda_grid = 0.001, 0.01  # fixed grid\nreps = 4\n")
    cfg = ExperimentConfig.from_file(p, reps=2)
    assert cfg.scenario == "T3" and cfg.N == 3000 and cfg.n_list == (100, 200)
    assert cfg.reps == 2 and cfg.grid_values == (0.001, 0.01)
    assert list(cfg.grid_for(50)) == [0.001, 0.01]
    with pytest.raises(ValueError, match="unknown config key"):
        ExperimentConfig.from_file(write(tmp_path / "bad.cfg", "colour = red\n"))
    with pytest.raises(ValueError):
        ExperimentConfig(reps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(n_list=())
    with pytest.raises(ValueError):
        ExperimentConfig(criteria=("B",))


def test_cli_simulate(tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["simulate", "--scenario", "II", "--N", "1500", "--p", "4", "--n0", "60",
                 "--n", "100", "--reps", "1", "--criterion", "A,UNIF", "--out", str(out)])
    assert code == 0
    assert (out / "results.csv").exists() and (out / "summary.csv").exists()
    assert capsys.readouterr().out.startswith(",".join(SUMMARY_COLUMNS))


def test_cli_errors(tmp_path, capsys):
    assert main(["real", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--criterion", "Z", "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_real_and_project(tmp_path):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(1200, 3))
    resp = 10 + 3 * (X @ [1.0, -0.5, 0.3]) + rng.normal(size=1200)
    write_table(tmp_path / "r.csv", ["RMSD", "a", "b", "c"], np.column_stack([resp, X]))
    out = tmp_path / "o"
    assert main(["real", "--input", str(tmp_path / "r.csv"), "--threshold", "10", "--n0", "60",
                 "--n", "100", "--reps", "1", "--out", str(out)]) == 0
    _, rows = read_table(out / "results.csv")
    assert len(rows) == 3 and all(r[0] == "r" for r in rows)
    assert main(["project", "--input", str(tmp_path / "r.csv"), "--threshold", "10",
                 "--n0", "60", "--n", "100", "--out", str(out)]) == 0
    header, rows = read_table(out / "projection.csv")
    assert header[:3] == ["pc1", "pc2", "label"] and len(rows) == 600


def test_cli_synth_casp(tmp_path):
    path = tmp_path / "casp.csv"
    assert main(["synth-casp", "--out", str(path)]) == 0
    ld = load_labeled_csv(path, "RMSD", threshold=10)
    assert ld.dataset.N == 45_730 and ld.dataset.p == 9


def test_run_timing_schema(tmp_path):
    cfg = tiny(tmp_path, N_list=(600, 1200), timing_n=100, n0=50, timing_repeats=1)
    table = run_timing(cfg)
    assert len(table.rows) == 8
    for N in (600, 1200):
        assert {r[1] for r in table.rows if r[0] == N} == {"SVM-FULL", "LC-A", "LC-L", "LC-UNIF"}
        assert table.seconds(N, "SVM-FULL") >= 0
    assert set(table.checks) == {"full_time_increasing", "ratio_full_over_L_increasing",
                                 "L_not_slower_than_A"}
    header, rows = read_table(tmp_path / "out" / "timing.csv")
    assert header == TIMING_COLUMNS and len(rows) == 8
