import csv
import json

import numpy as np
import pytest

from repgp.cli import EXIT_CONVERGENCE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, main
from repgp.design import find_reps
from repgp.het import het_fit, het_predict
from repgp.hom import HomModel, hom_predict


@pytest.fixture
def het_dataset(tmp_path, rng):
    X0 = rng.uniform(0, 1, (25, 1))
    X = np.repeat(X0, 3, axis=0)
    sd = 0.1 + 0.8 * X[:, 0]
    Y = np.sin(4 * X[:, 0]) + rng.normal(0, sd)
    path = tmp_path / "obs.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for i in range(len(Y)):
            w.writerow([f"{X[i, 0]:.17g}", f"{Y[i]:.17g}"])
    return path, X, Y


def test_fit_predict_round_trip(tmp_path, het_dataset, rng):
    data, X, Y = het_dataset
    out = tmp_path / "run"
    out.mkdir()
    rc = main(["--command", "fit", "--data", str(data), "--model", "het",
               "--out", str(out), "--seed", "1"])
    assert rc == EXIT_OK
    assert (out / "model.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["command"] == "fit"
    assert "wall_time_s" in manifest

    grid = tmp_path / "grid.csv"
    with open(grid, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"])
        for v in np.linspace(0, 1, 9):
            w.writerow([v])
    rc = main(["--command", "predict", "--model-file", str(out / "model.json"),
               "--data", str(grid), "--out", str(out)])
    assert rc == EXIT_OK
    rows = list(csv.DictReader(open(out / "predictions.csv")))
    assert len(rows) == 9
    assert set(rows[0]) == {"x1", "mean", "sd2", "nugs"}

    # CLI predictions agree with the direct API on the same data
    design = find_reps(X, Y)
    model = het_fit(design)
    p = het_predict(model, np.linspace(0, 1, 9)[:, None])
    got = np.array([float(r["mean"]) for r in rows])
    np.testing.assert_allclose(got, p.mean, rtol=1e-9)


def test_fit_outputs_byte_identical_across_runs(tmp_path, het_dataset):
    data, _, _ = het_dataset
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        assert main(["--command", "fit", "--data", str(data), "--model", "hom",
                     "--out", str(out), "--seed", "7"]) == EXIT_OK
        grid = tmp_path / "g.csv"
        grid.write_text("x\n0.1\n0.5\n0.9\n")
        assert main(["--command", "predict", "--model-file", str(out / "model.json"),
                     "--data", str(grid), "--out", str(out)]) == EXIT_OK
        outputs.append((out / "predictions.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_identity_check(tmp_path):
    rc = main(["--command", "identity-check", "--seed", "1", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    report = json.loads((tmp_path / "identity_report.json").read_text())
    assert report["all_pass"]
    assert all(item["max_rel_err"] < 1e-10 for item in report["identities"])


def test_bench_motorcycle_smoke(tmp_path):
    rc = main(["--command", "bench-motorcycle", "--splits", "2", "--seed", "3",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "motorcycle_splits.csv")))
    assert len(rows) == 4  # two models per split
    agg = list(csv.DictReader(open(tmp_path / "motorcycle_aggregate.csv")))
    assert {r["model"] for r in agg} == {"hom", "het"}


def test_bench_init_smoke(tmp_path, het_dataset):
    data, _, _ = het_dataset
    rc = main(["--command", "bench-init", "--data", str(data), "--restarts", "3",
               "--seed", "5", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "init_bench.csv")))
    assert len(rows) == 4
    assert rows[0]["start"] == "default"


def test_missing_data_is_validation_error(tmp_path):
    assert main(["--command", "fit", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_empty_data_is_validation_error(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("x,y\n")
    assert main(["--command", "fit", "--data", str(empty), "--out", str(tmp_path)]) \
        == EXIT_VALIDATION


def test_missing_file_is_io_error(tmp_path):
    assert main(["--command", "fit", "--data", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path)]) == EXIT_IO


def test_bad_bounds_are_validation_error(tmp_path, het_dataset):
    data, _, _ = het_dataset
    assert main(["--command", "fit", "--data", str(data), "--lower", "2.0",
                 "--upper", "1.0", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_unknown_command_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["--command", "explode"])
    assert exc.value.code == 2
