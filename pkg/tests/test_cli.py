import csv
import json

import numpy as np
import pytest

from kreboot.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main, resolve, UsageError


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_writes_artifacts(tmp_path):
    out = tmp_path / "fit"
    assert main(["fit", "--m", "40", "--kmax", "50", "--seed", "3", "--out", str(out)]) == EXIT_OK
    for name in ("model.json", "history.csv", "data.csv", "manifest.json"):
        assert (out / name).exists()
    hist = read_rows(out / "history.csv")
    assert len(hist) == 50
    assert all(float(r["l1"]) <= 0.5 * np.log(int(r["iteration"]) + 1) * (1 + 1e-12) for r in hist)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 3
    assert manifest["_meta"]["files"] == ["model.json", "history.csv"]


def test_predict_with_zero_model(tmp_path):
    out = tmp_path / "a"
    assert main(["fit", "--m", "30", "--kmax", "5", "--c0", "1e-9", "--out", str(out)]) == EXIT_OK
    model = json.loads((out / "model.json").read_text())
    model["coefficients"] = [0.0] * len(model["coefficients"])
    (out / "zero.json").write_text(json.dumps(model))
    pred_dir = tmp_path / "p"
    code = main(["predict", "--model", str(out / "zero.json"), "--data", str(out / "data.csv"), "--out", str(pred_dir)])
    assert code == EXIT_OK
    rows = read_rows(pred_dir / "predictions.csv")
    assert len(rows) == 30
    assert all(float(r["prediction"]) == 0.0 for r in rows)


def test_fit_then_predict_reproduces_fitted_values(tmp_path):
    out = tmp_path / "f"
    assert main(["fit", "--m", "25", "--kmax", "40", "--out", str(out)]) == EXIT_OK
    assert main(["predict", "--model", str(out / "model.json"), "--data", str(out / "data.csv"),
                 "--out", str(out)]) == EXIT_OK
    model = json.loads((out / "model.json").read_text())
    pred = np.array([float(r["prediction"]) for r in read_rows(out / "predictions.csv")])
    data = read_rows(out / "data.csv")
    X = np.array([[float(r[f"x{i}"]) for i in (1, 2, 3)] for r in data])
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    K = np.clip(1 - D, 0, None) ** 4 * (4 * D ** 2 + 1)
    np.testing.assert_allclose(pred, K @ np.array(model["coefficients"]), atol=1e-12)


def test_generate_command(tmp_path):
    assert main(["generate", "--m", "12", "--noise", "0", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_rows(tmp_path / "data.csv")
    assert len(rows) == 12
    assert all(r["y"] == r["clean"] for r in rows)


def test_sim3_smoke_table(tmp_path):
    code = main(["sim3", "--trials", "2", "--m", "50,70", "--noise", "1,2", "--kmax", "100",
                 "--jobs", "1", "--out", str(tmp_path)])
    assert code == EXIT_OK
    table = read_rows(tmp_path / "sim3_table.csv")
    assert len(table) == 4
    assert list(table[0]) == ["m", "noise_variance", "kreboot", "rboosting", "rtboosting", "epsilon", "klasso", "krr"]
    assert len(read_rows(tmp_path / "sim3_trials.csv")) == 4 * 6 * 2


def test_rates_command(tmp_path):
    assert main(["rates", "--m", "20", "--window", "10,200", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "rates.json").read_text())
    assert report["slope"] < 0
    assert len(read_rows(tmp_path / "rates.csv")) == 200


# --- error handling -------------------------------------------------------------

def test_missing_data_file_is_io_error(tmp_path):
    code = main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert code == EXIT_IO


def test_missing_config_file_is_io_error(tmp_path):
    assert main(["fit", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_IO


@pytest.mark.parametrize("argv", [
    ["fit", "--c0", "-1"],
    ["fit", "--kmax", "0"],
    ["fit", "--alpha", "1.5"],
    ["fit", "--noise", "-0.1"],
    ["sim3", "--jobs", "0"],
    ["rates", "--window", "100"],
    ["rates", "--window", "50,20"],
    ["predict", "--data", "x.csv"],
])
def test_bad_parameters_are_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_USAGE


def test_unknown_command_exits_with_usage():
    with pytest.raises(SystemExit) as exc:
        main(["bake"])
    assert exc.value.code == 2


def test_unknown_config_field(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sed": 1}))
    with pytest.raises(UsageError):
        resolve(["fit", "--config", str(cfg)])


# --- configuration precedence and reproducibility --------------------------------

def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "kmax": 10, "_meta": {"ignored": True}}))
    resolved = resolve(["fit", "--config", str(cfg), "--seed", "9"])
    assert resolved["seed"] == 9
    assert resolved["kmax"] == 10
    assert resolve(["fit"])["seed"] == 0


def test_manifest_replays_byte_identically(tmp_path):
    first = tmp_path / "one"
    assert main(["sim2", "--m", "60", "--noise", "1", "--trials", "2", "--kmax", "50", "--jobs", "1",
                 "--seed", "4", "--out", str(first)]) == EXIT_OK
    second = tmp_path / "two"
    assert main(["sim2", "--config", str(first / "manifest.json"), "--out", str(second)]) == EXIT_OK
    assert (first / "sim2.csv").read_bytes() == (second / "sim2.csv").read_bytes()
    m1 = json.loads((first / "manifest.json").read_text())
    m2 = json.loads((second / "manifest.json").read_text())
    m1.pop("_meta"), m2.pop("_meta"), m1.pop("out"), m2.pop("out")
    assert m1 == m2
