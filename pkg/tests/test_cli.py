import json
import warnings
from pathlib import Path

import pytest

from ddikit.cli import EXIT_INPUT, EXIT_NUMERIC, main
from ddikit.synthetic import write_toy_dataset

FAST = ["--set", "epochs=2", "--set", "n_folds=2", "--set", "d0=8", "--set", "hidden=8",
        "--set", "valid_fraction=0"]


@pytest.fixture(autouse=True)
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture
def env(tmp_path, monkeypatch):
    monkeypatch.setenv("DDIKIT_CACHE", str(tmp_path / "cache"))
    data = write_toy_dataset(tmp_path / "toy")
    return tmp_path, data


def run_dirs(out):
    return sorted(p for p in Path(out).iterdir() if p.is_dir())


def test_prepare_summary_and_cache_hit(env, capsys):
    tmp, data = env
    out = tmp / "runs"
    assert main(["prepare", "--data", str(data), "--out", str(out)]) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["drugs"] == 6 and first["ddi_relation_types"] == 4
    assert first["cache_hit"] is False
    assert main(["prepare", "--data", str(data), "--out", str(out)]) == 0
    second = json.loads(capsys.readouterr().out)
    assert second["cache_hit"] is True
    m1, m2 = (json.loads((r / "manifest.json").read_text()) for r in run_dirs(out))
    assert m1["prepared_key"] == m2["prepared_key"]
    assert m1["data_hashes"] == m2["data_hashes"] and m1["config_hash"] == m2["config_hash"]
    assert set(m1["versions"]) >= {"ddikit", "torch", "rdkit", "numpy", "python"}
    assert (tmp / "cache" / "prepared").is_dir()


def test_run_dir_named_by_time_and_hash(env, capsys):
    tmp, data = env
    main(["prepare", "--data", str(data), "--out", str(tmp / "runs")])
    run = Path(json.loads(capsys.readouterr().out)["run_dir"])
    stamp, _, digest = run.name.partition("-")[2].partition("-")
    cfg_hash = json.loads((run / "manifest.json").read_text())["config_hash"]
    assert run.name.endswith(cfg_hash)
    assert run.name[:8].isdigit()


def test_bad_smiles_row_is_reported(env, capsys):
    tmp, data = env
    rows = (data / "smiles.tsv").read_text().splitlines()
    rows[1] = rows[1].split("\t")[0] + "\tC1CC(((N"
    (data / "smiles.tsv").write_text("\n".join(rows) + "\n")
    bad = rows[1].split("\t")[0]
    assert main(["prepare", "--data", str(data), "--out", str(tmp / "runs")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["excluded_drugs"] == 1
    report = (Path(out["run_dir"]) / "exclusions.tsv").read_text().splitlines()
    assert report[0] == "drug\treason"
    assert report[1].startswith(bad + "\t")


def test_config_file_and_overrides(env, capsys):
    tmp, data = env
    cfg = tmp / "my.cfg"
    cfg.write_text("hidden = 12\nseed = 4\n")
    main(["prepare", "--data", str(data), "--out", str(tmp / "runs"), "--config", str(cfg),
          "--set", "seed=9"])
    run = Path(json.loads(capsys.readouterr().out)["run_dir"])
    text = (run / "config.cfg").read_text()
    assert "hidden = 12" in text and "seed = 9" in text


def test_input_errors_exit_2(env, capsys):
    tmp, data = env
    assert main(["prepare", "--data", str(tmp / "missing"), "--out", str(tmp / "r")]) == EXIT_INPUT
    assert main(["prepare", "--data", str(data), "--out", str(tmp / "r"),
                 "--set", "nonsense=1"]) == EXIT_INPUT
    assert main(["prepare", "--data", str(data), "--out", str(tmp / "r"),
                 "--set", "hidden"]) == EXIT_INPUT
    (data / "ddi.tsv").write_text("A\tonly-two-columns\n")
    assert main(["prepare", "--data", str(data), "--out", str(tmp / "r2")]) == EXIT_INPUT
    assert "ddi.tsv:1" in capsys.readouterr().err


def test_numeric_failure_exit_3(env, monkeypatch):
    from ddikit import trainer

    tmp, data = env

    def boom(*a, **k):
        raise trainer.NumericError("non-finite loss at epoch 0 step 0")

    monkeypatch.setattr(trainer, "run_cv", boom)
    assert main(["train", "--data", str(data), "--out", str(tmp / "r")] + FAST) == EXIT_NUMERIC


def test_train_evaluate_explain_report(env, capsys):
    tmp, data = env
    out = tmp / "runs"
    assert main(["train", "--data", str(data), "--out", str(out), "--folds", "0",
                 "--baselines", "--fidelity"] + FAST) == 0
    train_run = Path(json.loads(capsys.readouterr().out)["run_dir"])
    files = {p.name for p in train_run.iterdir()}
    assert {"metrics.json", "manifest.json", "config.cfg", "checkpoint_fold0.pt",
            "training_log_fold0.csv", "fidelity_fold0.csv"} <= files
    trained = json.loads((train_run / "metrics.json").read_text())

    assert main(["evaluate", "--data", str(data), "--run", str(train_run), "--out", str(out)]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["folds"][0]["test"] == trained["folds"][0]["test"]

    assert main(["explain", "--data", str(data), "--checkpoint",
                 str(train_run / "checkpoint_fold0.pt"), "--pair", "DB01167", "DB00420",
                 "--out", str(out), "--plot"]) == 0
    ex_run = Path(json.loads(capsys.readouterr().out)["run_dir"])
    assert (ex_run / "explanation_DB01167_DB00420.json").exists()
    assert (ex_run / "explanation_DB01167_DB00420.png").exists()

    assert main(["explain", "--data", str(data), "--checkpoint",
                 str(train_run / "checkpoint_fold0.pt"), "--pair", "DB0116", "DB00420",
                 "--out", str(out)]) == EXIT_INPUT
    assert "nearest known ids: DB01167" in capsys.readouterr().err

    assert main(["report", "--run", str(train_run), "--out", str(out), "--plot"]) == 0
    text = capsys.readouterr().out
    assert "macro_f1" in text and "fingerprint_logistic" in text


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "ddikit", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.startswith("ddikit ")
