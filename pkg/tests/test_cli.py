import json
import subprocess
import sys

import numpy as np
import pytest

from fallbench.cli import main
from fallbench.cohort import cohort_from_arrays, cohort_to_csv, read_cohort


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def separable_config(tmp_path):
    rng = np.random.default_rng(0)
    y = np.r_[np.ones(30, int), np.zeros(60, int)]
    x = np.where(y == 1, rng.uniform(2, 3, 90), rng.uniform(-3, -2, 90))
    cohort = cohort_from_arrays([f"p{i}" for i in range(90)], y, x[:, None], ["x"])
    (tmp_path / "cohort.csv").write_text(cohort_to_csv(cohort))
    return write_json(tmp_path / "sep.json", {
        "cohort": "cohort.csv",
        "variable_sets": {"groups": {}, "sets": {"X": ["x"]}},
        "folds": 5,
        "strategies": [
            {"family": "LogisticRegression", "variable_set": "X", "label": "lr"},
            {"family": "LogisticRegression", "variable_set": "X", "label": "lr2"},
        ],
    })


@pytest.fixture
def majority_config(tmp_path):
    return write_json(tmp_path / "maj.json", {
        "cohort": {"synthetic": True},
        "seed": 0,
        "strategies": [
            {"family": "Majority", "variable_set": "Trail", "fallback": "majority", "label": "Majority"},
            {"family": "Majority", "variable_set": "Trail", "fallback": "majority", "label": "Majority again"},
        ],
        "comparisons": [["Majority", "Majority again"]],
    })


class TestGenerate:
    def test_default_stdout(self, capsys):
        assert main(["generate"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 339
        assert lines[0].startswith("patient_id,outcome,age,")

    def test_file_is_reproducible(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["generate", "--seed", "3", "--out", str(a)]) == 0
        assert main(["generate", "--seed", "3", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert read_cohort(a).n_fallers == 54

    def test_missing_spec(self, tmp_path, capsys):
        assert main(["generate", "--spec", str(tmp_path / "nope.json")]) == 2
        assert "nope.json" in capsys.readouterr().err


class TestDescribe:
    def test_tables(self, tmp_path, capsys):
        path = tmp_path / "c.csv"
        main(["generate", "--out", str(path)])
        assert main(["describe", str(path)]) == 0
        out = capsys.readouterr().out
        assert "Significance (chi-squared)" in out and "Significance (t-test)" in out
        fallen = next(line for line in out.splitlines() if line.startswith("history_fallen\tFaller"))
        assert float(fallen.split("\t")[-1]) < 0.05
        trail = next(line for line in out.splitlines() if line.startswith("trail_a_time\tFaller"))
        assert "e-" in trail.split("\t")[-1]

    def test_one_class(self, tmp_path, capsys):
        cohort = cohort_from_arrays(["a", "b", "c"], [0, 0, 0], np.array([[1.0, 0.0], [2.0, 1.0], [3.0, 1.0]]), ["v", "flag"])
        path = tmp_path / "one.csv"
        path.write_text(cohort_to_csv(cohort))
        assert main(["describe", str(path)]) == 0
        rows = [line.split("\t") for line in capsys.readouterr().out.splitlines() if "\tFaller\t" in line]
        assert rows and all(r[-1] == "-" for r in rows)

    def test_unparseable(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("patient_id,outcome,v\nx,maybe,1\n")
        assert main(["describe", str(path)]) == 2


class TestBenchmark:
    def test_majority_only(self, majority_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["benchmark", majority_config, "--out", str(out)]) == 0
        report = (out / "report.tsv").read_text().splitlines()
        assert report[1].split("\t")[2:] == [
            "0.160 (± 0.020)", "0.000 (± 0.000)", "1.000 (± 0.000)", "-", "0.000 (± 0.000)"]
        preds = (out / "Majority.predictions.csv").read_text().splitlines()
        assert preds[0] == "id,fold,truth,score,predicted,fallback_used"
        assert len(preds) == 339
        comp = (out / "comparisons.tsv").read_text().splitlines()[1].split("\t")
        assert comp[-1] == "1"
        assert (out / "audit.log").exists()
        assert "0.160 (± 0.020)" in capsys.readouterr().out

    def test_byte_identical_and_jobs_independent(self, separable_config, tmp_path):
        dirs = [tmp_path / d for d in ("a", "b", "c")]
        assert main(["benchmark", separable_config, "--out", str(dirs[0])]) == 0
        assert main(["benchmark", separable_config, "--out", str(dirs[1])]) == 0
        assert main(["benchmark", separable_config, "--out", str(dirs[2]), "--jobs", "2"]) == 0
        for name in ("report.tsv", "lr.predictions.csv", "audit.log"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes() == (dirs[2] / name).read_bytes()

    def test_unknown_family_fails_fast(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "bad.json", {"strategies": [{"family": "Oracle", "variable_set": "Trail"}]})
        assert main(["benchmark", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "Oracle" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_unknown_variable_set(self, tmp_path):
        cfg = write_json(tmp_path / "bad.json", {"strategies": [{"family": "LDA", "variable_set": "Nope"}]})
        assert main(["benchmark", cfg]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["benchmark", str(tmp_path / "absent.json")]) == 2

    def test_bad_jobs(self, majority_config):
        assert main(["benchmark", majority_config, "--jobs", "0"]) == 2

    def test_seed_precedence(self, separable_config, tmp_path, monkeypatch):
        monkeypatch.setenv("FALLBENCH_SEED", "11")
        main(["benchmark", separable_config, "--out", str(tmp_path / "env")])
        main(["benchmark", separable_config, "--out", str(tmp_path / "cli"), "--seed", "12"])
        assert (tmp_path / "env" / "audit.log").read_text().startswith("seed=11\n")
        assert (tmp_path / "cli" / "audit.log").read_text().startswith("seed=12\n")


class TestRoc:
    def test_perfect_without_bands(self, separable_config, capsys):
        assert main(["roc", separable_config, "lr"]) == 0
        captured = capsys.readouterr()
        assert "AUROC 1.000" in captured.err
        rows = [line.split(",") for line in captured.out.splitlines()[1:]]
        assert all(r[3] == "" and r[4] == "" for r in rows)
        tpr = [float(r[1]) for r in rows]
        fpr = [float(r[2]) for r in rows]
        assert tpr == sorted(tpr) and fpr == sorted(fpr)
        assert (tpr[0], fpr[0], tpr[-1], fpr[-1]) == (0, 0, 1, 1)

    def test_bands_to_file(self, separable_config, tmp_path, capsys):
        out = tmp_path / "roc.csv"
        assert main(["roc", separable_config, "lr", "--bands", "B=200", "--out", str(out)]) == 0
        assert capsys.readouterr().out.strip() == "AUROC 1.000"
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        assert all(r[3] != "" and r[4] != "" for r in rows)

    def test_unknown_label(self, separable_config):
        assert main(["roc", separable_config, "nope"]) == 2


class TestCompare:
    def test_identical_strategies(self, separable_config, capsys):
        assert main(["compare", separable_config, "lr", "lr2"]) == 0
        out = capsys.readouterr().out
        assert "p=1" in out and "degenerate" in out

    def test_bad_metric(self, separable_config):
        assert main(["compare", separable_config, "lr", "lr2", "--metric", "auc"]) == 2


def test_usage_error_exit_code():
    assert main(["frobnicate"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fallbench.cli", "generate", "--seed", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and len(proc.stdout.splitlines()) == 339


def test_unpaired_comparison_is_a_config_error(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {
        "strategies": [
            {"family": "Majority", "variable_set": "Trail"},
            {"family": "Majority", "variable_set": "Trail", "fallback": "majority"},
        ],
        "comparisons": [["Trail / Majority", "Trail / Majority + Majority"]],
    })
    assert main(["benchmark", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "different patients" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["compare", cfg, "Trail / Majority", "Trail / Majority + Majority"]) == 2
