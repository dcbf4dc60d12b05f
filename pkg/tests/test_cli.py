import csv
import json

import pytest

from dakd.cli import derived_seed, main

SMALL = ["--n-train-normal", "6", "--n-train-anomalous", "6", "--n-test-normal", "4", "--n-test-anomalous", "4"]
FAST = ["--desk", "--epochs", "2", "--n-normal", "3", "--n-anomalous", "3"]


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config ")
    return list(csv.reader(lines[1:]))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["synth", "--out", str(out), *SMALL]) == 0
    return out, str(out / "data" / "manifest.ini")


def pipeline(out, data):
    assert main(["train-teacher", "--out", str(out), "--data", data, *FAST]) == 0
    assert main(["refine", "--out", str(out), "--data", data, "--teacher", str(out / "teacher.ckpt")]) == 0
    assert main(["distill", "--out", str(out), "--data", data, "--teacher", str(out / "teacher.ckpt"),
                 "--pseudo", str(out / "pseudo_labels.csv")]) == 0
    assert main(["eval", "--out", str(out), "--data", data, "--model", str(out / "student.ckpt")]) == 0


def test_full_pipeline_artifacts_and_determinism(small_run, tmp_path, capsys):
    _, data = small_run
    a, b = tmp_path / "a", tmp_path / "b"
    pipeline(a, data)
    pipeline(b, data)
    produced = json.loads((a / "outputs.json").read_text())
    assert set(produced) == {"train-teacher", "refine", "distill", "eval"}
    for name in ("teacher.ckpt", "student.ckpt", "teacher_loss.csv", "pseudo_labels.csv", "student_history.csv",
                 "metrics.csv", "frame_scores.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert read_rows(a / "teacher_loss.csv")[0] == ["epoch", "meanLoss"]
    assert read_rows(a / "student_history.csv")[0] == ["epoch", "bce", "nce", "total"]
    metrics = read_rows(a / "metrics.csv")
    assert metrics[0] == ["metric", "subset", "value"]
    assert {(r[0], r[1]) for r in metrics[1:]} >= {("auc", "all"), ("ap", "all"), ("auc", "class1")}
    assert read_rows(a / "frame_scores.csv")[0] == ["videoId", "frame", "score", "label"]
    assert "AUC=" in capsys.readouterr().out


def test_untrained_student_near_chance(tmp_path):
    out = tmp_path
    assert main(["synth", "--out", str(out)]) == 0
    data = str(out / "data" / "manifest.ini")
    assert main(["train-teacher", "--out", str(out), "--data", data, *FAST[:3], "--n-normal", "80",
                 "--n-anomalous", "80", "--epochs", "0"]) == 0
    assert main(["refine", "--out", str(out), "--data", data, "--teacher", str(out / "teacher.ckpt")]) == 0
    assert main(["distill", "--out", str(out), "--data", data, "--teacher", str(out / "teacher.ckpt"),
                 "--pseudo", str(out / "pseudo_labels.csv"), "--epochs", "0"]) == 0
    assert main(["eval", "--out", str(out), "--data", data, "--model", str(out / "student.ckpt")]) == 0
    auc = {(r[0], r[1]): float(r[2]) for r in read_rows(out / "metrics.csv")[1:]}[("auc", "all")]
    assert abs(auc - 0.5) <= 0.1


def test_ablate_param_sweep(small_run, tmp_path):
    _, data = small_run
    assert main(["ablate", "--out", str(tmp_path), "--data", data, *FAST, "--param", "alpha",
                 "--values", "0,1,7.5,15", "--shared-seed"]) == 0
    rows = read_rows(tmp_path / "ablation.csv")
    assert rows[0] == ["alpha", "seed", "teacherAuc", "studentAuc", "studentAp"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "7.5", "15"]
    assert len({r[2] for r in rows[1:]}) == 1  # one shared teacher


def test_ablate_arms_parallel_matches_serial(small_run, tmp_path):
    _, data = small_run
    args = ["ablate", "--data", data, *FAST, "--epochs", "1", "--arms", "full,no_tam,mask:self+c2p"]
    assert main([*args, "--out", str(tmp_path / "s")]) == 0
    assert main([*args, "--out", str(tmp_path / "p"), "--workers", "2"]) == 0
    serial, parallel = read_rows(tmp_path / "s" / "ablation.csv"), read_rows(tmp_path / "p" / "ablation.csv")
    assert serial == parallel
    assert [int(r[1]) for r in serial[1:]] == [derived_seed(1, i) for i in range(3)]


def test_env_output_dir(small_run, tmp_path, monkeypatch):
    monkeypatch.setenv("DAKD_OUT_DIR", str(tmp_path / "env"))
    _, data = small_run
    assert main(["train-teacher", "--data", data, *FAST]) == 0
    assert (tmp_path / "env" / "teacher.ckpt").is_file()


@pytest.mark.parametrize("argv,code", [
    (["bogus"], 2),
    (["eval", "--data", "x.ini"], 2),  # missing --model
    (["train-teacher", "--data", "x.ini", "--frobnicate"], 2),
    (["ablate", "--data", "x.ini", "--arms", "wat"], 2),
    (["train-teacher", "--data", "x.ini", "--delta", "2"], 2),
])
def test_usage_errors(argv, code, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == code


def test_data_errors(small_run, tmp_path, capsys):
    _, data = small_run
    assert main(["train-teacher", "--out", str(tmp_path), "--data", str(tmp_path / "missing.ini")]) == 3
    assert main(["eval", "--out", str(tmp_path), "--data", data, "--model", str(tmp_path / "none.ckpt")]) == 3
    assert "data error" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_exit_code(small_run, tmp_path):
    _, data = small_run
    code = main(["train-teacher", "--out", str(tmp_path), "--data", data, *FAST, "--lr-other", "1e308",
                 "--lr-temporal", "1e308"])
    assert code == 4
