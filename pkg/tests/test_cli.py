import csv
import json
import os

import pytest

from cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, TOLERANCE_ENV, run

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
FUSION_SCM = os.path.join(CONFIGS, "fusion_scm.json")
CHAIN = os.path.join(CONFIGS, "chain.json")


def read_json(path):
    with open(path, encoding="utf-8") as rf:
        return json.load(rf)


def write_column(path, values):
    with open(path, "w", encoding="utf-8", newline="") as wf:
        writer = csv.writer(wf)
        writer.writerow(["seed", "accuracy"])
        writer.writerows(enumerate(values))


@pytest.fixture
def tiny_config_file(tmp_path, tiny_config):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config.model_dump()), encoding="utf-8")
    return str(path)


def test_dsep(tmp_path):
    out = str(tmp_path / "dsep.json")
    assert run(["dsep", "--graph", CHAIN, "--x", "X", "--y", "Z", "--given", "Y", "--output", out]) == EXIT_OK
    assert read_json(out) == {"d_separated": True}
    assert run(["dsep", "--graph", CHAIN, "--x", "X", "--y", "Z", "--output", out]) == EXIT_OK
    assert read_json(out) == {"d_separated": False}


def test_scm_adjust(tmp_path):
    out = str(tmp_path / "beta.json")
    code = run([
        "scm", "adjust", "--scm", FUSION_SCM, "--method", "beta",
        "--x", "D_P", "--y", "Y", "--z", "Z", "--da", "D_A", "--output", out,
    ])
    assert code == EXIT_OK
    payload = read_json(out)
    assert [entry["x_val"] for entry in payload] == [0, 1]
    assert all(entry["passed"] for entry in payload)


def test_scm_adjust_single_value(tmp_path):
    out = str(tmp_path / "one.json")
    code = run([
        "scm", "adjust", "--scm", FUSION_SCM, "--method", "beta", "--x", "D_P", "--x-val", "1",
        "--y", "Y", "--z", "Z", "--da", "D_A", "--output", out,
    ])
    assert code == EXIT_OK
    assert len(read_json(out)) == 1
    assert run([
        "scm", "adjust", "--scm", FUSION_SCM, "--method", "beta", "--x", "D_P", "--x-val", "7",
        "--y", "Y", "--z", "Z", "--da", "D_A", "--output", out,
    ]) == EXIT_USAGE


def test_scm_adjust_refused(tmp_path):
    out = str(tmp_path / "frontdoor.json")
    code = run([
        "scm", "adjust", "--scm", FUSION_SCM, "--method", "frontdoor",
        "--x", "D_P", "--y", "Y", "--z", "Z", "--output", out,
    ])
    assert code == EXIT_FAILED
    payload = read_json(out)
    assert payload["passed"] is False
    assert payload["criterion"]["violated_condition"] == 3


def test_scm_verify(tmp_path):
    out = str(tmp_path / "verify.json")
    args = ["scm", "verify", "--scm", FUSION_SCM, "--x", "D_P", "--y", "Y", "--z", "Z", "--da", "D_A", "--output", out]
    assert run(args + ["--method", "beta"]) == EXIT_OK
    assert run(args) == EXIT_FAILED
    payload = read_json(out)
    assert set(payload) == {"backdoor", "frontdoor", "beta"}
    assert payload["beta"]["satisfied"] is True
    assert payload["frontdoor"]["satisfied"] is False


def test_docalc_verify(tmp_path):
    out = str(tmp_path / "chains.json")
    assert run(["docalc", "verify", "--scm", FUSION_SCM, "--output", out]) == EXIT_OK
    labels = [entry["step_label"] for entry in read_json(out)]
    assert labels[0] == "joint" and labels[1] == "decomp-truncated" and labels[-1] == "multiworld-eq1"
    assert len(labels) == 1 + 7 + 8
    assert run(["--tolerance", "1e-8", "docalc", "verify", "--scm", FUSION_SCM, "--chain", "multiworld",
                "--output", out]) == EXIT_OK
    assert len(read_json(out)) == 8


@pytest.mark.parametrize("chain, labels", [
    ("joint", ["joint"]),
    ("decomp", ["decomp-truncated"] + [f"decomp-{s}" for s in "abcdef"]),
    ("decomposition", ["decomp-truncated"] + [f"decomp-{s}" for s in "abcdef"]),
])
def test_docalc_verify_single_chain(tmp_path, chain, labels):
    out = str(tmp_path / "chain.json")
    assert run(["docalc", "verify", "--scm", FUSION_SCM, "--chain", chain, "--output", out]) == EXIT_OK
    assert [entry["step_label"] for entry in read_json(out)] == labels


def test_usage_errors(tmp_path, monkeypatch):
    assert run(["scm"]) == EXIT_USAGE
    assert run(["scm", "adjust", "--scm", FUSION_SCM, "--method", "sideways", "--x", "D_P", "--y", "Y"]) == EXIT_USAGE
    assert run(["dsep", "--graph", str(tmp_path / "missing.json"), "--x", "X", "--y", "Z"]) == EXIT_USAGE
    assert run(["--tolerance", "-1", "dsep", "--graph", CHAIN, "--x", "X", "--y", "Z"]) == EXIT_USAGE
    assert run(["train", "--config", CHAIN, "--preset", "imml"]) == EXIT_USAGE

    monkeypatch.setenv(TOLERANCE_ENV, "abc")
    assert run(["dsep", "--graph", CHAIN, "--x", "X", "--y", "Z"]) == EXIT_USAGE


def test_ttest(tmp_path):
    a, b, out = tmp_path / "a.csv", tmp_path / "b.csv", str(tmp_path / "t.json")
    write_column(a, [0.81, 0.84, 0.79, 0.88])
    write_column(b, [0.78, 0.80, 0.80, 0.82])
    assert run(["ttest", "--a", str(a), "--b", str(b), "--output", out]) == EXIT_OK
    assert read_json(out)["n"] == 4
    assert run(["ttest", "--a", str(a), "--b", str(b), "--column", "loss"]) == EXIT_USAGE


def test_ttest_constant_difference_is_flagged(tmp_path):
    a, b, out = tmp_path / "a.csv", tmp_path / "b.csv", str(tmp_path / "t.json")
    write_column(a, [0.3, 0.7, 0.9])
    write_column(b, [0.1, 0.5, 0.7])
    assert run(["ttest", "--a", str(a), "--b", str(b), "--output", out]) == EXIT_OK
    result = read_json(out)
    assert result["degenerate"] is True
    assert result["p_value"] == 0.0
    assert result["t_statistic"] is None
    assert result["mean_diff"] == pytest.approx(0.2)


def test_train(tmp_path, tiny_config_file):
    out = tmp_path / "run"
    assert run(["train", "--config", tiny_config_file, "--seed", "1", "--output", str(out)]) == EXIT_OK
    with open(out / "metrics.csv", encoding="utf-8") as rf:
        rows = list(csv.DictReader(rf))
    assert [int(row["epoch"]) for row in rows] == [1, 2, 3]
    summary = read_json(out / "summary.json")
    assert summary["seed"] == 1
    assert 0.0 <= summary["test_accuracy"] <= 1.0


def test_gradcheck(tmp_path, tiny_config_file):
    out = str(tmp_path / "grad.json")
    assert run(["gradcheck", "--config", tiny_config_file, "--points", "3", "--output", out]) == EXIT_OK
    payload = read_json(out)
    assert payload["passed"] is True
    assert set(payload["max_relative_error"]) == {"mdke", "beta", "imml"}


def test_repeated_runs_are_byte_identical(tmp_path, tiny_config_file):
    for name in ("first", "second"):
        assert run(["train", "--config", tiny_config_file, "--seed", "7", "--output", str(tmp_path / name)]) == EXIT_OK
    for filename in ("metrics.csv", "summary.json"):
        assert (tmp_path / "first" / filename).read_bytes() == (tmp_path / "second" / filename).read_bytes()
