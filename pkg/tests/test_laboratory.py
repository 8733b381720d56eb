import json
import os

import pytest
from loguru import logger

from experiment_hub import EXPERIMENT_HUB, create_experiment
from imml_lab.config import ExperimentConfig, load_experiment_config
from laboratory import ABLATION_VARIANTS, Laboratory, read_csv_column, save_csv

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture
def lab(tiny_config):
    return Laboratory(tiny_config)


def test_presets():
    for name in EXPERIMENT_HUB:
        config = create_experiment(name, seed=3)
        assert config.name == name
        assert config.data.seed == 3
    assert create_experiment("baseline").loss.gamma1 == 0.0
    assert create_experiment("balanced").data.predominance == 0.5
    with pytest.raises(ValueError):
        create_experiment("unknown")


def test_config_files():
    config = load_experiment_config(os.path.join(CONFIGS, "experiment.toml"))
    assert config == ExperimentConfig()
    with pytest.raises(ValueError):
        load_experiment_config(os.path.join(CONFIGS, "missing.toml"))
    with pytest.raises(ValueError):
        load_experiment_config(os.path.join(CONFIGS, "..", "readme.md"))


def test_updated_revalidates():
    config = ExperimentConfig()
    assert config.updated(loss={"tau": 0.2}).loss.tau == 0.2
    assert config.updated(loss={"tau": 0.2}).loss.gamma2 == config.loss.gamma2
    with pytest.raises(ValueError):
        config.updated(loss={"tau": 0.0})
    with pytest.raises(ValueError):
        config.updated(fusion={"kind": "weighted_sum"}, model={"feature_dim_a": 8})
    with pytest.raises(ValueError):
        config.updated(fusion={"lambda_source": "fixed"})
    with pytest.raises(ValueError):
        config.updated(sweep={"mask_ratios": [0.0, 1.5]})


def test_csv_round_trip(tmp_path):
    path = str(tmp_path / "out" / "rows.csv")
    save_csv([{"seed": 0, "accuracy": 0.5}, {"seed": 1, "accuracy": 0.75}], path)
    assert read_csv_column(path, "accuracy") == [0.5, 0.75]
    with pytest.raises(ValueError):
        read_csv_column(path, "loss")
    with pytest.raises(ValueError):
        save_csv([], path)


def test_run_and_heatmap(lab, tiny_config):
    result = lab.run(0)
    assert len(result.history) == tiny_config.optimizer.epochs
    assert 0.0 <= lab.test_accuracy(result) <= 1.0
    rows = lab.heatmap(0)
    assert len(rows) == len(tiny_config.sweep.mask_ratios) ** 2


def test_noise_sweep(lab, tiny_config):
    rows = lab.noise_sweep(0)
    assert [r["noise_ratio"] for r in rows] == tiny_config.sweep.noise_ratios


def test_ablation(lab):
    rows = lab.ablation([0])
    assert set(rows[0]) == {"seed"} | set(ABLATION_VARIANTS)


def test_grid_search_and_compare(lab, tiny_config):
    rows, best = lab.grid_search(0)
    assert len(rows) == 4
    assert best["val_accuracy"] == max(r["val_accuracy"] for r in rows)
    assert best in rows

    per_seed, result = lab.compare([0, 1, 2], tune=False)
    assert [r["seed"] for r in per_seed] == [0, 1, 2]
    assert result.n == 3
    assert 0.0 <= result.p_value <= 1.0
    if result.t_statistic is None:
        assert result.degenerate and result.p_value == 0.0


def test_n_sensitivity_skips_large_n(tiny_config):
    config = tiny_config.updated(sweep={"n_unpaired_grid": [1, 2, 16]})
    rows = Laboratory(config).n_sensitivity(0)
    assert [r["n_unpaired"] for r in rows] == [1, 2]


def test_bound(lab):
    report = lab.bound(0)
    assert [n for n, _ in report.eps_samples] == [4, 16, 64]
    assert report.certified


def test_gradient_check(lab):
    worst = lab.gradient_check(points=3)
    assert all(error < 1e-4 for error in worst.values())


def test_log_file(tmp_path, tiny_config):
    path = tmp_path / "lab.log"
    Laboratory(tiny_config, log_level="DEBUG", log_path=str(path)).run(0)
    logger.complete()
    logger.remove()
    records = [json.loads(line)["record"] for line in path.read_text(encoding="utf-8").splitlines()]
    assert records
    assert {r["extra"]["run"] for r in records} >= {f"{tiny_config.name}/seed=0"}
    assert any(r["message"].startswith("training") for r in records)
