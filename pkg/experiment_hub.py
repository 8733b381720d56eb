from typing import Dict, Optional

from imml_lab.config import ExperimentConfig


def baseline_params(seed: int = 0) -> Dict:
    return {"loss": {"gamma1": 0.0, "gamma2": 0.0}, "data": {"seed": seed}}


def imml_params(seed: int = 0) -> Dict:
    return {"data": {"seed": seed}}


def mdke_only_params(seed: int = 0) -> Dict:
    return {"loss": {"gamma2": 0.0}, "data": {"seed": seed}}


def beta_only_params(seed: int = 0) -> Dict:
    return {"loss": {"gamma1": 0.0}, "data": {"seed": seed}}


def balanced_params(seed: int = 0) -> Dict:
    return {"data": {"seed": seed, "predominance": 0.5}}


def noisy_params(seed: int = 0) -> Dict:
    return {
        "data": {"seed": seed, "noise_ratio": 2.0},
        "sweep": {"noise_ratios": [0.0, 1.0, 2.0, 5.0, 10.0]},
    }


def wide_grid_params(seed: int = 0) -> Dict:
    # gamma grids on the scale used for full-size encoders
    return {
        "data": {"seed": seed},
        "sweep": {
            "gamma1_grid": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            "gamma2_grid": [1e1, 1e2, 1e3, 1e4],
        },
    }


def weighted_sum_params(seed: int = 0) -> Dict:
    return {"data": {"seed": seed}, "fusion": {"kind": "weighted_sum"}}


EXPERIMENT_HUB = {
    "baseline": {
        "param_func": baseline_params,
        "description": "Late fusion trained on the task loss alone.",
    },
    "imml": {
        "param_func": imml_params,
        "description": "Late fusion with the contrastive and beta-adjustment losses.",
    },
    "mdke-only": {
        "param_func": mdke_only_params,
        "description": "Adds only the contrastive loss.",
    },
    "beta-only": {
        "param_func": beta_only_params,
        "description": "Adds only the beta-adjustment loss.",
    },
    "balanced": {
        "param_func": balanced_params,
        "description": "Both modalities carry the same label information.",
    },
    "noisy": {
        "param_func": noisy_params,
        "description": "Test data corrupted with additive noise.",
    },
    "wide-grid": {
        "param_func": wide_grid_params,
        "description": "Loss-weight search over wide logarithmic grids.",
    },
    "weighted-sum": {
        "param_func": weighted_sum_params,
        "description": "Fusion by weighted sum instead of concatenation.",
    },
}


def create_experiment(name: str, seed: int = 0, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    if name not in EXPERIMENT_HUB:
        raise ValueError(f"Unknown experiment '{name}'. Available: {list(EXPERIMENT_HUB.keys())}")
    base = base or ExperimentConfig()
    config = base.updated(**EXPERIMENT_HUB[name]["param_func"](seed))
    return config.model_copy(update={"name": name})
