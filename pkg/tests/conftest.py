import numpy as np
import pytest
from loguru import logger

from causal_engine.graph import Dag, multimodal_fusion_dag
from causal_engine.scm import Cpt, DiscreteScm, random_scm
from imml_lab.config import ExperimentConfig


@pytest.fixture(autouse=True)
def quiet_logs():
    logger.remove()
    yield


@pytest.fixture
def fusion_dag() -> Dag:
    return multimodal_fusion_dag()


@pytest.fixture
def fusion_scm(fusion_dag) -> DiscreteScm:
    return random_scm(fusion_dag, 2, seed=7)


@pytest.fixture
def chain_dag() -> Dag:
    return Dag(["X", "M", "Y"], [("X", "M"), ("M", "Y")])


@pytest.fixture
def collider_dag() -> Dag:
    return Dag(["X", "C", "Y", "D"], [("X", "C"), ("Y", "C"), ("C", "D")])


@pytest.fixture
def confounded_dag() -> Dag:
    """X <- Z -> Y with X -> Y."""
    return Dag(["Z", "X", "Y"], [("Z", "X"), ("Z", "Y"), ("X", "Y")])


@pytest.fixture
def frontdoor_dag() -> Dag:
    """Hidden U confounds X and Y; X affects Y only through M."""
    return Dag(["U", "X", "M", "Y"], [("U", "X"), ("U", "Y"), ("X", "M"), ("M", "Y")], observed=["X", "M", "Y"])


def copy_cpt(parents, size: int = 2) -> Cpt:
    """Child equals its first parent."""
    table = np.zeros((size,) * len(parents) + (size,))
    for index in np.ndindex(*(size,) * len(parents)):
        table[index + (index[0],)] = 1.0
    return Cpt(tuple(parents), table)


@pytest.fixture
def copy_chain_scm(fusion_dag) -> DiscreteScm:
    """Fusion topology with Z a copy of D_P, Y a copy of Z and D_A an independent dummy."""
    cpts = {
        "K_P": Cpt((), np.array([0.4, 0.6])),
        "K_A": Cpt((), np.array([0.5, 0.5])),
        "D_P": Cpt(("K_P",), np.array([[0.7, 0.3], [0.2, 0.8]])),
        "D_A": Cpt(("K_A",), np.array([[0.5, 0.5], [0.5, 0.5]])),
        "Z": copy_cpt(("D_P", "D_A")),
        "Y": copy_cpt(("Z", "K_P", "K_A")),
    }
    domains = {node: [0, 1] for node in fusion_dag.nodes}
    return DiscreteScm(fusion_dag, domains, cpts)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """Small enough to train in well under a second."""
    return ExperimentConfig().updated(
        data={"n_train": 64, "n_val": 32, "n_test": 64, "dim_p": 6, "dim_a": 6, "num_classes": 3},
        model={"hidden_dim": 8, "feature_dim_p": 4, "feature_dim_a": 4},
        loss={"proj_dim": 4, "n_unpaired": 2},
        optimizer={"epochs": 3, "batch_size": 16},
        sweep={
            "mask_ratios": [0.0, 0.5],
            "noise_ratios": [0.0, 5.0],
            "seeds": [0, 1],
            "gamma1_grid": [0.0, 0.1],
            "gamma2_grid": [0.0, 1.0],
            "n_unpaired_grid": [1, 2],
            "eps_sample_sizes": [4, 16, 64],
            "eps_repetitions": 5,
        },
    )
