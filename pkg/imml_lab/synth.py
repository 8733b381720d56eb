"""
Synthetic bimodal classification data with a controllable imbalance of
label information between the two modalities.

Class k has mean ``scale_m * e_k`` in modality m (``e_k`` the k-th unit
vector) plus unit Gaussian noise; the separation budget is split as
``predominance`` for P and ``1 - predominance`` for A. Both views of a
sample always share its label.
"""
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
from loguru import logger
from sklearn.linear_model import LogisticRegression

from imml_lab.config import SynthConfig


@dataclass
class Dataset:
    x_p: np.ndarray
    x_a: np.ndarray
    y: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return len(self.y)

    @property
    def inputs(self) -> List[np.ndarray]:
        return [self.x_p, self.x_a]

    def one_hot(self) -> np.ndarray:
        return np.eye(self.num_classes)[self.y]

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.x_p[index], self.x_a[index], self.y[index], self.num_classes)


@dataclass
class SynthData:
    train: Dataset
    val: Dataset
    test: Dataset
    config: SynthConfig


def class_means(dim: int, num_classes: int, scale: float) -> np.ndarray:
    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes)] = scale
    return means


def _balanced_labels(n: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % num_classes)


def _draw(n: int, cfg: SynthConfig, rng: np.random.Generator) -> Dataset:
    y = _balanced_labels(n, cfg.num_classes, rng)
    means_p = class_means(cfg.dim_p, cfg.num_classes, cfg.separation * cfg.predominance)
    means_a = class_means(cfg.dim_a, cfg.num_classes, cfg.separation * (1.0 - cfg.predominance))
    x_p = means_p[y] + rng.normal(size=(n, cfg.dim_p))
    x_a = means_a[y] + rng.normal(size=(n, cfg.dim_a))
    return Dataset(x_p, x_a, y, cfg.num_classes)


def add_noise(data: Dataset, noise_ratio: float, rng: np.random.Generator) -> Dataset:
    """Additive Gaussian noise of standard deviation ``noise_ratio`` on both modalities."""
    if noise_ratio < 0:
        raise ValueError(f"Noise ratio must be non-negative, got {noise_ratio}.")
    if noise_ratio == 0:
        return data
    return Dataset(
        data.x_p + noise_ratio * rng.normal(size=data.x_p.shape),
        data.x_a + noise_ratio * rng.normal(size=data.x_a.shape),
        data.y,
        data.num_classes,
    )


def generate_synth(cfg: SynthConfig) -> SynthData:
    rng = np.random.default_rng(cfg.seed)
    train = _draw(cfg.n_train, cfg, rng)
    val = _draw(cfg.n_val, cfg, rng)
    test = add_noise(_draw(cfg.n_test, cfg, rng), cfg.noise_ratio, rng)
    logger.debug(
        f"synthetic data: {cfg.n_train}/{cfg.n_val}/{cfg.n_test} samples, "
        f"K={cfg.num_classes}, predominance={cfg.predominance}, noise={cfg.noise_ratio}"
    )
    return SynthData(train, val, test, cfg)


def probe_accuracies(data: SynthData, seed: int = 0) -> Dict[str, float]:
    """Test accuracy of a logistic-regression probe trained on each modality alone."""
    scores = {}
    for name, train_x, test_x in (
        ("p", data.train.x_p, data.test.x_p),
        ("a", data.train.x_a, data.test.x_a),
    ):
        probe = LogisticRegression(max_iter=1000, random_state=seed)
        probe.fit(train_x, data.train.y)
        scores[name] = float(probe.score(test_x, data.test.y))
    return scores
