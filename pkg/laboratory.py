import csv
import os
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from tabulate import tabulate

from imml_lab.autodiff import Tensor, grad_check, matmul
from imml_lab.bounds import BoundReport, bound_report
from imml_lab.config import ExperimentConfig
from imml_lab.log import setup_logging
from imml_lab.losses import beta_loss, imml_loss, mdke_loss
from imml_lab.stats import SignificanceResult, significance_test
from imml_lab.synth import SynthData, add_noise, generate_synth
from imml_lab.trainer import TrainResult, build_model, evaluate, mask_sweep, train

ABLATION_VARIANTS = {
    "baseline": {"gamma1": 0.0, "gamma2": 0.0},
    "mdke": {"gamma2": 0.0},
    "beta": {"gamma1": 0.0},
    "imml": {},
}


def save_csv(rows: Sequence[Dict], path: str) -> None:
    if not rows:
        raise ValueError(f"Refusing to write an empty table to '{path}'.")
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as wf:
        writer = csv.DictWriter(wf, fieldnames=list(rows[0].keys()), lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)


def read_csv_column(path: str, column: str) -> List[float]:
    if not os.path.exists(path):
        raise ValueError(f"File '{path}' does not exist.")
    with open(path, 'r', encoding='utf-8', newline='') as rf:
        reader = csv.DictReader(rf)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"Column '{column}' not found in '{path}', available: {reader.fieldnames}")
        return [float(row[column]) for row in reader]


class Laboratory:
    """
    Hosts one experiment configuration: builds the synthetic data once and
    runs training, evaluation sweeps and reports against it.
    """

    def __init__(self, config: ExperimentConfig, log_level: str = 'INFO', log_path: str = '') -> None:
        self.config = config
        self.log_path = log_path
        if log_path:
            setup_logging(log_level, log_path)
        self._data: Optional[SynthData] = None

    @property
    def data(self) -> SynthData:
        if self._data is None:
            self._data = generate_synth(self.config.data)
        return self._data

    def variant(self, **loss_overrides) -> ExperimentConfig:
        return self.config.updated(loss=loss_overrides) if loss_overrides else self.config

    def run(self, seed: int, config: Optional[ExperimentConfig] = None) -> TrainResult:
        config = config or self.config
        model = build_model(config, self.data, seed)
        with logger.contextualize(run=f"{config.name}/seed={seed}"):
            logger.info(f"training '{config.name}' with seed {seed}")
            return train(model, self.data, config.loss, config.optimizer, seed, fusion=config.fusion)

    def test_accuracy(self, result: TrainResult) -> float:
        return evaluate(result.model, self.data.test)

    def heatmap(self, seed: int) -> List[Dict]:
        result = self.run(seed)
        return mask_sweep(result.model, self.data.test, self.config.sweep.mask_ratios, seed)

    def bound(self, seed: int) -> BoundReport:
        result = self.run(seed)
        sweep = self.config.sweep
        return bound_report(
            result.model, self.data.test, self.config.loss, self.config.optimizer.batch_size,
            sample_sizes=sweep.eps_sample_sizes, repetitions=sweep.eps_repetitions, seed=seed,
        )

    def noise_sweep(self, seed: int) -> List[Dict]:
        result = self.run(seed)
        rows = []
        for ratio in self.config.sweep.noise_ratios:
            noisy = add_noise(self.data.test, ratio, np.random.default_rng(seed))
            rows.append({"noise_ratio": float(ratio), "accuracy": evaluate(result.model, noisy)})
        logger.info(f"noise sweep:\n{tabulate(rows, headers='keys', floatfmt='.4f')}")
        return rows

    def ablation(self, seeds: Sequence[int]) -> List[Dict]:
        rows = []
        for seed in seeds:
            row = {"seed": seed}
            for name, overrides in ABLATION_VARIANTS.items():
                row[name] = self.test_accuracy(self.run(seed, self.variant(**overrides)))
            rows.append(row)
        logger.info(f"ablation:\n{tabulate(rows, headers='keys', floatfmt='.4f')}")
        return rows

    def grid_search(self, seed: int) -> Tuple[List[Dict], Dict[str, float]]:
        """Validation accuracy over the gamma grids; the best pair wins, ties keep the first."""
        rows = []
        best: Dict[str, float] = {}
        sweep = self.config.sweep
        for gamma1, gamma2 in product(sweep.gamma1_grid, sweep.gamma2_grid):
            result = self.run(seed, self.variant(gamma1=gamma1, gamma2=gamma2))
            score = evaluate(result.model, self.data.val)
            rows.append({"gamma1": gamma1, "gamma2": gamma2, "val_accuracy": score})
            if not best or score > best["val_accuracy"]:
                best = rows[-1]
        logger.info(f"gamma search best: {best}")
        return rows, dict(best)

    def n_sensitivity(self, seed: int) -> List[Dict]:
        rows = []
        for n in self.config.sweep.n_unpaired_grid:
            if n >= self.config.optimizer.batch_size:
                logger.warning(f"skipping N={n}: not below batch size {self.config.optimizer.batch_size}")
                continue
            result = self.run(seed, self.variant(n_unpaired=n))
            rows.append({"n_unpaired": n, "accuracy": self.test_accuracy(result)})
        return rows

    def compare(self, seeds: Sequence[int], tune: bool = True) -> Tuple[List[Dict], SignificanceResult]:
        """Per-seed baseline vs IMML test accuracy and the paired t-test of IMML over baseline."""
        if tune:
            _, best = self.grid_search(seeds[0])
            imml = self.variant(gamma1=best["gamma1"], gamma2=best["gamma2"])
        else:
            imml = self.config
        baseline = self.variant(gamma1=0.0, gamma2=0.0)
        rows = []
        for seed in seeds:
            rows.append({
                "seed": seed,
                "baseline": self.test_accuracy(self.run(seed, baseline)),
                "imml": self.test_accuracy(self.run(seed, imml)),
            })
        result = significance_test(
            [r["imml"] for r in rows], [r["baseline"] for r in rows], raise_on_degenerate=False,
        )
        logger.info(
            f"imml vs baseline over {len(rows)} seeds: mean diff {result.mean_diff:.4f}, p = {result.p_value:.4g}"
        )
        return rows, result

    def gradient_check(self, points: int = 50, h: float = 1e-5, seed: int = 0) -> Dict[str, float]:
        """
        Largest finite-difference disagreement of each loss over random small
        problems. The mixing coefficient is not a differentiated input, so it
        is held at one value in [0.2, 0.8] per point.
        """
        cfg = self.config.loss
        worst = {"mdke": 0.0, "beta": 0.0, "imml": 0.0}
        rng = np.random.default_rng(seed)
        for point in range(points):
            fusion = self.config.fusion.model_copy(
                update={"lambda_source": "fixed", "fixed_lambda": float(rng.uniform(0.2, 0.8))}
            )
            batch = int(rng.integers(cfg.n_unpaired + 1, cfg.n_unpaired + 4))
            dim, classes = 3, 3
            labels = np.eye(classes)[rng.integers(0, classes, size=batch)]
            in_width = 2 * dim if fusion.kind == "concat" else dim
            weights = rng.normal(size=(in_width, classes))
            xi_p, xi_a = rng.normal(size=(batch, dim)), rng.normal(size=(batch, dim))
            h_p, h_a = rng.normal(size=(batch, dim)), rng.normal(size=(batch, dim))

            def beta_term(hp: Tensor, ha: Tensor, w: Tensor) -> Tensor:
                return beta_loss(
                    [hp, ha], labels, lambda z: matmul(z, w), cfg, fusion, np.random.default_rng(point),
                )

            def combined(pp: Tensor, pa: Tensor, hp: Tensor, ha: Tensor, w: Tensor) -> Tensor:
                return imml_loss(mdke_loss([pp, pa], cfg), beta_term(hp, ha, w), Tensor(0.0), cfg)

            worst["mdke"] = max(worst["mdke"], grad_check(
                lambda pp, pa: mdke_loss([pp, pa], cfg), [Tensor(xi_p), Tensor(xi_a)], h,
            ))
            worst["beta"] = max(worst["beta"], grad_check(
                beta_term, [Tensor(h_p), Tensor(h_a), Tensor(weights)], h,
            ))
            worst["imml"] = max(worst["imml"], grad_check(
                combined, [Tensor(xi_p), Tensor(xi_a), Tensor(h_p), Tensor(h_a), Tensor(weights)], h,
            ))
        logger.info(f"gradient check over {points} points: {worst}")
        return worst
