from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from imml_lab.autodiff import Tensor, reduce_sum, scale
from imml_lab.config import ExperimentConfig, FusionSpec, LossConfig, OptimizerConfig
from imml_lab.errors import BatchTooSmall, NonFiniteLoss
from imml_lab.losses import beta_loss, imml_loss, mdke_loss, task_loss
from imml_lab.model import ImmlModel
from imml_lab.synth import Dataset, SynthData


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    mdke: float
    beta: float
    base: float
    train_accuracy: float
    val_accuracy: float


@dataclass
class TrainResult:
    model: ImmlModel
    history: List[EpochMetrics] = field(default_factory=list)

    @property
    def final(self) -> EpochMetrics:
        return self.history[-1]

    def rows(self) -> List[Dict]:
        return [asdict(m) for m in self.history]


def seed_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators for parameter init, batch order and mixing coefficients."""
    init, shuffle, lam = np.random.SeedSequence(seed).spawn(3)
    return {
        "init": np.random.default_rng(init),
        "shuffle": np.random.default_rng(shuffle),
        "lambda": np.random.default_rng(lam),
    }


def build_model(cfg: ExperimentConfig, data: SynthData, seed: int) -> ImmlModel:
    return ImmlModel(
        input_dims=(data.train.x_p.shape[1], data.train.x_a.shape[1]),
        num_classes=data.train.num_classes,
        cfg=cfg.model,
        loss_cfg=cfg.loss,
        fusion_kind=cfg.fusion.kind,
        rng=seed_streams(seed)["init"],
    )


def objective(
        model: ImmlModel, batch: Dataset, loss_cfg: LossConfig, fusion: FusionSpec,
        lambda_rng: np.random.Generator,
    ) -> Dict[str, Tensor]:
    """Batch-summed terms of the combined objective; ``total`` is their weighted sum."""
    features = model.encode(batch.inputs)
    targets = batch.one_hot()
    base = reduce_sum(task_loss(model.fused_logits(features), targets, loss_cfg.task_loss))
    mdke = mdke_loss(model.project(features), loss_cfg) if loss_cfg.gamma1 > 0 else Tensor(0.0)
    beta = (
        beta_loss(features, targets, model.classify, loss_cfg, fusion, lambda_rng)
        if loss_cfg.gamma2 > 0 else Tensor(0.0)
    )
    return {"total": imml_loss(mdke, beta, base, loss_cfg), "mdke": mdke, "beta": beta, "base": base}


def train(
        model: ImmlModel, data: SynthData, loss_cfg: LossConfig, optim_cfg: OptimizerConfig, seed: int,
        fusion: Optional[FusionSpec] = None,
    ) -> TrainResult:
    """
    Mini-batch gradient descent on (gamma1 * mdke + gamma2 * beta + base) / batch size.

    Trailing batches too small to provide ``n_unpaired`` partners are skipped
    when the beta term is active.
    """
    fusion = fusion or FusionSpec()
    if loss_cfg.gamma2 > 0 and optim_cfg.batch_size <= loss_cfg.n_unpaired:
        raise BatchTooSmall(optim_cfg.batch_size, loss_cfg.n_unpaired)
    streams = seed_streams(seed)
    train_set = data.train
    result = TrainResult(model=model)

    for epoch in range(1, optim_cfg.epochs + 1):
        order = streams["shuffle"].permutation(len(train_set))
        sums = {"total": 0.0, "mdke": 0.0, "beta": 0.0, "base": 0.0}
        seen = 0
        for step, start in enumerate(range(0, len(order), optim_cfg.batch_size)):
            index = order[start:start + optim_cfg.batch_size]
            if loss_cfg.gamma2 > 0 and len(index) <= loss_cfg.n_unpaired:
                logger.debug(f"epoch {epoch}: skipping trailing batch of {len(index)} samples")
                continue
            terms = objective(model, train_set.subset(index), loss_cfg, fusion, streams["lambda"])
            loss = scale(terms["total"], 1.0 / len(index))
            value = loss.item()
            if not np.isfinite(value):
                logger.error(f"non-finite loss {value} at epoch {epoch}, step {step}")
                raise NonFiniteLoss(epoch, step, value)
            model.zero_grad()
            loss.backward()
            model.sgd_step(optim_cfg.learning_rate)
            for key in sums:
                sums[key] += terms[key].item()
            seen += len(index)

        seen = max(seen, 1)
        metrics = EpochMetrics(
            epoch=epoch,
            loss=sums["total"] / seen,
            mdke=sums["mdke"] / seen,
            beta=sums["beta"] / seen,
            base=sums["base"] / seen,
            train_accuracy=evaluate(model, train_set),
            val_accuracy=evaluate(model, data.val),
        )
        result.history.append(metrics)
        logger.info(
            f"epoch {epoch:03d} | loss {metrics.loss:.4f} | mdke {metrics.mdke:.4f} | beta {metrics.beta:.4f} "
            f"| base {metrics.base:.4f} | train acc {metrics.train_accuracy:.4f} | val acc {metrics.val_accuracy:.4f}"
        )
    return result


def _masked(x: np.ndarray, ratio: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"Mask ratio {ratio} is outside [0, 1].")
    dims = rng.permutation(x.shape[1])[:int(round(ratio * x.shape[1]))]
    masked = x.copy()
    masked[:, dims] = 0.0
    return masked


def evaluate(model: ImmlModel, data: Dataset, mask_p: float = 0.0, mask_a: float = 0.0, seed: int = 0) -> float:
    """Accuracy with a random ``mask_p`` / ``mask_a`` share of input dims zeroed; one mask per seed."""
    rng = np.random.default_rng(seed)
    x_p = _masked(data.x_p, mask_p, rng)
    x_a = _masked(data.x_a, mask_a, rng)
    return float(np.mean(model.predict([x_p, x_a]) == data.y))


def mask_sweep(model: ImmlModel, data: Dataset, ratios: Sequence[float], seed: int = 0) -> List[Dict]:
    rows = []
    for mask_p in ratios:
        for mask_a in ratios:
            rows.append({
                "mask_p": float(mask_p),
                "mask_a": float(mask_a),
                "accuracy": evaluate(model, data, mask_p, mask_a, seed),
            })
    return rows
