"""
Training objectives: the modality discriminative knowledge exploration loss
(contrastive, across neighbouring modalities), the beta-adjustment loss on
fused unpaired samples, and their weighted combination.

Modality features are passed as one ``(N*, D)`` tensor per modality, the
predominant modality first.
"""
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from imml_lab.autodiff import (
    Tensor, as_tensor, concat, hadamard, l2_normalize, logsumexp, matmul, mse, reduce_sum,
    scale, softmax_xent, take, transpose,
)
from imml_lab.config import FusionSpec, LossConfig
from imml_lab.errors import BatchTooSmall, DimensionMismatch, NonPositiveInput, NonSimplexInput

SIMPLEX_TOLERANCE = 1e-6


@dataclass
class MixedSample:
    fused: Tensor
    soft_label: np.ndarray
    lam: np.ndarray


def mod_index(x: int, n: int) -> int:
    """1-based wrap-around index: ((x - 1) mod n) + 1, always in [1, n]."""
    if x < 1 or n < 1:
        raise NonPositiveInput(f"mod_index expects x >= 1 and n >= 1, got x={x}, n={n}.")
    return (x - 1) % n + 1


def _check_projected(projected: Sequence[Tensor]) -> None:
    if len(projected) < 2:
        raise DimensionMismatch(f"The contrastive loss needs at least two modalities, got {len(projected)}.")
    shapes = {tuple(p.shape) for p in projected}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise DimensionMismatch(f"Projected features must share one (N*, D) shape, got {sorted(shapes)}.")


def per_modality_mdke(projected: Sequence[Tensor], tau: float) -> List[Tensor]:
    """
    One contrastive term per modality m, paired with modality [m+1]_M.

    For anchor i of modality m the positive is sample i of the next
    modality; the denominator runs over every sample of both modalities
    except the anchor itself. Each term is summed over the batch.
    """
    _check_projected(projected)
    n_mod = len(projected)
    batch = projected[0].shape[0]
    units = [l2_normalize(p) for p in projected]
    mask = np.ones((batch, 2 * batch), dtype=bool)
    mask[np.arange(batch), np.arange(batch)] = False

    terms = []
    for m in range(n_mod):
        anchor, partner = units[m], units[mod_index(m + 2, n_mod) - 1]
        same = matmul(anchor, transpose(anchor))
        cross = matmul(anchor, transpose(partner))
        logits = scale(concat([same, cross], axis=1), 1.0 / tau)
        positive = scale(reduce_sum(hadamard(anchor, partner), axis=-1), 1.0 / tau)
        terms.append(reduce_sum(logsumexp(logits, mask=mask) - positive))
    return terms


def mdke_loss(projected: Sequence[Tensor], cfg: Union[LossConfig, float]) -> Tensor:
    tau = cfg.tau if isinstance(cfg, LossConfig) else float(cfg)
    terms = per_modality_mdke(projected, tau)
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def fuse_unpaired(
        h_p: Tensor, h_a_list: Sequence[Tensor], lam: Union[float, np.ndarray], spec: FusionSpec,
    ) -> Tensor:
    """
    F[lam * h_p, (1 - lam) / (M - 1) * h_a^1, ...] with F appending (concat)
    or adding (weighted_sum). ``lam`` is a scalar or one value per row.
    """
    if not h_a_list:
        raise DimensionMismatch("Fusion needs at least one auxiliary modality.")
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError(f"Mixing coefficient must lie in [0, 1], got {lam}.")
    h_p = as_tensor(h_p)
    share = 1.0 / len(h_a_list)

    def weighted(t: Tensor, w: np.ndarray) -> Tensor:
        if w.ndim == 0:
            return scale(t, float(w))
        return hadamard(t, Tensor(w.reshape(-1, 1)))

    parts = [weighted(h_p, lam)] + [weighted(as_tensor(h), (1.0 - lam) * share) for h in h_a_list]
    if spec.kind == "concat":
        return concat(parts, axis=-1)

    widths = {p.shape[-1] for p in parts}
    if len(widths) != 1:
        raise DimensionMismatch(f"weighted_sum fusion needs equal feature dims, got {sorted(widths)}.")
    fused = parts[0]
    for part in parts[1:]:
        fused = fused + part
    return fused


def _require_simplex(label: np.ndarray, name: str) -> None:
    label = np.asarray(label, dtype=np.float64)
    if np.any(label < -SIMPLEX_TOLERANCE) or np.any(np.abs(label.sum(axis=-1) - 1.0) > SIMPLEX_TOLERANCE):
        raise NonSimplexInput(f"{name} is not a probability vector: {label}")


def mixed_label(y_p: np.ndarray, y_a_list: Sequence[np.ndarray], lam: Union[float, np.ndarray]) -> np.ndarray:
    """lam * y_p + (1 - lam) / (M - 1) * sum of the auxiliary labels; rows broadcast with ``lam``."""
    _require_simplex(y_p, "y_p")
    for k, y_a in enumerate(y_a_list):
        _require_simplex(y_a, f"y_a[{k}]")
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError(f"Mixing coefficient must lie in [0, 1], got {lam}.")
    if lam.ndim == 1:
        lam = lam[:, None]
    auxiliary = np.sum([np.asarray(y, dtype=np.float64) for y in y_a_list], axis=0)
    return lam * np.asarray(y_p, dtype=np.float64) + (1.0 - lam) / len(y_a_list) * auxiliary


def unpaired_pairs(batch_size: int, n_unpaired: int) -> Tuple[np.ndarray, np.ndarray]:
    """0-based (anchor, partner) index arrays with partner = [anchor + n] for n = 1..N."""
    if batch_size <= n_unpaired:
        raise BatchTooSmall(batch_size, n_unpaired)
    anchors, partners = [], []
    for i in range(1, batch_size + 1):
        for n in range(1, n_unpaired + 1):
            anchors.append(i - 1)
            partners.append(mod_index(i + n, batch_size) - 1)
    return np.asarray(anchors), np.asarray(partners)


def sample_lambdas(count: int, cfg: LossConfig, spec: FusionSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.lambda_source == "fixed":
        return np.full(count, float(spec.fixed_lambda))
    return rng.beta(cfg.beta_a, cfg.beta_b, size=count)


def task_loss(prediction: Tensor, targets: np.ndarray, kind: str = "xent") -> Tensor:
    """Per-row downstream loss against (soft) targets."""
    if kind == "xent":
        return softmax_xent(prediction, targets)
    if kind == "mse":
        return mse(prediction, targets)
    raise ValueError(f"Unknown task loss '{kind}', expected 'xent' or 'mse'.")


def mix_unpaired(
        features: Sequence[Tensor], labels: np.ndarray, cfg: LossConfig, spec: FusionSpec,
        rng: np.random.Generator,
    ) -> MixedSample:
    """Fused features and soft labels of every (i, [i+n]) pair of the batch."""
    batch = features[0].shape[0]
    anchors, partners = unpaired_pairs(batch, cfg.n_unpaired)
    lam = sample_lambdas(len(anchors), cfg, spec, rng)
    h_p = take(features[0], anchors)
    h_a = [take(f, partners) for f in features[1:]]
    fused = fuse_unpaired(h_p, h_a, lam, spec)
    soft = mixed_label(labels[anchors], [labels[partners]] * len(h_a), lam)
    return MixedSample(fused=fused, soft_label=soft, lam=lam)


def beta_loss(
        features: Sequence[Tensor], labels: np.ndarray, predict: Callable[[Tensor], Tensor],
        cfg: LossConfig, spec: FusionSpec, rng: np.random.Generator,
    ) -> Tensor:
    """
    Sum over anchors i and partners [i+1]..[i+N] of the downstream loss of
    ``predict`` on the fused unpaired feature against the mixed label.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[0] != features[0].shape[0]:
        raise DimensionMismatch(f"{labels.shape[0]} labels for a batch of {features[0].shape[0]}.")
    sample = mix_unpaired(features, labels, cfg, spec, rng)
    logger.debug(f"beta loss over {len(sample.lam)} fused pairs, mean lambda {sample.lam.mean():.4f}")
    return reduce_sum(task_loss(predict(sample.fused), sample.soft_label, cfg.task_loss))


def imml_loss(
        mdke: Union[Tensor, float], beta: Union[Tensor, float], base: Union[Tensor, float], cfg: LossConfig,
    ) -> Tensor:
    return scale(mdke, cfg.gamma1) + scale(beta, cfg.gamma2) + as_tensor(base)
