"""
Components of the generalization-error bound for the fused classifier and
numerical certificates for the inequalities its derivation relies on.

Features entering the bound are the unit-normalized projections of each
modality. The bound's sampling term is estimated by Monte Carlo rather than
asserted, since its constant is not known.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from causal_engine.do_calculus import DEFAULT_TOLERANCE, StepReport, format_step_reports, inequality_step
from imml_lab.autodiff import NORM_EPS, Tensor
from imml_lab.config import LossConfig
from imml_lab.errors import DimensionMismatch, NonSimplexInput
from imml_lab.losses import mod_index, per_modality_mdke
from imml_lab.model import ImmlModel
from imml_lab.synth import Dataset

DEFAULT_SAMPLE_SIZES = (4, 16, 64, 256, 1024)


@dataclass
class BoundReport:
    gerror_estimate: float
    fusion_weights: List[float]
    mdke_terms: List[float]
    conditional_std: List[float]
    log_term: float
    n_negatives: int
    eps_samples: List[Tuple[int, float]]
    eps_slope: float
    eps_at_negatives: float
    bound_value: float
    step_checks: List[StepReport] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return all(report.certified for report in self.step_checks)

    def to_dict(self) -> Dict:
        return {
            "gerror_estimate": self.gerror_estimate,
            "fusion_weights": self.fusion_weights,
            "mdke_terms": self.mdke_terms,
            "conditional_std": self.conditional_std,
            "log_term": self.log_term,
            "n_negatives": self.n_negatives,
            "eps_samples": [[r, e] for r, e in self.eps_samples],
            "eps_slope": self.eps_slope,
            "eps_at_negatives": self.eps_at_negatives,
            "bound_value": self.bound_value,
            "certified": self.certified,
            "step_checks": [report.to_dict() for report in self.step_checks],
        }


def unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.sqrt(np.sum(x * x, axis=-1, keepdims=True) + NORM_EPS)


def class_centers(features: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    centers = np.zeros((num_classes, features.shape[1]))
    for k in range(num_classes):
        members = features[labels == k]
        if len(members):
            centers[k] = members.mean(axis=0)
    return centers


def conditional_std(features: np.ndarray, labels: np.ndarray, num_classes: int) -> float:
    """sqrt(E ||f - mu_y||^2): spread of features around their class centers."""
    centers = class_centers(features, labels, num_classes)
    return float(np.sqrt(np.mean(np.sum((features - centers[labels]) ** 2, axis=1))))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    return logsumexp(logits, axis=1) - logits[np.arange(len(labels)), labels]


def check_cauchy_schwarz_step(
        first: np.ndarray, second: np.ndarray, labels: np.ndarray, num_classes: int,
        centers: Optional[np.ndarray] = None, tolerance: float = DEFAULT_TOLERANCE,
    ) -> StepReport:
    """
    -E<f, mu_y> - sqrt(E||f - mu_y||^2) <= -E<f, f'> over paired unit features.

    Pairs are taken in both orders so that both sides share one marginal,
    which is what lets the deviation of the partner stand in for the
    deviation of the anchor.
    """
    first, second = unit_rows(first), unit_rows(second)
    if first.shape != second.shape:
        raise DimensionMismatch(f"Paired features differ in shape: {first.shape} vs {second.shape}.")
    labels = np.asarray(labels)
    anchors = np.vstack([first, second])
    partners = np.vstack([second, first])
    pooled = np.concatenate([labels, labels])
    if centers is None:
        centers = class_centers(anchors, pooled, num_classes)
    mu = centers[pooled]
    lhs = -np.mean(np.sum(anchors * mu, axis=1)) - np.sqrt(np.mean(np.sum((anchors - mu) ** 2, axis=1)))
    rhs = -np.mean(np.sum(anchors * partners, axis=1))
    return inequality_step(
        "cauchy-schwarz", np.array([lhs]), np.array([rhs]), tolerance,
        "unit-sphere bound on <f, f' - mu> followed by Cauchy-Schwarz",
    )


def check_jensen_step(
        features: np.ndarray, labels: np.ndarray, num_classes: int, anchors: Optional[np.ndarray] = None,
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> StepReport:
    """exp(<a, E[f | y]>) <= E[exp(<a, f>) | y] for every present class and every anchor a."""
    features = unit_rows(features)
    anchors = features if anchors is None else np.asarray(anchors, dtype=np.float64)
    labels = np.asarray(labels)
    lhs, rhs = [], []
    for k in range(num_classes):
        members = features[labels == k]
        if not len(members):
            continue
        lhs.append(np.exp(anchors @ members.mean(axis=0)))
        rhs.append(np.exp(anchors @ members.T).mean(axis=1))
    return inequality_step(
        "jensen-exp", np.array(lhs), np.array(rhs), tolerance, "convexity of exp per class and anchor",
    )


def check_convexity_step(
        modality_logits: Sequence[np.ndarray], phi: Sequence[float], labels: np.ndarray,
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> StepReport:
    """CE(sum_m phi_m z_m, y) <= sum_m phi_m CE(z_m, y) per sample."""
    phi = np.asarray(phi, dtype=np.float64)
    if len(phi) != len(modality_logits):
        raise DimensionMismatch(f"{len(phi)} fusion weights for {len(modality_logits)} modalities.")
    if np.any(phi < 0) or abs(phi.sum() - 1.0) > 1e-9:
        raise NonSimplexInput(f"Fusion weights must lie on the simplex, got {phi}.")
    logits = [np.asarray(z, dtype=np.float64) for z in modality_logits]
    labels = np.asarray(labels)
    fused = sum(w * z for w, z in zip(phi, logits))
    lhs = cross_entropy(fused, labels)
    rhs = sum(w * cross_entropy(z, labels) for w, z in zip(phi, logits))
    return inequality_step(
        "ce-convexity", lhs, rhs, tolerance, "cross-entropy is convex in the logits",
    )


def estimate_logE_error(
        anchors: np.ndarray, pool: np.ndarray, sample_sizes: Sequence[int], repetitions: int,
        rng: np.random.Generator,
    ) -> List[Tuple[int, float]]:
    """
    Mean |log (1/R) sum_j exp(<a, b_j>) - log E_b exp(<a, b>)| with b_j drawn
    uniformly with replacement from ``pool``, for each sample size R.
    """
    scores = unit_rows(anchors) @ unit_rows(pool).T
    exact = logsumexp(scores, axis=1) - np.log(scores.shape[1])
    samples = []
    for r in sample_sizes:
        index = rng.integers(0, scores.shape[1], size=(repetitions, r))
        estimate = logsumexp(scores[:, index], axis=2) - np.log(r)
        samples.append((int(r), float(np.mean(np.abs(estimate - exact[:, None])))))
    return samples


def decay_slope(samples: Sequence[Tuple[int, float]]) -> float:
    """Slope of log error against log R."""
    sizes = np.array([r for r, _ in samples], dtype=np.float64)
    errors = np.array([e for _, e in samples], dtype=np.float64)
    if len(samples) < 2 or np.any(errors <= 0):
        logger.warning(f"cannot fit a decay slope to {list(samples)}")
        return float("nan")
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])


def bound_report(
        model: ImmlModel, data: Dataset, cfg: LossConfig, batch_size: int,
        sample_sizes: Sequence[int] = DEFAULT_SAMPLE_SIZES, repetitions: int = 20, seed: int = 0,
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> BoundReport:
    if batch_size < 2:
        raise ValueError(f"The bound needs batches of at least two samples, got {batch_size}.")
    rng = np.random.default_rng(seed)
    labels = data.y
    features = model.encode(data.inputs)
    projected = [p.data for p in model.project(features)]
    units = [unit_rows(p) for p in projected]
    n_mod = len(units)

    gerror = float(np.mean(cross_entropy(model.fused_logits(features).data, labels)))
    phi = model.fusion_weights().data

    width = min(batch_size, len(labels))
    starts = range(0, len(labels) - width + 1, width)
    sums = np.zeros(n_mod)
    for start in starts:
        batch = [Tensor(p[start:start + width]) for p in projected]
        sums += [term.item() for term in per_modality_mdke(batch, cfg.tau)]
    mdke_terms = (sums / (len(starts) * width)).tolist()
    spreads = [conditional_std(u, labels, data.num_classes) for u in units]

    n_negatives = 2 * (batch_size - 1)
    log_term = float(np.log(n_negatives / data.num_classes))
    anchors = units[0][:64]
    eps_samples = estimate_logE_error(anchors, units[0], sample_sizes, repetitions, rng)
    eps_at_negatives = estimate_logE_error(anchors, units[0], [n_negatives], repetitions, rng)[0][1]
    bound_value = float(sum(
        w * (mdke_terms[m] + spreads[m] + eps_at_negatives - log_term) for m, w in enumerate(phi)
    ))

    checks = []
    for m in range(n_mod):
        partner = mod_index(m + 2, n_mod) - 1
        checks.append(check_cauchy_schwarz_step(units[m], units[partner], labels, data.num_classes, tolerance=tolerance))
        checks.append(check_jensen_step(units[m], labels, data.num_classes, anchors=units[m][:64], tolerance=tolerance))
    modality_logits = [z.data for z in model.modality_logits(features)]
    checks.append(check_convexity_step(modality_logits, phi, labels, tolerance))
    logger.info(f"bound step checks:\n{format_step_reports(checks)}")

    return BoundReport(
        gerror_estimate=gerror,
        fusion_weights=phi.tolist(),
        mdke_terms=mdke_terms,
        conditional_std=spreads,
        log_term=log_term,
        n_negatives=n_negatives,
        eps_samples=eps_samples,
        eps_slope=decay_slope(eps_samples),
        eps_at_negatives=eps_at_negatives,
        bound_value=bound_value,
        step_checks=checks,
    )
