"""
Adjustment-formula evaluators.

Evaluators read only the observational joint restricted to observed
variables. With the default ``positivity="renormalize"`` the average over the
treatment copy is taken over its supported values only. With
``positivity="zero"`` conditionals on zero-mass events contribute nothing to
the sums and the table that is left is rescaled to sum to one. Either way a
positivity violation is reported through ``degenerate``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Literal, Sequence, Tuple

import numpy as np
from loguru import logger

from causal_engine.errors import CriterionViolated, UnobservedDA, UnobservedVariable, UnsupportedTreatment
from causal_engine.graph import (
    CriterionReport, check_backdoor_criterion, check_beta_frontdoor_criterion, check_frontdoor_criterion,
)
from causal_engine.registry import call_adjustment, register_adjustment
from causal_engine.scm import (
    DiscreteScm, ProbTable, conditional_table, interventional, marginal, observational,
)

Positivity = Literal["zero", "renormalize"]

_TREATMENT_COPY = "\0treatment-copy"
NORMALIZATION_TOLERANCE = 1e-12


def contract(output: Sequence[str], *factors: Tuple[Sequence[str], np.ndarray]) -> np.ndarray:
    """``numpy.einsum`` over named axes."""
    names = sorted({v for axes, _ in factors for v in axes} | set(output))
    if len(names) > len(string.ascii_letters):
        raise ValueError(f"Too many distinct variables to contract: {len(names)}.")
    letters = dict(zip(names, string.ascii_letters))
    inputs = ",".join("".join(letters[v] for v in axes) for axes, _ in factors)
    spec = f"{inputs}->{''.join(letters[v] for v in output)}"
    return np.einsum(spec, *[np.asarray(array) for _, array in factors])


def _require_observed(scm: DiscreteScm, nodes: Iterable[str], error=UnobservedVariable) -> None:
    hidden = sorted({node for node in nodes if not scm.dag.is_observed(node)})
    if hidden:
        raise error(hidden)


def _refuse_unless_forced(report: CriterionReport, force: bool) -> None:
    if report.satisfied:
        return
    if force:
        logger.warning(f"Criterion violated but evaluation is forced: {report.reason}")
        return
    raise CriterionViolated(report)


def _result(scm: DiscreteScm, x: str, x_val: Any, y: str, values: np.ndarray, degenerate: bool, label: str) -> ProbTable:
    total = float(values.sum())
    if total <= 0.0:
        raise UnsupportedTreatment(x, x_val)
    if degenerate:
        logger.warning(
            f"{label}: positivity is violated, some weighted terms condition on zero-mass events; "
            f"the result is exact only under positivity."
        )
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            logger.debug(f"{label}: rescaling a table of mass {total:.6f} to one.")
            values = values / total
    return ProbTable((y,), (scm.domain(y),), values, (), degenerate)


@register_adjustment("backdoor")
def backdoor_adjust(
        scm: DiscreteScm, x: str, x_val: Any, y: str, z_set: Iterable[str] = (),
        force: bool = False, positivity: Positivity = "renormalize",
    ) -> ProbTable:
    """Σ_z P(y | x, z) P(z)."""
    z = sorted(z_set)
    _refuse_unless_forced(check_backdoor_criterion(scm.dag, x, y, z), force)
    _require_observed(scm, [x, y, *z])

    obs = observational(scm)
    ix = obs.index_of(x, x_val)
    p_y = np.take(conditional_table(obs, [y], z + [x]).values, ix, axis=len(z))
    p_zx = np.take(marginal(obs, z + [x]).reordered(z + [x]).values, ix, axis=len(z))
    p_z = marginal(obs, z).reordered(z).values

    degenerate = bool(np.any((p_z > 0) & (p_zx == 0)))
    weight = p_z
    if positivity == "renormalize":
        weight = np.where(p_zx > 0, p_z, 0.0)
        total = weight.sum()
        weight = weight / total if total > 0 else weight

    values = contract([y], (z + [y], p_y), (z, weight))
    return _result(scm, x, x_val, y, values, degenerate, "back-door adjustment")


def _front_door_sum(
        scm: DiscreteScm, x: str, x_val: Any, y: str, z: List[str], d_a: List[str], positivity: Positivity,
    ) -> Tuple[np.ndarray, bool]:
    """Σ_z Σ_a P(z | x, a) P(a) Σ_x' P(y | z, x', a) P(x')."""
    obs = observational(scm)
    ix = obs.index_of(x, x_val)
    xc = _TREATMENT_COPY

    p_y = conditional_table(obs, [y], z + [x] + d_a).values
    p_z = np.take(conditional_table(obs, z, [x] + d_a).values, ix, axis=0)
    p_a = marginal(obs, d_a).reordered(d_a).values
    p_x = marginal(obs, [x]).values
    mass = marginal(obs, z + [x] + d_a).reordered(z + [x] + d_a).values

    copy_axes = z + [xc] + d_a
    if positivity == "renormalize":
        support = np.where(mass > 0, 1.0, 0.0)
        weight = contract(copy_axes, (copy_axes, support), ([xc], p_x))
        norm = weight.sum(axis=len(z), keepdims=True)
        weight = np.divide(weight, norm, out=np.zeros_like(weight), where=norm > 0)
        inner = contract(z + d_a + [y], (copy_axes + [y], p_y), (copy_axes, weight))
    else:
        inner = contract(z + d_a + [y], (copy_axes + [y], p_y), ([xc], p_x))

    values = contract([y], (z + d_a + [y], inner), (d_a + z, p_z), (d_a, p_a))

    outer = contract(z + d_a, (d_a + z, p_z), (d_a, p_a)) > 0
    unsupported = contract(copy_axes, (copy_axes, (mass == 0).astype(float)), ([xc], (p_x > 0).astype(float))) > 0
    degenerate = bool(np.any(outer & unsupported.any(axis=len(z))))
    return values, degenerate


@register_adjustment("frontdoor")
def frontdoor_adjust(
        scm: DiscreteScm, x: str, x_val: Any, y: str, z_set: Iterable[str],
        force: bool = False, positivity: Positivity = "renormalize",
    ) -> ProbTable:
    """Σ_z P(z | x) Σ_x' P(y | x', z) P(x')."""
    z = sorted(z_set)
    _refuse_unless_forced(check_frontdoor_criterion(scm.dag, x, y, z), force)
    _require_observed(scm, [x, y, *z])
    values, degenerate = _front_door_sum(scm, x, x_val, y, z, [], positivity)
    return _result(scm, x, x_val, y, values, degenerate, "front-door adjustment")


@register_adjustment("beta")
def beta_frontdoor_adjust(
        scm: DiscreteScm, x: str, x_val: Any, y: str, z_set: Iterable[str], d_a_set: Iterable[str],
        force: bool = False, positivity: Positivity = "renormalize",
    ) -> ProbTable:
    """Σ_z Σ_{d_a} Σ_{x'} P(y | z, x', d_a) P(z | x, d_a) P(d_a) P(x')."""
    z, d_a = sorted(z_set), sorted(d_a_set)
    _require_observed(scm, d_a, UnobservedDA)
    _refuse_unless_forced(check_beta_frontdoor_criterion(scm.dag, x, y, z, d_a), force)
    _require_observed(scm, [x, y, *z])
    values, degenerate = _front_door_sum(scm, x, x_val, y, z, d_a, positivity)
    return _result(scm, x, x_val, y, values, degenerate, "generalised front-door adjustment")


def criterion_for(method: str, scm: DiscreteScm, x: str, y: str, z_set: Iterable[str], d_a_set: Iterable[str] = ()) -> CriterionReport:
    if method == "backdoor":
        return check_backdoor_criterion(scm.dag, x, y, z_set)
    if method == "frontdoor":
        return check_frontdoor_criterion(scm.dag, x, y, z_set)
    if method == "beta":
        return check_beta_frontdoor_criterion(scm.dag, x, y, z_set, d_a_set)
    raise ValueError(f"Unknown adjustment method '{method}'.")


@dataclass(frozen=True)
class OracleComparison:
    method: str
    x_val: Any
    adjusted: ProbTable
    oracle: ProbTable
    max_abs_diff: float
    passed: bool
    criterion: CriterionReport

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "x_val": self.x_val,
            "adjusted": self.adjusted.to_dict(),
            "oracle": self.oracle.to_dict(),
            "max_abs_diff": self.max_abs_diff,
            "passed": self.passed,
            "criterion": self.criterion.to_dict(),
        }


def compare_with_oracle(
        scm: DiscreteScm, method: str, x: str, x_val: Any, y: str,
        z_set: Iterable[str] = (), d_a_set: Iterable[str] = (),
        tolerance: float = 1e-10, force: bool = False, positivity: Positivity = "renormalize",
    ) -> OracleComparison:
    """Evaluates an adjustment formula and the mutilation oracle side by side."""
    z_set, d_a_set = sorted(z_set), sorted(d_a_set)
    kwargs: Dict[str, Any] = dict(scm=scm, x=x, x_val=x_val, y=y, z_set=z_set, force=force, positivity=positivity)
    if method == "beta":
        kwargs["d_a_set"] = d_a_set
    adjusted = call_adjustment(method, **kwargs)
    oracle = interventional(scm, x, x_val, y)
    diff = adjusted.max_abs_diff(oracle)
    report = criterion_for(method, scm, x, y, z_set, d_a_set)
    logger.debug(f"{method} adjustment at {x}={x_val!r}: max |adjusted - oracle| = {diff:.3e}")
    return OracleComparison(method, x_val, adjusted, oracle, diff, diff <= tolerance, report)
