"""
Graph surgery, the three rules of do-calculus, and numeric certification of
the two derivations of the generalised front-door formula on the
multimodal fusion SCM (see ``graph.multimodal_fusion_dag``).

Every certification step is a ``StepReport``: both sides are evaluated by
exhaustive summation and compared entry-wise.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from tabulate import tabulate

from causal_engine.adjustment import beta_frontdoor_adjust, contract
from causal_engine.errors import TopologyMismatch
from causal_engine.graph import (
    D_A, D_P, FUSION_EDGES, K_A, K_P, Y, Z, Dag, check_backdoor_criterion, d_separated, disjoint_sets,
)
from causal_engine.scm import (
    DiscreteScm, ProbTable, conditional_table, interventional, intervene, joint, marginal,
)

DEFAULT_TOLERANCE = 1e-10

D_P_COPY = "D_P'"


@dataclass(frozen=True)
class SurgerySpec:
    bar: FrozenSet[str] = frozenset()
    underbar: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "bar", frozenset(self.bar))
        object.__setattr__(self, "underbar", frozenset(self.underbar))


def surger(g: Dag, spec: SurgerySpec) -> Dag:
    """G with edges into ``spec.bar`` and edges out of ``spec.underbar`` removed."""
    g.require(*spec.bar, *spec.underbar)
    removed = {(parent, node) for node in spec.bar for parent in g.parents(node)}
    removed |= {(node, child) for node in spec.underbar for child in g.children(node)}
    return g.without_edges(removed)


def rule_applicable(
        g: Dag, rule: int, x: Iterable[str], y: Iterable[str], z: Iterable[str], w: Iterable[str] = (),
    ) -> bool:
    """
    Graphical condition of do-calculus rule 1, 2 or 3.

    - Rule 1: (Y ⊥ Z | X, W) in G with X barred
    - Rule 2: (Y ⊥ Z | X, W) in G with X barred and Z underbarred
    - Rule 3: (Y ⊥ Z | X, W) in G with X and Z(W) barred, where Z(W) are the
      nodes of Z that are not ancestors of any node of W once X is barred
    """
    x, y, z, w = disjoint_sets(g, x, y, z, w)
    if rule not in (1, 2, 3):
        raise ValueError(f"Do-calculus has rules 1, 2 and 3, got {rule}.")
    if not z:
        return True

    if rule == 1:
        world = surger(g, SurgerySpec(bar=x))
    elif rule == 2:
        world = surger(g, SurgerySpec(bar=x, underbar=z))
    else:
        barred = surger(g, SurgerySpec(bar=x))
        w_ancestors = set().union(*(barred.ancestors(node) for node in w)) if w else set()
        z_of_w = {node for node in z if node not in w_ancestors}
        world = surger(g, SurgerySpec(bar=x | z_of_w))
    return d_separated(world, y, z, x | w)


@dataclass(frozen=True, eq=False)
class StepReport:
    step_label: str
    lhs: Union[ProbTable, np.ndarray]
    rhs: Union[ProbTable, np.ndarray]
    max_abs_diff: float
    passed: bool
    relation: str = "eq"
    justification: str = ""
    rule_ok: Optional[bool] = None

    @property
    def certified(self) -> bool:
        return self.passed and self.rule_ok is not False

    def to_dict(self) -> Dict:
        def encode(side):
            return side.to_dict() if isinstance(side, ProbTable) else np.asarray(side).tolist()
        return {
            "step_label": self.step_label,
            "relation": self.relation,
            "lhs": encode(self.lhs),
            "rhs": encode(self.rhs),
            "max_abs_diff": self.max_abs_diff,
            "passed": self.passed,
            "rule_ok": self.rule_ok,
            "justification": self.justification,
        }


def equality_step(
        label: str, lhs: Union[ProbTable, np.ndarray], rhs: Union[ProbTable, np.ndarray],
        tolerance: float = DEFAULT_TOLERANCE, justification: str = "", rule_ok: Optional[bool] = None,
    ) -> StepReport:
    if isinstance(lhs, ProbTable):
        diff = lhs.max_abs_diff(rhs)
    else:
        gap = np.abs(np.asarray(lhs, dtype=np.float64) - np.asarray(rhs, dtype=np.float64))
        diff = float(gap.max()) if gap.size else 0.0
    return StepReport(label, lhs, rhs, diff, diff <= tolerance, "eq", justification, rule_ok)


def inequality_step(
        label: str, lhs: np.ndarray, rhs: np.ndarray, tolerance: float = DEFAULT_TOLERANCE, justification: str = "",
    ) -> StepReport:
    """lhs ≤ rhs entry-wise; ``max_abs_diff`` is the largest violation (0 when it holds)."""
    excess = np.asarray(lhs, dtype=np.float64) - np.asarray(rhs, dtype=np.float64)
    violation = float(max(0.0, excess.max())) if excess.size else 0.0
    return StepReport(label, np.asarray(lhs), np.asarray(rhs), violation, violation <= tolerance, "le", justification)


def format_step_reports(reports: Sequence[StepReport]) -> str:
    rows = [
        [r.step_label, r.relation, f"{r.max_abs_diff:.3e}", r.passed, "-" if r.rule_ok is None else r.rule_ok]
        for r in reports
    ]
    return tabulate(rows, headers=["step", "relation", "max |diff|", "passed", "rule"], tablefmt="github")


def check_rule_identity(
        scm: DiscreteScm, rule: int, x: Sequence[str], y: Sequence[str], z: Sequence[str], w: Sequence[str] = (),
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> StepReport:
    """
    Numeric conclusion of a do-calculus rule, over every value of x, z, w:

    - Rule 1: P(y | do(x), z, w) = P(y | do(x), w)
    - Rule 2: P(y | do(x), do(z), w) = P(y | do(x), z, w)
    - Rule 3: P(y | do(x), do(z), w) = P(y | do(x), w)

    Slices whose conditioning events have zero mass on either side are
    excluded from the comparison.
    """
    x, y, z, w = (sorted(s) for s in (x, y, z, w))
    rule_ok = rule_applicable(scm.dag, rule, x, y, z, w)

    sizes = {v: scm.size(v) for v in x + z + w + y}
    shape = tuple(sizes[v] for v in x + z + w + y)
    lhs, rhs = np.zeros(shape), np.zeros(shape)

    for xs in product(*(range(sizes[v]) for v in x)):
        do_x = {v: scm.domain(v)[i] for v, i in zip(x, xs)}
        j_x = joint(intervene(scm, do_x))
        p_y_zw = conditional_table(j_x, y, z + w).values
        mass_zw = marginal(j_x, z + w).reordered(z + w).values
        p_y_w = conditional_table(j_x, y, w).values
        mass_w = marginal(j_x, w).reordered(w).values

        for zs in product(*(range(sizes[v]) for v in z)):
            do_xz = {**do_x, **{v: scm.domain(v)[i] for v, i in zip(z, zs)}}
            j_xz = joint(intervene(scm, do_xz))
            p_y_w_xz = conditional_table(j_xz, y, w).values
            mass_w_xz = marginal(j_xz, w).reordered(w).values

            if rule == 1:
                left, right, mask = p_y_zw[zs], p_y_w, mass_zw[zs] > 0
            elif rule == 2:
                left, right, mask = p_y_w_xz, p_y_zw[zs], (mass_w_xz > 0) & (mass_zw[zs] > 0)
            else:
                left, right, mask = p_y_w_xz, p_y_w, (mass_w_xz > 0) & (mass_w > 0)
            mask = np.reshape(mask, mask.shape + (1,) * len(y))
            lhs[xs + zs] = np.where(mask, left, 0.0)
            rhs[xs + zs] = np.where(mask, right, 0.0)

    variables = tuple(x + z + w + y)
    domains = tuple(scm.domain(v) for v in variables)
    given = tuple(x + z + w)
    return equality_step(
        f"rule-{rule}",
        ProbTable(variables, domains, lhs, given),
        ProbTable(variables, domains, rhs, given),
        tolerance,
        f"rule {rule} with x={x}, y={y}, z={z}, w={w}",
        rule_ok,
    )


def require_fusion_topology(scm: DiscreteScm) -> None:
    nodes = {K_P, K_A, D_P, D_A, Z, Y}
    if set(scm.dag.nodes) != nodes or set(scm.dag.edges) != set(FUSION_EDGES):
        raise TopologyMismatch(
            f"Expected the multimodal fusion SCM {sorted(FUSION_EDGES)}, got {list(scm.dag.edges)}."
        )


def _factor(table: ProbTable, target: Sequence[str], given: Sequence[str], rename: Optional[Mapping[str, str]] = None):
    ct = conditional_table(table, list(target), list(given))
    names = [rename.get(v, v) if rename else v for v in ct.variables]
    return names, ct.values


def _prior(table: ProbTable, variable: str, rename: Optional[str] = None):
    return [rename or variable], marginal(table, [variable]).values


def _mechanism(scm: DiscreteScm, node: str):
    cpt = scm.cpt(node)
    return list(cpt.parents) + [node], cpt.table


def _fixed(factor, variable: str, index: int):
    names, values = factor
    axis = names.index(variable)
    return names[:axis] + names[axis + 1:], np.take(values, index, axis=axis)


def _by_treatment(scm: DiscreteScm, rows: List[np.ndarray], degenerate: bool = False) -> ProbTable:
    return ProbTable((D_P, Y), (scm.domain(D_P), scm.domain(Y)), np.stack(rows), (D_P,), degenerate)


def verify_joint_decomposition(scm: DiscreteScm, tolerance: float = DEFAULT_TOLERANCE) -> StepReport:
    """Joint = P(K_A) P(K_P) P(D_A|K_A) P(D_P|K_P) P(Z|D_A,D_P) P(Y|Z,K_A,K_P), factors read off the joint."""
    require_fusion_topology(scm)
    full = joint(scm)
    order = list(full.variables)
    product_values = contract(
        order,
        _factor(full, [K_A], []),
        _factor(full, [K_P], []),
        _factor(full, [D_A], [K_A]),
        _factor(full, [D_P], [K_P]),
        _factor(full, [Z], [D_A, D_P]),
        _factor(full, [Y], [Z, K_A, K_P]),
    )
    rhs = ProbTable(full.variables, full.domains, product_values)
    return equality_step("joint", full, rhs, tolerance, "Markov factorisation over the fusion SCM")


def verify_decomposition_chain(scm: DiscreteScm, tolerance: float = DEFAULT_TOLERANCE) -> List[StepReport]:
    """
    Certifies the total-probability derivation of the generalised front-door
    formula, one report per rewrite, each comparing consecutive expressions
    for every value of D_P. Latent K_P and K_A are summed explicitly.
    """
    require_fusion_topology(scm)
    full = joint(scm)
    dp = {D_P: D_P_COPY}

    y_mech = _mechanism(scm, Y)
    da_mech = _mechanism(scm, D_A)
    ka_prior = _mechanism(scm, K_A)
    kp_prior = _mechanism(scm, K_P)
    dp_copy = _prior(full, D_P, D_P_COPY)
    kp_given_copy = _factor(full, [K_P], [D_P], dp)
    y_given_kp_ka_z_copy = _factor(full, [Y], [K_P, K_A, Z, D_P], dp)
    kp_given_copy_z_ka = _factor(full, [K_P], [D_P, Z, K_A], dp)
    y_given_ka_z_copy = _factor(full, [Y], [K_A, Z, D_P], dp)
    ka_given_da = _factor(full, [K_A], [D_A])
    da_prior = _prior(full, D_A)
    y_given_ka_z_copy_da = _factor(full, [Y], [K_A, Z, D_P, D_A], dp)
    ka_given_da_z_copy = _factor(full, [K_A], [D_A, Z, D_P], dp)
    y_given_z_copy_da = _factor(full, [Y], [Z, D_P, D_A], dp)

    expressions: Dict[str, List[np.ndarray]] = {key: [] for key in ("oracle", "start", "a", "b", "c", "d", "e", "f")}
    for i, value in enumerate(scm.domain(D_P)):
        z_mech = _fixed(_mechanism(scm, Z), D_P, i)
        out = [Y]
        expressions["oracle"].append(interventional(scm, D_P, value, Y).values)
        expressions["start"].append(contract(out, y_mech, da_mech, ka_prior, kp_prior, z_mech))
        expressions["a"].append(contract(out, y_mech, kp_given_copy, dp_copy, z_mech, da_mech, ka_prior))
        expressions["b"].append(contract(out, y_given_kp_ka_z_copy, kp_given_copy_z_ka, dp_copy, da_mech, ka_prior, z_mech))
        expressions["c"].append(contract(out, y_given_ka_z_copy, dp_copy, da_mech, ka_prior, z_mech))
        expressions["d"].append(contract(out, y_given_ka_z_copy, dp_copy, ka_given_da, da_prior, z_mech))
        expressions["e"].append(contract(out, y_given_ka_z_copy_da, ka_given_da_z_copy, z_mech, dp_copy, da_prior))
        expressions["f"].append(contract(out, y_given_z_copy_da, z_mech, dp_copy, da_prior))

    steps = [
        ("decomp-truncated", "oracle", "start", "do(D_P) drops P(D_P|K_P) from the factorisation"),
        ("decomp-a", "start", "a", "total probability: P(K_P) = Σ_d' P(K_P|d') P(d')"),
        ("decomp-b", "a", "b", "Y ⊥ D_P | K_P, K_A, Z and K_P ⊥ Z, K_A | D_P"),
        ("decomp-c", "b", "c", "sum out K_P"),
        ("decomp-d", "c", "d", "Bayes: P(D_A|K_A) P(K_A) = P(K_A|D_A) P(D_A)"),
        ("decomp-e", "d", "e", "Y ⊥ D_A | K_A, Z, D_P and K_A ⊥ Z, D_P | D_A"),
        ("decomp-f", "e", "f", "sum out K_A"),
    ]
    reports = [
        equality_step(label, _by_treatment(scm, expressions[left]), _by_treatment(scm, expressions[right]), tolerance, why)
        for label, left, right, why in steps
    ]
    logger.info(f"Decomposition chain:\n{format_step_reports(reports)}")
    return reports


def _do_conditional(scm: DiscreteScm, do: Mapping[str, Any], target: Sequence[str], given: Sequence[str]) -> np.ndarray:
    return conditional_table(joint(intervene(scm, do)), list(target), list(given)).values


def verify_multiworld_chain(scm: DiscreteScm, tolerance: float = DEFAULT_TOLERANCE) -> List[StepReport]:
    """
    Certifies the do-calculus derivation of the generalised front-door
    formula. Do-expressions are evaluated on mutilated models; steps that
    cite a rule also record whether its graphical condition holds.
    """
    require_fusion_topology(scm)
    g = scm.dag
    full = joint(scm)
    p_da = marginal(full, [D_A]).values
    p_copy = marginal(full, [D_P]).values
    p_z_given_dp_da = conditional_table(full, [Z], [D_P, D_A]).values
    p_y_given_z_copy_da = conditional_table(full, [Y], [Z, D_P, D_A]).values

    expressions: Dict[str, List[np.ndarray]] = {key: [] for key in ("oracle", "a", "b", "c", "d", "e", "f", "g", "eq1")}
    degenerate = False
    for i, value in enumerate(scm.domain(D_P)):
        do = {D_P: value}
        j_do = joint(intervene(scm, do))
        p_y_do = conditional_table(j_do, [Y], [Z, D_A]).values
        p_z_da_do = marginal(j_do, [Z, D_A]).reordered([Z, D_A]).values
        p_z_do = conditional_table(j_do, [Z], [D_A]).values
        p_da_do = marginal(j_do, [D_A]).values
        p_z_obs = p_z_given_dp_da[i]

        p_y_do_both = np.stack([_do_conditional(scm, {D_P: value, Z: zv}, [Y], [D_A]) for zv in scm.domain(Z)])
        p_y_do_z = np.stack([_do_conditional(scm, {Z: zv}, [Y], [D_A]) for zv in scm.domain(Z)])

        zy, z, a = [Z, D_A, Y], [Z, D_A], [D_A]
        expressions["oracle"].append(interventional(scm, D_P, value, Y).values)
        expressions["a"].append(contract([Y], (zy, p_y_do), (z, p_z_da_do)))
        expressions["b"].append(contract([Y], (zy, p_y_do), ([D_A, Z], p_z_do), (a, p_da_do)))
        expressions["c"].append(contract([Y], (zy, p_y_do), ([D_A, Z], p_z_do), (a, p_da)))
        expressions["d"].append(contract([Y], (zy, p_y_do), ([D_A, Z], p_z_obs), (a, p_da)))
        expressions["e"].append(contract([Y], (zy, p_y_do_both), ([D_A, Z], p_z_obs), (a, p_da)))
        expressions["f"].append(contract([Y], (zy, p_y_do_z), ([D_A, Z], p_z_obs), (a, p_da)))
        expressions["g"].append(contract(
            [Y], ([Z, D_P_COPY, D_A, Y], p_y_given_z_copy_da), ([D_P_COPY], p_copy), ([D_A, Z], p_z_obs), (a, p_da),
        ))
        adjusted = beta_frontdoor_adjust(scm, D_P, value, Y, [Z], [D_A])
        degenerate = degenerate or adjusted.degenerate
        expressions["eq1"].append(adjusted.values)

    backdoor_ok = check_backdoor_criterion(g, Z, Y, [D_P, D_A]).satisfied and d_separated(g, [D_P], [D_A])
    steps = [
        ("multiworld-a", "oracle", "a", "condition on Z and D_A in the world do(D_P)", None),
        ("multiworld-b", "a", "b", "chain rule P(Z, D_A|do) = P(Z|do, D_A) P(D_A|do)", None),
        ("multiworld-c", "b", "c", "D_A is independent of D_P, the collider Z blocks the path",
         rule_applicable(g, 3, [], [D_A], [D_P], [])),
        ("multiworld-d", "c", "d", "P(Z|do(D_P), D_A) = P(Z|D_P, D_A)",
         rule_applicable(g, 2, [], [Z], [D_P], [D_A])),
        ("multiworld-e", "d", "e", "rule 2: observing Z equals doing Z given D_P, D_A",
         rule_applicable(g, 2, [D_P], [Y], [Z], [D_A])),
        ("multiworld-f", "e", "f", "rule 3: do(D_P) has no effect once Z is set, given D_A",
         rule_applicable(g, 3, [Z], [Y], [D_P], [D_A])),
        ("multiworld-g", "f", "g", "back-door adjustment for do(Z) with {D_P} given D_A", backdoor_ok),
        ("multiworld-eq1", "g", "eq1", "agrees with the generalised front-door evaluator", None),
    ]
    reports = []
    for label, left, right, why, rule_ok in steps:
        reports.append(equality_step(
            label,
            _by_treatment(scm, expressions[left]),
            _by_treatment(scm, expressions[right], degenerate if right == "eq1" else False),
            tolerance, why, rule_ok,
        ))
    logger.info(f"Multi-world chain:\n{format_step_reports(reports)}")
    return reports
