"""
Exact discrete structural causal models.

Tables are dense ``numpy`` float64 arrays with one axis per variable. A
conditional table keeps its conditioning variables as the leading axes and
is zero on every conditioning slice with zero mass.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from causal_engine.errors import (
    DomainTooLarge, InvalidScm, OverlappingSets, UnknownNode, UnknownVariable, ValueOutOfDomain,
)
from causal_engine.graph import Dag, NodeId

DEFAULT_CELL_CAP = 10 ** 7
ROW_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ProbTable:
    variables: Tuple[NodeId, ...]
    domains: Tuple[Tuple[Any, ...], ...]
    values: np.ndarray
    given: Tuple[NodeId, ...] = ()
    degenerate: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != tuple(len(d) for d in self.domains) or len(self.domains) != len(self.variables):
            raise ValueError(
                f"Table shape {values.shape} does not match the domains of {list(self.variables)}."
            )
        if self.variables[:len(self.given)] != tuple(self.given):
            raise ValueError("Conditioning variables must lead the variable order.")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def axis(self, variable: NodeId) -> int:
        try:
            return self.variables.index(variable)
        except ValueError:
            raise UnknownVariable(variable) from None

    def domain(self, variable: NodeId) -> Tuple[Any, ...]:
        return self.domains[self.axis(variable)]

    def index_of(self, variable: NodeId, value: Any) -> int:
        domain = self.domain(variable)
        try:
            return domain.index(value)
        except ValueError:
            raise ValueOutOfDomain(variable, value, domain) from None

    def value(self, assignment: Mapping[NodeId, Any]) -> float:
        if set(assignment) != set(self.variables):
            raise ValueError(f"An assignment must cover exactly {list(self.variables)}.")
        return float(self.values[tuple(self.index_of(v, assignment[v]) for v in self.variables)])

    def reordered(self, variables: Sequence[NodeId]) -> "ProbTable":
        variables = tuple(variables)
        if sorted(variables) != sorted(self.variables):
            raise ValueError(f"Cannot reorder {list(self.variables)} as {list(variables)}.")
        perm = [self.axis(v) for v in variables]
        given = self.given if variables[:len(self.given)] == self.given else ()
        return ProbTable(
            variables, tuple(self.domains[k] for k in perm), np.transpose(self.values, perm),
            given, self.degenerate,
        )

    def max_abs_diff(self, other: "ProbTable") -> float:
        aligned = other.reordered(self.variables)
        if aligned.domains != self.domains:
            raise ValueError("Tables range over different domains.")
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.abs(self.values - aligned.values)))

    def is_normalized(self, tolerance: float = 1e-9) -> bool:
        if np.any(self.values < 0):
            return False
        if not self.given:
            return abs(float(self.values.sum()) - 1.0) <= tolerance
        axes = tuple(range(len(self.given), self.values.ndim))
        sums = self.values.sum(axis=axes)
        return bool(np.all((np.abs(sums - 1.0) <= tolerance) | (sums == 0.0)))

    def to_dict(self) -> Dict:
        return {
            "variables": list(self.variables),
            "given": list(self.given),
            "domains": {v: list(d) for v, d in zip(self.variables, self.domains)},
            "values": self.values.tolist(),
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True, eq=False)
class Cpt:
    """P(node | parents) with parents as the leading axes, in the listed order."""
    parents: Tuple[NodeId, ...]
    table: np.ndarray


class DiscreteScm:
    def __init__(
            self,
            dag: Dag,
            domains: Mapping[NodeId, Sequence[Any]],
            cpts: Mapping[NodeId, Union[Cpt, np.ndarray]],
        ) -> None:
        self.dag = dag
        self._domains: Dict[NodeId, Tuple[Any, ...]] = {}
        for node in dag.nodes:
            if node not in domains:
                raise InvalidScm(f"Node '{node}' has no domain.")
            domain = tuple(domains[node])
            if not domain or len(set(domain)) != len(domain):
                raise InvalidScm(f"Domain of '{node}' must be a non-empty list of distinct values.")
            self._domains[node] = domain
        for node in domains:
            if node not in dag:
                raise UnknownNode(node)

        self._cpts: Dict[NodeId, Cpt] = {}
        for node in dag.nodes:
            if node not in cpts:
                raise InvalidScm(f"Node '{node}' has no conditional probability table.")
            self._cpts[node] = self._validated(node, cpts[node])

    def _validated(self, node: NodeId, raw: Union[Cpt, np.ndarray]) -> Cpt:
        cpt = raw if isinstance(raw, Cpt) else Cpt(self.dag.parents(node), np.asarray(raw))
        parents = tuple(cpt.parents)
        if set(parents) != set(self.dag.parents(node)) or len(parents) != len(set(parents)):
            raise InvalidScm(
                f"CPT of '{node}' lists parents {list(parents)}, the graph has {list(self.dag.parents(node))}."
            )
        table = np.array(cpt.table, dtype=np.float64)
        expected = tuple(self.size(p) for p in parents) + (self.size(node),)
        if table.shape != expected:
            raise InvalidScm(f"CPT of '{node}' has shape {table.shape}, expected {expected}.")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise InvalidScm(f"CPT of '{node}' has negative or non-finite entries.")
        rows = table.sum(axis=-1)
        if np.any(np.abs(rows - 1.0) > ROW_TOLERANCE):
            raise InvalidScm(f"CPT rows of '{node}' do not sum to 1 (worst {float(np.max(np.abs(rows - 1.0))):.3e}).")
        table.flags.writeable = False
        return Cpt(parents, table)

    @property
    def domains(self) -> Dict[NodeId, Tuple[Any, ...]]:
        return dict(self._domains)

    @property
    def cpts(self) -> Dict[NodeId, Cpt]:
        return dict(self._cpts)

    def domain(self, node: NodeId) -> Tuple[Any, ...]:
        self.dag.require(node)
        return self._domains[node]

    def size(self, node: NodeId) -> int:
        return len(self.domain(node))

    def index_of(self, node: NodeId, value: Any) -> int:
        domain = self.domain(node)
        try:
            return domain.index(value)
        except ValueError:
            raise ValueOutOfDomain(node, value, domain) from None

    def cpt(self, node: NodeId) -> Cpt:
        self.dag.require(node)
        return self._cpts[node]

    def __repr__(self) -> str:
        sizes = {node: len(d) for node, d in self._domains.items()}
        return f"DiscreteScm(nodes={list(self.dag.nodes)}, sizes={sizes})"


def _aligned(array: np.ndarray, axes: Sequence[NodeId], order: Sequence[NodeId]) -> np.ndarray:
    """Broadcast a factor over ``axes`` into the axis layout of ``order``."""
    positions = [order.index(v) for v in axes]
    perm = np.argsort(positions)
    moved = np.transpose(array, perm)
    shape = [1] * len(order)
    for k in perm:
        shape[positions[k]] = array.shape[k]
    return moved.reshape(shape)


def joint(scm: DiscreteScm, cell_cap: int = DEFAULT_CELL_CAP) -> ProbTable:
    """Full joint as the product of all CPT factors, axes in topological order."""
    order = list(scm.dag.topological_order())
    shape = tuple(scm.size(v) for v in order)
    cells = prod(shape)
    if cells > cell_cap:
        raise DomainTooLarge(f"The joint over {order} has {cells} cells, above the cap of {cell_cap}.")

    values = np.ones(shape, dtype=np.float64)
    for node in order:
        cpt = scm.cpt(node)
        values = values * _aligned(cpt.table, list(cpt.parents) + [node], order)
    return ProbTable(tuple(order), tuple(scm.domain(v) for v in order), values)


def marginal(t: ProbTable, keep: Iterable[NodeId]) -> ProbTable:
    keep = set(keep)
    for variable in keep:
        t.axis(variable)
    if t.given:
        raise ValueError("Marginals are taken from full tables, not conditional ones.")
    dropped = tuple(k for k, v in enumerate(t.variables) if v not in keep)
    kept = [k for k, v in enumerate(t.variables) if v in keep]
    return ProbTable(
        tuple(t.variables[k] for k in kept),
        tuple(t.domains[k] for k in kept),
        t.values.sum(axis=dropped) if dropped else t.values,
    )


def conditional_table(t: ProbTable, target: Sequence[NodeId], given: Sequence[NodeId]) -> ProbTable:
    """P(target | given) for every value of ``given``; zero-mass slices are all zeros."""
    target, given = list(target), list(given)
    if set(target) & set(given):
        raise OverlappingSets(f"Target {target} and conditioning set {given} overlap.")
    m = marginal(t, target + given).reordered(given + target)
    axes = tuple(range(len(given), len(given) + len(target)))
    mass = m.values.sum(axis=axes, keepdims=True) if axes else np.ones_like(m.values)
    values = np.divide(m.values, mass, out=np.zeros_like(m.values), where=mass > 0)
    degenerate = bool(np.any(mass == 0))
    if degenerate:
        logger.debug(f"P({target} | {given}) has zero-mass conditioning slices; they are set to zero.")
    return ProbTable(m.variables, m.domains, values, tuple(given), degenerate)


def conditional(t: ProbTable, target: Iterable[NodeId], given: Mapping[NodeId, Any]) -> ProbTable:
    """P(target | given = values); the zero table with ``degenerate=True`` when P(given) = 0."""
    target = [v for v in t.variables if v in set(target)]
    for variable in set(target) | set(given):
        t.axis(variable)
    if set(target) & set(given):
        raise OverlappingSets(f"Target {target} and conditioning set {sorted(given)} overlap.")

    m = marginal(t, list(target) + list(given))
    index = tuple(
        m.index_of(v, given[v]) if v in given else slice(None) for v in m.variables
    )
    sliced = m.values[index]
    kept = [v for v in m.variables if v not in given]
    sliced = np.transpose(sliced, [kept.index(v) for v in target]) if target else sliced
    mass = float(sliced.sum())
    domains = tuple(m.domain(v) for v in target)
    if mass == 0.0:
        logger.debug(f"Conditioning event {dict(given)} has zero probability.")
        return ProbTable(tuple(target), domains, np.zeros_like(sliced), (), True)
    return ProbTable(tuple(target), domains, sliced / mass)


def point_mass(size: int, index: int) -> np.ndarray:
    row = np.zeros(size, dtype=np.float64)
    row[index] = 1.0
    return row


def intervene(scm: DiscreteScm, assignments: Mapping[NodeId, Any]) -> DiscreteScm:
    """Mutilated model: each assigned node loses its incoming edges and becomes a point mass."""
    indices = {node: scm.index_of(node, value) for node, value in assignments.items()}
    removed = [(parent, node) for node in indices for parent in scm.dag.parents(node)]
    dag = scm.dag.without_edges(removed)
    cpts: Dict[NodeId, Cpt] = {}
    for node in scm.dag.nodes:
        if node in indices:
            cpts[node] = Cpt((), point_mass(scm.size(node), indices[node]))
        else:
            cpts[node] = scm.cpt(node)
    return DiscreteScm(dag, scm.domains, cpts)


def observational(scm: DiscreteScm, cell_cap: int = DEFAULT_CELL_CAP) -> ProbTable:
    """The joint restricted to the observed variables."""
    return marginal(joint(scm, cell_cap), scm.dag.observed)


def interventional(scm: DiscreteScm, x: NodeId, x_val: Any, y: NodeId) -> ProbTable:
    """Ground-truth P(y | do(x = x_val)) by mutilation."""
    scm.dag.require(x, y)
    return marginal(joint(intervene(scm, {x: x_val})), [y])


def do_query(
        scm: DiscreteScm,
        targets: Sequence[NodeId],
        do: Optional[Mapping[NodeId, Any]] = None,
        given: Optional[Mapping[NodeId, Any]] = None,
    ) -> ProbTable:
    """P(targets | do(...), given) computed on the mutilated model."""
    model = intervene(scm, do) if do else scm
    return conditional(joint(model), targets, given or {})


def random_scm(dag: Dag, domain_sizes: Union[int, Mapping[NodeId, int]], seed: int) -> DiscreteScm:
    """
    CPT rows drawn from a symmetric Dirichlet(1).

    Domains are ``0..size-1``. Singleton domains are allowed and give
    constant nodes.
    """
    rng = np.random.default_rng(seed)
    sizes = {node: domain_sizes for node in dag.nodes} if isinstance(domain_sizes, int) else dict(domain_sizes)
    for node in dag.nodes:
        if node not in sizes:
            raise InvalidScm(f"No domain size given for '{node}'.")
        if sizes[node] < 1:
            raise InvalidScm(f"Domain size of '{node}' must be at least 1.")

    cpts: Dict[NodeId, Cpt] = {}
    for node in dag.topological_order():
        parents = dag.parents(node)
        rows = prod(sizes[p] for p in parents)
        table = rng.dirichlet(np.ones(sizes[node]), size=rows)
        table = table / table.sum(axis=-1, keepdims=True)
        cpts[node] = Cpt(parents, table.reshape(tuple(sizes[p] for p in parents) + (sizes[node],)))
    domains = {node: list(range(sizes[node])) for node in dag.nodes}
    return DiscreteScm(dag, domains, cpts)
