"""
Causal DAGs, path enumeration and d-separation.

A ``Dag`` is an immutable wrapper around a frozen ``networkx.DiGraph``.
Every function in this module is pure; results that are lists of paths are
sorted lexicographically by their node sequence so that reports are stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
from loguru import logger

from causal_engine.errors import CycleDetected, OverlappingSets, UnknownNode, UnobservedDA

NodeId = str

K_P, K_A, D_P, D_A, Z, Y = "K_P", "K_A", "D_P", "D_A", "Z", "Y"

FUSION_EDGES: Tuple[Tuple[str, str], ...] = (
    (K_P, D_P), (K_A, D_A), (D_P, Z), (D_A, Z), (Z, Y), (K_P, Y), (K_A, Y),
)


class Dag:
    def __init__(
            self,
            nodes: Sequence[NodeId],
            edges: Iterable[Tuple[NodeId, NodeId]],
            observed: Optional[Iterable[NodeId]] = None,
        ) -> None:
        graph = nx.DiGraph()
        for node in nodes:
            if not isinstance(node, str) or not node:
                raise ValueError(f"Node identifiers must be non-empty strings, got {node!r}.")
            if node in graph:
                raise ValueError(f"Node '{node}' is declared twice.")
            graph.add_node(node)

        for source, target in edges:
            for endpoint in (source, target):
                if endpoint not in graph:
                    raise UnknownNode(endpoint)
            if source == target:
                raise CycleDetected([source, target])
            graph.add_edge(source, target)

        cycle = None
        if graph.number_of_edges():
            try:
                cycle = nx.find_cycle(graph, orientation="original")
            except nx.NetworkXNoCycle:
                cycle = None
        if cycle:
            raise CycleDetected([edge[0] for edge in cycle] + [cycle[0][0]])

        observed_set = frozenset(graph.nodes) if observed is None else frozenset(observed)
        for node in observed_set:
            if node not in graph:
                raise UnknownNode(node)

        self._graph: nx.DiGraph = nx.freeze(graph)
        self._nodes: Tuple[NodeId, ...] = tuple(nodes)
        self.observed: FrozenSet[NodeId] = observed_set
        self._topological: Tuple[NodeId, ...] = tuple(nx.lexicographical_topological_sort(graph))

    @property
    def nodes(self) -> Tuple[NodeId, ...]:
        return self._nodes

    @property
    def edges(self) -> Tuple[Tuple[NodeId, NodeId], ...]:
        return tuple(sorted(self._graph.edges))

    @property
    def graph(self) -> nx.DiGraph:
        """Read-only networkx view of the DAG."""
        return self._graph

    def __contains__(self, node: object) -> bool:
        return node in self._graph

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return (
            set(self._nodes) == set(other._nodes)
            and set(self.edges) == set(other.edges)
            and self.observed == other.observed
        )

    def __hash__(self) -> int:
        return hash((frozenset(self._nodes), frozenset(self.edges), self.observed))

    def __repr__(self) -> str:
        return f"Dag(nodes={list(self._nodes)}, edges={list(self.edges)})"

    def require(self, *nodes: NodeId) -> None:
        for node in nodes:
            if node not in self._graph:
                raise UnknownNode(node)

    def parents(self, node: NodeId) -> Tuple[NodeId, ...]:
        self.require(node)
        return tuple(sorted(self._graph.predecessors(node)))

    def children(self, node: NodeId) -> Tuple[NodeId, ...]:
        self.require(node)
        return tuple(sorted(self._graph.successors(node)))

    def ancestors(self, node: NodeId) -> FrozenSet[NodeId]:
        self.require(node)
        return frozenset(nx.ancestors(self._graph, node))

    def descendants(self, node: NodeId) -> FrozenSet[NodeId]:
        self.require(node)
        return frozenset(nx.descendants(self._graph, node))

    def topological_order(self) -> Tuple[NodeId, ...]:
        return self._topological

    def is_observed(self, node: NodeId) -> bool:
        self.require(node)
        return node in self.observed

    def without_edges(self, removed: Iterable[Tuple[NodeId, NodeId]]) -> "Dag":
        removed = set(removed)
        kept = [edge for edge in self.edges if edge not in removed]
        return Dag(self._nodes, kept, self.observed)

    def to_dict(self) -> Dict:
        return {
            "nodes": list(self._nodes),
            "edges": [list(edge) for edge in self.edges],
            "observed": [node for node in self._nodes if node in self.observed],
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "Dag":
        try:
            nodes = payload["nodes"]
            edges = [tuple(edge) for edge in payload["edges"]]
        except KeyError as e:
            raise ValueError(f"Graph description is missing the key {e}.") from e
        for edge in edges:
            if len(edge) != 2:
                raise ValueError(f"Edges must be [source, target] pairs, got {list(edge)}.")
        return cls(nodes, edges, payload.get("observed"))


def multimodal_fusion_dag() -> Dag:
    """Knowledge -> discriminative knowledge -> fused feature -> label, with latent K_P and K_A."""
    return Dag([K_P, K_A, D_P, D_A, Z, Y], FUSION_EDGES, observed=[D_P, D_A, Z, Y])


@dataclass(frozen=True)
class Path:
    """
    A simple path in the skeleton of a DAG.

    ``forward[k]`` is True when the k-th edge points from ``nodes[k]`` to
    ``nodes[k + 1]``.
    """
    nodes: Tuple[NodeId, ...]
    forward: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.nodes) < 2 or len(self.forward) != len(self.nodes) - 1:
            raise ValueError(f"Malformed path {self.nodes} / {self.forward}.")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"Path {self.nodes} repeats a node.")

    @property
    def start(self) -> NodeId:
        return self.nodes[0]

    @property
    def end(self) -> NodeId:
        return self.nodes[-1]

    @property
    def is_backdoor(self) -> bool:
        return not self.forward[0]

    @property
    def is_directed(self) -> bool:
        return all(self.forward)

    def interior(self) -> Tuple[NodeId, ...]:
        return self.nodes[1:-1]

    def is_collider(self, position: int) -> bool:
        """Whether the interior node at ``position`` has both path edges pointing into it."""
        if position <= 0 or position >= len(self.nodes) - 1:
            raise ValueError(f"Position {position} is not interior to {self}.")
        return self.forward[position - 1] and not self.forward[position]

    def __str__(self) -> str:
        text = self.nodes[0]
        for node, forward in zip(self.nodes[1:], self.forward):
            text += ("→" if forward else "←") + node
        return text

    def __lt__(self, other: "Path") -> bool:
        return (self.nodes, self.forward) < (other.nodes, other.forward)


def _check_edges_exist(g: Dag, path: Path) -> None:
    for k, forward in enumerate(path.forward):
        a, b = path.nodes[k], path.nodes[k + 1]
        edge = (a, b) if forward else (b, a)
        if not g.graph.has_edge(*edge):
            raise ValueError(f"Path {path} uses the missing edge {edge[0]}→{edge[1]}.")


def directed_paths(g: Dag, x: NodeId, y: NodeId) -> List[Path]:
    """All simple directed paths x ⇝ y."""
    g.require(x, y)
    if x == y:
        return []
    paths = [
        Path(tuple(nodes), (True,) * (len(nodes) - 1))
        for nodes in nx.all_simple_paths(g.graph, x, y)
    ]
    return sorted(paths)


def all_paths(g: Dag, x: NodeId, y: NodeId) -> List[Path]:
    """All simple paths between x and y in the skeleton, any edge directions."""
    g.require(x, y)
    if x == y:
        return []

    found: List[Path] = []
    stack_nodes = [x]
    stack_forward: List[bool] = []
    on_path = {x}

    def neighbours(node: NodeId) -> List[Tuple[NodeId, bool]]:
        steps = [(child, True) for child in g.children(node)]
        steps += [(parent, False) for parent in g.parents(node)]
        return sorted(steps)

    def extend(node: NodeId) -> None:
        for nxt, forward in neighbours(node):
            if nxt in on_path:
                continue
            stack_nodes.append(nxt)
            stack_forward.append(forward)
            if nxt == y:
                found.append(Path(tuple(stack_nodes), tuple(stack_forward)))
            else:
                on_path.add(nxt)
                extend(nxt)
                on_path.discard(nxt)
            stack_nodes.pop()
            stack_forward.pop()

    extend(x)
    return sorted(found)


def backdoor_paths(g: Dag, x: NodeId, y: NodeId) -> List[Path]:
    """Simple paths x … y whose first edge points into x."""
    return [path for path in all_paths(g, x, y) if path.is_backdoor]


def path_blocked(g: Dag, path: Path, z: Iterable[NodeId]) -> bool:
    """
    A path is blocked by ``z`` when some interior node is
    - a non-collider that belongs to ``z``, or
    - a collider such that neither it nor any of its descendants is in ``z``.
    """
    z = set(z)
    g.require(*z)
    _check_edges_exist(g, path)
    for position in range(1, len(path.nodes) - 1):
        node = path.nodes[position]
        if path.is_collider(position):
            if node not in z and not (g.descendants(node) & z):
                return True
        elif node in z:
            return True
    return False


def disjoint_sets(g: Dag, *groups: Iterable[NodeId]) -> List[Set[NodeId]]:
    sets = [set(group) for group in groups]
    for group in sets:
        g.require(*group)
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            common = sets[i] & sets[j]
            if common:
                raise OverlappingSets(f"Node sets overlap on {sorted(common)}.")
    return sets


def d_separated(g: Dag, x: Iterable[NodeId], y: Iterable[NodeId], z: Iterable[NodeId] = ()) -> bool:
    """
    Bayes-ball reachability: True when every path between ``x`` and ``y`` is
    blocked by ``z``. Empty ``x`` or ``y`` are trivially separated.
    """
    x, y, z = disjoint_sets(g, x, y, z)
    if not x or not y:
        return True

    shaded = set(z)
    for node in z:
        shaded |= g.ancestors(node)

    from_child, from_parent = "_c", "_p"
    schedule = [(node, from_child) for node in sorted(x)]
    visited = set()
    while schedule:
        node, direction = schedule.pop()
        if node in y:
            return False
        if (node, direction) in visited:
            continue
        visited.add((node, direction))

        if direction == from_child and node not in z:
            schedule.extend((parent, from_child) for parent in g.parents(node))
            schedule.extend((child, from_parent) for child in g.children(node))

        if direction == from_parent:
            if node in shaded:
                schedule.extend((parent, from_child) for parent in g.parents(node))
            if node not in z:
                schedule.extend((child, from_parent) for child in g.children(node))

    return True


def d_separated_by_paths(g: Dag, x: Iterable[NodeId], y: Iterable[NodeId], z: Iterable[NodeId] = ()) -> bool:
    """Path-enumeration oracle for ``d_separated``; exponential, use on small graphs only."""
    x, y, z = disjoint_sets(g, x, y, z)
    for source, target in product(sorted(x), sorted(y)):
        for path in all_paths(g, source, target):
            if not path_blocked(g, path, z):
                return False
    return True


@dataclass(frozen=True)
class CriterionReport:
    satisfied: bool
    violated_condition: Optional[int] = None
    witness_path: Optional[Path] = None
    alpha_paths: Tuple[Path, ...] = ()
    beta_paths: Tuple[Path, ...] = ()
    unobserved: Tuple[NodeId, ...] = ()
    reason: str = ""

    def to_dict(self) -> Dict:
        return {
            "satisfied": self.satisfied,
            "violated_condition": self.violated_condition,
            "witness_path": str(self.witness_path) if self.witness_path else None,
            "alpha_paths": [str(p) for p in self.alpha_paths],
            "beta_paths": [str(p) for p in self.beta_paths],
            "unobserved": list(self.unobserved),
            "reason": self.reason,
        }


def _first_open(g: Dag, paths: Iterable[Path], z: Iterable[NodeId]) -> Optional[Path]:
    z = set(z)
    for path in paths:
        if not path_blocked(g, path, z):
            return path
    return None


def _backdoor_from_set(g: Dag, sources: Iterable[NodeId], target: NodeId) -> List[Path]:
    paths: List[Path] = []
    for source in sorted(sources):
        paths += backdoor_paths(g, source, target)
    return paths


def _path_families(g: Dag, x: NodeId, y: NodeId, z: Set[NodeId]) -> Tuple[Tuple[Path, ...], Tuple[Path, ...]]:
    alpha = tuple(backdoor_paths(g, x, y))
    beta = tuple(path for path in _backdoor_from_set(g, z, y) if x not in path.nodes)
    return alpha, beta


def _violation(condition: int, witness: Optional[Path], reason: str, alpha=(), beta=(), unobserved=()) -> CriterionReport:
    logger.debug(f"Criterion condition ({condition}) violated: {reason}")
    return CriterionReport(
        satisfied=False,
        violated_condition=condition,
        witness_path=witness,
        alpha_paths=tuple(alpha),
        beta_paths=tuple(beta),
        unobserved=tuple(unobserved),
        reason=reason,
    )


def check_backdoor_criterion(g: Dag, x: NodeId, y: NodeId, z: Iterable[NodeId]) -> CriterionReport:
    """
    Back-door criterion for (x, y) with adjustment set z.

    - (1) no node of z is a descendant of x
    - (2) z blocks every back-door path from x to y

    Unobserved adjustment nodes do not fail the check; they are listed in
    ``unobserved`` because an adjustment cannot read them.
    """
    g.require(x, y)
    if x == y:
        raise OverlappingSets(f"Treatment and outcome are the same node '{x}'.")
    (z,) = disjoint_sets(g, z)
    if x in z or y in z:
        raise OverlappingSets(f"Adjustment set {sorted(z)} contains the treatment or the outcome.")

    unobserved = tuple(sorted(node for node in z if node not in g.observed))
    alpha = tuple(backdoor_paths(g, x, y))

    for node in sorted(z & g.descendants(x)):
        witness = directed_paths(g, x, node)[0]
        return _violation(1, witness, f"'{node}' is a descendant of '{x}'.", alpha, (), unobserved)

    witness = _first_open(g, alpha, z)
    if witness is not None:
        return _violation(2, witness, f"Back-door path {witness} is open given {sorted(z)}.", alpha, (), unobserved)

    return CriterionReport(True, alpha_paths=alpha, unobserved=unobserved, reason="back-door criterion holds")


def _frontdoor_common(g: Dag, x: NodeId, y: NodeId, z: Set[NodeId], alpha, beta) -> Optional[CriterionReport]:
    for path in directed_paths(g, x, y):
        if not set(path.interior()) & z:
            return _violation(1, path, f"Directed path {path} avoids the mediator set {sorted(z)}.", alpha, beta)

    witness = _first_open(g, [p for node in sorted(z) for p in backdoor_paths(g, x, node)], ())
    if witness is not None:
        return _violation(2, witness, f"Back-door path {witness} from the treatment to the mediator is open.", alpha, beta)
    return None


def check_frontdoor_criterion(g: Dag, x: NodeId, y: NodeId, z: Iterable[NodeId]) -> CriterionReport:
    """
    Classical front-door criterion.

    - (1) z intercepts every directed path x ⇝ y
    - (2) no back-door path from x to z is open given ∅
    - (3) every back-door path from z to y is blocked by {x}
    """
    g.require(x, y)
    if x == y:
        raise OverlappingSets(f"Treatment and outcome are the same node '{x}'.")
    (z,) = disjoint_sets(g, z)
    if x in z or y in z:
        raise OverlappingSets(f"Mediator set {sorted(z)} contains the treatment or the outcome.")

    alpha, beta = _path_families(g, x, y, z)
    failed = _frontdoor_common(g, x, y, z, alpha, beta)
    if failed is not None:
        return failed

    witness = _first_open(g, _backdoor_from_set(g, z, y), {x})
    if witness is not None:
        return _violation(3, witness, f"Back-door path {witness} is open given {{{x}}}.", alpha, beta)

    return CriterionReport(True, alpha_paths=alpha, beta_paths=beta, reason="front-door criterion holds")


def check_beta_frontdoor_criterion(
        g: Dag, x: NodeId, y: NodeId, z: Iterable[NodeId], d_a: Iterable[NodeId]
    ) -> CriterionReport:
    """
    Front-door criterion generalised to tolerate mediator-to-outcome back-door
    paths that run through an observed auxiliary set ``d_a``.

    Conditions (1) and (2) are the classical ones, then
    - (3) every back-door path from z to y is blocked by {x} ∪ d_a
    - (4) every node of d_a is a parent of some node of z; no back-door path
      from d_a to z is open given ∅; x and d_a are d-separated given ∅; no
      back-door path from x to z is open given d_a
    """
    g.require(x, y)
    if x == y:
        raise OverlappingSets(f"Treatment and outcome are the same node '{x}'.")
    z, d_a = disjoint_sets(g, z, d_a)
    if {x, y} & z or {x, y} & d_a:
        raise OverlappingSets("Mediator and auxiliary sets must not contain the treatment or the outcome.")
    hidden = sorted(node for node in d_a if node not in g.observed)
    if hidden:
        raise UnobservedDA(hidden)

    alpha, beta = _path_families(g, x, y, z)
    failed = _frontdoor_common(g, x, y, z, alpha, beta)
    if failed is not None:
        return failed

    witness = _first_open(g, _backdoor_from_set(g, z, y), {x} | d_a)
    if witness is not None:
        return _violation(3, witness, f"Back-door path {witness} is open given {sorted({x} | d_a)}.", alpha, beta)

    for node in sorted(d_a):
        if not set(g.children(node)) & z:
            return _violation(4, None, f"Auxiliary node '{node}' is not a parent of the mediator set.", alpha, beta)

    witness = _first_open(g, [p for a in sorted(d_a) for m in sorted(z) for p in backdoor_paths(g, a, m)], ())
    if witness is not None:
        return _violation(4, witness, f"Back-door path {witness} from the auxiliary set to the mediator is open.", alpha, beta)

    witness = _first_open(g, [p for a in sorted(d_a) for p in all_paths(g, x, a)], ())
    if witness is not None:
        return _violation(4, witness, f"Treatment and auxiliary set are connected by {witness}.", alpha, beta)

    witness = _first_open(g, [p for m in sorted(z) for p in backdoor_paths(g, x, m)], d_a)
    if witness is not None:
        return _violation(4, witness, f"Back-door path {witness} to the mediator opens given {sorted(d_a)}.", alpha, beta)

    return CriterionReport(True, alpha_paths=alpha, beta_paths=beta, reason="generalised front-door criterion holds")
