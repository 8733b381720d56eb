"""Named error kinds raised by the causal engine.

Every kind is a ``ValueError`` so callers that only care about bad input can
catch the base class, and the CLI maps the whole family to exit code 2.
"""
from typing import List, Sequence


class CycleDetected(ValueError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle: List[str] = list(cycle)
        super().__init__(f"The graph contains a directed cycle: {' -> '.join(self.cycle)}")


class UnknownNode(ValueError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"Node '{node}' is not part of the graph.")


class OverlappingSets(ValueError):
    pass


class UnknownVariable(ValueError):
    def __init__(self, variable: str):
        self.variable = variable
        super().__init__(f"Variable '{variable}' is not part of the table.")


class DomainTooLarge(ValueError):
    pass


class ValueOutOfDomain(ValueError):
    def __init__(self, variable: str, value, domain: Sequence):
        self.variable = variable
        self.value = value
        super().__init__(f"Value {value!r} is outside the domain of '{variable}': {list(domain)}")


class InvalidScm(ValueError):
    pass


class CriterionViolated(ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"Adjustment refused: {report.reason}")


class UnobservedVariable(ValueError):
    def __init__(self, nodes: Sequence[str]):
        self.nodes = list(nodes)
        super().__init__(f"Nodes {self.nodes} are not observed and cannot be read by an adjustment.")


class UnobservedDA(UnobservedVariable):
    pass


class TopologyMismatch(ValueError):
    pass



class UnsupportedTreatment(ValueError):
    def __init__(self, node: str, value):
        self.node = node
        self.value = value
        super().__init__(f"{node}={value!r} has zero observational mass; no adjustment formula can use it.")
