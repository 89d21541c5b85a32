"""Exception hierarchy shared by every workbench module."""

from typing import Any, Optional, Tuple


class WorkbenchError(Exception):
    """Base class; the CLI turns these into a red error line and exit status 1."""


class GraphFormatError(WorkbenchError):
    pass


class HypothesisError(WorkbenchError):
    """A structural hypothesis (no sources, no sinks, ...) does not hold."""

    def __init__(self, message: str, vertex: Optional[str] = None):
        super().__init__(message)
        self.vertex = vertex


class IllDefinedHomError(WorkbenchError):
    """A matrix does not send relations of the domain into relations of the codomain."""

    def __init__(self, message: str, relation_index: int):
        super().__init__(message)
        self.relation_index = relation_index


class LadderExactnessError(WorkbenchError):
    pass


class AssumptionError(WorkbenchError):
    pass


class SuperStrongError(WorkbenchError):
    """Raised with the pair of same-range paths whose q-coefficients differ."""

    def __init__(self, message: str, witness: Tuple[Any, ...]):
        super().__init__(message)
        self.witness = witness


class BasisCapError(WorkbenchError):
    pass


class ConfigError(WorkbenchError):
    pass
