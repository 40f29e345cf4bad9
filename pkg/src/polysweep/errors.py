"""Exception hierarchy shared by all modules."""


class PolysweepError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(PolysweepError, ValueError):
    pass


class EmptyPolyhedron(PolysweepError):
    pass


class EmptyTruncation(PolysweepError):
    pass


class NumericalFailure(PolysweepError):
    pass


class NotApplicable(PolysweepError):
    pass


class NotFeasible(PolysweepError):
    pass


class OutOfDomain(PolysweepError, ValueError):
    pass


class InfeasibleStart(PolysweepError):
    pass


class EmptyPolyhedronAtNode(PolysweepError):
    """The moving set is empty at a mesh node."""

    def __init__(self, node, t):
        super().__init__(f"empty polyhedron at node {node} (t={t!r})")
        self.node = node
        self.t = t


class ExplicitStepInfeasible(PolysweepError):
    """No displacement along node-j normals lands in the next set."""

    def __init__(self, node, t):
        super().__init__(f"explicit step from node {node} (t={t!r}) cannot reach the next set")
        self.node = node
        self.t = t


class ReferenceMissing(PolysweepError):
    pass


class NoFeasibleStart(PolysweepError):
    pass


class BudgetExhausted(PolysweepError):
    """Solver ran out of evaluations. ``result`` holds the best point found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class Infeasible(PolysweepError):
    pass


class InconsistentInput(PolysweepError, ValueError):
    pass


class PLICQViolation(PolysweepError):
    """Active normals at some node are positively linearly dependent."""

    def __init__(self, node):
        super().__init__(f"PLICQ fails at node {node}")
        self.node = node


class ScenarioError(PolysweepError, ValueError):
    pass
