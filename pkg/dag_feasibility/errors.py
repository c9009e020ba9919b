class DagFeasibilityError(ValueError):
    """Base exception raised by the **DAG Feasibility** library."""
    pass


class GraphStructureError(DagFeasibilityError):
    """Exception raised when node ids, edges, or edge maps do not describe a valid graph."""
    pass


class CycleDetectedError(GraphStructureError):
    """Exception raised when the declared edges admit no topological order."""
    pass


class DimensionMismatchError(DagFeasibilityError):
    """Exception raised when a vector, box, or edge payload has the wrong dimension."""
    pass


class EmptyPointSetError(DagFeasibilityError):
    """Exception raised when an operation requires at least one point and got none."""
    pass


class UnknownRoleError(DagFeasibilityError):
    """Exception raised when a column role tag is not present in a sample set."""
    pass


class DimensionUnsupportedError(DagFeasibilityError):
    """Exception raised when the Sobol direction-number table does not cover a dimension."""
    pass


class BudgetExhaustedEmptyError(DagFeasibilityError):
    """Exception raised when a sampler spends its budget without a single feasible point."""

    def __init__(self, message = None, payloads = None):
        self.payloads = payloads or []
        super().__init__(message or 'no feasible point within the budget')


class ZeroEvaluationsError(DagFeasibilityError, ZeroDivisionError):
    """Exception raised when an acceptance ratio is requested with zero evaluations."""
    pass


class SingleClassDatasetError(DagFeasibilityError):
    """Exception raised when a classifier is trained on data holding only one label."""
    pass


class SingularKernelError(DagFeasibilityError):
    """Exception raised when a kernel system cannot be factorized at the ridge floor."""
    pass


class EmptyUpstreamSolutionError(DagFeasibilityError):
    """Exception raised when an in-neighbour holds no feasible samples to propagate."""
    pass


class EmptySubproblemSolutionError(DagFeasibilityError):
    """Exception raised when a node subproblem yields zero feasible samples."""

    def __init__(self, node, message = None, diagnostics = None):
        self.node = node
        self.diagnostics = diagnostics or {}
        super().__init__(message or f'node {node} yielded no feasible samples')


class MissingCouplingBoxError(DagFeasibilityError):
    """Exception raised when lifting is requested on a graph without coupling parameters."""
    pass


class NotLiftedRunError(DagFeasibilityError):
    """Exception raised when a coupling-domain query is made on an unlifted run."""
    pass


class InvalidDirectionsError(DagFeasibilityError):
    """Exception raised when a direction string is empty or holds letters other than f/b."""
    pass


class GraphMismatchError(DagFeasibilityError):
    """Exception raised when two runs or a run and a state refer to different graphs."""
    pass


class NonpositiveTemperatureError(DagFeasibilityError):
    """Exception raised when a rate constant is requested at a temperature ≤ 0."""
    pass


class NonFiniteStateError(DagFeasibilityError):
    """Exception raised when an integrated state becomes NaN or infinite."""
    pass


class DimensionGuardError(DagFeasibilityError):
    """Exception raised when a brute-force oracle is asked for too many joint dimensions."""
    pass


class NoFeasibleApproximatorError(DagFeasibilityError):
    """Exception raised when no approximator parameters satisfy the classifier at max error."""
    pass


class StateMismatchError(DagFeasibilityError):
    """Exception raised when a saved propagation state does not match the run configuration."""
    pass


class InvalidConfigurationError(DagFeasibilityError):
    """Exception raised when a run configuration holds an invalid or inconsistent value."""
    pass


class UnknownCaseError(InvalidConfigurationError):
    """Exception raised when a case-study name is not in the built-in registry."""
    pass
