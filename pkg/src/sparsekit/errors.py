"""Exception types shared across the package."""


class SparsekitError(Exception):
    """Base class for all sparsekit errors."""


class ConfigError(SparsekitError):
    """A parameter is outside its documented range."""


class GraphFormatError(SparsekitError):
    """An input file could not be parsed as a graph.

    Carries the 1-based line number when the failure is tied to a line.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DisconnectedGraphError(SparsekitError):
    """The graph is disconnected; carries one vertex pair with no path."""

    def __init__(self, u, v):
        super().__init__(f"graph is disconnected: no path between vertices {u} and {v}")
        self.pair = (u, v)


class BarrierViolationError(SparsekitError):
    """An eigenvalue left the open barrier interval (ell, u)."""

    def __init__(self, eigenvalue, lower, upper, iteration=None):
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(
            f"eigenvalue {eigenvalue:.6g} outside barriers ({lower:.6g}, {upper:.6g}){where}"
        )
        self.eigenvalue = eigenvalue
        self.lower = lower
        self.upper = upper
        self.iteration = iteration


class SolverConvergenceError(SparsekitError):
    """The iterative linear solver failed to reach its residual tolerance."""

    def __init__(self, residual, tol, iterations):
        super().__init__(
            f"solver stalled at relative residual {residual:.3e} "
            f"(tolerance {tol:.3e}) after {iterations} iterations"
        )
        self.residual = residual
        self.tol = tol
        self.iterations = iterations
