"""Exception hierarchy shared by all geobary modules."""


class GeobaryError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GeobaryError, ValueError):
    """Array shapes do not agree."""


class ContractError(GeobaryError, ValueError):
    """An input violates a documented precondition."""


class ConvergenceError(GeobaryError, RuntimeError):
    """An iterative solver hit its iteration limit.

    Attributes
    ----------
    residual : float
        Marginal residual at the last iterate.
    n_iter : int
        Number of iterations performed.
    """

    def __init__(self, message, residual, n_iter):
        super().__init__(f"{message} (residual={residual:.3e} after {n_iter} iterations)")
        self.residual = residual
        self.n_iter = n_iter


class NumericalError(GeobaryError, FloatingPointError):
    """Non-finite values appeared in solver state."""


class GraphDisconnectedError(GeobaryError):
    """A required pair of graph vertices is not connected.

    Attributes
    ----------
    pairs : list of tuple
        Offending ``(s, i, j)`` triples (``s`` is None when unknown).
    """

    def __init__(self, pairs):
        self.pairs = list(pairs)
        head = ", ".join(str(p) for p in self.pairs[:5])
        more = "" if len(self.pairs) <= 5 else f" and {len(self.pairs) - 5} more"
        super().__init__(
            f"graph is disconnected between fixed vertices {head}{more}; "
            "increase the radius or the number of random points"
        )
