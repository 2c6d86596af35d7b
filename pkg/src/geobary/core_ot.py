"""Discrete optimal transport primitives.

Entropic transport is solved with log-domain Sinkhorn iterations, exact
transport with a network simplex on the bipartite transportation network.
Every function accepts plain array-likes or the light wrapper types below.
"""

from dataclasses import dataclass, field

import numpy as np

from ._simplex import transport_simplex
from .errors import ContractError, ConvergenceError, DimensionError, NumericalError

SIMPLEX_ATOL = 1e-12
# exact_ot scales masses to integers with this many units per unit mass
QUANTIZATION = 10**9
NEWTON_AFTER = 50
# largest Newton move of a potential, in units of epsilon
MAX_NEWTON_STEP = 30.0


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weights in the probability simplex, optionally with support points."""

    weights: np.ndarray
    support: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionError("weights must be a vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ContractError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > SIMPLEX_ATOL:
            raise ContractError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.support is not None:
            sup = np.array(self.support, dtype=float)
            if sup.ndim == 1:
                sup = sup[:, None]
            if len(sup) != len(w):
                raise DimensionError("support length differs from weights length")
            sup.setflags(write=False)
            object.__setattr__(self, "support", sup)

    @classmethod
    def normalized(cls, weights, support=None):
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(), support)

    @property
    def size(self):
        return len(self.weights)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative finite transport costs with cached extreme entries."""

    entries: np.ndarray
    c_min: float = field(init=False)
    c_max: float = field(init=False)

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2:
            raise DimensionError("cost matrix must be two-dimensional")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ContractError("costs must be finite and nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "entries", c)
        object.__setattr__(self, "c_min", float(c.min()) if c.size else 0.0)
        object.__setattr__(self, "c_max", float(c.max()) if c.size else 0.0)

    @classmethod
    def from_metric(cls, x, y, metric, p=2.0):
        """Build ``C_ij = metric(x_i, y_j) ** p``."""
        d = np.array([[metric(xi, yj) for yj in y] for xi in x], dtype=float)
        return cls(d**p)

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class Coupling:
    """A transport plan between two measures."""

    plan: np.ndarray

    def __post_init__(self):
        t = np.array(self.plan, dtype=float)
        if t.ndim != 2:
            raise DimensionError("plan must be two-dimensional")
        if np.any(t < 0):
            raise ContractError("plan entries must be nonnegative")
        t.setflags(write=False)
        object.__setattr__(self, "plan", t)

    def marginals(self):
        return self.plan.sum(axis=1), self.plan.sum(axis=0)

    def is_feasible(self, a, b, tol=1e-9):
        rows, cols = self.marginals()
        return (
            np.max(np.abs(rows - np.asarray(a)), initial=0.0) <= tol
            and np.max(np.abs(cols - np.asarray(b)), initial=0.0) <= tol
        )

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.plan, dtype=dtype)


@dataclass(frozen=True)
class GibbsKernel:
    """``K = exp(-C / epsilon)`` kept in log form to survive small epsilon."""

    log_entries: np.ndarray
    epsilon: float
    delta_min: float
    delta_max: float

    @classmethod
    def from_cost(cls, cost, epsilon):
        if epsilon <= 0:
            raise ContractError("epsilon must be positive")
        cost = cost if isinstance(cost, CostMatrix) else CostMatrix(cost)
        log_k = -cost.entries / epsilon
        log_k.setflags(write=False)
        return cls(
            log_entries=log_k,
            epsilon=float(epsilon),
            delta_min=float(np.exp(-cost.c_max / epsilon)),
            delta_max=float(np.exp(-cost.c_min / epsilon)),
        )

    @property
    def entries(self):
        return np.exp(self.log_entries)

    @property
    def log_delta_min(self):
        return float(self.log_entries.min())

    @property
    def log_delta_max(self):
        return float(self.log_entries.max())


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    n_iter: int
    residual: float


def logsumexp(x, axis=None):
    """``log(sum(exp(x)))`` along ``axis``; all ``-inf`` slices give ``-inf``."""
    x = np.asarray(x, dtype=float)
    peak = np.max(x, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - peak), axis=axis, keepdims=True)) + peak
    return out.squeeze(axis=axis) if axis is not None else out.item()


def _vec(x):
    return np.asarray(x.weights if isinstance(x, DiscreteMeasure) else x, dtype=float)


def _mat(x):
    if isinstance(x, (CostMatrix,)):
        return x.entries
    if isinstance(x, Coupling):
        return x.plan
    return np.asarray(x, dtype=float)


def _check_shapes(a, b, cost):
    if cost.shape != (len(a), len(b)):
        raise DimensionError(f"cost shape {cost.shape} does not match marginals ({len(a)}, {len(b)})")


def entropy(plan):
    """Shannon entropy ``-sum T log T`` with ``0 log 0 = 0``."""
    t = _mat(plan)
    if np.any(t < 0):
        raise ContractError("entropy needs a nonnegative plan")
    pos = t[t > 0]
    return float(-np.sum(pos * np.log(pos)))


def transport_cost(plan, cost):
    """Frobenius inner product ``<T, C>``."""
    t, c = _mat(plan), _mat(cost)
    if t.shape != c.shape:
        raise DimensionError(f"plan shape {t.shape} does not match cost shape {c.shape}")
    return float(np.sum(t * c))


def quantize(weights, units=QUANTIZATION):
    """Integer masses summing exactly to ``units``.

    Each weight is rounded to the nearest ``1/units``; the rounding residual is
    assigned to the largest atom.
    """
    w = _vec(weights)
    q = np.rint(w * units).astype(np.int64)
    q[int(np.argmax(w))] += units - int(q.sum())
    return q


def exact_ot(a, b, cost):
    """Unregularized transport value and an optimal vertex coupling.

    Masses are quantized to multiples of ``1 / QUANTIZATION`` and the problem
    is solved exactly as an integer minimum-cost flow, so the returned value is
    exact for the quantized marginals.

    Returns
    -------
    value : float
    plan : Coupling
    """
    a, b, c = _vec(a), _vec(b), _mat(cost)
    _check_shapes(a, b, c)
    qa, qb = quantize(a), quantize(b)
    rows, cols = np.flatnonzero(qa), np.flatnonzero(qb)
    flow, _ = transport_simplex(qa[rows], qb[cols], c[np.ix_(rows, cols)])
    plan = np.zeros(c.shape)
    plan[np.ix_(rows, cols)] = flow / QUANTIZATION
    return transport_cost(plan, c), Coupling(plan)


def laplacian(weights):
    """Graph Laplacian of a symmetric weight matrix, ignoring its diagonal.

    The diagonal is built as a sum of off-diagonal weights instead of as a
    difference, so tiny couplings keep full relative precision.
    """
    w = np.array(weights, dtype=float)
    np.fill_diagonal(w, 0.0)
    return np.diag(w.sum(axis=1)) - w


def _semidual_rows(log_a, g, cost, epsilon):
    # row potentials making the row marginals exact for the given g
    return epsilon * (log_a - logsumexp((g[None, :] - cost) / epsilon, axis=1))


def _newton_step(log_a, a, b, f, g, plan, cost, epsilon):
    """One damped Newton ascent step on the semi-dual ``<a, f(g)> + <b, g>``."""
    grad = b - plan.sum(axis=0)
    hess = laplacian(plan.T @ (plan / a[:, None])) / epsilon
    # the semi-dual is invariant to g + const; pin the last coordinate
    step = np.zeros_like(g)
    try:
        step[:-1] = np.linalg.solve(hess[:-1, :-1], grad[:-1])
    except np.linalg.LinAlgError:
        step[:-1] = np.linalg.lstsq(hess[:-1, :-1], grad[:-1], rcond=None)[0]
    if not np.all(np.isfinite(step)):
        return None
    # trust region: saturated kernels make the semi-dual almost flat
    step *= min(1.0, MAX_NEWTON_STEP * epsilon / max(np.max(np.abs(step)), 1e-300))
    value = a @ f + b @ g
    slope = grad @ step
    worst = np.max(np.abs(grad))
    t = 1.0
    while t > 1e-6:
        g_new = g + t * step
        f_new = _semidual_rows(log_a, g_new, cost, epsilon)
        # near the optimum objective gains drop below float resolution, so a
        # smaller column residual is accepted as progress too
        cols_new = np.exp((f_new[:, None] + g_new[None, :] - cost) / epsilon).sum(axis=0)
        value_new = a @ f_new + b @ g_new
        if value_new >= value + 1e-4 * t * slope:
            return f_new, g_new
        flat = abs(value_new - value) <= 1e-13 * max(1.0, abs(value))
        if flat and np.max(np.abs(b - cols_new)) < (1 - 1e-4 * t) * worst:
            return f_new, g_new
        t *= 0.5
    return None


def _sinkhorn_log(log_a, log_b, cost, epsilon, tol, max_iter, a, b, newton_after, f, g):
    n, m = cost.shape
    residual = np.inf
    next_newton = newton_after
    for it in range(1, max_iter + 1):
        g = epsilon * (log_b - logsumexp((f[:, None] - cost) / epsilon, axis=0))
        f = _semidual_rows(log_a, g, cost, epsilon)
        if it > next_newton and m > 1:
            plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
            step = _newton_step(log_a, a, b, f, g, plan, cost, epsilon)
            if step is None:
                # ill-conditioned Hessian: scaling sweeps only for a while
                next_newton = it + newton_after
            else:
                f, g = step
        shift = f.mean()
        f -= shift
        g += shift
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise NumericalError(f"non-finite dual potentials at iteration {it}")
        plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
        residual = max(
            np.max(np.abs(plan.sum(axis=1) - a)),
            np.max(np.abs(plan.sum(axis=0) - b)),
        )
        if residual <= tol:
            return f, g, plan, it, residual
    raise ConvergenceError("sinkhorn did not converge", residual, max_iter)


def sinkhorn(a, b, cost, epsilon, tol=1e-9, max_iter=10_000, newton_after=NEWTON_AFTER, init=None):
    """Entropic optimal transport between two discrete measures.

    Parameters
    ----------
    a, b : array-like or DiscreteMeasure
        Marginals; zero-mass atoms are dropped before solving and come back as
        zero rows/columns of the plan with ``-inf`` potentials.
    cost : array-like or CostMatrix, shape (n, m)
    epsilon : float
        Regularization strength, > 0.
    tol : float
        Sup-norm tolerance on both marginals.
    max_iter : int
        Budget shared by Sinkhorn sweeps and Newton steps.
    newton_after : int
        Sinkhorn sweeps before switching to damped Newton steps on the
        semi-dual, which converge quadratically where plain scaling stalls
        (nearly sparse plans at small ``epsilon``). Pass ``max_iter`` to
        disable.
    init : tuple of ndarray, optional
        Warm-start potentials ``(f, g)``; entries on zero-mass atoms are ignored.

    Returns
    -------
    SinkhornResult
        ``value`` is the primal objective ``<T, C> - epsilon H(T)`` at the
        returned plan, and ``plan = diag(e^{f/eps}) K diag(e^{g/eps})``.
    """
    a, b, c = _vec(a), _vec(b), _mat(cost)
    _check_shapes(a, b, c)
    if not epsilon > 0:
        raise ContractError("epsilon must be positive")
    if tol <= 0:
        raise ContractError("tol must be positive")
    rows, cols = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    sub = c[np.ix_(rows, cols)]
    if init is None:
        f0, g0 = np.zeros(len(rows)), np.zeros(len(cols))
    else:
        f0 = np.asarray(init[0], dtype=float)[rows]
        g0 = np.asarray(init[1], dtype=float)[cols]
        if not (np.all(np.isfinite(f0)) and np.all(np.isfinite(g0))):
            raise ContractError("warm-start potentials must be finite on the support")
    f_sub, g_sub, plan_sub, n_iter, residual = _sinkhorn_log(
        np.log(a[rows]), np.log(b[cols]), sub, epsilon, tol, max_iter, a[rows], b[cols],
        newton_after, f0, g0,
    )
    f = np.full(len(a), -np.inf)
    g = np.full(len(b), -np.inf)
    f[rows], g[cols] = f_sub, g_sub
    plan = np.zeros(c.shape)
    plan[np.ix_(rows, cols)] = plan_sub
    value = transport_cost(plan, c) - epsilon * entropy(plan)
    return SinkhornResult(value, plan, f, g, n_iter, float(residual))


def entropic_ot_value(a, b, cost, epsilon, **kwargs):
    """``W^eps_C(a, b)``; dispatches to :func:`exact_ot` when ``epsilon == 0``."""
    if epsilon == 0:
        return exact_ot(a, b, cost)[0]
    return sinkhorn(a, b, cost, epsilon, **kwargs).value
