"""Entropic Wasserstein barycenters on a fixed support.

The barycenter ``a`` minimises ``sum_s lambda_s W^eps_{C_s}(a, b_s)``. It is
computed with iterative Bregman projections written in the log domain, on the
dual variables ``(f_s, g_s)`` whose plans are
``T_s = diag(e^{f_s/eps}) K_s diag(e^{g_s/eps})`` and which keep
``sum_s lambda_s f_s = 0`` throughout.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core_ot import (
    MAX_NEWTON_STEP,
    CostMatrix,
    DiscreteMeasure,
    GibbsKernel,
    entropic_ot_value,
    laplacian,
    logsumexp,
    sinkhorn,
)
from .errors import ContractError, ConvergenceError, DimensionError, NumericalError

LAMBDA_ATOL = 1e-12
NEWTON_AFTER = 50


@dataclass(frozen=True)
class BarycenterProblem:
    """Weights ``lambdas``, marginals ``b_s`` and costs ``C_s`` (each ``n x m_s``)."""

    lambdas: np.ndarray
    marginals: tuple
    costs: tuple
    epsilon: float
    n: int = field(init=False)

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float)
        if lam.ndim != 1 or np.any(lam < 0) or abs(lam.sum() - 1) > LAMBDA_ATOL:
            raise ContractError("lambdas must lie in the probability simplex")
        marginals = tuple(
            b if isinstance(b, DiscreteMeasure) else DiscreteMeasure(b) for b in self.marginals
        )
        costs = tuple(c if isinstance(c, CostMatrix) else CostMatrix(c) for c in self.costs)
        if not (len(lam) == len(marginals) == len(costs)) or len(lam) == 0:
            raise DimensionError("lambdas, marginals and costs must have the same length S >= 1")
        n = costs[0].shape[0]
        for s, (b, c) in enumerate(zip(marginals, costs)):
            if c.shape != (n, b.size):
                raise DimensionError(f"cost {s} has shape {c.shape}, expected ({n}, {b.size})")
        if self.epsilon < 0:
            raise ContractError("epsilon must be nonnegative")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "n", n)

    @property
    def S(self):
        return len(self.lambdas)

    @property
    def active(self):
        """Indices ``s`` with ``lambda_s > 0``."""
        return [s for s in range(self.S) if self.lambdas[s] > 0]

    def with_costs(self, costs):
        return BarycenterProblem(self.lambdas, self.marginals, tuple(costs), self.epsilon)

    def with_epsilon(self, epsilon):
        return BarycenterProblem(self.lambdas, self.marginals, self.costs, epsilon)


@dataclass(frozen=True)
class BarycenterSolution:
    a: DiscreteMeasure
    f: tuple
    g: tuple
    nu: np.ndarray
    objective: float
    residuals: dict

    def row_marginals(self, problem):
        """Right-hand sides of ``a = diag(e^{f_s/eps}) K_s diag(e^{g_s/eps}) 1`` for every s."""
        eps = problem.epsilon
        return [
            np.exp(self.f[s] / eps + logsumexp((self.g[s][None, :] - c.entries) / eps, axis=1))
            for s, c in enumerate(problem.costs)
        ]


def barycenter_objective(problem, a, tol=1e-9, max_iter=10_000, potentials=None):
    """``B^eps(Theta, a) = sum_s lambda_s W^eps_{C_s}(a, b_s)``; zero weights are skipped.

    ``potentials`` optionally gives per-s ``(f_s, g_s)`` to warm-start the inner
    Sinkhorn solves.
    """
    a = np.asarray(a.weights if isinstance(a, DiscreteMeasure) else a, dtype=float)
    if len(a) != problem.n:
        raise DimensionError(f"candidate has size {len(a)}, expected {problem.n}")
    total = 0.0
    for s in problem.active:
        b, c = problem.marginals[s], problem.costs[s]
        if problem.epsilon == 0:
            w = entropic_ot_value(a, b, c, 0)
        else:
            init = None if potentials is None else potentials[s]
            w = sinkhorn(a, b, c, problem.epsilon, tol=tol, max_iter=max_iter, init=init).value
        total += problem.lambdas[s] * w
    return float(total)


def _project(f, lambdas, active):
    mean = sum(lambdas[s] * f[s] for s in active)
    return [f[s] - mean if s in active else np.zeros_like(f[s]) for s in range(len(f))]


def _match_columns(f, log_b, costs, lam, active, eps):
    """g-step for every s, then the row marginals and their weighted geometric mean."""
    g, log_r = [], []
    for fs, lb, c in zip(f, log_b, costs):
        gs = eps * (lb - logsumexp((fs[:, None] - c) / eps, axis=0))
        g.append(gs)
        log_r.append(fs / eps + logsumexp((gs[None, :] - c) / eps, axis=1))
    log_a = sum(lam[s] * log_r[s] for s in active)
    a = np.exp(log_a)
    spread = max(np.max(np.abs(np.exp(log_r[s]) - a)) for s in active)
    return g, log_r, log_a, spread


def _semidual(f, log_b, costs, lam, active, eps):
    # sum_s lambda_s <b_s, g_s(f_s)>, the dual objective with g eliminated
    total = 0.0
    for s in active:
        gs = eps * (log_b[s] - logsumexp((f[s][:, None] - costs[s]) / eps, axis=0))
        total += lam[s] * (np.exp(log_b[s]) @ gs)
    return total


def _newton_update(f, g, log_r, log_b, costs, lam, active, eps, spread):
    """Damped Newton ascent on the semi-dual under ``sum_s lambda_s f_s = 0``."""
    n = len(f[0])
    k = len(active)
    kkt = np.zeros(((k + 1) * n, (k + 1) * n))
    rhs = np.zeros((k + 1) * n)
    for block, s in enumerate(active):
        plan = np.exp((f[s][:, None] + g[s][None, :] - costs[s]) / eps)
        r = np.exp(log_r[s])
        hess = -(lam[s] / eps) * laplacian(plan @ (plan.T / np.exp(log_b[s])[:, None]))
        sl = slice(block * n, (block + 1) * n)
        kkt[sl, sl] = hess
        kkt[sl, k * n :] = lam[s] * np.eye(n)
        kkt[k * n :, sl] = lam[s] * np.eye(n)
        rhs[sl] = lam[s] * r
    # the system is singular along f_s + c_s 1 with sum_s lambda_s c_s = 0
    step = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if not np.all(np.isfinite(step)):
        return None
    step[: k * n] *= min(1.0, MAX_NEWTON_STEP * eps / max(np.max(np.abs(step[: k * n])), 1e-300))
    value = _semidual(f, log_b, costs, lam, active, eps)
    slope = -sum(lam[s] * np.exp(log_r[s]) @ step[b * n : (b + 1) * n] for b, s in enumerate(active))
    t = 1.0
    while t > 1e-6:
        trial = list(f)
        for block, s in enumerate(active):
            trial[s] = f[s] + t * step[block * n : (block + 1) * n]
        trial = _project(trial, lam, active)
        value_new = _semidual(trial, log_b, costs, lam, active, eps)
        if value_new >= value + 1e-4 * t * slope:
            return trial
        # objective gains below float resolution: accept a smaller spread instead
        flat = abs(value_new - value) <= 1e-13 * max(1.0, abs(value))
        if flat and _match_columns(trial, log_b, costs, lam, active, eps)[3] < (1 - 1e-4 * t) * spread:
            return trial
        t *= 0.5
    return None


def solve_barycenter(problem, tol=1e-9, max_iter=5000, f_init=None, newton_after=NEWTON_AFTER):
    """Entropic barycenter of ``problem`` by log-domain Bregman projections.

    Each sweep matches every plan's column marginal to ``b_s`` (g-step), takes
    the weighted geometric mean of the row marginals as the new barycenter and
    then rescales rows onto it (f-step). The loop stops once all row marginals
    are within ``tol`` of their geometric mean in sup-norm; column marginals are
    exact at that point. Slow tails are finished with Newton steps. Zero-mass
    atoms of ``b_s`` are removed from the support and terms with
    ``lambda_s = 0`` are ignored, their ``f_s`` reported as zero.

    Parameters
    ----------
    problem : BarycenterProblem
    tol : float
    max_iter : int
    f_init : sequence of ndarray, optional
        Starting row potentials; projected onto ``sum_s lambda_s f_s = 0``.
    newton_after : int
        Projection sweeps before switching to damped Newton steps on the
        dual, which keep converging when the projections stall at small
        ``epsilon``.

    Returns
    -------
    BarycenterSolution
    """
    eps = problem.epsilon
    if not eps > 0:
        raise ContractError("solve_barycenter needs epsilon > 0")
    lam = problem.lambdas
    active = problem.active
    n = problem.n

    supports = [np.flatnonzero(b.weights > 0) for b in problem.marginals]
    log_b = [np.log(problem.marginals[s].weights[supports[s]]) for s in range(problem.S)]
    costs = [problem.costs[s].entries[:, supports[s]] for s in range(problem.S)]

    if f_init is None:
        f = [np.zeros(n) for _ in range(problem.S)]
    else:
        f = [np.array(fs, dtype=float) for fs in f_init]
    f = _project(f, lam, active)

    spread = np.inf
    next_newton = newton_after
    for it in range(1, max_iter + 1):
        g, log_r, log_a, spread = _match_columns(f, log_b, costs, lam, active, eps)
        if not np.isfinite(spread):
            raise NumericalError(f"non-finite barycenter iterate at iteration {it}")
        if spread <= tol:
            break
        for s in active:
            f[s] = f[s] + eps * (log_a - log_r[s])
        if it > next_newton:
            g, log_r, _, spread = _match_columns(f, log_b, costs, lam, active, eps)
            updated = _newton_update(f, g, log_r, log_b, costs, lam, active, eps, spread)
            if updated is None:
                next_newton = it + newton_after
            else:
                f = updated
    else:
        raise ConvergenceError("barycenter iterations did not converge", float(spread), max_iter)

    full_g = []
    for s in range(problem.S):
        gs = np.full(problem.marginals[s].size, -np.inf)
        gs[supports[s]] = g[s]
        full_g.append(gs)
    a = np.exp(log_a)
    rows = [np.exp(log_r[s]) for s in range(problem.S)]
    nu = sum(lam[s] * rows[s] for s in active)
    weights = a / a.sum()
    constraint = np.max(np.abs(sum(lam[s] * f[s] for s in active)))
    solution = BarycenterSolution(
        a=DiscreteMeasure(weights),
        f=tuple(f),
        g=tuple(full_g),
        nu=nu,
        objective=np.nan,
        residuals={
            "n_iter": it,
            "row_spread": float(spread),
            "mass_defect": float(abs(a.sum() - 1)),
            "constraint": float(constraint),
        },
    )
    warm = [(f[s], full_g[s]) for s in range(problem.S)]
    objective = barycenter_objective(problem, weights, tol=tol, potentials=warm)
    return BarycenterSolution(solution.a, solution.f, solution.g, nu, objective, solution.residuals)


@dataclass(frozen=True)
class FirstOrderReport:
    column: float
    nu: float
    constraint: float
    tol: float

    @property
    def max_violation(self):
        return max(self.column, self.nu, self.constraint)

    @property
    def passed(self):
        return self.max_violation <= 10 * self.tol


def verify_first_order(solution, problem, tol=1e-9):
    """Largest violation of each optimality condition of the dual problem.

    Checked for every ``s`` with ``lambda_s > 0``:

    * ``b_sj = sum_i K_sij exp((f_si + g_sj) / eps)``
    * ``nu_i = sum_j K_sij exp((f_si + g_sj) / eps)`` with ``nu`` shared across s
    * ``sum_s lambda_s f_s = 0``
    """
    eps = problem.epsilon
    column = nu_gap = 0.0
    for s in problem.active:
        log_plan = (solution.f[s][:, None] + solution.g[s][None, :] - problem.costs[s].entries) / eps
        plan = np.exp(log_plan)
        column = max(column, float(np.max(np.abs(plan.sum(axis=0) - problem.marginals[s].weights))))
        nu_gap = max(nu_gap, float(np.max(np.abs(plan.sum(axis=1) - solution.nu))))
    constraint = float(np.max(np.abs(sum(problem.lambdas[s] * solution.f[s] for s in problem.active))))
    return FirstOrderReport(column, nu_gap, constraint, tol)


@dataclass(frozen=True)
class PotentialBoundReport:
    """Per-s ``log sum_ij exp((f_si + g_sj)/eps)`` against ``[-log delta_max, -log delta_min]``."""

    log_sums: tuple
    log_lower: tuple
    log_upper: tuple
    rtol: float = 1e-9

    @property
    def inside(self):
        return tuple(
            lo - self.rtol * max(1.0, abs(lo)) <= v <= hi + self.rtol * max(1.0, abs(hi))
            for v, lo, hi in zip(self.log_sums, self.log_lower, self.log_upper)
        )

    @property
    def passed(self):
        return all(self.inside)


def verify_lemma1(solution, problem):
    """Check the dual potential bracket ``1/delta_max <= sum_ij e^{(f_si+g_sj)/eps} <= 1/delta_min``.

    Everything is compared in log space since ``1/delta_min = e^{c_max/eps}``
    overflows for small ``eps``.
    """
    eps = problem.epsilon
    sums, lower, upper = [], [], []
    for s in problem.active:
        kernel = GibbsKernel.from_cost(problem.costs[s], eps)
        sums.append(float(logsumexp(solution.f[s] / eps) + logsumexp(solution.g[s] / eps)))
        lower.append(-kernel.log_delta_max)
        upper.append(-kernel.log_delta_min)
    return PotentialBoundReport(tuple(sums), tuple(lower), tuple(upper))


@dataclass(frozen=True)
class StabilityGap:
    obj_gap: float
    obj_bound: float
    bary_gap_sq: float
    thm1_rhs: float
    thm1_rhs_inv: float
    log_thm1_rhs: float
    cost_err: float


def _cost_gap(problem, perturbed):
    if problem.S != perturbed.S or problem.epsilon != perturbed.epsilon:
        raise ContractError("problems must share S and epsilon")
    if not np.array_equal(problem.lambdas, perturbed.lambdas):
        raise ContractError("problems must share lambdas")
    for b, bt, c, ct in zip(problem.marginals, perturbed.marginals, problem.costs, perturbed.costs):
        if not np.array_equal(b.weights, bt.weights):
            raise ContractError("problems must share marginals")
        if c.shape != ct.shape:
            raise DimensionError("cost shapes differ")
    return [float(np.max(np.abs(c.entries - ct.entries))) for c, ct in zip(problem.costs, perturbed.costs)]


def stability_bounds(problem, perturbed):
    """Cost-side quantities of the stability bounds.

    Returns ``(sum_s lambda_s ||C_s - C~_s||_inf, c_min, c_max)`` with the
    extremes taken over both cost families.
    """
    gaps = _cost_gap(problem, perturbed)
    weighted = float(sum(problem.lambdas[s] * gaps[s] for s in problem.active))
    entries = [c.entries for c in problem.costs + perturbed.costs]
    c_min = min(float(e.min()) for e in entries)
    c_max = max(float(e.max()) for e in entries)
    return weighted, c_min, c_max


def theorem_rhs(problem, perturbed):
    """Right-hand sides of the barycenter stability bound.

    Returns ``(rhs, rhs_inv, log_rhs)`` with
    ``rhs = eps * exp(3 (c_max - c_min) / eps) * sum_s lambda_s ||C_s - C~_s||_inf``
    and no hidden constant, ``rhs_inv`` the same with ``1/eps`` in front and
    ``log_rhs`` the natural log of ``rhs``. The first two can overflow to
    ``inf``; all three are ``nan`` when ``eps = 0``.
    """
    weighted, c_min, c_max = stability_bounds(problem, perturbed)
    eps = problem.epsilon
    if eps == 0:
        return float("nan"), float("nan"), float("nan")
    exponent = 3 * (c_max - c_min) / eps
    log_rhs = np.log(eps) + exponent + np.log(weighted) if weighted > 0 else -np.inf
    with np.errstate(over="ignore"):
        growth = np.exp(exponent)
        rhs = eps * growth * weighted
        rhs_inv = growth * weighted / eps
    return float(rhs), float(rhs_inv), float(log_rhs)


def stability_gap(problem, perturbed, tol=1e-9, max_iter=5000, solutions=None):
    """Objective and barycenter gaps between two problems differing only in costs.

    ``obj_bound`` is ``sum_s lambda_s ||C_s - C~_s||_inf``; the three
    ``thm1_*`` fields come from :func:`theorem_rhs`.

    ``solutions`` may pass precomputed ``(solution, perturbed_solution)``.
    """
    weighted = stability_bounds(problem, perturbed)[0]
    if solutions is None:
        sol = solve_barycenter(problem, tol=tol, max_iter=max_iter)
        sol_t = solve_barycenter(perturbed, tol=tol, max_iter=max_iter)
    else:
        sol, sol_t = solutions
    rhs, rhs_inv, log_rhs = theorem_rhs(problem, perturbed)
    return StabilityGap(
        obj_gap=float(abs(sol.objective - sol_t.objective)),
        obj_bound=weighted,
        bary_gap_sq=float(np.sum((sol.a.weights - sol_t.a.weights) ** 2)),
        thm1_rhs=rhs,
        thm1_rhs_inv=rhs_inv,
        log_thm1_rhs=log_rhs,
        cost_err=max(_cost_gap(problem, perturbed)),
    )


def grid_barycenter(problem, step=0.05):
    """Minimise ``B^eps(Theta, a)`` over the grid of the simplex with spacing ``step``.

    Works for ``epsilon = 0`` (exact transport); meant as a brute-force
    reference for very small ``n``.

    Returns
    -------
    value : float
    argmin : ndarray
    """
    k = int(round(1 / step))
    n = problem.n
    best = (np.inf, None)
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        edges = (-1,) + bars + (k + n - 1,)
        a = np.array([edges[t + 1] - edges[t] - 1 for t in range(n)], dtype=float) / k
        value = barycenter_objective(problem, a)
        if value < best[0]:
            best = (value, a)
    return best
