"""Random problem generators shared by the test modules."""

import numpy as np

from geobary.barycenter import BarycenterProblem


def random_problem(rng, S=2, n=10, m=10, eps=0.1, scale=1.0):
    lambdas = rng.dirichlet(np.ones(S))
    marginals = [rng.dirichlet(np.ones(m)) for _ in range(S)]
    costs = [scale * rng.random((n, m)) for _ in range(S)]
    return BarycenterProblem(lambdas, marginals, costs, eps)


def perturb(problem, rng, amplitude):
    """Copy of ``problem`` with uniform noise in ``[0, amplitude]`` added to the costs."""
    return problem.with_costs(c.entries + amplitude * rng.random(c.shape) for c in problem.costs)
