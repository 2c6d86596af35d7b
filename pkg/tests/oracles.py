"""Brute-force reference computations used only by the test-suite."""

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _spanning_trees(n, m):
    """Every spanning tree of the complete bipartite graph on n rows and m columns.

    Vertices are rows ``0..n-1`` then columns ``n..n+m-1``; a tree is stored as
    the parent of each vertex when rooted at row 0. Candidates are all maps
    sending each column to a row and each other row to a column; the acyclic
    ones are exactly the spanning trees.

    Returns
    -------
    steps : list of (ndarray, ndarray)
        Flat indices ``(t * (n + m) + v, t * (n + m) + parent(v))`` into a
        ``(T, n + m)`` array, one pair per non-root vertex, deepest first.
    cells : ndarray, shape (T, n + m - 1)
        Flat cost index ``i * m + j`` of the edge above vertex ``v = 1, 2, ...``.
    """
    size = n + m
    radix = np.array([m] * (n - 1) + [n] * m)
    offset = np.array([n] * (n - 1) + [0] * m)
    code = np.arange(int(np.prod(radix)))
    parent = np.zeros((len(code), size), dtype=np.int8)
    for k in range(size - 1):
        code, digit = np.divmod(code, radix[k])
        parent[:, k + 1] = digit + offset[k]
    cur = np.broadcast_to(np.arange(size, dtype=np.int8), parent.shape).copy()
    depth = np.zeros(parent.shape, dtype=np.int8)
    for _ in range(size - 1):
        depth += cur != 0
        cur = np.take_along_axis(parent, cur, axis=1)
    tree = np.all(cur == 0, axis=1)
    parent, depth = parent[tree].astype(np.int64), depth[tree]
    order = np.argsort(-depth[:, 1:], axis=1, kind="stable") + 1
    base = np.arange(len(parent)) * size
    steps = []
    for k in range(size - 1):
        v = order[:, k]
        steps.append((base + v, base + np.take_along_axis(parent, v[:, None], axis=1)[:, 0]))
    v = np.arange(1, size)
    p = parent[:, 1:]
    cells = np.where(v < n, v * m + p - n, p * m + v - n)
    return steps, cells


def transportation_vertex_min(supply, demand, cost):
    """Minimum of ``<T, C>`` over all basic feasible transportation plans.

    Every basis of the transportation polytope is a spanning tree of the
    complete bipartite row/column graph. For each tree the flow on the edge
    above vertex ``v`` is the net supply of the subtree of ``v``; the basis is
    feasible when all those flows are nonnegative. Integer masses keep the
    feasibility test exact.

    Returns
    -------
    value : float
    plan : ndarray of int64
        A minimising vertex.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    steps, cells = _spanning_trees(n, m)
    net = np.concatenate([np.asarray(supply, dtype=np.int64), -np.asarray(demand, dtype=np.int64)])
    sub = np.tile(net, len(cells))
    for v, pv in steps:
        sub[pv] += sub[v]
    # rows send their subtree surplus up to the parent column; columns receive
    # from the parent row what their subtree is short of
    sign = np.where(np.arange(1, n + m) < n, 1, -1)
    flow = sub.reshape(len(cells), n + m)[:, 1:] * sign
    values = np.sum(cost.ravel()[cells] * flow, axis=1)
    values[np.any(flow < 0, axis=1)] = np.inf
    t = int(np.argmin(values))
    plan = np.zeros(n * m, dtype=np.int64)
    np.add.at(plan, cells[t], flow[t])
    return float(values[t]), plan.reshape(n, m)


def simplex_grid(n, step):
    """All points of the probability simplex whose coordinates are multiples of ``step``."""
    k = int(round(1 / step))
    pts = []
    for combo in itertools.combinations(range(k + n - 1), n - 1):
        bars = (-1,) + combo + (k + n - 1,)
        pts.append([bars[t + 1] - bars[t] - 1 for t in range(n)])
    return np.array(pts, dtype=float) / k


def floyd_warshall_hops(n_vertices, edges):
    d = np.full((n_vertices, n_vertices), np.inf)
    np.fill_diagonal(d, 0)
    for u, t in edges:
        d[u, t] = d[t, u] = 1
    for k in range(n_vertices):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def brute_force_edges(points, h):
    pts = np.asarray(points, dtype=float)
    out = []
    for u in range(len(pts)):
        for t in range(u + 1, len(pts)):
            if np.sqrt(np.sum((pts[u] - pts[t]) ** 2)) <= h:
                out.append((u, t))
    return out
