"""Primal network simplex specialised to the bipartite transportation network.

Supplies and demands are Python/NumPy integers so flows stay exact; costs are
floats. The basis is a spanning tree on ``n + m`` nodes (rows then columns)
stored as a set of basic cells.
"""

from collections import deque

import numpy as np

# consecutive degenerate pivots before switching to Bland's rule
_DEGENERATE_SWITCH = 50


def _northwest_corner(supply, demand):
    n, m = len(supply), len(demand)
    s = [int(x) for x in supply]
    d = [int(x) for x in demand]
    flow = {}
    i = j = 0
    while True:
        x = min(s[i], d[j])
        flow[(i, j)] = x
        s[i] -= x
        d[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if (s[i] == 0 and i < n - 1) or j == m - 1:
            i += 1
        else:
            j += 1
    return flow


def _potentials(cost, flow, n, m):
    adj = [[] for _ in range(n + m)]
    for i, j in flow:
        adj[i].append(n + j)
        adj[n + j].append(i)
    pot = np.zeros(n + m)
    seen = np.zeros(n + m, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if seen[nb]:
                continue
            seen[nb] = True
            # u_i + v_j = C_ij on basic cells
            if node < n:
                pot[nb] = cost[node, nb - n] - pot[node]
            else:
                pot[nb] = cost[nb, node - n] - pot[node]
            queue.append(nb)
    return pot[:n], pot[n:], adj


def _tree_path(adj, src, dst):
    parent = {src: None}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def transport_simplex(supply, demand, cost, max_iter=100_000):
    """Solve ``min <T, C>`` over integer couplings of ``supply`` and ``demand``.

    Parameters
    ----------
    supply, demand : sequence of int
        Positive integer masses with equal totals.
    cost : ndarray, shape (n, m)
    max_iter : int
        Pivot budget.

    Returns
    -------
    flow : ndarray of int64, shape (n, m)
        An optimal basic (vertex) solution.
    n_pivots : int
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if sum(int(x) for x in supply) != sum(int(x) for x in demand):
        raise ValueError("supply and demand totals differ")
    flow = _northwest_corner(supply, demand)
    scale = max(1.0, float(np.abs(cost).max(initial=0.0)))
    threshold = -1e-11 * scale
    degenerate_run = 0

    for pivot in range(max_iter):
        u, v, adj = _potentials(cost, flow, n, m)
        reduced = cost - u[:, None] - v[None, :]
        if degenerate_run < _DEGENERATE_SWITCH:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= threshold:
                break
        else:
            candidates = np.flatnonzero(reduced < threshold)
            if candidates.size == 0:
                break
            flat = int(candidates[0])
        ei, ej = divmod(flat, m)

        # cycle: entering cell then the tree path from row ei to column ej
        path = _tree_path(adj, ei, n + ej)
        cells = []
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cells.append((p, q - n) if p < n else (q, p - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)

        degenerate_run = degenerate_run + 1 if theta == 0 else 0
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(ei, ej)] = theta
        del flow[leaving]
    else:
        raise RuntimeError(f"transportation simplex did not terminate in {max_iter} pivots")

    out = np.zeros((n, m), dtype=np.int64)
    for (i, j), x in flow.items():
        out[i, j] = x
    return out, pivot
