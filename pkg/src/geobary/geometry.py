"""Sampled manifolds, random geometric graphs and hop-count cost estimates.

Geodesic costs between fixed points are estimated from a random geometric
graph: vertices are the fixed points plus ``N`` random samples of the
manifold, two vertices are joined when their ambient Euclidean distance is at
most ``h``, and ``h * SP(u, t)`` (``SP`` = minimal number of edges) stands in
for the geodesic distance ``d(u, t)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import cKDTree

from .core_ot import CostMatrix
from .errors import ContractError, DimensionError, GraphDisconnectedError

UNREACHABLE = -1
ON_MANIFOLD_ATOL = 1e-9
GOLDEN_ANGLE = np.pi * (3 - np.sqrt(5))

_RADIUS_CONSTANTS = {"sphere": 2.0, "hemisphere": 2.0, "square": 1.5}


@dataclass(frozen=True)
class ManifoldSpec:
    """One of the supported sampling domains.

    ``sphere`` is the unit sphere ``S^{d-1}`` in ``R^d``, ``hemisphere`` its
    closed upper half (last coordinate >= 0) and ``square`` the unit square
    ``[0, 1]^2``. The last two have a boundary.
    """

    kind: str
    ambient_dim: int = 3

    def __post_init__(self):
        if self.kind not in _RADIUS_CONSTANTS:
            raise ContractError(f"unknown manifold kind {self.kind!r}")
        if self.kind == "square" and self.ambient_dim != 2:
            raise ContractError("the square lives in ambient dimension 2")
        if self.ambient_dim < 2:
            raise ContractError("ambient dimension must be at least 2")

    @classmethod
    def sphere(cls, d=3):
        return cls("sphere", d)

    @classmethod
    def hemisphere(cls, d=3):
        return cls("hemisphere", d)

    @classmethod
    def square(cls):
        return cls("square", 2)

    @property
    def intrinsic_dim(self):
        return 2 if self.kind == "square" else self.ambient_dim - 1

    @property
    def diameter(self):
        return np.sqrt(2.0) if self.kind == "square" else np.pi

    @property
    def has_boundary(self):
        return self.kind != "sphere"

    @property
    def radius_constant(self):
        return _RADIUS_CONSTANTS[self.kind]

    def radius(self, N, c=None):
        """Scheduled graph radius for ``N`` random points."""
        return radius_schedule(N, self.intrinsic_dim, self.radius_constant if c is None else c)

    def describe(self):
        return {
            "kind": self.kind,
            "ambient_dim": self.ambient_dim,
            "intrinsic_dim": self.intrinsic_dim,
            "diameter": float(self.diameter),
            "boundary": self.has_boundary,
        }


def derived_rng(master_seed, *keys):
    """Independent generator for the work unit identified by ``keys``."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def sample_manifold(spec, N, seed):
    """``N`` i.i.d. uniform points on ``spec``.

    Spheres use normalised standard Gaussian vectors (the hemisphere reflects
    the last coordinate); the square uses independent uniform coordinates.
    ``seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    if N < 0:
        raise ContractError("N must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if spec.kind == "square":
        return rng.random((N, 2))
    x = rng.standard_normal((N, spec.ambient_dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    if spec.kind == "hemisphere":
        x[:, -1] = np.abs(x[:, -1])
    return x


def fibonacci_sphere(n, hemisphere=False, offset=0.0):
    """Quasi-uniform points on the unit 2-sphere (or its upper half).

    Point ``i`` sits at height ``1 - 2 (i + 1/2) / n`` (``1 - (i + 1/2) / n``
    for the hemisphere) and longitude ``i`` golden angles plus ``offset``.
    """
    i = np.arange(n) + 0.5
    z = 1 - i / n if hemisphere else 1 - 2 * i / n
    rho = np.sqrt(np.clip(1 - z**2, 0, None))
    phi = GOLDEN_ANGLE * np.arange(n) + offset
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def square_lattice(n, offset=0.0):
    """Regular grid when ``n`` is a perfect square, golden-ratio lattice otherwise."""
    k = int(round(np.sqrt(n)))
    if k * k == n and offset == 0.0:
        t = (np.arange(k) + 0.5) / k
        xx, yy = np.meshgrid(t, t, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])
    i = np.arange(n)
    return np.column_stack([(i + 0.5) / n, np.mod(i * (np.sqrt(5) - 1) / 2 + offset, 1.0)])


def fixed_points(spec, n, offset=0.0, seed=0):
    """Deterministic quasi-uniform placement of ``n`` points on ``spec``.

    Spheres of ambient dimension other than 3 have no lattice here and fall
    back to a sample drawn from ``seed``.
    """
    if spec.kind == "square":
        return square_lattice(n, offset)
    if spec.ambient_dim == 3:
        return fibonacci_sphere(n, hemisphere=spec.kind == "hemisphere", offset=offset)
    return sample_manifold(spec, n, seed)


def _check_on_manifold(spec, x):
    if spec.kind == "square":
        bad = np.any((x < -ON_MANIFOLD_ATOL) | (x > 1 + ON_MANIFOLD_ATOL), axis=-1)
    else:
        bad = np.abs(np.linalg.norm(x, axis=-1) - 1) > ON_MANIFOLD_ATOL
        if spec.kind == "hemisphere":
            bad |= x[..., -1] < -ON_MANIFOLD_ATOL
    if np.any(bad):
        raise ContractError(f"point off the {spec.kind} by more than {ON_MANIFOLD_ATOL}")


def geodesic_matrix(spec, u, t):
    """Pairwise geodesic distances between the rows of ``u`` and ``t``."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if u.shape[1] != spec.ambient_dim or t.shape[1] != spec.ambient_dim:
        raise DimensionError(f"points must have {spec.ambient_dim} coordinates")
    _check_on_manifold(spec, u)
    _check_on_manifold(spec, t)
    if spec.kind == "square":
        return np.sqrt(np.sum((u[:, None, :] - t[None, :, :]) ** 2, axis=-1))
    # equals arccos(clip(<u, t>, -1, 1)) but keeps full precision near 0 and pi;
    # the minor arc between two points of a closed hemisphere stays inside it
    diff = np.linalg.norm(u[:, None, :] - t[None, :, :], axis=-1)
    summ = np.linalg.norm(u[:, None, :] + t[None, :, :], axis=-1)
    return 2 * np.arctan2(diff, summ)


def geodesic_distance(spec, u, t):
    """Geodesic distance between two points of ``spec``."""
    return float(geodesic_matrix(spec, u, t)[0, 0])


@dataclass(frozen=True)
class GeometricGraph:
    """Radius graph over fixed vertices (first) followed by random vertices.

    ``edges`` holds each undirected edge once as ``(u, t)`` with ``u < t``,
    sorted lexicographically.
    """

    points: np.ndarray
    n_fixed: int
    radius: float
    edges: np.ndarray
    roles: tuple = field(default=())

    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def fixed(self):
        return self.points[: self.n_fixed]

    @property
    def random(self):
        return self.points[self.n_fixed :]

    def adjacency(self):
        n = self.n_vertices
        u, t = self.edges.T if len(self.edges) else (np.zeros(0, int), np.zeros(0, int))
        ones = np.ones(2 * len(u), dtype=np.int8)
        return coo_matrix((ones, (np.r_[u, t], np.r_[t, u])), shape=(n, n)).tocsr()

    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)


def build_graph(fixed, random, h, roles=None):
    """Join every pair of vertices at ambient distance at most ``h``.

    A k-d tree proposes candidate pairs at a slightly inflated radius and the
    exact predicate ``sqrt(sum((u - t)**2)) <= h`` decides, so the edge set
    does not depend on the search structure.

    Parameters
    ----------
    fixed : array_like, shape (n_fixed, d)
    random : array_like, shape (N, d)
    h : float
    roles : sequence of str, optional
        Tag per fixed vertex, e.g. ``"x"`` or ``"y0"``.
    """
    if not h > 0:
        raise ContractError("radius must be positive")
    fixed = np.asarray(fixed, dtype=float)
    random = np.asarray(random, dtype=float)
    if fixed.ndim != 2:
        raise DimensionError("fixed points must be a 2-d array")
    random = random.reshape(-1, fixed.shape[1])
    points = np.vstack([fixed, random])
    if roles is not None and len(roles) != len(fixed):
        raise DimensionError("one role per fixed vertex")
    if len(points) > 1:
        pairs = cKDTree(points).query_pairs(h * (1 + 1e-9) + 1e-15, output_type="ndarray")
    else:
        pairs = np.zeros((0, 2), dtype=np.intp)
    if len(pairs):
        pairs = np.sort(pairs, axis=1)
        d = np.sqrt(np.sum((points[pairs[:, 0]] - points[pairs[:, 1]]) ** 2, axis=1))
        pairs = pairs[d <= h]
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    points.setflags(write=False)
    edges = pairs.astype(np.int64).reshape(-1, 2)
    edges.setflags(write=False)
    return GeometricGraph(points, len(fixed), float(h), edges, tuple(roles or ()))


def hop_distances(graph, sources, targets):
    """Minimal edge counts from each source to each target.

    Returns an int64 matrix of shape ``(len(sources), len(targets))`` with
    ``UNREACHABLE`` marking disconnected pairs.
    """
    sources = np.asarray(sources, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.intp)
    if len(sources) == 0:
        return np.zeros((0, len(targets)), dtype=np.int64)
    dist = shortest_path(graph.adjacency(), method="D", directed=False, unweighted=True, indices=sources)
    dist = dist[:, targets]
    out = np.full(dist.shape, UNREACHABLE, dtype=np.int64)
    finite = np.isfinite(dist)
    out[finite] = dist[finite].astype(np.int64)
    return out


def estimated_cost(hops, h, p=2.0, index=None):
    """Cost matrix ``(h * SP)^p`` from a hop matrix.

    Raises
    ------
    GraphDisconnectedError
        If any entry is unreachable; ``pairs`` lists ``(index, i, j)``.
    """
    if p < 1:
        raise ContractError("p must be at least 1")
    if not h > 0:
        raise ContractError("radius must be positive")
    hops = np.asarray(hops)
    bad = np.argwhere(hops == UNREACHABLE)
    if len(bad):
        raise GraphDisconnectedError([(index, int(i), int(j)) for i, j in bad])
    return CostMatrix((h * hops) ** p)


def radius_schedule(N, k, c=1.0):
    """``h_N = c (log N / N)^{1/(k+1)}``."""
    if N < 2 or k < 1 or not c > 0:
        raise ContractError("need N >= 2, k >= 1 and c > 0")
    return float(c * (np.log(N) / N) ** (1.0 / (k + 1)))


def write_edge_list(graph, path):
    with open(path, "w") as fh:
        fh.write(f"#vertices {graph.n_vertices} radius {graph.radius!r}\n")
        for u, t in graph.edges:
            fh.write(f"{u} {t}\n")


def read_edge_list(path):
    """Inverse of :func:`write_edge_list`: ``(n_vertices, radius, edges)``."""
    with open(path) as fh:
        _, count, _, radius = fh.readline().split()
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2).reshape(-1, 2)
    return int(count), float(radius), edges


def write_coordinates(points, path):
    np.savetxt(path, np.asarray(points, dtype=float), fmt="%.17g")


def graph_costs(x, ys, random, h, p=2.0):
    """Estimated cost matrices between ``x`` and every ``y_s`` through one graph.

    Returns
    -------
    graph : GeometricGraph
        Fixed vertices are the distinct points of ``x`` followed by those of
        each ``y_s``, in order of first appearance.
    costs : list of CostMatrix
        ``C~_s = (h SP(x_i, y_sj))^p``.

    Raises
    ------
    GraphDisconnectedError
        Listing every unreachable ``(s, i, j)``.
    """
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(y, dtype=float) for y in ys]
    # coincident fixed points (e.g. a support shared by x and y_s) become one
    # vertex, so that their hop distance is 0 rather than 1
    stacked = np.vstack([x, *ys])
    _, first, inverse = np.unique(stacked, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vertex = rank[inverse.ravel()]
    tags = ["x"] * len(x) + [f"y{s}" for s, y in enumerate(ys) for _ in range(len(y))]
    roles = [tags[i] for i in first[order]]
    graph = build_graph(stacked[first[order]], random, h, roles)
    hops = hop_distances(graph, vertex[: len(x)], vertex[len(x) :])
    starts = np.cumsum([0] + [len(y) for y in ys])
    costs, bad = [], []
    for s in range(len(ys)):
        block = hops[:, starts[s] : starts[s + 1]]
        try:
            costs.append(estimated_cost(block, h, p, index=s))
        except GraphDisconnectedError as err:
            bad.extend(err.pairs)
    if bad:
        raise GraphDisconnectedError(bad)
    return graph, costs
