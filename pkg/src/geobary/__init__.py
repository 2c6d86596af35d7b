"""Entropic Wasserstein barycenters with graph-estimated geodesic costs."""

from .barycenter import (
    BarycenterProblem,
    BarycenterSolution,
    barycenter_objective,
    solve_barycenter,
    stability_gap,
    verify_first_order,
    verify_lemma1,
)
from .core_ot import CostMatrix, Coupling, DiscreteMeasure, GibbsKernel, entropy, exact_ot, sinkhorn, transport_cost
from .geometry import GeometricGraph, ManifoldSpec, build_graph, estimated_cost, hop_distances, radius_schedule

__version__ = "0.1.0"
