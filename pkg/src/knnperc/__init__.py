"""Percolation and metric distortion of planar k-nearest-neighbour graphs."""

from .errors import (
    CouplingFailure,
    GeometryError,
    InvalidParameterError,
    NotFoundError,
    PreconditionError,
)
from .pointproc import PointSet, Window, from_points, make_rng, sample_binomial, sample_poisson
from .nngraph import NNGraph, brute_force_knn_graph, build_knn_graph
from .graphmetrics import components, distortion_stats, observation_set, sssp, sweep_k_fit
from .criticalbound import mc_prob_At, min_k, optimize_a, prob_At
from .tilecoupling import TileParams, evaluate_tiles, mimic_path, verify_coupling

__version__ = "0.1.0"
