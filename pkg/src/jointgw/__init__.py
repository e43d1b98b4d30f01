"""Coupling-based matching between collections of metric measure spaces.

The package builds clustered spaces from point clouds, solves the entropic
joint matching objective through damped Sinkhorn projections, and turns the
resulting transport plans into correspondences, rigid alignments and
evaluation metrics.
"""

from .align import RigidTransform, align_clusters, rmsd, rotational_error, weighted_procrustes
from .estimator import JointGWMatcher
from .kernel import LambdaMatrix, compute_lambda, compute_lambda_naive, entropy, objective
from .metrics import (
    ClusterMassMatrix,
    GeodesicErrorCDF,
    build_knn_graph,
    cluster_mass_matrix,
    correct_mass_fraction,
    geodesic_error_cdf,
    noise_mass_fraction,
    row_variance_profile,
)
from .solver import (
    SinkhornInfo,
    SolveReport,
    SolverConfig,
    objective_at,
    sinkhorn_projection,
    solve,
    solve_gw,
)
from .spaces import (
    Cluster,
    ClusteredSpace,
    Coupling,
    Embedding,
    as_clustered_space,
    build_clustered_space,
    embed,
    space_from_distance_matrices,
    validate,
)
from .synth import (
    SpiralSpec,
    gen_dummy_cluster_wrap,
    gen_rigid_fragments,
    gen_shape_trio,
    gen_spiral_pair,
    gen_split_shape,
    sample_empirical,
)

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ClusteredSpace",
    "ClusterMassMatrix",
    "Coupling",
    "Embedding",
    "GeodesicErrorCDF",
    "JointGWMatcher",
    "LambdaMatrix",
    "RigidTransform",
    "SinkhornInfo",
    "SolveReport",
    "SolverConfig",
    "SpiralSpec",
    "align_clusters",
    "as_clustered_space",
    "build_clustered_space",
    "build_knn_graph",
    "cluster_mass_matrix",
    "compute_lambda",
    "compute_lambda_naive",
    "correct_mass_fraction",
    "embed",
    "entropy",
    "gen_dummy_cluster_wrap",
    "gen_rigid_fragments",
    "gen_shape_trio",
    "gen_spiral_pair",
    "gen_split_shape",
    "geodesic_error_cdf",
    "noise_mass_fraction",
    "objective",
    "objective_at",
    "rmsd",
    "rotational_error",
    "row_variance_profile",
    "sample_empirical",
    "sinkhorn_projection",
    "solve",
    "solve_gw",
    "space_from_distance_matrices",
    "validate",
    "weighted_procrustes",
]
