"""Hypergraph Laplacians, their smallest eigenpairs and spectral clustering."""

from scfrec.spectral.clustering import (
    ClusterAssignment,
    cluster_vertices,
    default_n_clusters,
    kmeans,
    normalize_rows,
    read_clusters,
    write_clusters,
)
from scfrec.spectral.eigensolver import (
    EigenConvergenceError,
    SpectralFeatures,
    dense_eigenpairs,
    fix_signs,
    read_features,
    smallest_eigenpairs,
    spectral_features,
    write_features,
)
from scfrec.spectral.laplacian import (
    HypergraphLaplacian,
    build_laplacian,
    laplacian_from_incidence,
)

__all__ = [
    "ClusterAssignment",
    "EigenConvergenceError",
    "HypergraphLaplacian",
    "SpectralFeatures",
    "build_laplacian",
    "cluster_vertices",
    "default_n_clusters",
    "dense_eigenpairs",
    "fix_signs",
    "kmeans",
    "laplacian_from_incidence",
    "normalize_rows",
    "read_clusters",
    "read_features",
    "smallest_eigenpairs",
    "spectral_features",
    "write_clusters",
    "write_features",
]
