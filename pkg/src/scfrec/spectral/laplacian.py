"""Normalized hypergraph Laplacians of the user and item hypergraphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from scfrec.dataset import InteractionMatrix

SIDES = ("user", "item")


@dataclass(frozen=True)
class HypergraphLaplacian:
    """``L = D^-1/2 (D - H W Delta^-1 H^T) D^-1/2`` with its building blocks.

    Attributes:
        incidence: vertices x hyperedges binary matrix ``H``.
        vertex_degrees: weighted vertex degrees, ``D = diag(H W 1)``.
        hyperedge_weights: ``diag(W)``.
        hyperedge_degrees: vertices per hyperedge, ``diag(Delta)``.
        laplacian: symmetric CSR matrix.
        side: ``"user"`` (vertices are users, hyperedges items) or ``"item"``.
    """

    incidence: sp.csr_matrix
    vertex_degrees: np.ndarray
    hyperedge_weights: np.ndarray
    hyperedge_degrees: np.ndarray
    laplacian: sp.csr_matrix
    side: str

    @property
    def n_vertices(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_hyperedges(self) -> int:
        return self.incidence.shape[1]

    @property
    def shape(self):
        return self.laplacian.shape

    def adjacency(self) -> sp.csr_matrix:
        """Normalized adjacency ``A`` with ``L = I_active - A``."""
        active = (self.vertex_degrees > 0).astype(np.float64)
        A = sp.diags(active) - self.laplacian
        return sp.csr_matrix(A)

    def __matmul__(self, other):
        return self.laplacian @ other


def _inv_sqrt(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.float64)
    pos = x > 0
    out[pos] = 1.0 / np.sqrt(x[pos])
    return out


def laplacian_from_incidence(H, weights=None, side: str = "user") -> HypergraphLaplacian:
    """Build the Laplacian of an arbitrary incidence matrix (vertices x hyperedges).

    Zero-degree vertices get all-zero rows/columns and empty hyperedges are
    ignored, so the result stays symmetric PSD without NaNs.
    """
    H = sp.csr_matrix(H, dtype=np.float64)
    H.data[:] = 1.0
    H.sum_duplicates()
    n_vertices, n_edges = H.shape
    if weights is None:
        w = np.ones(n_edges)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != (n_edges,):
            raise ValueError(f"expected {n_edges} hyperedge weights, got {w.size}")
        if not np.all(w > 0):
            raise ValueError("hyperedge weights must be positive")

    edge_deg = np.asarray(H.sum(axis=0)).ravel()
    vert_deg = np.asarray(H @ w).ravel()
    inv_edge = np.zeros(n_edges)
    nz = edge_deg > 0
    inv_edge[nz] = w[nz] / edge_deg[nz]

    # A = B B^T with B = D^-1/2 H (W Delta^-1)^1/2
    B = sp.diags(_inv_sqrt(vert_deg)) @ H @ sp.diags(np.sqrt(inv_edge))
    A = sp.csr_matrix(B @ B.T)
    A = sp.csr_matrix(0.5 * (A + A.T))
    active = (vert_deg > 0).astype(np.float64)
    L = sp.csr_matrix(sp.diags(active) - A)
    L.sum_duplicates()
    L.sort_indices()
    return HypergraphLaplacian(
        incidence=H,
        vertex_degrees=vert_deg,
        hyperedge_weights=w,
        hyperedge_degrees=edge_deg,
        laplacian=L,
        side=side,
    )


def build_laplacian(R: InteractionMatrix, side: str, weights=None) -> HypergraphLaplacian:
    """Laplacian of the user hypergraph (``H = R``) or item hypergraph (``H = R^T``)."""
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    if len(R) == 0:
        raise ValueError("interaction matrix is empty")
    H = R.to_csr()
    if side == "item":
        H = H.T.tocsr()
    return laplacian_from_incidence(H, weights=weights, side=side)
