"""Smallest eigenpairs of sparse symmetric matrices by restarted block Lanczos.

The Krylov basis is fully reorthogonalized (two Gram-Schmidt passes) and the
eigenpairs are extracted by Rayleigh-Ritz on the projected matrix. Using a
block of starting vectors wider than ``K`` makes eigenvalues of multiplicity
up to the block width come out as a full invariant subspace, which a
single-vector Lanczos run cannot guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class EigenConvergenceError(RuntimeError):
    def __init__(self, residual: float, tol: float, restarts: int):
        self.residual = residual
        super().__init__(
            f"eigensolver did not converge after {restarts} restarts: "
            f"max residual {residual:.3e} > tol {tol:.1e}"
        )


@dataclass(frozen=True)
class SpectralFeatures:
    """First ``K`` eigenvectors (as columns) and ascending eigenvalues."""

    features: np.ndarray
    eigenvalues: np.ndarray
    side: str

    @property
    def K(self) -> int:
        return self.features.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.features.shape[0]


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude is positive.

    Magnitudes within a relative 1e-10 of the maximum count as ties, and the
    lowest such index decides, so roundoff cannot flip symmetric vectors.
    """
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    mag = np.abs(vectors)
    top = mag.max(axis=0)
    idx = np.argmax(mag >= top * (1.0 - 1e-10), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _orthonormalize(X, basis, rng, drop_tol=1e-10):
    """Orthonormalize the columns of ``X`` against ``basis`` and each other.

    Columns that are (numerically) in the span already are replaced by fresh
    random directions, so the returned block always has ``X.shape[1]``
    columns unless the space is exhausted.
    """
    n, p = X.shape
    total = sum(b.shape[1] for b in basis)
    p = min(p, n - total)
    if p <= 0:
        return np.zeros((n, 0))
    X = X[:, :p].copy()
    scale = max(np.linalg.norm(X, axis=0).max(initial=0.0), 1.0)
    out = np.zeros((n, 0))
    for _attempt in range(5):
        for _ in range(2):
            for b in basis:
                X -= b @ (b.T @ X)
            if out.shape[1]:
                X -= out @ (out.T @ X)
        Uq, s, _ = np.linalg.svd(X, full_matrices=False)
        keep = s > drop_tol * scale
        out = np.hstack([out, Uq[:, keep]])
        missing = p - out.shape[1]
        if missing == 0:
            break
        X = rng.standard_normal((n, missing))
        scale = max(np.linalg.norm(X, axis=0).max(), 1.0)
    # one last pass keeps the final block orthogonal to everything at roundoff
    for b in basis:
        out -= b @ (b.T @ out)
    q, _ = np.linalg.qr(out)
    return q


def _apply(A, X):
    return np.asarray(A @ X)


def smallest_eigenpairs(
    L,
    K: int,
    seed: int = 0,
    *,
    tol: float = 1e-10,
    block_size: int | None = None,
    max_basis: int | None = None,
    max_restarts: int = 200,
    side: str | None = None,
) -> SpectralFeatures:
    """Return the ``K`` algebraically smallest eigenpairs of symmetric ``L``.

    Args:
        L: a :class:`HypergraphLaplacian`, sparse matrix or dense array.
        K: number of eigenpairs, ``1 <= K <= n``.
        seed: seeds the random starting block.
        tol: convergence threshold on each residual ``||L x - lam x||_2``.
        block_size: Krylov block width; defaults to ``K + min(K, 8)``.
        max_basis: basis size before a restart; defaults to
            ``max(6 * block_size, 120)``.
        max_restarts: iteration cap; exceeded -> :class:`EigenConvergenceError`.

    Returns:
        SpectralFeatures with sign-fixed orthonormal columns.
    """
    if side is None:
        side = getattr(L, "side", "user")
    A = getattr(L, "laplacian", L)
    if sp.issparse(A):
        A = sp.csr_matrix(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")

    rng = np.random.default_rng(seed)
    p = min(n, block_size or K + min(K, 8))
    p = max(p, K)
    m = min(n, max_basis or max(6 * p, 120))
    m = max(m, p)

    X = _orthonormalize(rng.standard_normal((n, p)), [], rng)
    worst = np.inf
    for restart in range(max_restarts + 1):
        Q = [X]
        AQ = [_apply(A, X)]
        dim = X.shape[1]
        while dim < m:
            last = Q[-1]
            # three-term block recurrence, then full reorthogonalization
            R = AQ[-1] - last @ (last.T @ AQ[-1])
            if len(Q) > 1:
                R -= Q[-2] @ (Q[-2].T @ AQ[-1])
            width = min(p, m - dim)
            Xn = _orthonormalize(R[:, :width] if R.shape[1] >= width else R, Q, rng)
            if Xn.shape[1] == 0:
                break
            Q.append(Xn)
            AQ.append(_apply(A, Xn))
            dim += Xn.shape[1]
        Qm = np.hstack(Q)
        AQm = np.hstack(AQ)
        T = Qm.T @ AQm
        T = 0.5 * (T + T.T)
        theta, Y = np.linalg.eigh(T)
        keep = min(p, theta.size)
        X = Qm @ Y[:, :keep]
        AX = AQm @ Y[:, :keep]
        res = np.linalg.norm(AX - X * theta[:keep], axis=0)
        worst = float(res[:K].max())
        if worst <= tol or dim >= n:
            break
        X = _orthonormalize(X, [], rng)
    else:
        raise EigenConvergenceError(worst, tol, max_restarts)

    if worst > tol and dim >= n:
        # whole space in the basis: Rayleigh-Ritz is exact up to roundoff
        if worst > max(tol, 1e-8):
            raise EigenConvergenceError(worst, tol, restart)

    vecs = X[:, :K]
    # one Rayleigh-Ritz polish in the final subspace tightens the eigenvalues
    AV = _apply(A, vecs)
    vals = np.einsum("ij,ij->j", vecs, AV)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = fix_signs(vecs[:, order])
    return SpectralFeatures(features=vecs, eigenvalues=vals, side=side)


def dense_eigenpairs(L, K: int, side: str = "user") -> SpectralFeatures:
    """Dense reference decomposition via ``numpy.linalg.eigh``."""
    A = getattr(L, "laplacian", L)
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    vals, vecs = np.linalg.eigh(A)
    return SpectralFeatures(fix_signs(vecs[:, :K]), vals[:K], side)


def spectral_features(
    L, K: int, seed: int = 0, drop_trivial: bool = False, trivial_tol: float = 1e-9
) -> SpectralFeatures:
    """Eigenvector features, optionally skipping eigenvalues below ``trivial_tol``.

    With ``drop_trivial`` the solver is re-run with a larger ``K`` so the
    result still has ``K`` columns when the matrix is large enough.
    """
    feat = smallest_eigenpairs(L, K, seed)
    if not drop_trivial:
        return feat
    n = feat.n_vertices
    n_trivial = int(np.sum(feat.eigenvalues < trivial_tol))
    while n_trivial:
        want = min(n, K + n_trivial)
        feat = smallest_eigenpairs(L, want, seed)
        now = int(np.sum(feat.eigenvalues < trivial_tol))
        if now == n_trivial or want == n:
            break
        n_trivial = now
    keep = feat.eigenvalues >= trivial_tol
    return SpectralFeatures(
        feat.features[:, keep][:, :K], feat.eigenvalues[keep][:K], feat.side
    )


def write_features(path, feat: SpectralFeatures) -> None:
    """``n_vertices K side`` header, eigenvalue line, then one row per vertex."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{feat.n_vertices} {feat.K} {feat.side}\n")
        fh.write(" ".join(f"{v:.17g}" for v in feat.eigenvalues) + "\n")
        for row in feat.features:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_features(path) -> SpectralFeatures:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad feature header {header!r}")
        n, K, side = int(header[0]), int(header[1]), header[2]
        vals = np.array(fh.readline().split(), dtype=np.float64)
        rows = np.array(fh.read().split(), dtype=np.float64)
    if vals.size != K or rows.size != n * K:
        raise ValueError(f"{path}: expected {n}x{K} features")
    return SpectralFeatures(rows.reshape(n, K), vals, side)
