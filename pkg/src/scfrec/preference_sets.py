"""Per-user positive / potential / negative item sets and pair sampling.

The negative set of a user is everything outside the positive and
potential sets. It is never materialized: membership is a binary search over
the sorted excluded items, and the r-th negative item is found by offsetting
``r`` by the number of excluded items that precede it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from scfrec.dataset import InteractionMatrix
from scfrec.spectral.clustering import ClusterAssignment


def _csr_rows(M: sp.csr_matrix):
    M = sp.csr_matrix(M)
    M.sum_duplicates()
    M.sort_indices()
    return M.indptr.astype(np.int64), M.indices.astype(np.int64)


@dataclass(frozen=True, eq=False)
class PreferenceSets:
    """Positive and potential item sets in CSR form (sorted within each user)."""

    n_items: int
    pos_indptr: np.ndarray
    pos_indices: np.ndarray
    pot_indptr: np.ndarray
    pot_indices: np.ndarray

    def __post_init__(self):
        n_users = self.pos_indptr.size - 1
        pos = sp.csr_matrix(
            (np.ones(self.pos_indices.size), self.pos_indices, self.pos_indptr),
            shape=(n_users, self.n_items),
        )
        pot = sp.csr_matrix(
            (np.full(self.pot_indices.size, 2.0), self.pot_indices, self.pot_indptr),
            shape=(n_users, self.n_items),
        )
        excl = pos + pot
        if excl.nnz and excl.data.max() > 2:
            raise ValueError("positive and potential sets overlap")
        ex_ptr, ex_idx = _csr_rows(excl)
        users = np.repeat(np.arange(n_users, dtype=np.int64), np.diff(ex_ptr))
        local = np.arange(ex_idx.size, dtype=np.int64) - ex_ptr[users]
        stride = self.n_items + 1
        object.__setattr__(self, "_ex_ptr", ex_ptr)
        object.__setattr__(self, "_ex_keys", users * stride + ex_idx)
        # (excluded item) - (its rank) = complement items that precede it
        object.__setattr__(self, "_gap_keys", users * stride + (ex_idx - local))

    @property
    def n_users(self) -> int:
        return self.pos_indptr.size - 1

    def positive(self, u: int) -> np.ndarray:
        return self.pos_indices[self.pos_indptr[u] : self.pos_indptr[u + 1]]

    def potential(self, u: int) -> np.ndarray:
        return self.pot_indices[self.pot_indptr[u] : self.pot_indptr[u + 1]]

    def negative(self, u: int) -> np.ndarray:
        """Materialized negative set; for small instances and diagnostics."""
        mask = np.ones(self.n_items, dtype=bool)
        mask[self.positive(u)] = False
        mask[self.potential(u)] = False
        return np.flatnonzero(mask)

    def n_positive(self) -> np.ndarray:
        return np.diff(self.pos_indptr)

    def n_potential(self) -> np.ndarray:
        return np.diff(self.pot_indptr)

    def n_negative(self) -> np.ndarray:
        return self.n_items - np.diff(self._ex_ptr)

    def is_negative(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        keys = users * (self.n_items + 1) + items
        if self._ex_keys.size == 0:
            return np.ones(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self._ex_keys, keys), self._ex_keys.size - 1)
        return self._ex_keys[pos] != keys

    def nth_negative(self, users, r) -> np.ndarray:
        """The ``r``-th (0-based, ascending) negative item of each user."""
        users = np.asarray(users, dtype=np.int64)
        r = np.asarray(r, dtype=np.int64)
        q = users * (self.n_items + 1) + r
        before = np.searchsorted(self._gap_keys, q, side="right") - self._ex_ptr[users]
        return r + before

    def nth_potential(self, users, r) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        return self.pot_indices[self.pot_indptr[users] + np.asarray(r, dtype=np.int64)]

    def without_potential(self) -> "PreferenceSets":
        """Same positives with empty potential sets (negatives = all non-positives)."""
        return PreferenceSets(
            self.n_items,
            self.pos_indptr,
            self.pos_indices,
            np.zeros_like(self.pos_indptr),
            np.zeros(0, dtype=np.int64),
        )

    def dump(self, fh) -> None:
        for u, (a, b) in enumerate(zip(self.n_positive().tolist(), self.n_potential().tolist())):
            fh.write(f"{u}\t{a}\t{b}\n")


def positive_sets(train: InteractionMatrix) -> PreferenceSets:
    ptr, idx = _csr_rows(train.to_csr())
    return PreferenceSets(
        train.n_items, ptr, idx, np.zeros_like(ptr), np.zeros(0, dtype=np.int64)
    )


def _one_hot(labels: np.ndarray, n_clusters: int) -> sp.csr_matrix:
    n = labels.size
    return sp.csr_matrix(
        (np.ones(n), (np.arange(n), labels)), shape=(n, max(n_clusters, 1))
    )


def _as_list(c) -> list[ClusterAssignment]:
    if c is None:
        return []
    if isinstance(c, ClusterAssignment):
        return [c]
    return list(c)


def build_preference_sets(
    train: InteractionMatrix,
    user_clusters: ClusterAssignment | Sequence[ClusterAssignment] | None,
    item_clusters: ClusterAssignment | Sequence[ClusterAssignment] | None,
) -> PreferenceSets:
    """Potential set = items of community mates plus category mates of own items.

    Several clusterings per side (one per feature) are combined by taking the
    union of the communities (categories) a vertex belongs to.
    """
    R = train.to_csr()
    R.data[:] = 1.0
    pot = sp.csr_matrix(R.shape)
    for uc in _as_list(user_clusters):
        if uc.labels.size != train.n_users:
            raise ValueError("user clustering does not cover all users")
        C = _one_hot(uc.labels, uc.n_clusters)
        pot = pot + C @ (C.T @ R)
    for ic in _as_list(item_clusters):
        if ic.labels.size != train.n_items:
            raise ValueError("item clustering does not cover all items")
        G = _one_hot(ic.labels, ic.n_clusters)
        pot = pot + (R @ G) @ G.T
    pot = sp.csr_matrix(pot)
    pot.data = (pot.data > 0).astype(np.float64)
    pot = pot - pot.multiply(R)
    pot.eliminate_zeros()
    pos_ptr, pos_idx = _csr_rows(R)
    pot_ptr, pot_idx = _csr_rows(pot)
    return PreferenceSets(train.n_items, pos_ptr, pos_idx, pot_ptr, pot_idx)


# -- pair sampling -----------------------------------------------------------


@dataclass(frozen=True)
class TrainingPair:
    user: int
    preferred: int
    dispreferred: int
    weight: float


@dataclass(frozen=True)
class PairBatch:
    """Struct-of-arrays form of many :class:`TrainingPair`."""

    users: np.ndarray
    preferred: np.ndarray
    dispreferred: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return int(self.users.size)

    def pairs(self) -> list[TrainingPair]:
        return [
            TrainingPair(int(u), int(i), int(j), float(w))
            for u, i, j, w in zip(self.users, self.preferred, self.dispreferred, self.weights)
        ]


def sample_pair_batch(
    sets: PreferenceSets,
    users: np.ndarray,
    items: np.ndarray,
    m: int,
    eta1: float,
    eta2: float,
    rng: np.random.Generator,
) -> PairBatch:
    """Draw ``m`` potential and ``m`` negative items per record, with replacement.

    Per record the emitted pairs are ``(i, j_t)`` weighted ``eta1``,
    ``(i, k_t)`` weighted 1 and ``(j_t, k_t)`` weighted ``eta2``, for
    ``t = 1..m``. Classes with zero weight or an empty source set are left
    out. Random numbers: one ``(B, m)`` uniform block for potentials (only
    when ``eta1`` or ``eta2`` is positive), then one for negatives.
    """
    if m < 1:
        raise ValueError("sampling rate m must be >= 1")
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    B = users.size
    use_potential = eta1 > 0 or eta2 > 0
    n_pot = sets.n_potential()[users]
    n_neg = sets.n_negative()[users]

    has_pot = np.zeros(B, dtype=bool)
    if use_potential:
        rp = rng.random((B, m))
        has_pot = n_pot > 0
        r = np.floor(rp * np.maximum(n_pot, 1)[:, None]).astype(np.int64)
        r = np.minimum(r, np.maximum(n_pot - 1, 0)[:, None])
        j = np.full((B, m), -1, dtype=np.int64)
        sel = np.flatnonzero(has_pot)
        j[sel] = sets.nth_potential(users[sel, None], r[sel])
    rn = rng.random((B, m))
    has_neg = n_neg > 0
    r = np.floor(rn * np.maximum(n_neg, 1)[:, None]).astype(np.int64)
    r = np.minimum(r, np.maximum(n_neg - 1, 0)[:, None])
    rows = np.repeat(users, m).reshape(B, m)
    k = sets.nth_negative(rows, r)

    ii = np.repeat(items, m).reshape(B, m)
    blocks_u, blocks_a, blocks_b, blocks_w = [], [], [], []

    def emit(mask, a, b, w):
        mask = np.broadcast_to(mask[:, None], (B, m))
        blocks_u.append(np.where(mask, rows, -1))
        blocks_a.append(a)
        blocks_b.append(b)
        blocks_w.append(np.where(mask, float(w), 0.0))

    if eta1 > 0:
        emit(has_pot, ii, j, eta1)
    emit(has_neg, ii, k, 1.0)
    if eta2 > 0:
        emit(has_pot & has_neg, j, k, eta2)

    # interleave per record: [(i,j)*m, (i,k)*m, (j,k)*m]
    U = np.concatenate(blocks_u, axis=1).ravel()
    A = np.concatenate(blocks_a, axis=1).ravel()
    Bm = np.concatenate(blocks_b, axis=1).ravel()
    W = np.concatenate(blocks_w, axis=1).ravel()
    keep = W > 0
    return PairBatch(U[keep], A[keep], Bm[keep], W[keep])


def sample_training_pairs(
    sets: PreferenceSets,
    record: tuple[int, int],
    m: int,
    eta1: float,
    eta2: float,
    rng: np.random.Generator,
) -> list[TrainingPair]:
    """Pairs for a single purchase record; see :func:`sample_pair_batch`."""
    u, i = record
    batch = sample_pair_batch(sets, np.array([u]), np.array([i]), m, eta1, eta2, rng)
    return batch.pairs()
