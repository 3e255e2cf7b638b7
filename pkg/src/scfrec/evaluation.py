"""Top-n ranking metrics, AUC/GAUC and held-out evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from scfrec.dataset import InteractionMatrix
from scfrec.preference_sets import PreferenceSets

DEFAULT_N_VALUES = (2, 5, 10, 20)


def f1_at_n(recommended: Sequence[int], relevant: Iterable[int], n: int) -> float:
    """Harmonic mean of precision (hits / n) and recall (hits / |relevant|)."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    hits = sum(1 for item in list(recommended)[:n] if item in relevant)
    p, r = hits / n, hits / len(relevant)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def ndcg_at_n(recommended: Sequence[int], relevant: Iterable[int], n: int) -> float:
    """Binary-relevance NDCG with a ``1 / log2(rank + 1)`` discount."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty")
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, item in enumerate(list(recommended)[:n], start=1)
        if item in relevant
    )
    idcg = sum(1.0 / math.log2(k + 1) for k in range(1, min(n, len(relevant)) + 1))
    return dcg / idcg


def auc(pos_scores, neg_scores) -> float:
    """Fraction of (pos, neg) pairs ranked strictly correctly; ties count 0."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64).ravel())
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc needs non-empty positive and negative lists")
    below = np.searchsorted(neg, pos, side="left")
    return float(below.sum()) / (pos.size * neg.size)


def _auc_or_zero(s, A, B) -> float:
    return auc(s[A], s[B]) if A.size and B.size else 0.0


def gauc(params, sets: PreferenceSets, eta1: float, eta2: float) -> float:
    """Mean over users of AUC(I+, I-) + eta1 AUC(I+, P) + eta2 AUC(P, I-)."""
    if sets.n_users == 0:
        raise ValueError("no users")
    total = 0.0
    for u in range(sets.n_users):
        s = params.scores(u)
        pos, pot, neg = sets.positive(u), sets.potential(u), sets.negative(u)
        total += _auc_or_zero(s, pos, neg)
        if eta1:
            total += eta1 * _auc_or_zero(s, pos, pot)
        if eta2:
            total += eta2 * _auc_or_zero(s, pot, neg)
    return total / sets.n_users


@dataclass
class EvalReport:
    metrics: dict[str, float]
    n_values: tuple[int, ...]
    users_evaluated: int
    per_user: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_records(self, **extra) -> list[dict]:
        return [
            {**extra, "metric": name, "value": value}
            for name, value in self.metrics.items()
        ]

    def to_jsonl(self, **extra) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.to_records(**extra))


def metric_names(n_values) -> list[str]:
    return [f"f1@{n}" for n in n_values] + [f"ndcg@{n}" for n in n_values] + ["gauc"]


def _score_rows(model, users: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(model.scores(users), dtype=np.float64))


def _csr_row(M, u):
    return M.indices[M.indptr[u] : M.indptr[u + 1]]


def evaluate_run(
    model,
    train: InteractionMatrix,
    heldout: InteractionMatrix,
    n_values: Sequence[int] = DEFAULT_N_VALUES,
    sample: int | None = None,
    seed: int = 0,
    sets: PreferenceSets | None = None,
    eta1: float = 0.0,
    eta2: float = 0.0,
    with_gauc: bool = True,
    chunk: int = 256,
) -> EvalReport:
    """Rank all items minus each user's train positives and score the held-out items.

    Users whose held-out items are all train positives are skipped. With
    ``sample`` a seeded random subset of that many evaluable users is used.
    ``gauc`` treats held-out items as positives and the remaining candidates
    as negatives; when ``sets`` is given, candidates in the user's potential
    set form the middle tier weighted by ``eta1``/``eta2``.
    """
    if len(heldout) == 0:
        raise ValueError("held-out set is empty")
    n_values = tuple(int(n) for n in n_values)
    n_max = max(n_values)
    M = train.n_items
    train_csr = train.to_csr()
    held_csr = heldout.to_csr()
    relevant = held_csr - held_csr.multiply(train_csr)
    relevant.eliminate_zeros()
    relevant.sort_indices()
    counts = np.diff(relevant.indptr)
    users = np.flatnonzero(counts > 0)
    if sample is not None and sample < users.size:
        rng = np.random.default_rng(seed)
        users = np.sort(rng.choice(users, size=sample, replace=False))

    disc = 1.0 / np.log2(np.arange(2, n_max + 2))
    ideal = np.cumsum(disc)
    names = metric_names(n_values) if with_gauc else metric_names(n_values)[:-1]
    per_user = {name: np.zeros(users.size) for name in names}
    for start in range(0, users.size, chunk):
        block = users[start : start + chunk]
        S = _score_rows(model, block)
        seen = train_csr[block]
        masked = S.copy()
        masked[np.repeat(np.arange(block.size), np.diff(seen.indptr)), seen.indices] = -np.inf
        top = np.argsort(-masked, axis=1, kind="stable")[:, :n_max]
        valid = np.isfinite(np.take_along_axis(masked, top, axis=1))
        rel_dense = relevant[block].toarray() > 0
        hits = np.take_along_axis(rel_dense, top, axis=1) & valid
        if hits.shape[1] < n_max:
            # catalog smaller than the largest cut-off
            hits = np.pad(hits, ((0, 0), (0, n_max - hits.shape[1])))
        n_rel = counts[block]
        rows = slice(start, start + block.size)
        for n in n_values:
            h = hits[:, :n].sum(axis=1)
            p, r = h / n, h / n_rel
            with np.errstate(invalid="ignore", divide="ignore"):
                f1 = np.where(h > 0, 2 * p * r / (p + r), 0.0)
            per_user[f"f1@{n}"][rows] = f1
            dcg = (hits[:, :n] * disc[:n]).sum(axis=1)
            per_user[f"ndcg@{n}"][rows] = dcg / ideal[np.minimum(n, n_rel) - 1]
        if not with_gauc:
            continue
        for row, u in enumerate(block):
            s = S[row]
            rel = _csr_row(relevant, u)
            neg_mask = np.ones(M, dtype=bool)
            neg_mask[_csr_row(train_csr, u)] = False
            neg_mask[rel] = False
            if sets is not None:
                pot_mask = np.zeros(M, dtype=bool)
                pot_mask[sets.potential(u)] = True
                pot_mask &= neg_mask
                neg_mask &= ~pot_mask
                pot = np.flatnonzero(pot_mask)
                neg = np.flatnonzero(neg_mask)
                value = _auc_or_zero(s, rel, neg)
                if eta1:
                    value += eta1 * _auc_or_zero(s, rel, pot)
                if eta2:
                    value += eta2 * _auc_or_zero(s, pot, neg)
            else:
                value = _auc_or_zero(s, rel, np.flatnonzero(neg_mask))
            per_user["gauc"][start + row] = value

    metrics = {
        name: float(np.mean(vals)) if vals.size else 0.0 for name, vals in per_user.items()
    }
    return EvalReport(metrics, n_values, int(users.size), per_user)


def validation_hook(
    train: InteractionMatrix,
    validation: InteractionMatrix,
    n_values: Sequence[int] = (5,),
    sample: int | None = None,
    seed: int = 0,
):
    """Eval hook for :func:`scfrec.training.train` reporting ``f1@n``/``ndcg@n`` on validation."""

    def hook(epoch, params):
        report = evaluate_run(
            params, train, validation, n_values, sample=sample, seed=seed, with_gauc=False
        )
        return report.metrics

    return hook


def format_table(results: dict[str, list[EvalReport]], n_values=DEFAULT_N_VALUES) -> str:
    """Metrics (%) as ``mean±std`` rows per metric@n, one column per model."""
    models = list(results)
    width = max(14, *(len(m) + 2 for m in models))
    lines = ["metric".ljust(10) + "".join(m.rjust(width) for m in models)]
    for name in metric_names(n_values):
        cells = []
        for m in models:
            vals = np.array([r.metrics[name] for r in results[m]]) * 100.0
            std = vals.std(ddof=1) if vals.size > 1 else 0.0
            cells.append(f"{vals.mean():.3f}±{std:.3f}".rjust(width))
        lines.append(name.ljust(10) + "".join(cells))
    return "\n".join(lines) + "\n"
