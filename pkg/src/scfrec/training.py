"""SPLR objective, its gradients and the mini-batch training loops."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from scfrec.dataset import DatasetSplit, InteractionMatrix
from scfrec.model import PopularityModel, init_params
from scfrec.preference_sets import (
    PairBatch,
    PreferenceSets,
    TrainingPair,
    positive_sets,
    sample_pair_batch,
)

MODEL_KINDS = ("mf", "scf", "multi")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, name: str):
        self.epoch, self.batch = epoch, batch
        super().__init__(f"non-finite values in {name} at epoch {epoch}, batch {batch}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 5000
    reg_lambda: float = 0.3
    eta1: float = 0.01
    eta2: float = 0.01
    sampling_rate: int = 5
    max_iters: int = 200
    seed: int = 0
    eval_every: int = 1
    n_factors: int = 200
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sampling_rate < 1:
            raise ValueError("sampling_rate must be >= 1")
        if self.reg_lambda < 0 or self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("reg_lambda, eta1 and eta2 must be non-negative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class TrainResult:
    params: object
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    final_params: object = None


def log_sigmoid(x):
    """``ln(sigmoid(x))`` without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _user_pair_blocks(sets: PreferenceSets, u: int, eta1: float, eta2: float):
    pos, pot, neg = sets.positive(u), sets.potential(u), sets.negative(u)
    yield pos, neg, 1.0
    if eta1:
        yield pos, pot, eta1
    if eta2:
        yield pot, neg, eta2


def all_pairs(sets: PreferenceSets, eta1: float, eta2: float) -> PairBatch:
    """Every weighted pair of the full objective (small instances only)."""
    us, a, b, w = [], [], [], []
    for u in range(sets.n_users):
        for A, B, weight in _user_pair_blocks(sets, u, eta1, eta2):
            if A.size and B.size:
                ai, bi = np.meshgrid(A, B, indexing="ij")
                us.append(np.full(ai.size, u))
                a.append(ai.ravel())
                b.append(bi.ravel())
                w.append(np.full(ai.size, weight))
    if not us:
        z = np.zeros(0, dtype=np.int64)
        return PairBatch(z, z, z, np.zeros(0))
    return PairBatch(np.concatenate(us), np.concatenate(a), np.concatenate(b), np.concatenate(w))


def squared_norm(params) -> float:
    return float(sum(np.sum(a * a) for a in params.learned().values()))


def splr_objective(params, sets: PreferenceSets, eta1: float, eta2: float, reg_lambda: float) -> float:
    """Exact SPLR objective; with ``eta1 = eta2 = 0`` this is the BPR objective.

    Cost grows as users x items^2, so this is meant for small instances.
    """
    total = 0.0
    for u in range(sets.n_users):
        s = params.scores(u)
        for A, B, weight in _user_pair_blocks(sets, u, eta1, eta2):
            if A.size and B.size:
                total += weight * float(log_sigmoid(s[A][:, None] - s[B][None, :]).sum())
    return total - 0.5 * reg_lambda * squared_norm(params)


def pair_scores(params, batch: PairBatch) -> np.ndarray:
    """``R^_ui - R^_uj`` for every pair in the batch."""
    u, i, j = batch.users, batch.preferred, batch.dispreferred
    x = (params.U[u] * (params.V[i] - params.V[j])).sum(axis=1)
    for b in params.item_blocks():
        x = x + (b.weights[u] * (b.features[i] - b.features[j])).sum(axis=1)
    for b in params.user_blocks():
        x = x + (b.features[u] * (b.weights[i] - b.weights[j])).sum(axis=1)
    return x


def scatter_add(n_rows: int, rows: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Dense ``out[rows[k]] += values[k]``, summed in ``k`` order within each row."""
    S = sp.csr_matrix(
        (np.ones(rows.size), (rows, np.arange(rows.size))), shape=(n_rows, rows.size)
    )
    return np.asarray(S @ values)


def accumulate_pair_gradients(params, batch: PairBatch) -> dict[str, np.ndarray]:
    """Sum of ``w * sigmoid(-R^_uij) * dR^_uij/dTheta`` over the batch (no regularization)."""
    u, i, j = batch.users, batch.preferred, batch.dispreferred
    coef = (batch.weights * sigmoid(-pair_scores(params, batch)))[:, None]
    N, M = params.n_users, params.n_items
    ij = np.concatenate([i, j])
    grads = {"U": scatter_add(N, u, coef * (params.V[i] - params.V[j]))}
    Uu = coef * params.U[u]
    grads["V"] = scatter_add(M, ij, np.concatenate([Uu, -Uu]))
    for k, b in enumerate(params.item_blocks()):
        grads[f"P{k}"] = scatter_add(N, u, coef * (b.features[i] - b.features[j]))
    for k, b in enumerate(params.user_blocks()):
        Eu = coef * b.features[u]
        grads[f"Q{k}"] = scatter_add(M, ij, np.concatenate([Eu, -Eu]))
    return grads


def _regularize_touched(params, grads, users, items, reg_lambda):
    """Subtract ``reg_lambda * theta`` once for each row the batch touched."""
    if not reg_lambda:
        return grads
    users = np.unique(users)
    items = np.unique(items)
    learned = params.learned()
    for name, g in grads.items():
        rows = users if name == "U" or name.startswith("P") else items
        g[rows] -= reg_lambda * learned[name][rows]
    return grads


def batch_gradient(params, batch: PairBatch, reg_lambda: float) -> dict[str, np.ndarray]:
    grads = accumulate_pair_gradients(params, batch)
    items = np.concatenate([batch.preferred, batch.dispreferred])
    return _regularize_touched(params, grads, batch.users, items, reg_lambda)


def pair_gradient(params, pair: TrainingPair, reg_lambda: float) -> dict[str, dict[int, np.ndarray]]:
    """Row-sparse ascent direction for a single weighted pair.

    Returns ``{array name: {row index: delta}}`` where names are ``U``,
    ``V``, ``P0..``, ``Q0..`` as in ``params.learned()``.
    """
    batch = PairBatch(
        np.array([pair.user]), np.array([pair.preferred]),
        np.array([pair.dispreferred]), np.array([float(pair.weight)]),
    )
    grads = batch_gradient(params, batch, reg_lambda)
    out: dict[str, dict[int, np.ndarray]] = {}
    for name, g in grads.items():
        rows = [pair.user] if name == "U" or name.startswith("P") else sorted({pair.preferred, pair.dispreferred})
        out[name] = {r: g[r].copy() for r in rows}
    return out


def splr_gradient(params, sets: PreferenceSets, eta1: float, eta2: float, reg_lambda: float):
    """Exact gradient of :func:`splr_objective` (regularization on every row)."""
    grads = accumulate_pair_gradients(params, all_pairs(sets, eta1, eta2))
    for name, a in params.learned().items():
        grads[name] -= reg_lambda * a
    return grads


def _apply(params, grads, lr, epoch, batch_no):
    learned = params.learned()
    for name, g in grads.items():
        arr = learned[name]
        arr += lr * g
        if not np.isfinite(arr).all():
            raise TrainingDivergedError(epoch, batch_no, name)


EvalHook = Callable[[int, object], "dict[str, float] | None"]


def _run_hook(result: TrainResult, hook, epoch, params, best_value):
    metrics = hook(epoch, params)
    if not metrics:
        return best_value
    for metric, value in metrics.items():
        result.history.append(
            {"epoch": epoch, "split": "valid", "metric": metric, "value": float(value)}
        )
    value = metrics.get("f1@5")
    if value is not None and (best_value is None or value > best_value):
        result.params = params.copy()
        result.best_epoch = epoch
        return value
    return best_value


def train(
    model_kind: str,
    data: DatasetSplit | InteractionMatrix,
    sets: PreferenceSets,
    features=None,
    cfg: TrainConfig = TrainConfig(),
    eval_hook: EvalHook | None = None,
    params=None,
) -> TrainResult:
    """Mini-batch gradient ascent on the sampled SPLR objective.

    Each epoch shuffles the train records, cuts them into ``batch_size``
    batches, samples ``sampling_rate`` potential/negative items per record,
    sums the pair gradients over the batch and steps
    ``Theta += learning_rate * grad``. With ``eta1 = eta2 = 0`` the potential
    sets are dropped, so negatives are all non-positive items and the loop
    is plain BPR.

    Args:
        model_kind: ``"mf"`` ignores ``features``; ``"scf"`` uses ``(E, F)``;
            ``"multi"`` requires an initialized ``params``.
        features: ``(E, F)`` spectral feature arrays for ``"scf"``.
        eval_hook: ``hook(epoch, params) -> {"f1@5": ...}`` called every
            ``eval_every`` epochs; the best-``f1@5`` snapshot is returned.
        params: optional initial parameters (otherwise seeded init).
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
    train_R = data.train if isinstance(data, DatasetSplit) else data
    if params is None:
        if model_kind == "multi":
            raise ValueError("multi-feature training needs initialized params")
        E = F = None
        if model_kind == "scf":
            if features is None:
                raise ValueError("scf training needs (E, F) features")
            E, F = features
        params = init_params(
            train_R.n_users, train_R.n_items, cfg.n_factors, E, F,
            seed=cfg.seed, scale=cfg.init_scale,
        )
    else:
        params = params.copy()
    if cfg.eta1 == 0 and cfg.eta2 == 0:
        sets = sets.without_potential()

    rng = np.random.default_rng([cfg.seed, 1])
    users, items = train_R.users, train_R.items
    n = users.size
    result = TrainResult(params=None)
    best = None
    for epoch in range(1, cfg.max_iters + 1):
        perm = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = perm[start : start + cfg.batch_size]
            batch = sample_pair_batch(
                sets, users[idx], items[idx], cfg.sampling_rate, cfg.eta1, cfg.eta2, rng
            )
            grads = batch_gradient(params, batch, cfg.reg_lambda)
            _apply(params, grads, cfg.learning_rate, epoch, batch_no)
        if eval_hook is not None and epoch % cfg.eval_every == 0:
            best = _run_hook(result, eval_hook, epoch, params, best)
    result.final_params = params
    if result.params is None:
        result.params = params.copy()
        result.best_epoch = cfg.max_iters
    return result


# -- baselines ----------------------------------------------------------------


def pointwise_loss(params, users, items, targets, reg_lambda: float = 0.0) -> float:
    """``1/2 sum (r - U_u V_i)^2 + reg/2 ||Theta||^2``."""
    e = np.asarray(targets) - (params.U[users] * params.V[items]).sum(axis=1)
    return 0.5 * float(e @ e) + 0.5 * reg_lambda * squared_norm(params)


def pointwise_samples(sets: PreferenceSets, users, items, m, rng):
    """Each positive with target 1 followed by ``m`` sampled zeros of the same user."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    B = users.size
    n_neg = sets.n_negative()[users]
    r = np.floor(rng.random((B, m)) * np.maximum(n_neg, 1)[:, None]).astype(np.int64)
    r = np.minimum(r, np.maximum(n_neg - 1, 0)[:, None])
    rows = np.repeat(users, m).reshape(B, m)
    neg = sets.nth_negative(rows, r)
    neg_ok = np.repeat(n_neg > 0, m).reshape(B, m)
    su = np.concatenate([users[:, None], rows], axis=1)
    si = np.concatenate([items[:, None], neg], axis=1)
    st = np.concatenate([np.ones((B, 1)), np.zeros((B, m))], axis=1)
    ok = np.concatenate([np.ones((B, 1), bool), neg_ok], axis=1)
    return su[ok], si[ok], st[ok]


def train_pointwise(
    data: DatasetSplit | InteractionMatrix,
    cfg: TrainConfig = TrainConfig(),
    eval_hook: EvalHook | None = None,
    params=None,
) -> TrainResult:
    """Squared-error MF on positives (target 1) plus sampled zeros, mini-batch SGD."""
    train_R = data.train if isinstance(data, DatasetSplit) else data
    if params is None:
        params = init_params(
            train_R.n_users, train_R.n_items, cfg.n_factors,
            seed=cfg.seed, scale=cfg.init_scale,
        )
    else:
        params = params.copy()
    sets = positive_sets(train_R)
    rng = np.random.default_rng([cfg.seed, 1])
    users, items = train_R.users, train_R.items
    n = users.size
    result = TrainResult(params=None)
    best = None
    for epoch in range(1, cfg.max_iters + 1):
        perm = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = perm[start : start + cfg.batch_size]
            su, si, st = pointwise_samples(sets, users[idx], items[idx], cfg.sampling_rate, rng)
            e = (st - (params.U[su] * params.V[si]).sum(axis=1))[:, None]
            grads = {
                "U": scatter_add(params.n_users, su, e * params.V[si]),
                "V": scatter_add(params.n_items, si, e * params.U[su]),
            }
            grads = _regularize_touched(params, grads, su, si, cfg.reg_lambda)
            _apply(params, grads, cfg.learning_rate, epoch, batch_no)
        if eval_hook is not None and epoch % cfg.eval_every == 0:
            best = _run_hook(result, eval_hook, epoch, params, best)
    result.final_params = params
    if result.params is None:
        result.params = params.copy()
        result.best_epoch = cfg.max_iters
    return result


def rank_most_popular(train: InteractionMatrix) -> list[int]:
    """Purchased items by descending train count, ties by ascending index."""
    counts = train.item_degrees()
    order = np.argsort(-counts, kind="stable")
    return order[counts[order] > 0].tolist()


def popularity_model(train: InteractionMatrix) -> PopularityModel:
    return PopularityModel(train.item_degrees().astype(np.int64))
