"""SCF predictor ``R^ = U V^T + P F^T + E Q^T``, its multi-feature form and baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureBlock:
    """A fixed feature matrix paired with its learned weight matrix.

    For an item block, ``features`` is ``n_items x K`` and ``weights`` is
    ``n_users x K`` (user preference over feature dims). For a user block
    the roles are swapped: ``features`` is ``n_users x K`` and ``weights``
    is ``n_items x K`` (item fitness).
    """

    features: np.ndarray
    weights: np.ndarray

    @property
    def K(self) -> int:
        return self.features.shape[1]


class _Factorized:
    """Shared scoring over ``U V^T + sum item blocks + sum user blocks``."""

    U: np.ndarray
    V: np.ndarray

    def item_blocks(self) -> list[FeatureBlock]:
        raise NotImplementedError

    def user_blocks(self) -> list[FeatureBlock]:
        raise NotImplementedError

    @property
    def n_users(self) -> int:
        return self.U.shape[0]

    @property
    def n_items(self) -> int:
        return self.V.shape[0]

    def _check(self, u, i):
        if not (0 <= u < self.n_users and 0 <= i < self.n_items):
            raise IndexError(f"(user {u}, item {i}) out of range")

    def score(self, u: int, i: int) -> float:
        self._check(u, i)
        s = float(self.U[u] @ self.V[i])
        for b in self.item_blocks():
            s += float(b.weights[u] @ b.features[i])
        for b in self.user_blocks():
            s += float(b.features[u] @ b.weights[i])
        return s

    def scores(self, users) -> np.ndarray:
        """Score rows for ``users`` against every item (2-D for array input)."""
        users = np.asarray(users)
        S = self.U[users] @ self.V.T
        for b in self.item_blocks():
            S = S + b.weights[users] @ b.features.T
        for b in self.user_blocks():
            S = S + b.features[users] @ b.weights.T
        return S

    def learned(self) -> dict[str, np.ndarray]:
        """Name -> learned array (views, so in-place updates hit the model)."""
        out = {"U": self.U, "V": self.V}
        for k, b in enumerate(self.item_blocks()):
            out[f"P{k}"] = b.weights
        for k, b in enumerate(self.user_blocks()):
            out[f"Q{k}"] = b.weights
        return out

    def copy(self):
        raise NotImplementedError


@dataclass(eq=False)
class ModelParams(_Factorized):
    """Latent factors ``U, V``, learned spectral weights ``P, Q``, fixed ``E, F``."""

    U: np.ndarray
    V: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        self.E = _frozen(self.E)
        self.F = _frozen(self.F)
        N, M = self.U.shape[0], self.V.shape[0]
        if self.U.shape[1] != self.V.shape[1]:
            raise ValueError("U and V need the same number of factors")
        if self.P.shape != (N, self.F.shape[1]) or self.F.shape[0] != M:
            raise ValueError("P/F shapes inconsistent")
        if self.Q.shape != (M, self.E.shape[1]) or self.E.shape[0] != N:
            raise ValueError("Q/E shapes inconsistent")

    @property
    def K0(self) -> int:
        return self.U.shape[1]

    @property
    def K1(self) -> int:
        return self.E.shape[1]

    @property
    def K2(self) -> int:
        return self.F.shape[1]

    def item_blocks(self):
        return [FeatureBlock(self.F, self.P)] if self.K2 else []

    def user_blocks(self):
        return [FeatureBlock(self.E, self.Q)] if self.K1 else []

    def terms(self, u: int, i: int) -> tuple[float, float, float]:
        """(model-based, item-based collaborative, user-based collaborative)."""
        self._check(u, i)
        return (
            float(self.U[u] @ self.V[i]),
            float(self.P[u] @ self.F[i]),
            float(self.E[u] @ self.Q[i]),
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.U.copy(), self.V.copy(), self.P.copy(), self.Q.copy(), self.E, self.F
        )


@dataclass(eq=False)
class MultiFeatureParams(_Factorized):
    """``U V^T + sum_j P_j F_j^T + sum_k E_k Q_k^T`` over any number of feature blocks."""

    U: np.ndarray
    V: np.ndarray
    item_feature_blocks: list[FeatureBlock] = field(default_factory=list)
    user_feature_blocks: list[FeatureBlock] = field(default_factory=list)

    def __post_init__(self):
        N, M = self.U.shape[0], self.V.shape[0]
        fixed = []
        for b in self.item_feature_blocks:
            if b.features.shape[0] != M or b.weights.shape != (N, b.K):
                raise ValueError("item feature block has inconsistent shape")
            fixed.append(FeatureBlock(_frozen(b.features), b.weights))
        self.item_feature_blocks = fixed
        fixed = []
        for b in self.user_feature_blocks:
            if b.features.shape[0] != N or b.weights.shape != (M, b.K):
                raise ValueError("user feature block has inconsistent shape")
            fixed.append(FeatureBlock(_frozen(b.features), b.weights))
        self.user_feature_blocks = fixed

    def item_blocks(self):
        return self.item_feature_blocks

    def user_blocks(self):
        return self.user_feature_blocks

    def copy(self) -> "MultiFeatureParams":
        return MultiFeatureParams(
            self.U.copy(),
            self.V.copy(),
            [FeatureBlock(b.features, b.weights.copy()) for b in self.item_feature_blocks],
            [FeatureBlock(b.features, b.weights.copy()) for b in self.user_feature_blocks],
        )


@dataclass(eq=False)
class PopularityModel:
    """Non-personalized baseline: every user sees items by train purchase count."""

    counts: np.ndarray

    @property
    def n_items(self) -> int:
        return self.counts.size

    def scores(self, users) -> np.ndarray:
        users = np.asarray(users)
        row = self.counts.astype(np.float64)
        if users.ndim == 0:
            return row.copy()
        return np.tile(row, (users.size, 1))

    def copy(self) -> "PopularityModel":
        return PopularityModel(self.counts.copy())


def init_params(
    n_users: int,
    n_items: int,
    n_factors: int,
    E=None,
    F=None,
    seed: int = 0,
    scale: float = 0.01,
) -> ModelParams:
    """Uniform(-scale, scale) initialization of ``U, V, P, Q`` in that order.

    ``E``/``F`` default to empty (zero-column) features, giving plain MF.
    """
    E = np.zeros((n_users, 0)) if E is None else np.asarray(E, dtype=np.float64)
    F = np.zeros((n_items, 0)) if F is None else np.asarray(F, dtype=np.float64)
    if E.shape[0] != n_users:
        raise ValueError(f"E has {E.shape[0]} rows, expected {n_users} users")
    if F.shape[0] != n_items:
        raise ValueError(f"F has {F.shape[0]} rows, expected {n_items} items")
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        return rng.uniform(-1.0, 1.0, size=(rows, cols)) * scale

    U = draw(n_users, n_factors)
    V = draw(n_items, n_factors)
    P = draw(n_users, F.shape[1])
    Q = draw(n_items, E.shape[1])
    return ModelParams(U, V, P, Q, E, F)


def init_multi_params(
    n_users: int,
    n_items: int,
    n_factors: int,
    user_features=(),
    item_features=(),
    seed: int = 0,
    scale: float = 0.01,
) -> MultiFeatureParams:
    """Like :func:`init_params`; draws ``U, V``, then each ``P_j``, then each ``Q_k``."""
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        return rng.uniform(-1.0, 1.0, size=(rows, cols)) * scale

    U = draw(n_users, n_factors)
    V = draw(n_items, n_factors)
    items = [FeatureBlock(np.asarray(Fj, float), draw(n_users, np.shape(Fj)[1])) for Fj in item_features]
    users = [FeatureBlock(np.asarray(Ek, float), draw(n_items, np.shape(Ek)[1])) for Ek in user_features]
    return MultiFeatureParams(U, V, items, users)


def score(params: ModelParams, u: int, i: int) -> float:
    return params.score(u, i)


def score_multi(params: MultiFeatureParams, u: int, i: int) -> float:
    return params.score(u, i)


def score_diff(params, u: int, i: int, j: int) -> float:
    return params.score(u, i) - params.score(u, j)


def top_n_from_scores(scores: np.ndarray, n: int, exclude=()) -> np.ndarray:
    """Indices of the ``n`` best scores, descending, ties by ascending index."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.ones(scores.size, dtype=bool)
    ex = np.asarray(list(exclude) if not isinstance(exclude, np.ndarray) else exclude, dtype=np.int64)
    mask[ex] = False
    cand = np.flatnonzero(mask)
    order = np.argsort(-scores[cand], kind="stable")
    return cand[order[:n]]


def recommend_top_n(params, u: int, n: int, exclude=()) -> list[int]:
    """Top-``n`` unseen items for user ``u`` (pass training positives as ``exclude``)."""
    return top_n_from_scores(params.scores(u), n, exclude).tolist()


# -- checkpoints -------------------------------------------------------------


def _write_block(fh, name, A):
    A = np.atleast_2d(A)
    fh.write(f"{name} {A.shape[0]} {A.shape[1]}\n")
    for row in A:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def save_model(path, model) -> None:
    """Text checkpoint: ``n_users n_items K0 K1 K2`` header, then labeled row blocks."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if isinstance(model, PopularityModel):
            fh.write(f"0 {model.n_items} 0 0 0\n")
            _write_block(fh, "popularity", model.counts[None, :].astype(np.float64))
            return
        K1 = sum(b.K for b in model.user_blocks())
        K2 = sum(b.K for b in model.item_blocks())
        K0 = model.U.shape[1]
        fh.write(f"{model.n_users} {model.n_items} {K0} {K1} {K2}\n")
        _write_block(fh, "U", model.U)
        _write_block(fh, "V", model.V)
        if isinstance(model, ModelParams):
            _write_block(fh, "P", model.P)
            _write_block(fh, "Q", model.Q)
            _write_block(fh, "E", model.E)
            _write_block(fh, "F", model.F)
        else:
            for k, b in enumerate(model.item_feature_blocks):
                _write_block(fh, f"F{k}", b.features)
                _write_block(fh, f"P{k}", b.weights)
            for k, b in enumerate(model.user_feature_blocks):
                _write_block(fh, f"E{k}", b.features)
                _write_block(fh, f"Q{k}", b.weights)


def load_model(path):
    blocks: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = [int(x) for x in fh.readline().split()]
        if len(header) != 5:
            raise ValueError(f"{path}: bad checkpoint header")
        while True:
            line = fh.readline()
            if not line:
                break
            if not line.strip():
                continue
            name, rows, cols = line.split()
            rows, cols = int(rows), int(cols)
            data = [fh.readline().split() for _ in range(rows)]
            blocks[name] = np.array(data, dtype=np.float64).reshape(rows, cols)
    if "popularity" in blocks:
        return PopularityModel(blocks["popularity"][0].astype(np.int64))
    n_users, n_items = header[0], header[1]
    if "P" in blocks or "E" in blocks:
        return ModelParams(
            blocks["U"], blocks["V"], blocks["P"], blocks["Q"], blocks["E"], blocks["F"]
        )
    items = [
        FeatureBlock(blocks[f"F{k}"], blocks[f"P{k}"])
        for k in range(sum(1 for n in blocks if n.startswith("F")))
    ]
    users = [
        FeatureBlock(blocks[f"E{k}"], blocks[f"Q{k}"])
        for k in range(sum(1 for n in blocks if n.startswith("E")))
    ]
    U = blocks["U"].reshape(n_users, -1)
    V = blocks["V"].reshape(n_items, -1)
    return MultiFeatureParams(U, V, items, users)
