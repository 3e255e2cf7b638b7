"""Independent re-implementations used as oracles by the training tests."""

import math

import numpy as np

from scfrec.model import init_params
from scfrec.preference_sets import build_preference_sets
from scfrec.spectral import ClusterAssignment

from conftest import random_interactions


def log_sigmoid(x):
    return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))


def loop_objective(params, sets, eta1, eta2, reg):
    """Triple sum written out pair by pair."""
    total = 0.0
    for u in range(sets.n_users):
        pos, pot, neg = sets.positive(u), sets.potential(u), sets.negative(u)
        for A, B, w in ((pos, neg, 1.0), (pos, pot, eta1), (pot, neg, eta2)):
            for i in A:
                for j in B:
                    total += w * log_sigmoid(params.score(u, i) - params.score(u, j))
    norm = sum(float((a * a).sum()) for a in params.learned().values())
    return total - 0.5 * reg * norm


def finite_difference(f, params, h):
    """Central differences of ``f(params)`` for every learned coordinate."""
    out = {}
    for name, arr in params.learned().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + h
            up = f(params)
            arr[idx] = keep - h
            down = f(params)
            arr[idx] = keep
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def relative_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_instance(seed, N=6, M=6, K0=3, K1=2, K2=2):
    rng = np.random.default_rng(seed)
    R = random_interactions(rng, N, M, 0.35, ensure_degree=True)
    ul = rng.integers(2, size=N)
    il = rng.integers(3, size=M)
    sets = build_preference_sets(
        R,
        ClusterAssignment(ul, 2, np.zeros((0, 0)), "user"),
        ClusterAssignment(il, 3, np.zeros((0, 0)), "item"),
    )
    E = rng.standard_normal((N, K1))
    F = rng.standard_normal((M, K2))
    params = init_params(N, M, K0, E, F, seed=seed, scale=0.5)
    return params, sets, rng


def reference_bpr(params, R, cfg):
    """Plain BPR mini-batch ascent written with explicit per-pair loops.

    Consumes random numbers exactly like the library (one permutation per
    epoch, one ``(B, m)`` uniform block per batch) and accumulates each
    gradient row in pair order, preferred-item terms before dispreferred.
    Returns the parameter snapshot after every epoch.
    """
    p = params.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    users, items = R.users, R.items
    negatives = [np.setdiff1d(np.arange(R.n_items), R.items_of(u)) for u in range(R.n_users)]
    m = cfg.sampling_rate
    snapshots = []
    for _ in range(cfg.max_iters):
        perm = rng.permutation(users.size)
        for start in range(0, users.size, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            draws = rng.random((idx.size, m))
            pairs = []
            for row, rec in enumerate(idx):
                u, i = int(users[rec]), int(items[rec])
                neg = negatives[u]
                if neg.size == 0:
                    continue
                for t in range(m):
                    r = min(int(math.floor(draws[row, t] * neg.size)), neg.size - 1)
                    pairs.append((u, i, int(neg[r])))
            gU = np.zeros_like(p.U)
            gV = np.zeros_like(p.V)
            coefs = []
            for u, i, j in pairs:
                x = float(np.sum(p.U[u] * (p.V[i] - p.V[j])))
                # numpy's exp, since libm's can differ in the last bit
                e = float(np.exp(-abs(x)))
                s = e / (1.0 + e) if x >= 0 else 1.0 / (1.0 + e)
                coefs.append(s)
                gU[u] += s * (p.V[i] - p.V[j])
            for (u, i, j), s in zip(pairs, coefs):
                gV[i] += s * p.U[u]
            for (u, i, j), s in zip(pairs, coefs):
                gV[j] += -(s * p.U[u])
            touched_u = sorted({u for u, _, _ in pairs})
            touched_i = sorted({i for _, i, _ in pairs} | {j for _, _, j in pairs})
            if cfg.reg_lambda:
                gU[touched_u] -= cfg.reg_lambda * p.U[touched_u]
                gV[touched_i] -= cfg.reg_lambda * p.V[touched_i]
            p.U[...] += cfg.learning_rate * gU
            p.V[...] += cfg.learning_rate * gV
        snapshots.append(p.copy())
    return snapshots
