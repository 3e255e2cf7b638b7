import math

import numpy as np
import pytest

from scfrec.model import ModelParams, init_params
from scfrec.preference_sets import (
    PreferenceSets,
    TrainingPair,
    build_preference_sets,
    positive_sets,
    sample_pair_batch,
)
from scfrec.spectral import ClusterAssignment
from scfrec.training import (
    TrainConfig,
    TrainingDivergedError,
    all_pairs,
    batch_gradient,
    log_sigmoid,
    pair_gradient,
    pointwise_loss,
    pointwise_samples,
    popularity_model,
    rank_most_popular,
    splr_gradient,
    splr_objective,
    train,
    train_pointwise,
)

from conftest import from_pairs, random_interactions
from training_oracles import (
    finite_difference,
    gradient_instance,
    loop_objective,
    reference_bpr,
    relative_error,
)

SIGMA_MINUS_1 = 0.2689414213699951
LOG_SIGMA_1 = -0.31326168751822286


def mf(U, V):
    U, V = np.atleast_2d(U), np.atleast_2d(V)
    N, M = U.shape[0], V.shape[0]
    return ModelParams(U, V, np.zeros((N, 0)), np.zeros((M, 0)), np.zeros((N, 0)), np.zeros((M, 0)))


def one_pair_sets():
    # one user, item 0 positive, item 1 negative
    return PreferenceSets(2, np.array([0, 1]), np.array([0]), np.array([0, 0]), np.zeros(0, int))


def test_log_sigmoid_stable():
    assert log_sigmoid(1.0) == pytest.approx(LOG_SIGMA_1, abs=1e-15)
    assert log_sigmoid(-800.0) == -800.0
    assert log_sigmoid(800.0) == 0.0
    assert np.isfinite(log_sigmoid(np.array([-1e5, 1e5]))).all()


def test_objective_hand_case():
    p = mf([[1.0]], [[2.0], [1.0]])
    assert splr_objective(p, one_pair_sets(), 0.0, 0.0, 0.0) == pytest.approx(LOG_SIGMA_1, abs=1e-12)


def test_objective_zero_params(rng):
    params, sets, _ = gradient_instance(3)
    zero = params.copy()
    for a in zero.learned().values():
        a[...] = 0.0
    npairs = len(all_pairs(sets, 0.5, 0.5))
    # weighted count: weights 1, eta1, eta2 per class
    weighted = float(all_pairs(sets, 0.5, 0.5).weights.sum())
    assert npairs > 0
    assert splr_objective(zero, sets, 0.5, 0.5, 0.0) == pytest.approx(weighted * math.log(0.5), rel=1e-12)
    plain = len(all_pairs(sets, 0.0, 0.0))
    assert splr_objective(zero, sets, 0.0, 0.0, 0.0) == pytest.approx(plain * math.log(0.5), rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_objective_matches_loop_oracle(seed):
    params, sets, _ = gradient_instance(seed)
    for eta in ((0.0, 0.0), (0.3, 0.7)):
        want = loop_objective(params, sets, *eta, 0.2)
        assert splr_objective(params, sets, *eta, 0.2) == pytest.approx(want, rel=1e-12)


def test_pair_gradient_hand_case():
    p = mf([[1.0]], [[2.0], [1.0]])
    g = pair_gradient(p, TrainingPair(0, 0, 1, 1.0), 0.0)
    assert g["U"][0][0] == pytest.approx(SIGMA_MINUS_1, abs=1e-12)
    assert g["V"][0][0] == pytest.approx(SIGMA_MINUS_1, abs=1e-12)
    assert g["V"][1][0] == pytest.approx(-SIGMA_MINUS_1, abs=1e-12)
    g = pair_gradient(p, TrainingPair(0, 0, 1, 1.0), 0.1)
    assert g["U"][0][0] == pytest.approx(SIGMA_MINUS_1 - 0.1, abs=1e-12)


def test_pair_gradient_same_item_is_pure_regularization(rng):
    params, _, _ = gradient_instance(1)
    g = pair_gradient(params, TrainingPair(2, 3, 3, 1.0), 0.25)
    np.testing.assert_allclose(g["U"][2], -0.25 * params.U[2], atol=1e-15)
    np.testing.assert_allclose(g["P0"][2], -0.25 * params.P[2], atol=1e-15)
    np.testing.assert_allclose(g["V"][3], -0.25 * params.V[3], atol=1e-15)
    np.testing.assert_allclose(g["Q0"][3], -0.25 * params.Q[3], atol=1e-15)


def test_pair_gradient_spectral_rows(rng):
    params, _, _ = gradient_instance(4)
    u, i, j, w = 1, 0, 5, 0.3
    g = pair_gradient(params, TrainingPair(u, i, j, w), 0.0)
    s = 1.0 / (1.0 + math.exp(params.score(u, i) - params.score(u, j)))
    np.testing.assert_allclose(g["P0"][u], w * s * (params.F[i] - params.F[j]), atol=1e-14)
    np.testing.assert_allclose(g["Q0"][i], w * s * params.E[u], atol=1e-14)
    np.testing.assert_allclose(g["Q0"][j], -w * s * params.E[u], atol=1e-14)


def test_regularization_once_per_touched_row():
    p = mf([[1.0], [0.5]], [[2.0], [1.0], [3.0]])
    from scfrec.preference_sets import PairBatch

    # the same pair twice: data terms double, regularization does not
    batch = PairBatch(np.array([0, 0]), np.array([0, 0]), np.array([1, 1]), np.ones(2))
    g = batch_gradient(p, batch, 0.1)
    assert g["U"][0, 0] == pytest.approx(2 * SIGMA_MINUS_1 - 0.1, abs=1e-12)
    assert g["U"][1, 0] == 0.0
    assert g["V"][2, 0] == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_full_gradient_matches_finite_differences(seed):
    params, sets, _ = gradient_instance(seed)
    analytic = splr_gradient(params, sets, 0.4, 0.6, 0.3)
    numeric = finite_difference(lambda p: splr_objective(p, sets, 0.4, 0.6, 0.3), params, 1e-5)
    for name in analytic:
        assert relative_error(analytic[name], numeric[name]).max() <= 1e-4


def test_full_batch_step_ascends():
    params, sets, _ = gradient_instance(7)
    before = splr_objective(params, sets, 0.2, 0.2, 0.1)
    g = splr_gradient(params, sets, 0.2, 0.2, 0.1)
    for name, a in params.learned().items():
        a += 1e-3 * g[name]
    assert splr_objective(params, sets, 0.2, 0.2, 0.1) >= before


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(sampling_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(eta1=-1)


def toy_split(seed=0, N=5, M=5):
    R = random_interactions(np.random.default_rng(seed), N, M, 0.4, ensure_degree=True)
    return R


def test_bpr_matches_reference_loop():
    R = random_interactions(np.random.default_rng(2), 12, 10, 0.3, ensure_degree=True)
    cfg = TrainConfig(learning_rate=0.1, batch_size=7, reg_lambda=0.05, eta1=0, eta2=0,
                      sampling_rate=3, max_iters=5, seed=11, n_factors=4, init_scale=0.3)
    init = init_params(R.n_users, R.n_items, 4, seed=11, scale=0.3)
    ref = reference_bpr(init, R, cfg)
    seen = []

    def hook(epoch, params):
        seen.append(params.copy())

    train("mf", R, positive_sets(R), None, cfg, eval_hook=hook, params=init)
    assert len(seen) == len(ref) == 5
    for got, want in zip(seen, ref):
        assert got.U.tobytes() == want.U.tobytes()
        assert got.V.tobytes() == want.V.tobytes()


def test_zero_eta_ignores_potential_sets():
    R = random_interactions(np.random.default_rng(3), 12, 10, 0.3, ensure_degree=True)
    sets = build_preference_sets(R, None, ClusterAssignment(np.arange(10) % 2, 2, np.zeros((0, 0)), "item"))
    cfg = TrainConfig(eta1=0, eta2=0, max_iters=3, batch_size=8, n_factors=3, seed=4)
    a = train("mf", R, sets, None, cfg).final_params
    b = train("mf", R, positive_sets(R), None, cfg).final_params
    assert a.U.tobytes() == b.U.tobytes() and a.V.tobytes() == b.V.tobytes()


def test_zero_learning_rate_keeps_params():
    R = toy_split()
    cfg = TrainConfig(learning_rate=0.0, max_iters=4, n_factors=3, batch_size=4)
    out = train("mf", R, positive_sets(R), None, cfg)
    init = init_params(R.n_users, R.n_items, 3, seed=0)
    assert out.final_params.U.tobytes() == init.U.tobytes()
    assert out.final_params.V.tobytes() == init.V.tobytes()
    pw = train_pointwise(R, cfg)
    assert pw.final_params.U.tobytes() == init.U.tobytes()


def test_objective_increases_on_toy():
    R = toy_split(5)
    ul = ClusterAssignment(np.array([0, 0, 1, 1, 1]), 2, np.zeros((0, 0)), "user")
    sets = build_preference_sets(R, ul, None)
    cfg = TrainConfig(learning_rate=0.05, reg_lambda=0.0, eta1=0.3, eta2=0.3, batch_size=4,
                      max_iters=50, n_factors=3, init_scale=0.1, seed=1)
    init = init_params(R.n_users, R.n_items, 3, seed=1, scale=0.1)
    out = train("mf", R, sets, None, cfg, params=init)
    before = splr_objective(init, sets, 0.3, 0.3, 0.0)
    after = splr_objective(out.final_params, sets, 0.3, 0.3, 0.0)
    assert after > before


def test_features_untouched_by_training():
    R = toy_split(1)
    E = np.random.default_rng(0).standard_normal((R.n_users, 2))
    F = np.random.default_rng(1).standard_normal((R.n_items, 2))
    cfg = TrainConfig(max_iters=3, n_factors=2, batch_size=4, eta1=0, eta2=0)
    out = train("scf", R, positive_sets(R), (E, F), cfg)
    np.testing.assert_array_equal(out.final_params.E, E)
    np.testing.assert_array_equal(out.final_params.F, F)
    assert np.abs(out.final_params.P).sum() > 0


def test_divergence_is_reported():
    R = toy_split(2)
    cfg = TrainConfig(learning_rate=1e306, max_iters=5, n_factors=2, batch_size=4, init_scale=1.0)
    with pytest.raises(TrainingDivergedError) as exc, np.errstate(all="ignore"):
        train("mf", R, positive_sets(R), None, cfg)
    assert exc.value.epoch == 1


def test_best_epoch_selection_and_history():
    R = toy_split(3)
    scores = {1: 0.1, 2: 0.5, 3: 0.2}
    snaps = {}

    def hook(epoch, params):
        snaps[epoch] = params.copy()
        return {"f1@5": scores[epoch], "ndcg@5": 0.0}

    cfg = TrainConfig(max_iters=3, n_factors=2, batch_size=4, eta1=0, eta2=0, learning_rate=0.5)
    out = train("mf", R, positive_sets(R), None, cfg, eval_hook=hook)
    assert out.best_epoch == 2
    assert out.params.U.tobytes() == snaps[2].U.tobytes()
    assert out.final_params.U.tobytes() == snaps[3].U.tobytes()
    assert out.history[0] == {"epoch": 1, "split": "valid", "metric": "f1@5", "value": 0.1}
    assert len(out.history) == 6


def test_training_deterministic():
    R = toy_split(4)
    sets = build_preference_sets(R, ClusterAssignment(np.zeros(5, int), 1, np.zeros((0, 0)), "user"), None)
    cfg = TrainConfig(max_iters=4, n_factors=3, batch_size=3)
    a = train("mf", R, sets, None, cfg).final_params
    b = train("mf", R, sets, None, cfg).final_params
    assert a.U.tobytes() == b.U.tobytes() and a.V.tobytes() == b.V.tobytes()


def test_unknown_kind():
    R = toy_split()
    with pytest.raises(ValueError):
        train("gbpr", R, positive_sets(R), None, TrainConfig())
    with pytest.raises(ValueError):
        train("scf", R, positive_sets(R), None, TrainConfig())


def test_pointwise_single_record_converges():
    R = from_pairs([(0, 0)])
    cfg = TrainConfig(learning_rate=0.1, reg_lambda=1e-4, max_iters=300, n_factors=2, init_scale=0.3)
    out = train_pointwise(R, cfg)
    assert abs(out.final_params.score(0, 0) - 1.0) <= 0.05


def test_pointwise_loss_decreases_first_epoch():
    R = random_interactions(np.random.default_rng(8), 20, 15, 0.3, ensure_degree=True)
    sets = positive_sets(R)
    su, si, st = pointwise_samples(sets, R.users, R.items, 5, np.random.default_rng(0))
    assert st.sum() == len(R) and st.size <= 6 * len(R)
    cfg = TrainConfig(learning_rate=0.01, reg_lambda=0.0, max_iters=1, n_factors=4, init_scale=0.5,
                      batch_size=len(R))
    init = init_params(R.n_users, R.n_items, 4, seed=0, scale=0.5)
    out = train_pointwise(R, cfg, params=init)
    assert pointwise_loss(out.final_params, su, si, st) < pointwise_loss(init, su, si, st)


def test_most_popular():
    R = from_pairs([(u, 0) for u in range(5)] + [(u, 1) for u in range(3)] + [(0, 2)], n_items=4)
    assert rank_most_popular(R) == [0, 1, 2]
    flat = from_pairs([(0, 2), (1, 0), (2, 1)])
    assert rank_most_popular(flat) == [0, 1, 2]
    empty = from_pairs(np.zeros((0, 2)), n_users=0, n_items=0)
    assert rank_most_popular(empty) == []
    assert popularity_model(R).scores(0).tolist() == [5.0, 3.0, 1.0, 0.0]


def test_sample_batch_weights_feed_gradient():
    R = toy_split(6)
    sets = build_preference_sets(R, ClusterAssignment(np.zeros(5, int), 1, np.zeros((0, 0)), "user"), None)
    batch = sample_pair_batch(sets, R.users, R.items, 2, 0.1, 0.2, np.random.default_rng(0))
    assert set(np.unique(batch.weights)) <= {0.1, 0.2, 1.0}
