import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfrec.spectral import build_laplacian, laplacian_from_incidence

from conftest import from_pairs, random_interactions
from spectral_oracles import dense_laplacian, difference_sum, difference_sum_dense

R2 = 1.0 / math.sqrt(2.0)


def test_two_vertices_one_hyperedge():
    L = laplacian_from_incidence(np.array([[1.0], [1.0]])).laplacian.toarray()
    np.testing.assert_allclose(L, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_path_hypergraph():
    H = np.array([[1, 0], [1, 1], [0, 1]])
    L = laplacian_from_incidence(H).laplacian.toarray()
    expected = [[0.5, -0.5 * R2, 0], [-0.5 * R2, 0.5, -0.5 * R2], [0, -0.5 * R2, 0.5]]
    np.testing.assert_allclose(L, expected, atol=1e-15)


def test_isolated_vertex_is_zero():
    H = np.array([[1, 0], [1, 1], [0, 0]])
    lap = laplacian_from_incidence(H)
    L = lap.laplacian.toarray()
    assert not L[2].any() and not L[:, 2].any()
    assert np.isfinite(L).all()


def test_user_and_item_sides():
    R = from_pairs([(0, 0), (0, 1), (1, 1), (2, 2)])
    user = build_laplacian(R, "user")
    item = build_laplacian(R, "item")
    assert user.shape == (3, 3) and item.shape == (3, 3)
    np.testing.assert_allclose(user.laplacian.toarray(), dense_laplacian(R.to_csr().toarray()), atol=1e-14)
    np.testing.assert_allclose(item.laplacian.toarray(), dense_laplacian(R.to_csr().toarray().T), atol=1e-14)
    np.testing.assert_array_equal(user.hyperedge_degrees, [1, 2, 1])
    np.testing.assert_array_equal(user.vertex_degrees, [2, 1, 1])


def test_weights_validated():
    H = np.array([[1, 0], [1, 1]])
    with pytest.raises(ValueError):
        laplacian_from_incidence(H, weights=[1.0])
    with pytest.raises(ValueError):
        laplacian_from_incidence(H, weights=[1.0, 0.0])
    with pytest.raises(ValueError):
        build_laplacian(from_pairs([(0, 0)]), "both")


def test_weighted_matches_oracle(rng):
    H = (rng.random((9, 6)) < 0.4).astype(float)
    w = rng.uniform(0.5, 3.0, size=6)
    L = laplacian_from_incidence(H, weights=w).laplacian.toarray()
    np.testing.assert_allclose(L, dense_laplacian(H, w), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(2, 30))
def test_invariants(seed, n, m):
    rng = np.random.default_rng(seed)
    R = random_interactions(rng, n, m, rng.uniform(0.05, 0.5))
    if len(R) == 0:
        return
    for side in ("user", "item"):
        lap = build_laplacian(R, side)
        L = lap.laplacian
        assert abs(L - L.T).max() == 0
        vals = np.linalg.eigvalsh(L.toarray())
        assert vals.min() >= -1e-10 and vals.max() <= 1 + 1e-10
        d = lap.vertex_degrees
        null = L @ np.sqrt(d)
        assert np.abs(null[d > 0]).max() <= 1e-10
        zero = d == 0
        assert not L.toarray()[zero].any()


def test_difference_operator_identity(rng):
    # the neighbourhood double sum equals sqrt(D_ii) (L S)_i
    for _ in range(10):
        R = random_interactions(rng, 12, 9, 0.3, ensure_degree=True)
        H = R.to_csr().toarray()
        w = rng.uniform(0.5, 2.0, size=H.shape[1])
        S = rng.standard_normal(H.shape[0])
        LS = laplacian_from_incidence(H, weights=w).laplacian @ S
        total, d = difference_sum(H, w, S)
        np.testing.assert_allclose(LS, total / np.sqrt(d), atol=1e-10, rtol=0)
        np.testing.assert_allclose(np.sqrt(d) * LS, total, atol=1e-10, rtol=0)


def test_adjacency_relation(rng):
    R = random_interactions(rng, 10, 8, 0.3)
    lap = build_laplacian(R, "user")
    active = (lap.vertex_degrees > 0).astype(float)
    np.testing.assert_allclose(
        lap.adjacency().toarray(), np.diag(active) - lap.laplacian.toarray(), atol=0
    )


def test_difference_sum_forms_agree(rng):
    R = random_interactions(rng, 10, 7, 0.3)
    H = R.to_csr().toarray()
    S = rng.standard_normal(10)
    w = rng.uniform(0.5, 2.0, size=7)
    a, _ = difference_sum(H, w, S)
    b, _ = difference_sum_dense(H, w, S)
    np.testing.assert_allclose(a, b, atol=1e-12)
