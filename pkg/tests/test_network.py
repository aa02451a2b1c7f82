import itertools

import numpy as np
import pytest

import socsamp as ss
from socsamp.network import step_mean_matrix

from oracles import random_doubly_stochastic, strongly_connected_bruteforce


def test_validate_identity_and_uniform():
    for n in (1, 2, 5):
        assert ss.validate_doubly_stochastic(np.eye(n))
        assert ss.validate_doubly_stochastic(ss.metropolis_complete(n))


def test_validate_rejects_bad_column_sums():
    assert not ss.validate_doubly_stochastic(np.array([[0.9, 0.1], [0.2, 0.8]]))


def test_validate_rejects_negative_entries():
    assert not ss.validate_doubly_stochastic(np.array([[1.5, -0.5], [-0.5, 1.5]]))


def test_metropolis_complete_small():
    np.testing.assert_allclose(ss.metropolis_complete(2), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(ss.metropolis_complete(1), [[1.0]])


def test_metropolis_complete_50():
    w = ss.metropolis_complete(50)
    np.testing.assert_allclose(w, 0.02)
    assert ss.validate_doubly_stochastic(w)


def test_metropolis_complete_rejects_nonpositive():
    with pytest.raises(ValueError):
        ss.metropolis_complete(0)


def test_fixed_model_constant():
    model = ss.fixed_model(np.eye(2))
    for k in range(5):
        np.testing.assert_array_equal(
            ss.sample_weight_matrix(model, k), np.eye(2)
        )
    np.testing.assert_array_equal(ss.mean_matrix(model), np.eye(2))


IID_MEAN = np.array([[0.75, 0.25], [0.25, 0.75]])


def test_iid_model_mean_matrix_exact():
    model = ss.iid_model([np.eye(2), ss.metropolis_complete(2)], [0.5, 0.5])
    np.testing.assert_allclose(ss.mean_matrix(model), IID_MEAN)


def test_iid_model_empirical_mean():
    # entry standard deviation is 0.25, so 3 standard errors over 1e5 draws
    model = ss.iid_model([np.eye(2), ss.metropolis_complete(2)], [0.5, 0.5])
    rng = ss.substream(2024, 5)
    total = np.zeros((2, 2))
    n_draws = 100_000
    for k in range(n_draws):
        total += ss.sample_weight_matrix(model, k, rng)
    se = 0.25 / np.sqrt(n_draws)
    assert np.abs(total / n_draws - IID_MEAN).max() <= 3 * se


def test_birkhoff_always_doubly_stochastic():
    model = ss.birkhoff_model(3, (0.4, 0.3, 0.3))
    rng = ss.substream(99, 1)
    for k in range(10_000):
        assert ss.validate_doubly_stochastic(ss.sample_weight_matrix(model, k, rng))


def test_birkhoff_mean_matrix():
    model = ss.birkhoff_model(4, (0.5, 0.25, 0.25))
    expected = 0.5 * np.eye(4) + 0.5 * ss.metropolis_complete(4)
    np.testing.assert_allclose(ss.mean_matrix(model), expected)


def test_birkhoff_empirical_mean_matches_analytic():
    model = ss.birkhoff_model(3, (0.2, 0.5, 0.3))
    rng = ss.substream(4321, 8)
    n_draws = 100_000
    total = np.zeros((3, 3))
    for k in range(n_draws):
        total += ss.sample_weight_matrix(model, k, rng)
    # each permutation entry is Bernoulli(1/3) scaled by its coefficient
    se = np.sqrt((0.5**2 + 0.3**2) * (1 / 3) * (2 / 3) / n_draws)
    assert np.abs(total / n_draws - ss.mean_matrix(model)).max() <= 4 * se


def test_switching_model_mean_and_steps():
    wa, wb = np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])
    model = ss.switching_model([wa, wb], window=1)
    np.testing.assert_allclose(ss.mean_matrix(model), (wa + wb) / 2)
    np.testing.assert_array_equal(ss.sample_weight_matrix(model, 0), wa)
    np.testing.assert_array_equal(ss.sample_weight_matrix(model, 1), wb)
    np.testing.assert_array_equal(ss.sample_weight_matrix(model, 2), wa)
    np.testing.assert_array_equal(step_mean_matrix(model, 1), wb)


def test_empty_support_rejected():
    with pytest.raises(ValueError, match="empty support"):
        ss.WeightMatrixModel("fixed", 2, support=())


def test_non_doubly_stochastic_support_rejected():
    with pytest.raises(ValueError, match="A2"):
        ss.fixed_model(np.array([[0.9, 0.1], [0.2, 0.8]]))


def test_tau_bound_enforced():
    w = np.array([[1 - 1e-8, 1e-8], [1e-8, 1 - 1e-8]])
    with pytest.raises(ValueError, match="tau"):
        ss.fixed_model(w, tau=1e-6)
    ss.fixed_model(w, tau=1e-9)  # loose bound accepts it


def test_column_stochasticity_identities():
    rng = np.random.default_rng(3)
    model = ss.birkhoff_model(4, (0.25, 0.5, 0.25))
    wbar = ss.mean_matrix(model)
    stream = ss.substream(5, 0)
    ones = np.ones(4)
    for k in range(200):
        w = ss.sample_weight_matrix(model, k, stream)
        assert np.abs(ones @ (w - np.eye(4))).max() <= 1e-12
        assert np.abs(ones @ (w - wbar)).max() <= 1e-12


def test_strongly_connected_complete():
    for n in (1, 2, 4, 7):
        assert ss.strongly_connected(ss.topology(ss.metropolis_complete(n)))


def test_strongly_connected_one_way_edge():
    adj = np.array([[True, True], [False, True]])  # agent 1 never hears back
    assert not ss.strongly_connected(adj)


def test_strongly_connected_directed_ring():
    n = 5
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        adj[i, (i + 1) % n] = True
    assert ss.strongly_connected(adj)
    assert strongly_connected_bruteforce(adj)


def test_strongly_connected_matches_bruteforce_exhaustive_n3():
    n = 3
    off_diag = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in itertools.product([False, True], repeat=len(off_diag)):
        adj = np.eye(n, dtype=bool)
        for (i, j), bit in zip(off_diag, bits):
            adj[i, j] = bit
        assert ss.strongly_connected(adj) == strongly_connected_bruteforce(adj)


def test_strongly_connected_matches_bruteforce_random():
    rng = np.random.default_rng(11)
    for _ in range(500):
        n = int(rng.integers(2, 6))
        adj = rng.random((n, n)) < rng.uniform(0.1, 0.9)
        assert ss.strongly_connected(adj) == strongly_connected_bruteforce(adj)


def test_jointly_connected_fixed_uniform():
    model = ss.fixed_model(ss.metropolis_complete(3), window=0)
    assert ss.jointly_connected(model)


def test_jointly_connected_identity_never():
    for window in (0, 1, 5):
        model = ss.fixed_model(np.eye(3), window=window)
        assert not ss.jointly_connected(model)


def test_jointly_connected_needs_window():
    # neither the identity nor the swap connects alone at every offset, but
    # their union over any two consecutive steps does
    wa = np.eye(2)
    wb = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert not ss.jointly_connected(ss.switching_model([wa, wb], window=0))
    assert ss.jointly_connected(ss.switching_model([wa, wb], window=1))


def test_union_window_connected_single_direction_matrices():
    # row-stochastic one-way matrices: only together do they connect
    forward = np.array([[1.0, 0.0], [1.0, 0.0]])   # agent 2 listens to agent 1
    backward = np.array([[0.0, 1.0], [0.0, 1.0]])  # agent 1 listens to agent 2
    assert not ss.union_window_connected([forward, backward], window=0)
    assert ss.union_window_connected([forward, backward], window=1)


def test_spectral_gap_uniform():
    assert ss.spectral_gap(ss.metropolis_complete(4)) == pytest.approx(1.0, abs=1e-12)


def test_spectral_gap_identity():
    assert ss.spectral_gap(np.eye(3)) == pytest.approx(0.0, abs=1e-12)


def test_spectral_gap_two_agent():
    w = np.array([[0.75, 0.25], [0.25, 0.75]])
    assert ss.spectral_gap(w) == pytest.approx(0.5, abs=1e-12)


def test_spectral_gap_matches_dense_eigensolver():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(2, 8))
        w = random_doubly_stochastic(rng, n)
        sym = (w + w.T) / 2
        lam2 = np.sort(np.linalg.eigvals(sym).real)[-2]
        assert ss.spectral_gap(w) == pytest.approx(1 - lam2, abs=1e-10)


def test_sampled_matrices_always_doubly_stochastic(rng):
    for _ in range(30):
        n = int(rng.integers(2, 7))
        mats = [random_doubly_stochastic(rng, n) for _ in range(2)]
        model = ss.iid_model(mats, [0.3, 0.7], tau=1e-9)
        stream = ss.substream(int(rng.integers(0, 2**62)), 1)
        for k in range(50):
            assert ss.validate_doubly_stochastic(
                ss.sample_weight_matrix(model, k, stream)
            )
