import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditlab.agents import (
    DEFAULT_BETA,
    DEFAULT_REG,
    AgentBank,
    RidgeAgent,
    get_posterior,
    greedy_propose,
    oracle_width,
    ucb_propose,
)
from banditlab.features import action_grid, enumerate_models


def _primal_mean(X, y, Q, reg):
    A = X.T @ X + reg**2 * np.eye(X.shape[1])
    return Q @ np.linalg.solve(A, X.T @ y)


@pytest.fixture(scope="module")
def grid_feats():
    mc = enumerate_models(3, 2, action_grid(64))
    return mc, mc.features(action_grid(64)).reshape(64, mc.n_models, 2)


def test_defaults():
    assert DEFAULT_REG == 0.1
    assert DEFAULT_BETA == 2.0


def test_empty_history_posterior():
    Q = np.array([[0.3, -0.4], [1.0, 0.0]])
    mu, sd = get_posterior(np.zeros((0, 2)), np.zeros(0), Q)
    np.testing.assert_array_equal(mu, 0.0)
    np.testing.assert_allclose(sd, [0.5, 1.0])
    mu2, sd2 = RidgeAgent().predict(Q, return_std=True)
    np.testing.assert_array_equal(mu2, mu)
    np.testing.assert_allclose(sd2, sd)


def test_single_observation_by_hand():
    x1, y1, reg = np.array([0.6, 0.8]), 0.7, 0.1
    Q = np.array([[0.2, -0.5], [0.6, 0.8]])
    mu, sd = get_posterior(x1[None], [y1], Q, reg)
    denom = x1 @ x1 + reg**2
    np.testing.assert_allclose(mu, Q @ x1 * y1 / denom, rtol=1e-13)
    var = np.einsum("ij,ij->i", Q, Q) - (Q @ x1) ** 2 / denom
    np.testing.assert_allclose(sd, np.sqrt(var), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 20))
def test_variance_shrinks_with_data(seed, s, t):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((t + 1, s))
    y = rng.standard_normal(t + 1)
    Q = rng.standard_normal((15, s))
    _, before = get_posterior(X[:t], y[:t], Q)
    _, after = get_posterior(X, y, Q)
    assert np.all(after <= before + 1e-9)
    assert np.all(before <= np.linalg.norm(Q, axis=1) + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 20))
def test_kernel_matches_primal(seed, s, t):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (t, s))
    y = rng.standard_normal(t)
    Q = rng.uniform(-1, 1, (10, s))
    mu, _ = get_posterior(X, y, Q, 0.1)
    np.testing.assert_allclose(mu, _primal_mean(X, y, Q, 0.1), atol=1e-8)
    agent = RidgeAgent(0.1)
    for row, target in zip(X, y):
        agent.partial_fit(row, target)
    np.testing.assert_allclose(agent.predict(Q), mu, atol=1e-10)
    np.testing.assert_allclose(agent.ridge_coef(), np.linalg.solve(
        X.T @ X + 0.01 * np.eye(s), X.T @ y), atol=1e-8)


def test_fit_equals_partial_fit():
    rng = np.random.default_rng(1)
    X, y = rng.standard_normal((6, 2)), rng.standard_normal(6)
    a = RidgeAgent().fit(X, y)
    b = RidgeAgent().partial_fit(X[:3], y[:3]).partial_fit(X[3:], y[3:])
    Q = rng.standard_normal((4, 2))
    for ra, rb in zip(a.predict(Q, return_std=True), b.predict(Q, return_std=True)):
        np.testing.assert_allclose(ra, rb, atol=1e-12)
    assert b.n_observations == 6


def test_proposals_at_t0(grid_feats):
    _, G = grid_feats
    F = G[:, 0]
    agent = RidgeAgent()
    assert greedy_propose(agent, F) == 0
    assert ucb_propose(agent, F) == int(np.argmax(np.linalg.norm(F, axis=1)))


def test_beta_zero_is_greedy(grid_feats):
    _, G = grid_feats
    rng = np.random.default_rng(4)
    F = G[:, 3]
    idx = rng.integers(len(F), size=5)
    agent = RidgeAgent().fit(F[idx], rng.standard_normal(5))
    assert ucb_propose(agent, F, beta=0.0) == greedy_propose(agent, F)
    # ucb value at its own choice dominates the greedy point
    mu, sd = agent.predict(F, return_std=True)
    u = mu + 2.0 * sd
    assert u[ucb_propose(agent, F)] >= u[greedy_propose(agent, F)]


def test_greedy_sign_on_odd_feature():
    grid = action_grid(64)
    mc = enumerate_models(1, 1, grid)
    j = mc.models.index((1,))
    F = mc.model_features(j, grid)
    x1 = 40  # positive action
    agent = RidgeAgent().fit(F[[x1]], [0.5])
    mu = agent.predict(F)
    dense = F[:, 0] * F[x1, 0] * 0.5 / (F[x1, 0] ** 2 + 0.01)
    np.testing.assert_allclose(mu, dense, atol=1e-14)
    pick = greedy_propose(agent, F)
    assert pick == int(np.argmax(dense))
    assert np.sign(grid[pick]) == np.sign(grid[x1])


def test_duplicate_observation_keeps_argmax():
    grid = action_grid(64)
    mc = enumerate_models(2, 2, grid)
    F = mc.model_features(1, grid)
    rng = np.random.default_rng(3)
    idx = rng.integers(64, size=4)
    y = rng.standard_normal(4)
    a = RidgeAgent().fit(F[idx], y)
    b = RidgeAgent().fit(F[np.r_[idx, idx[0]]], np.r_[y, y[0]])
    ma, mb = a.predict(F), b.predict(F)
    assert abs(ma.max() - ma[np.argmax(mb)]) < 1e-2


def test_determinism(grid_feats):
    _, G = grid_feats
    F = G[:, 2]
    a = RidgeAgent().fit(F[[1, 7]], [0.2, -0.1])
    assert ucb_propose(a, F) == ucb_propose(a, F)


def test_bank_matches_individual_agents(grid_feats):
    mc, G = grid_feats
    rng = np.random.default_rng(5)
    bank = AgentBank(G)
    idx = rng.integers(len(G), size=12)
    ys = rng.standard_normal(12)
    for i, y in zip(idx, ys):
        bank.add(int(i), float(y))
    mu, sd = bank.posterior()
    for j in range(mc.n_models):
        agent = RidgeAgent().fit(G[idx, j], ys)
        m, s = agent.predict(G[:, j], return_std=True)
        np.testing.assert_allclose(mu[j], m, atol=1e-10)
        np.testing.assert_allclose(sd[j], s, atol=1e-7)
        assert bank.proposals()[j] == ucb_propose(agent, G[:, j])
    np.testing.assert_allclose(bank.kernel, bank.kernel.transpose(0, 2, 1))


def test_bank_empty_and_policy(grid_feats):
    _, G = grid_feats
    bank = AgentBank(G, policy="greedy")
    np.testing.assert_array_equal(bank.proposals(), 0)
    with pytest.raises(ValueError):
        AgentBank(G, policy="thompson")


WIDTH = dict(delta=0.1, d=2, lambda_ridge=0.1, B=1.0, sigma=0.01, cmin=0.05, n_models=55)


def test_oracle_width_eventually_decreases():
    w = np.array([oracle_width(t, **WIDTH) for t in range(1, 10_001)])
    tail = w[100:]
    assert np.all(np.diff(tail) < 0)
    assert w[-1] < w[0]


def test_oracle_width_monotone_in_delta():
    kw = dict(WIDTH)
    kw.pop("delta")
    for t in (1, 10, 1000):
        assert oracle_width(t, 0.01, **kw) > oracle_width(t, 0.1, **kw)


def test_oracle_width_zero_noise_zero_norm():
    kw = dict(WIDTH, B=0.0, sigma=0.0)
    assert oracle_width(50, **kw) == 0.0


def test_oracle_width_invalid():
    with pytest.raises(ValueError):
        oracle_width(0, **WIDTH)
    with pytest.raises(ValueError):
        oracle_width(3, **dict(WIDTH, delta=1.5))
