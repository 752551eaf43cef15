import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditlab.agents import get_posterior
from banditlab.alexp import (
    ALExp,
    exp_weights_update,
    mixture_density,
    sample_index,
    schedule_eta,
    schedule_gamma,
)
from banditlab.environment import SyntheticEnv, make_env, rng_stream
from banditlab.features import action_grid, enumerate_models
from banditlab.grouplasso import LassoSchedule, solve


def test_gamma_examples():
    assert schedule_gamma(1, 16) == 0.5
    assert schedule_gamma(0, 7) == 0.0
    assert schedule_gamma(10, 1) == 1.0
    with pytest.raises(ValueError):
        schedule_gamma(-1, 1)


def test_eta_examples():
    assert schedule_eta(2, 4) == 1.0
    etas = [schedule_eta(10, t) for t in range(1, 50)]
    assert all(a >= b for a, b in zip(etas, etas[1:]))
    # clipping kicks in once the bound exceeds 1/eta
    assert schedule_eta(10, 1, cap=0.05) == 10
    assert schedule_eta(10, 1, cap=0.5) == 2.0


def test_exp_weights_examples():
    np.testing.assert_allclose(exp_weights_update(np.full(4, 3.2), 1.7), 0.25, atol=1e-15)
    e = math.e
    np.testing.assert_allclose(exp_weights_update([1.0, 0.0], 1.0), [e / (1 + e), 1 / (1 + e)],
                               rtol=1e-14)
    q = exp_weights_update([1.0, 0.0], 1.0)
    assert q[0] == pytest.approx(0.73106, abs=1e-5)
    # extreme values stay finite
    q = exp_weights_update([1e6, 0.0, -1e6], 1.0)
    np.testing.assert_allclose(q, [1.0, 0.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(0, 5), st.floats(-100, 100))
def test_exp_weights_simplex_and_shift(cum, eta, c):
    q = exp_weights_update(cum, eta)
    assert np.all(q >= 0)
    assert abs(q.sum() - 1) < 1e-12
    np.testing.assert_allclose(exp_weights_update(np.asarray(cum) + c, eta), q, atol=1e-12)


def test_sample_index_inverse_cdf():
    q = np.array([0.2, 0.0, 0.5, 0.3])
    assert sample_index(q, 0.0) == 0
    assert sample_index(q, 0.19) == 0
    assert sample_index(q, 0.2) == 2
    assert sample_index(q, 0.71) == 3
    assert sample_index(q, 0.999999) == 3


def test_mixture_density():
    q = np.array([0.5, 0.3, 0.2])
    dens = mixture_density(q, [1, 4, 6], 0.1, 8)
    assert dens.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(mixture_density(q, [1, 1, 2], 1.0, 8), 1 / 8)
    np.testing.assert_allclose(mixture_density(q, [1, 4, 6], 0.0, 8)[[1, 4, 6]], q)
    assert mixture_density(q, [1, 1, 6], 0.0, 8)[1] == pytest.approx(0.8)


def _tiny_env(seed=1, sigma=0.05):
    grid = action_grid(16)
    mc = enumerate_models(1, 1, grid)  # models (0,) and (1,)
    return SyntheticEnv(mc, 1, np.array([0.8]), noise_sigma=sigma, seed=seed, grid=grid)


def test_hand_simulation_three_steps():
    # independent replay of the loop with logged random draws
    algo = ALExp(gamma0=0.5, eta0=3.0, lambda0=0.01, tol=1e-12, max_iter=100_000)
    run = algo.start(_tiny_env()).advance(3)
    trace = run.trace()
    # seed 1 plays agent 0, agent 1, then explores
    np.testing.assert_array_equal(trace.selected, [0, 1, -1])

    env = _tiny_env()
    mc, grid = env.mc, env.grid
    F = mc.features(grid)
    per_model = [F[:, [j]] for j in range(2)]
    rng = rng_stream(env.seed, "alexp")
    sched = LassoSchedule(env.noise_sigma, 2, 1, 0.1, 0.01)
    q = np.array([0.5, 0.5])
    cum = np.zeros(2)
    bound = 0.0
    hist, ys = [], []

    def props():
        out = []
        for Fj in per_model:
            mu, sd = get_posterior(Fj[hist], ys, Fj, 0.1)
            out.append(int(np.argmax(mu + 2.0 * sd)))
        return out

    proposals = props()
    for t in (1, 2, 3):
        np.testing.assert_allclose(trace.q_history[t - 1], q, atol=1e-9)
        gamma = 0.5 * t**-0.25
        if rng.random() < gamma:
            idx, j = int(rng.integers(16)), -1
        else:
            u = rng.random()
            j = 0 if u < q[0] else 1
            idx = proposals[j]
        assert trace.explored[t - 1] == (j == -1)
        assert trace.selected[t - 1] == j
        assert trace.actions[t - 1] == grid[idx]
        y = env.observe(grid[idx])
        assert trace.rewards[t - 1] == y
        assert trace.instant[t - 1] == pytest.approx(env.best_value - env.grid_values[idx], abs=1e-15)
        hist.append(idx)
        ys.append(y)
        theta = solve(F[hist], np.array(ys), sched(t), 2, tol=1e-12, max_iter=100_000).theta_hat
        proposals = props()
        rhat = np.array([F[proposals[k]] @ theta for k in range(2)])
        cum += rhat
        bound = max(bound, np.abs(rhat).max())
        eta = 3.0 / math.sqrt(t)
        if bound > 0:
            eta = min(eta, 1 / bound)
        w = np.exp(eta * (cum - cum.max()))
        q = w / w.sum()
    np.testing.assert_allclose(run.state.q, q, atol=1e-9)
    assert abs(q[0] - 0.5) > 0.1


def test_first_step_explores_when_gamma_one():
    env = make_env(enumerate_models(10, 2), seed=0)
    for seed in range(5):
        env = make_env(env.mc, seed=seed)
        trace = ALExp(gamma0=1.0).run(env, 1)
        assert trace.explored[0] and trace.selected[0] == -1


def test_single_model_class():
    grid = action_grid(32)
    mc = enumerate_models(1, 2, grid)
    assert mc.n_models == 1
    env = SyntheticEnv(mc, 0, np.array([0.6, 0.8]), noise_sigma=0.01, seed=1, grid=grid)
    trace = ALExp().run(env, 20)
    np.testing.assert_array_equal(trace.q_history, 1.0)
    assert set(trace.selected[~trace.explored]) <= {0}


@pytest.fixture(scope="module")
def easy_env():
    return make_env(enumerate_models(10, 2), seed=4)


def test_resume_equals_uninterrupted(easy_env):
    full = ALExp().run(make_env(easy_env.mc, seed=4), 30)
    for k in (0, 1, 13, 29, 30):
        run = ALExp().start(make_env(easy_env.mc, seed=4))
        tr = run.advance(k).advance(30 - k).trace()
        np.testing.assert_array_equal(tr.actions, full.actions)
        np.testing.assert_array_equal(tr.rewards, full.rewards)
        np.testing.assert_array_equal(tr.q_history, full.q_history)


def test_state_invariants_each_step(easy_env):
    run = ALExp().start(make_env(easy_env.mc, seed=4))
    M = easy_env.mc.n_models
    for _ in range(25):
        before = run.state.cum_rhat.copy()
        run.step()
        st_ = run.state
        assert np.all(st_.q >= 0) and abs(st_.q.sum() - 1) < 1e-12
        np.testing.assert_allclose(st_.q, exp_weights_update(st_.cum_rhat, st_.eta), atol=1e-15)
        # every agent is credited, visited or not
        np.testing.assert_allclose(st_.cum_rhat - before, run.last_rhat, atol=1e-15)
        assert run.last_rhat.shape == (M,)
        assert st_.eta * st_.rhat_bound <= 1 + 1e-12
    assert len(run.state.visited) < M
    assert not np.allclose(run.state.q, 1 / M)


def test_trace_shapes(easy_env):
    tr = ALExp().run(make_env(easy_env.mc, seed=4), 10)
    assert tr.n == 10
    assert tr.q_history.shape == (10, easy_env.mc.n_models)
    np.testing.assert_allclose(tr.q_history[0], 1 / easy_env.mc.n_models)
    assert np.all(np.diff(tr.cumulative) >= 0)
    assert tr.visited_counts()[0] <= 1
    assert len(tr.q_hash(3)) == 12


def _ew_bound_holds(rhat, etas):
    """Check the anytime exponential-weights inequality on every prefix and arm."""
    n, M = rhat.shape
    cum = np.zeros(M)
    lhs_alg = 0.0
    quad = 0.0
    for t in range(n):
        q = exp_weights_update(cum, etas[t])
        lhs_alg += q @ rhat[t]
        quad += etas[t] * (q @ rhat[t] ** 2)
        cum += rhat[t]
        slack = math.log(M) / etas[t] + quad - (cum - lhs_alg)
        if slack.min() < -1e-9:
            return False
    return True


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(1, 200))
def test_exp_weights_regret_bound(seed, M, n):
    rng = np.random.default_rng(seed)
    bound = rng.uniform(0.1, 5.0)
    rhat = rng.uniform(-bound, bound, (n, M))
    etas = np.minimum(rng.uniform(0.1, 10) / np.sqrt(np.arange(1, n + 1)), 1 / bound)
    assert _ew_bound_holds(rhat, etas)
