import math

import numpy as np
import pytest
from scipy import stats
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from celldtx.agent import (
    CellDtxAgent,
    EpsilonSchedule,
    ReplayBuffer,
    fit_normalizers,
    probe_q,
    select_action,
    train_step,
)
from celldtx.neural import AdamState, Mlp, forward, init


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(capacity=3, n_features=2)
    for i in range(5):
        buf.append([i, -i], i, float(i))
    assert len(buf) == 3 and buf.total_added == 5
    assert [e.action for e in buf] == [2, 3, 4]
    assert np.array_equal(buf.states()[:, 0], [2, 3, 4])
    s, a, r = buf.get([0, 2])
    assert list(a) == [2, 4] and list(r) == [2.0, 4.0]


def test_buffer_rejects_zero_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_epsilon_schedule():
    eps = EpsilonSchedule()
    assert eps(0) == pytest.approx(0.9)
    assert eps(50) == pytest.approx(0.05 + 0.85 * math.exp(-1))
    assert eps(50) == pytest.approx(0.3627, abs=1e-4)
    assert eps(10_000) == pytest.approx(0.05)
    vals = [eps(t) for t in range(500)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_fit_normalizers_example():
    buf = ReplayBuffer(10, 8)
    buf.append([1, 7, 3, 5, 2, 6, 0, 8], 0, 0.0)
    buf.append([8, 2, 6, 4, 5, 1, 7, 3], 1, 0.0)
    assert np.array_equal(fit_normalizers(buf, 2), [8, 7, 6, 5, 5, 6, 7, 8])


def test_fit_normalizers_zero_feature_and_threshold():
    buf = ReplayBuffer(10, 3)
    buf.append([0, 2, 0], 0, 0.0)
    buf.append([0, 4, 1], 0, 0.0)
    assert np.array_equal(fit_normalizers(buf, 2), [1, 4, 1])
    with pytest.raises(ValueError):
        fit_normalizers(buf, 3)


def test_select_action_uniform_under_full_exploration():
    rng = np.random.default_rng(0)
    net = init(rng, [8, 4, 6])
    counts = np.bincount(
        [select_action(net, np.ones(8), np.ones(8), 1.0, rng) for _ in range(10_000)], minlength=6)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_select_action_greedy():
    net = Mlp([np.zeros((8, 5))], [np.array([0.1, 0.2, 0.3, 0.9, 0.4])])
    rng = np.random.default_rng(0)
    assert select_action(net, np.ones(8), np.ones(8), 0.0, rng) == 3
    flat = Mlp([np.zeros((8, 5))], [np.zeros(5)])
    assert select_action(flat, np.ones(8), np.ones(8), 0.0, rng) == 0


def test_targets_are_stored_rewards():
    # one training step with lr=0 equals a hand evaluation of the loss on the stored reward
    rng = np.random.default_rng(1)
    net = init(rng, [8, 6, 4])
    buf = ReplayBuffer(10, 8)
    s = rng.uniform(size=8)
    buf.append(s, 2, -0.4)
    adam = AdamState.for_net(net, lr=0.0)
    loss = train_step(net, adam, buf, 4, rng)
    d = forward(net, s)[2] + 0.4
    expect = 0.5 * d * d if abs(d) < 1 else abs(d) - 0.5
    assert loss == pytest.approx(expect)


def small_agent(**kw):
    base = dict(n_actions=4, hidden_layer_sizes=(16,), batch_size=8, normalizer_threshold=8,
                probe_size=4, random_state=0)
    base.update(kw)
    return CellDtxAgent(**base)


def test_single_state_bandit_converges():
    agent = small_agent(n_actions=3, learning_rate=1e-2)
    s = np.ones((1, 8))
    true = np.array([-0.2, -0.5, -0.9])
    for t in range(3000):
        a = t % 3
        agent.partial_fit(s, [a], [true[a]])
    assert np.allclose(agent.predict_q(s)[0], true, atol=1e-3)
    assert agent.predict(s)[0] == 0


def test_noisy_rewards_converge_to_sample_mean():
    rng = np.random.default_rng(5)
    agent = small_agent(n_actions=2, learning_rate=3e-3, buffer_capacity=400, batch_size=64,
                        normalizer_threshold=400)
    s = np.ones((1, 8))
    rewards = {0: rng.normal(-0.3, 0.05, 200), 1: rng.normal(-0.6, 0.05, 200)}
    X = np.repeat(s, 400, axis=0)
    acts = np.array([0, 1] * 200)
    rs = np.empty(400)
    rs[0::2], rs[1::2] = rewards[0], rewards[1]
    agent.partial_fit(X, acts, rs)
    for _ in range(10):
        agent._train_once()
        for _ in range(299):
            agent._train_once()
    q = agent.predict_q(s)[0]
    # |residuals| < 1 so the loss is quadratic and the optimum is the sample mean
    assert q[0] == pytest.approx(rewards[0].mean(), abs=0.01)
    assert q[1] == pytest.approx(rewards[1].mean(), abs=0.01)


def test_threshold_gates_training_and_probe_log():
    agent = small_agent(probe_every=10)
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(5, 8))
    agent.partial_fit(X, [0] * 5, [-0.1] * 5)
    assert not agent.is_ready and agent.n_steps_ == 0
    with pytest.raises(NotFittedError):
        agent.predict(X)
    # exploring before readiness is uniform and does not need a network
    assert set(agent.select_actions(np.ones((200, 8)), 0.0, rng)) == {0, 1, 2, 3}
    agent.partial_fit(X, [1] * 5, [-0.2] * 5)
    assert agent.is_ready and agent.n_steps_ == 5
    assert np.array_equal(agent.normalizers_, np.vstack([X, X]).max(axis=0))
    for _ in range(25):
        agent.partial_fit(X[:1], [2], [-0.3])
    assert agent.n_steps_ == 30
    assert [row[0] for row in agent.q_log_] == [10, 20, 30]
    assert len(agent.q_log_) == agent.n_steps_ // 10
    step, q, _ = agent.q_log_[-1]
    assert q == pytest.approx(probe_q(agent.net_, agent.normalizers_, agent.probe_states_))
    frozen = agent.normalizers_.copy()
    agent.partial_fit(100 * X, [0] * 5, [0.0] * 5)
    assert np.array_equal(agent.normalizers_, frozen)


def test_partial_fit_validation():
    agent = small_agent()
    with pytest.raises(ValueError):
        agent.partial_fit(np.ones((2, 8)), [0, 4], [0, 0])
    with pytest.raises(ValueError):
        agent.partial_fit(np.ones((2, 8)), [0], [0, 0])
    agent.partial_fit(np.ones((2, 8)), [0, 1], [0, 0])
    with pytest.raises(ValueError):
        agent.partial_fit(np.ones((2, 7)), [0, 1], [0, 0])


def test_seeded_agents_identical_and_clonable():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(40, 8))
    a = rng.integers(0, 4, 40)
    r = -rng.uniform(size=40)
    one = small_agent().fit(X, a, r)
    two = clone(one).fit(X, a, r)
    assert all(np.array_equal(p, q) for p, q in zip(one.net_.params(), two.net_.params()))
    assert one.q_log_ == two.q_log_
    assert clone(one).get_params() == one.get_params()
