"""Contextual-bandit DQN: the Q-network regresses the immediate reward of each action.

There is no bootstrapped target and no discount; every training target is
the reward stored with the experience.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted

from . import neural


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float


class ReplayBuffer:
    """Bounded FIFO of experiences backed by ring arrays."""

    def __init__(self, capacity: int = 10000, n_features: int = 8):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._states = np.zeros((capacity, n_features))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._start = 0
        self._size = 0
        self.total_added = 0

    def __len__(self):
        return self._size

    def append(self, state, action: int, reward: float) -> None:
        pos = (self._start + self._size) % self.capacity
        if self._size == self.capacity:
            self._start = (self._start + 1) % self.capacity
        else:
            self._size += 1
        self._states[pos] = state
        self._actions[pos] = action
        self._rewards[pos] = reward
        self.total_added += 1

    def extend(self, states, actions, rewards) -> None:
        for s, a, r in zip(states, actions, rewards):
            self.append(s, a, r)

    def _physical(self, idx):
        return (self._start + np.asarray(idx)) % self.capacity

    def get(self, idx):
        """States, actions, rewards at logical positions (0 = oldest)."""
        p = self._physical(idx)
        return self._states[p], self._actions[p], self._rewards[p]

    def states(self) -> np.ndarray:
        return self.get(np.arange(self._size))[0]

    def __iter__(self):
        s, a, r = self.get(np.arange(self._size))
        for i in range(self._size):
            yield Experience(s[i], int(a[i]), float(r[i]))


@dataclass(frozen=True)
class EpsilonSchedule:
    eps_start: float = 0.9
    eps_end: float = 0.05
    decay: float = 50.0

    def __call__(self, episode: float) -> float:
        return self.eps_end + (self.eps_start - self.eps_end) * math.exp(-episode / self.decay)


def fit_normalizers(buffer: ReplayBuffer, threshold: int = 0) -> np.ndarray:
    """Per-feature maximum over buffered states; all-zero features map to 1."""
    if len(buffer) < max(threshold, 1):
        raise ValueError(f"buffer holds {len(buffer)} experiences, need {threshold}")
    norm = buffer.states().max(axis=0)
    norm = np.where(norm > 0, norm, 1.0)
    return norm


def select_action(net, normalizers, state, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; argmax ties go to the lowest index."""
    n_actions = net.weights[-1].shape[1]
    if normalizers is None or rng.random() < eps:
        return int(rng.integers(n_actions))
    return int(np.argmax(neural.forward(net, state, normalizers)))


def train_step(net, adam, buffer, batch_size, rng, normalizers=None, beta=1.0) -> float:
    """Draw a batch without replacement, regress chosen outputs onto stored rewards."""
    n = len(buffer)
    idx = rng.choice(n, size=min(batch_size, n), replace=False)
    states, actions, rewards = buffer.get(idx)
    loss, grads = neural.backward(net, states, actions, rewards, normalizers, beta)
    neural.adam_step(net, grads, adam)
    return loss


def probe_q(net, normalizers, probe_states) -> float:
    """Mean over probe states of the largest predicted reward."""
    q = neural.forward(net, np.atleast_2d(probe_states), normalizers)
    return float(q.max(axis=1).mean())


class CellDtxAgent(BaseEstimator):
    """Epsilon-greedy contextual-bandit agent over a discrete DTX action set.

    ``partial_fit`` appends one batch of (state, action, reward) experiences
    and, once the buffer has reached ``normalizer_threshold`` entries, runs as
    many training steps as experiences were added.  Input normalizers are the
    per-feature buffer maxima at the moment the threshold is first reached and
    are never refitted.

    Parameters
    ----------
    n_actions : int
        Size of the action set (network output width).
    hidden_layer_sizes : tuple of int
    learning_rate : float
        Adam step size.
    batch_size : int
    buffer_capacity : int
    normalizer_threshold : int or None
        Buffer size that triggers normalizer fitting and training;
        ``None`` means ``10 * batch_size``.
    eps_start, eps_end, eps_decay : float
        Exploration probability ``eps_end + (eps_start - eps_end) * exp(-episode / eps_decay)``.
    huber_beta : float
        Smooth-L1 transition point.
    probe_size : int
        Number of buffered states frozen as the Q-convergence probe set.
    probe_every : int
        Training steps between convergence-log entries.
    random_state : int or None
        Seeds weight initialisation, batch sampling and the probe set.
    """

    def __init__(
        self,
        n_actions=36,
        hidden_layer_sizes=(128, 128),
        learning_rate=1e-3,
        batch_size=128,
        buffer_capacity=10000,
        normalizer_threshold=None,
        eps_start=0.9,
        eps_end=0.05,
        eps_decay=50.0,
        huber_beta=1.0,
        probe_size=64,
        probe_every=100,
        random_state=None,
    ):
        self.n_actions = n_actions
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.normalizer_threshold = normalizer_threshold
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay = eps_decay
        self.huber_beta = huber_beta
        self.probe_size = probe_size
        self.probe_every = probe_every
        self.random_state = random_state

    @property
    def threshold_(self) -> int:
        if self.normalizer_threshold is None:
            return 10 * self.batch_size
        return self.normalizer_threshold

    @property
    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.eps_start, self.eps_end, self.eps_decay)

    @property
    def is_ready(self) -> bool:
        """True once normalizers are fitted and greedy actions are defined."""
        return getattr(self, "normalizers_", None) is not None

    def _initialize(self, n_features):
        self.rng_ = np.random.default_rng(self.random_state)
        sizes = [n_features, *self.hidden_layer_sizes, self.n_actions]
        self.net_ = neural.init(self.rng_, sizes)
        self.adam_ = neural.AdamState.for_net(self.net_, lr=self.learning_rate)
        self.buffer_ = ReplayBuffer(self.buffer_capacity, n_features)
        self.normalizers_ = None
        self.probe_states_ = None
        self.n_features_in_ = n_features
        self.n_steps_ = 0
        self.q_log_ = []
        self._recent_losses = deque(maxlen=self.probe_every)

    def fit(self, X, actions, rewards):
        """Reset the agent and learn from a fixed batch of experiences."""
        for attr in ("net_", "normalizers_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X, actions, rewards)

    def partial_fit(self, X, actions, rewards):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        actions = np.asarray(actions, dtype=np.int64).ravel()
        rewards = np.asarray(rewards, dtype=float).ravel()
        if len(actions) != len(X) or len(rewards) != len(X):
            raise ValueError("X, actions and rewards must have equal length")
        if np.any(actions < 0) or np.any(actions >= self.n_actions):
            raise ValueError(f"actions must lie in [0, {self.n_actions})")
        if not hasattr(self, "net_"):
            self._initialize(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")

        self.buffer_.extend(X, actions, rewards)
        if self.normalizers_ is None:
            if len(self.buffer_) < self.threshold_:
                return self
            self.normalizers_ = fit_normalizers(self.buffer_, self.threshold_)
            k = min(self.probe_size, len(self.buffer_))
            pick = np.sort(self.rng_.choice(len(self.buffer_), size=k, replace=False))
            self.probe_states_ = self.buffer_.get(pick)[0].copy()
        for _ in range(len(X)):
            self._train_once()
        return self

    def _train_once(self):
        loss = train_step(
            self.net_, self.adam_, self.buffer_, self.batch_size, self.rng_,
            self.normalizers_, self.huber_beta,
        )
        self.n_steps_ += 1
        self._recent_losses.append(loss)
        if self.n_steps_ % self.probe_every == 0:
            self.q_log_.append((
                self.n_steps_,
                probe_q(self.net_, self.normalizers_, self.probe_states_),
                float(np.mean(self._recent_losses)),
            ))
        return loss

    def _check_ready(self):
        check_is_fitted(self, "net_")
        if self.normalizers_ is None:
            raise NotFittedError("normalizers are not fitted yet; keep exploring")

    def predict_q(self, X) -> np.ndarray:
        self._check_ready()
        X = check_array(X, dtype=np.float64)
        return neural.forward(self.net_, X, self.normalizers_)

    def predict(self, X) -> np.ndarray:
        """Greedy action index per row of ``X``."""
        return np.argmax(self.predict_q(X), axis=1)

    def epsilon(self, episode: int) -> float:
        return self.epsilon_schedule(episode)

    def select_actions(self, X, eps: float, rng: np.random.Generator) -> np.ndarray:
        """Epsilon-greedy action per row; pure exploration before normalizers exist."""
        X = check_array(X, dtype=np.float64)
        if not self.is_ready:
            return rng.integers(self.n_actions, size=len(X))
        return np.array([
            select_action(self.net_, self.normalizers_, x, eps, rng) for x in X
        ], dtype=np.int64)
