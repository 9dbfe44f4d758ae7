"""DQN / dueling DQN learner with experience replay and a target network.

Also holds the tabular Q-learning update and a value-iteration solver,
which the tests use as an oracle on small MDPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trldrive import neural


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity cyclic store; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.s = np.zeros((capacity, obs_dim))
        self.s_next = np.zeros((capacity, obs_dim))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def store(self, t: Transition) -> None:
        self.push(t.s, t.a, t.r, t.s_next, t.done)

    def push(self, s, a, r, s_next, done) -> None:
        k = self.cursor
        self.s[k] = s
        self.a[k] = a
        self.r[k] = r
        self.s_next[k] = s_next
        self.done[k] = done
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered(self) -> list[Transition]:
        """Contents from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        idx = [(start + i) % self.capacity for i in range(self.size)]
        return [Transition(self.s[k].copy(), int(self.a[k]), float(self.r[k]), self.s_next[k].copy(), bool(self.done[k])) for k in idx]

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform with replacement."""
        idx = rng.integers(0, self.size, size=batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    learning_rate: float = 5e-4
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.8  # of the planned episodes
    batch_size: int = 64
    target_sync_interval: int = 200
    buffer_capacity: int = 20000
    hidden: tuple[int, ...] = (128, 128)
    stream_hidden: tuple[int, ...] = (64,)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for e in (self.eps_start, self.eps_end):
            if not 0.0 <= e <= 1.0:
                raise ValueError("epsilon values must lie in [0, 1]")
        if not 0.0 <= self.eps_decay_fraction <= 1.0:
            raise ValueError("eps_decay_fraction must lie in [0, 1]")
        if self.batch_size < 1 or self.target_sync_interval < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size, target_sync_interval and buffer_capacity must be positive")

    def epsilon(self, episode: int, total_episodes: int) -> float:
        """Linear decay from eps_start to eps_end over the first fraction of episodes."""
        n = self.eps_decay_fraction * total_episodes
        if n <= 0:
            return self.eps_end
        frac = min(episode / n, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def td_targets(r, done, q_next_max, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, r + gamma * max_a' Q'(s', a') otherwise."""
    r = np.asarray(r, dtype=float)
    return np.where(done, r, r + gamma * np.asarray(q_next_max, dtype=float))


class QAgent:
    def __init__(self, obs_dim: int, n_actions: int, config: AgentConfig = AgentConfig(),
                 head: str = "dueling", seed: int = 0):
        self.config = config
        self.spec = neural.NetworkSpec.standard(obs_dim, n_actions, head, config.hidden, config.stream_hidden)
        self.eval_net = neural.init(self.spec, seed)
        self.target_net = self.eval_net.copy()
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dim)
        self.train_steps = 0

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def q_values(self, obs) -> np.ndarray:
        return neural.forward(self.eval_net, obs)

    def greedy(self, obs) -> int:
        return int(np.argmax(self.q_values(obs)))

    def select_action(self, obs, epsilon: float, rng: np.random.Generator) -> int:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy(obs)

    def store(self, t: Transition) -> None:
        self.buffer.store(t)

    def train_step(self, rng: np.random.Generator) -> float | None:
        """One SGD step on a replay batch; None while the buffer is too small."""
        cfg = self.config
        if len(self.buffer) < cfg.batch_size:
            return None
        s, a, r, s2, done = self.buffer.sample(cfg.batch_size, rng)
        q_next = neural.forward(self.target_net, s2).max(axis=1)
        y = td_targets(r, done, q_next, cfg.gamma)
        loss, grads = neural.backward_batch(self.eval_net, s, a, y)
        neural.sgd_update_(self.eval_net, grads, cfg.learning_rate)
        self.train_steps += 1
        if self.train_steps % cfg.target_sync_interval == 0:
            self.sync_target()
        return loss

    def sync_target(self) -> None:
        self.target_net = self.eval_net.copy()


# ------------------------------------------------------------ tabular oracle

def tabular_q_update(q_table, s, a, r, s_next, alpha, gamma, done=False) -> np.ndarray:
    """Q(s,a) += alpha * (r + gamma max_a' Q(s', a') - Q(s,a)); returns a new table."""
    q = np.array(q_table, dtype=float)
    boot = 0.0 if done else gamma * np.max(q[s_next])
    q[s, a] = q[s, a] + alpha * (r + boot - q[s, a])
    return q


def value_iteration(next_state, reward, gamma, tol=1e-13, max_iter=100_000) -> np.ndarray:
    """Optimal Q of a deterministic MDP given ``next_state[s, a]`` and ``reward[s, a]``."""
    next_state = np.asarray(next_state, dtype=int)
    reward = np.asarray(reward, dtype=float)
    q = np.zeros_like(reward)
    for _ in range(max_iter):
        q_new = reward + gamma * q.max(axis=1)[next_state]
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    raise RuntimeError("value iteration did not converge")


def discounted_return(rewards, gamma: float) -> float:
    return float(sum(r * gamma ** k for k, r in enumerate(rewards)))


def tabular_sweeps_to_converge(next_state, reward, q_star, alpha, gamma, tol=1e-6, max_sweeps=500):
    """Sweep every (s, a) in index order with the tabular update; returns (sweeps, Q) or (None, Q)."""
    q = np.zeros_like(np.asarray(reward, dtype=float))
    S, A = q.shape
    for sweep in range(1, max_sweeps + 1):
        for s in range(S):
            for a in range(A):
                q = tabular_q_update(q, s, a, reward[s][a], next_state[s][a], alpha, gamma)
        if np.max(np.abs(q - q_star)) <= tol:
            return sweep, q
    return None, q

