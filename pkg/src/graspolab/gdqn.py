"""Grasp-orientation deep Q-learning.

Action a in {0..nA-1} maps to a discrete gripper angle; an episode is a
single grasp attempt with binary reward.  The online network regresses
Q(s, a) toward the reward (plus a bootstrapped term for multi-step
environments), with a periodically synced target copy.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EnvironmentError_
from .neuralnet import Conv2D, Dense, Network, RELU, LINEAR, RMSProp, huber_terms

STATE_SHAPE = (84, 84, 1)

ACTION_TABLES = {
    3: (0.0, 45.0, 90.0),
    12: tuple(15.0 * k for k in range(12)),
    24: tuple(7.5 * k for k in range(24)),
}


def action_angles(n_actions: int, explicit: Optional[Sequence[float]] = None):
    """Gripper angle (degrees) for each discrete action index."""
    if explicit is not None:
        angles = tuple(float(a) for a in explicit)
        if len(angles) != n_actions:
            raise ValueError(f"explicit table has {len(angles)} angles for {n_actions} actions")
        return angles
    try:
        return ACTION_TABLES[n_actions]
    except KeyError:
        raise ValueError(
            f"no built-in angle table for {n_actions} actions (have {sorted(ACTION_TABLES)}); "
            "pass explicit angles"
        ) from None


@dataclass(frozen=True)
class AgentConfig:
    n_actions: int = 3
    gamma: float = 0.99
    epsilon_final: float = 0.1
    n_episodes: int = 1000
    training_onset: int = 50       # episodes observed before learning starts
    target_sync_interval: int = 25  # episodes between target network copies
    minibatch_size: int = 8
    learning_rate: float = 0.00025
    replay_capacity: int = 1000
    hidden_units: int = 256
    huber_delta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_actions < 1:
            raise ValueError("need at least one action")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon_final <= 1.0:
            raise ValueError("epsilon_final must lie in [0, 1]")
        if self.n_episodes < 0:
            raise ValueError("n_episodes must be >= 0")
        if not 0 <= self.training_onset <= max(self.n_episodes, 1):
            raise ValueError("training_onset must lie within the episode budget")
        if self.target_sync_interval < 1:
            raise ValueError("target_sync_interval must be >= 1")
        if self.minibatch_size < 1 or self.minibatch_size > self.replay_capacity:
            raise ValueError("minibatch must fit in the replay memory")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.hidden_units < 1:
            raise ValueError("hidden layer needs >= 1 unit")
        if self.huber_delta <= 0:
            raise ValueError("huber delta must be positive")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool

    def __post_init__(self):
        if self.action < 0:
            raise ValueError("action index must be >= 0")
        if self.reward not in (0, 1, 0.0, 1.0):
            raise ValueError(f"reward must be binary, got {self.reward}")
        for name, arr in (("state", self.state), ("next_state", self.next_state)):
            if np.shape(arr) != STATE_SHAPE:
                raise ValueError(
                    f"{name} has shape {np.shape(arr)}, expected {STATE_SHAPE}"
                )


class ReplayMemory:
    """Fixed-capacity ring buffer of transitions, oldest evicted first."""

    def __init__(self, capacity: int = 1000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def append(self, transition: Transition):
        self._items.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample with replacement."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self._items) == 0:
            raise ValueError("cannot sample from an empty replay memory")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[int(i)] for i in idx]

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    action: int
    reward: float
    epsilon: float
    score: float
    loss: float
    greedy_action: int
    optimal_action: int


def build_q_network(n_actions: int, hidden_units: int = 256, seed: int = 0) -> Network:
    """84x84x1 -> conv16(8x8/4) -> conv32(4x4/2) -> dense(hidden) -> dense(nA)."""
    return Network(STATE_SHAPE, (
        Conv2D(16, 8, 4, RELU),
        Conv2D(32, 4, 2, RELU),
        Dense(hidden_units, RELU),
        Dense(n_actions, LINEAR),
    ), seed=seed)


def epsilon_at(episode: int, cfg: AgentConfig) -> float:
    """Linear decay from 1.0 at episode 0 to epsilon_final at the last episode."""
    if episode < 0 or episode > cfg.n_episodes:
        raise ValueError(f"episode {episode} outside [0, {cfg.n_episodes}]")
    if cfg.n_episodes == 0:
        return 1.0
    return max(cfg.epsilon_final,
               1.0 - episode * (1.0 - cfg.epsilon_final) / cfg.n_episodes)


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties resolve to the lowest action index."""
    q = np.asarray(q_values, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError(f"q_values must be a non-empty vector, got shape {q.shape}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(0, q.size))
    return int(np.argmax(q))


def q_targets(batch: Sequence[Transition], target_net: Network, gamma: float) -> np.ndarray:
    """y_i = r_i for terminal transitions, else r_i + gamma * max_a Q_target(s'_i, a)."""
    rewards = np.array([t.reward for t in batch], dtype=float)
    done = np.array([t.done for t in batch], dtype=bool)
    ys = rewards.copy()
    if not done.all():
        nxt = np.stack([t.next_state for t in batch])
        bootstrap = target_net.forward(nxt).max(axis=1)
        ys = np.where(done, rewards, rewards + gamma * bootstrap)
    return ys


def deep_q_learn(online: Network, target: Network, replay: ReplayMemory,
                 cfg: AgentConfig, optimizer: RMSProp, rng: np.random.Generator) -> float:
    """One minibatch update of the online network; returns the mean Huber loss."""
    if len(replay) < cfg.minibatch_size:
        raise ValueError(
            f"replay holds {len(replay)} transitions, need {cfg.minibatch_size}"
        )
    batch = replay.sample(cfg.minibatch_size, rng)
    states = np.stack([t.state for t in batch])
    actions = np.array([t.action for t in batch])
    ys = q_targets(batch, target, cfg.gamma)
    q = online.forward(states, remember=True)
    rows = np.arange(len(batch))
    residual = q[rows, actions] - ys
    losses, dk = huber_terms(residual, cfg.huber_delta)
    grad = np.zeros_like(q)
    grad[rows, actions] = dk / len(batch)  # mean loss over the minibatch
    grads = online.backward(grad)
    optimizer.step(online.weights, grads)
    return float(losses.mean())


def train(env, cfg: AgentConfig = AgentConfig(),
          angles: Optional[Sequence[float]] = None, on_episode=None):
    """Run the grasp-learning loop; returns (online network, episode records).

    ``on_episode(episode, online, target)``, if given, runs after each
    episode's updates; useful for inspecting the networks mid-training.
    """
    table = action_angles(cfg.n_actions, angles)
    seedseq = np.random.SeedSequence(cfg.seed)
    agent_seed, net_seed = seedseq.spawn(2)
    rng = np.random.default_rng(agent_seed)
    online = build_q_network(cfg.n_actions, cfg.hidden_units,
                             seed=net_seed.generate_state(1)[0])
    target = online.clone()
    optimizer = RMSProp(cfg.learning_rate)
    replay = ReplayMemory(cfg.replay_capacity)
    records = []
    score = 0.0
    try:
        state = env.reset()
    except Exception as exc:
        raise EnvironmentError_(f"episode 0: reset failed: {exc}") from exc
    for episode in range(cfg.n_episodes):
        eps = epsilon_at(episode, cfg)
        q = online.forward_one(state)
        greedy = int(np.argmax(q))
        action = select_action(q, eps, rng)
        try:
            result = env.step(table[action])
        except Exception as exc:
            raise EnvironmentError_(f"episode {episode}: step failed: {exc}") from exc
        replay.append(Transition(state, action, float(result.reward),
                                 result.next_state, bool(result.done)))
        loss = math.nan
        if episode >= cfg.training_onset:
            loss = deep_q_learn(online, target, replay, cfg, optimizer, rng)
        if episode % cfg.target_sync_interval == 0:
            target.copy_weights_from(online)
        score += result.reward
        records.append(EpisodeRecord(episode, action, float(result.reward), eps,
                                     score, loss, greedy, result.optimal_action))
        if on_episode is not None:
            on_episode(episode, online, target)
        state = result.next_state
    return online, records
