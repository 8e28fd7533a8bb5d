"""Ring-buffer experience replay with uniform sampling (with replacement)."""

from collections import namedtuple

import numpy as np

from .errors import ConfigurationError, UsageError

Batch = namedtuple("Batch", "states actions rewards next_states terminals")

DEFAULT_CAPACITY = 1_000_000
DEFAULT_BATCH_SIZE = 256


class ReplayBuffer:
    def __init__(self, state_dim, action_dim, capacity=DEFAULT_CAPACITY, rng=None):
        if capacity < 1:
            raise ConfigurationError("capacity must be >= 1")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.capacity = int(capacity)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.terminals = np.zeros(self.capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, state, action, reward, next_state, terminal):
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        next_state = np.asarray(next_state, dtype=np.float64)
        if (state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,)
                or action.shape != (self.action_dim,)):
            raise ConfigurationError(
                f"transition shapes {state.shape}/{action.shape}/{next_state.shape} "
                f"do not match buffer ({self.state_dim}, {self.action_dim})"
            )
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_transition(self, t):
        self.push(t.state, t.action, t.reward, t.next_state, t.terminal)

    def sample(self, n=DEFAULT_BATCH_SIZE, rng=None):
        """Draw ``n`` transitions uniformly with replacement (copies)."""
        if self.size == 0:
            raise UsageError("cannot sample from an empty replay buffer")
        if n < 1:
            raise UsageError("batch size must be >= 1")
        rng = rng if rng is not None else self.rng
        idx = rng.integers(0, self.size, size=n)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx])

    def _ordered(self, arr):
        """Contents oldest-first."""
        if self.size < self.capacity:
            return arr[:self.size]
        return np.concatenate([arr[self.cursor:], arr[:self.cursor]])

    def contents(self):
        return Batch(*(self._ordered(a) for a in (self.states, self.actions, self.rewards,
                                                   self.next_states, self.terminals)))

    def dump(self, path):
        c = self.contents()
        np.savez(path, format_version=np.array(1), capacity=np.array(self.capacity),
                 states=c.states, actions=c.actions, rewards=c.rewards,
                 next_states=c.next_states, terminals=c.terminals)

    @classmethod
    def restore(cls, path, rng=None):
        with np.load(path) as data:
            if int(data["format_version"]) != 1:
                raise ConfigurationError("unsupported replay dump version")
            states = data["states"]
            buf = cls(states.shape[1], data["actions"].shape[1], int(data["capacity"]), rng)
            for row in zip(states, data["actions"], data["rewards"],
                           data["next_states"], data["terminals"]):
                buf.push(*row)
        return buf
