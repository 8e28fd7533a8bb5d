"""Desk-scale continuous-control environments and imperfect-reward wrappers.

Every environment follows a small gym-like protocol::

    state = env.reset()
    next_state, reward, terminal, info = env.step(action)

``terminal`` is raised both on genuine failure and when the fixed horizon is
reached; targets bootstrap with discount zero on such transitions.
``info["true_reward"]`` always carries the unmodified reward.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class RewardRange:
    """Running min/max of observed rewards (monotone by construction)."""

    r_min: float = np.inf
    r_max: float = -np.inf

    def update(self, r):
        self.r_min = min(self.r_min, r)
        self.r_max = max(self.r_max, r)

    @property
    def width(self):
        return 0.0 if self.r_max < self.r_min else self.r_max - self.r_min


@dataclass
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_bound: np.ndarray
    max_episode_steps: int
    reward_range: RewardRange = field(default_factory=RewardRange)

    def __post_init__(self):
        self.action_bound = np.broadcast_to(
            np.asarray(self.action_bound, dtype=np.float64), (self.action_dim,)
        ).copy()
        if np.any(self.action_bound <= 0):
            raise ConfigurationError("action_bound must be positive")


class Env:
    """Base class handling seeding, horizon bookkeeping and action clipping."""

    spec: EnvSpec

    def __init__(self, spec, seed=None):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.state = None

    def seed(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self):
        self.t = 0
        self.state = self._initial_state()
        return self.state.copy()

    def step(self, action):
        if self.state is None:
            raise ConfigurationError("call reset() before step()")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim),
                    -self.spec.action_bound, self.spec.action_bound)
        reward, next_state, failed = self._dynamics(self.state, a)
        self.t += 1
        self.state = next_state
        self.spec.reward_range.update(reward)
        terminal = failed or self.t >= self.spec.max_episode_steps
        return next_state.copy(), float(reward), terminal, {"true_reward": float(reward)}

    @property
    def unwrapped(self):
        return self

    def _initial_state(self):
        raise NotImplementedError

    def _dynamics(self, s, a):
        raise NotImplementedError


class LQREnv(Env):
    """Linear dynamics ``s' = A s + B a (+ w)`` with reward ``-s'Qc s - a'Rc a``."""

    def __init__(self, A, B, Qc, Rc, gamma=0.99, noise_std=0.0, horizon=100,
                 init_box=1.0, action_bound=2.0, seed=None, name="lqr"):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        Qc = np.atleast_2d(np.asarray(Qc, dtype=np.float64))
        Rc = np.atleast_2d(np.asarray(Rc, dtype=np.float64))
        q, p = B.shape
        if A.shape != (q, q) or Qc.shape != (q, q) or Rc.shape != (p, p):
            raise ConfigurationError("inconsistent LQR matrix shapes")
        if not (np.allclose(Qc, Qc.T) and np.allclose(Rc, Rc.T)):
            raise ConfigurationError("cost matrices must be symmetric")
        if np.linalg.eigvalsh(Qc).min() < -1e-12:
            raise ConfigurationError("Qc must be positive semi-definite")
        if np.linalg.eigvalsh(Rc).min() <= 0:
            raise ConfigurationError("Rc must be positive definite")
        if not 0 < gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        self.A, self.B, self.Qc, self.Rc = A, B, Qc, Rc
        self.gamma = gamma
        self.noise_std = float(noise_std)
        self.init_box = float(init_box)
        super().__init__(EnvSpec(name, q, p, action_bound, horizon), seed)

    def reward(self, s, a):
        return -(s @ self.Qc @ s) - (a @ self.Rc @ a)

    def _initial_state(self):
        return self.rng.uniform(-self.init_box, self.init_box, size=self.spec.state_dim)

    def _dynamics(self, s, a):
        r = self.reward(s, a)
        s2 = self.A @ s + self.B @ a
        if self.noise_std > 0:
            s2 = s2 + self.noise_std * self.rng.standard_normal(s2.shape)
        return r, s2, False


def lqr_env(A, B, Qc, Rc, gamma=0.99, noise_std=0.0, **kwargs):
    return LQREnv(A, B, Qc, Rc, gamma=gamma, noise_std=noise_std, **kwargs)


def angle_normalize(x):
    return ((x + np.pi) % (2 * np.pi)) - np.pi


class PendulumEnv(Env):
    """Torque-limited pendulum swing-up; ``theta = 0`` is upright.

    Observation ``(cos theta, sin theta, theta_dot)``; reward
    ``-(theta^2 + 0.1 theta_dot^2 + 0.001 a^2)`` with the angle wrapped to
    ``[-pi, pi)``.  Semi-implicit Euler integration.
    """

    def __init__(self, dt=0.05, g=10.0, m=1.0, length=1.0, max_speed=8.0,
                 max_torque=2.0, horizon=200, seed=None):
        self.dt, self.g, self.m, self.length = dt, g, m, length
        self.max_speed = max_speed
        super().__init__(EnvSpec("pendulum", 3, 1, max_torque, horizon), seed)
        self.phys = None

    def _initial_state(self):
        self.phys = np.array([self.rng.uniform(-np.pi, np.pi), self.rng.uniform(-1, 1)])
        return self._obs()

    def set_physical_state(self, theta, theta_dot):
        self.t = 0
        self.phys = np.array([theta, theta_dot], dtype=np.float64)
        self.state = self._obs()
        return self.state.copy()

    def _obs(self):
        th, thdot = self.phys
        return np.array([np.cos(th), np.sin(th), thdot])

    def energy(self):
        """Conserved quantity of the torque-free dynamics (per unit inertia)."""
        th, thdot = self.phys
        return 0.5 * thdot ** 2 + 1.5 * self.g / self.length * np.cos(th)

    def _dynamics(self, s, a):
        th, thdot = self.phys
        u = float(a[0])
        cost = angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        thdot = thdot + (1.5 * self.g / self.length * np.sin(th)
                         + 3.0 / (self.m * self.length ** 2) * u) * self.dt
        thdot = np.clip(thdot, -self.max_speed, self.max_speed)
        th = th + thdot * self.dt
        self.phys = np.array([th, thdot])
        return -cost, self._obs(), False


class PointMassEnv(Env):
    """2-D double integrator steered to the origin; reward ``-||position||``."""

    def __init__(self, dt=0.1, horizon=100, init_box=1.0, max_force=1.0, seed=None):
        self.dt = dt
        self.init_box = init_box
        super().__init__(EnvSpec("point-mass", 4, 2, max_force, horizon), seed)

    def _initial_state(self):
        pos = self.rng.uniform(-self.init_box, self.init_box, size=2)
        return np.concatenate([pos, np.zeros(2)])

    def _dynamics(self, s, a):
        pos, vel = s[:2], s[2:]
        r = -float(np.linalg.norm(pos))
        vel = vel + self.dt * a
        pos = pos + self.dt * vel
        return r, np.concatenate([pos, vel]), False


class RewardWrapper:
    """Alters emitted rewards only; dynamics and state streams are untouched."""

    def __init__(self, env):
        self.env = env

    @property
    def spec(self):
        return self.env.spec

    @property
    def unwrapped(self):
        return self.env.unwrapped

    def seed(self, seed):
        self.env.seed(seed)

    def reset(self):
        self._on_reset()
        return self.env.reset()

    def step(self, action):
        s2, r, terminal, info = self.env.step(action)
        return s2, self._transform(r, info, terminal), terminal, info

    def _on_reset(self):
        pass

    def _transform(self, r, info, terminal):
        raise NotImplementedError


class NoisyRewards(RewardWrapper):
    """Adds ``N(0, (scale * (r_max - r_min))^2)`` noise.

    The range is the running min/max of true rewards seen so far (which is
    exactly what the replay buffer has stored), including the current one.
    """

    def __init__(self, env, scale=0.1, rng=None):
        super().__init__(env)
        self.scale = scale
        self.rng = rng if rng is not None else np.random.default_rng()
        self.range = RewardRange()

    def _transform(self, r, info, terminal):
        self.range.update(info["true_reward"])
        std = self.scale * self.range.width
        if std == 0.0:
            return r
        return r + std * self.rng.standard_normal()


class SparseRewards(RewardWrapper):
    """Emits the true reward with probability ``keep_prob``, otherwise 0."""

    def __init__(self, env, keep_prob=0.5, rng=None):
        if not 0 < keep_prob <= 1:
            raise ConfigurationError("keep_prob must lie in (0, 1]")
        super().__init__(env)
        self.keep_prob = keep_prob
        self.rng = rng if rng is not None else np.random.default_rng()

    def _transform(self, r, info, terminal):
        if self.keep_prob == 1.0:
            return r
        return r if self.rng.random() < self.keep_prob else 0.0


class DelayedRewards(RewardWrapper):
    """Emits the reward from ``delay`` steps earlier (0 while the queue fills).

    On the terminal step the rewards still queued are added as a lump sum,
    so the undiscounted episode return is preserved.
    """

    def __init__(self, env, delay=10):
        if delay < 0:
            raise ConfigurationError("delay must be >= 0")
        super().__init__(env)
        self.delay = int(delay)
        self.queue = deque()

    def _on_reset(self):
        self.queue.clear()

    def _transform(self, r, info, terminal):
        if self.delay == 0:
            return r
        self.queue.append(r)
        out = self.queue.popleft() if len(self.queue) > self.delay else 0.0
        if terminal:
            out += sum(self.queue)
            self.queue.clear()
        return out


LQR_PRESETS = {
    "lqr-scalar": dict(A=[[0.9]], B=[[1.0]], Qc=[[1.0]], Rc=[[0.1]], action_bound=1.0),
    "lqr-2d": dict(A=[[0.9, 0.2], [0.0, 0.9]], B=[[1.0, 0.0], [0.0, 1.0]],
                   Qc=[[1.0, 0.0], [0.0, 1.0]], Rc=[[0.1, 0.0], [0.0, 0.1]],
                   action_bound=1.0),
}

ENV_NAMES = (*LQR_PRESETS, "pendulum", "point-mass")


def make_env(name, seed=None, **params):
    """Build a registered environment by name."""
    if name in LQR_PRESETS:
        kwargs = {**LQR_PRESETS[name], **params}
        return LQREnv(seed=seed, name=name, **kwargs)
    if name == "pendulum":
        return PendulumEnv(seed=seed, **params)
    if name == "point-mass":
        return PointMassEnv(seed=seed, **params)
    raise ConfigurationError(f"unknown environment {name!r}; choose from {ENV_NAMES}")


def wrap_rewards(env, kind="none", rng=None, **params):
    if kind in (None, "none"):
        return env
    if kind == "noisy":
        return NoisyRewards(env, rng=rng, **params)
    if kind == "sparse":
        return SparseRewards(env, rng=rng, **params)
    if kind == "delayed":
        return DelayedRewards(env, **params)
    raise ConfigurationError(f"unknown reward wrapper {kind!r}")
