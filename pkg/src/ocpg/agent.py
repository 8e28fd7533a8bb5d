"""Off-policy compatible policy gradient agent and its first-order baseline.

Both gradient modes share exploration, replay, clipped double Q-learning,
delayed policy updates and Polyak-averaged targets; they differ only in how
the policy gradient is formed:

* ``cpg``: two-point zeroth-order estimate of the critic's action gradient,
  chained to the actor Jacobian;
* ``dpg``: reverse-mode action gradient of critic 1 (the TD3 baseline).
"""

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigurationError, ContractError, TrainingDivergenceError
from .nn import MLP, AdamState, adam_step, make_actor, make_critic
from .replay import ReplayBuffer
from .rng import stream, streams
from .stats import EvalCurve, evaluate_policy
from .zeroth_order import cpg_batch_gradient

GRADIENT_MODES = ("cpg", "dpg")
ALGORITHM_NAMES = {"cpg": "ocpg", "dpg": "td3-baseline"}
CPG_ACTOR_LR = 5e-5
DEFAULT_LR = 3e-4


@dataclass
class AgentConfig:
    mu: float = 0.1
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    actor_lr: float = None
    critic_lr: float = DEFAULT_LR
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    exploration_steps: int = 25_000
    gradient_mode: str = "cpg"
    hidden: tuple = (256, 256)
    buffer_capacity: int = 1_000_000
    eval_every: int = 1000
    eval_episodes: int = 10
    eval_seed_offset: int = 10 ** 6
    probes: int = 1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigurationError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.policy_delay < 1:
            raise ConfigurationError("policy_delay must be >= 1")
        if not self.noise_clip > 0:
            raise ConfigurationError("noise_clip must be positive")
        if self.mu < 0 or self.target_noise < 0:
            raise ConfigurationError("noise scales must be non-negative")
        if self.gradient_mode == "cpg" and not self.mu > 0:
            raise ConfigurationError("cpg needs mu > 0")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ConfigurationError("batch_size and eval_every must be >= 1")

    @property
    def effective_actor_lr(self):
        if self.actor_lr is not None:
            return self.actor_lr
        return CPG_ACTOR_LR if self.gradient_mode == "cpg" else DEFAULT_LR

    @property
    def algorithm(self):
        return ALGORITHM_NAMES[self.gradient_mode]

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown agent settings: {sorted(unknown)}")
        return cls(**d)


# -- update rules ---------------------------------------------------------------

def _q(critic, states, actions):
    return critic.forward(np.hstack([states, actions]))[:, 0]


def act_explore(state, actor, mu, rng, action_bound):
    """``pi(s) + mu u`` clipped to the action box."""
    a = actor.forward(state)
    if mu > 0:
        a = a + mu * rng.standard_normal(a.shape)
    return np.clip(a, -action_bound, action_bound)


def critic_target(batch, target_actor, target_critics, gamma, sigma, c, rng, action_bound):
    """Clipped double-Q targets with clipped target-policy smoothing noise."""
    s2 = batch.next_states
    a2 = target_actor.forward(s2)
    if sigma > 0:
        a2 = a2 + np.clip(sigma * rng.standard_normal(a2.shape), -c, c)
    a2 = np.clip(a2, -action_bound, action_bound)
    q1 = _q(target_critics[0], s2, a2)
    q2 = _q(target_critics[1], s2, a2)
    not_done = 1.0 - batch.terminals.astype(np.float64)
    y = batch.rewards + gamma * not_done * np.minimum(q1, q2)
    if not np.all(np.isfinite(y)):
        raise TrainingDivergenceError("non-finite critic targets")
    return y


def critic_update(batch, y, critics, optimizers):
    """One Adam step per critic on its mean-squared TD error; returns losses."""
    x = np.hstack([batch.states, batch.actions])
    n = x.shape[0]
    losses = []
    for critic, opt in zip(critics, optimizers):
        q, pullback = critic.vjp(x)
        err = y - q[:, 0]
        loss = float(err @ err) / n
        if not np.isfinite(loss):
            raise TrainingDivergenceError("non-finite critic loss")
        adam_step(critic.params, pullback(-2.0 / n * err), opt)
        losses.append(loss)
    return losses


def actor_update_cpg(states, actor, critic, mu, optimizer, rng, probes=1):
    """Ascent step along the batch compatible policy gradient of ``critic``."""
    est = cpg_batch_gradient(actor, lambda s, a: _q(critic, s, a), states, mu, rng,
                             probes=probes)
    adam_step(actor.params, -est.gradient, optimizer)
    return est


def dpg_gradient(states, actor, critic):
    """``(1/N) sum_i J_i^T grad_a Q(s_i, a)|_{a = pi(s_i)}`` by reverse mode."""
    actions, pullback = actor.vjp(states)
    p = actions.shape[1]
    grad_a = critic.input_gradient(np.hstack([states, actions]))[:, -p:]
    return pullback(grad_a) / states.shape[0]


def actor_update_dpg(states, actor, critic, optimizer):
    grad = dpg_gradient(states, actor, critic)
    adam_step(actor.params, -grad, optimizer)
    return grad


def polyak_update(target, online, tau):
    """``target <- tau * online + (1 - tau) * target`` (in place)."""
    t = target.params if hasattr(target, "params") else target
    o = online.params if hasattr(online, "params") else online
    if t.shape != o.shape:
        raise ContractError("target and online parameters differ in shape")
    t *= 1.0 - tau
    t += tau * o
    return target


# -- agent state ------------------------------------------------------------------

class Agent:
    """Actor, twin critics, their targets and optimizers, plus the replay buffer."""

    NETWORKS = ("actor", "actor_target", "critic1", "critic2",
                "critic1_target", "critic2_target")

    def __init__(self, spec, config, seed=0):
        self.spec = spec
        self.config = config
        self.seed = seed
        self.rngs = streams(seed)
        init = self.rngs["init"]
        q, p, bound = spec.state_dim, spec.action_dim, spec.action_bound
        self.action_bound = bound
        self.actor = make_actor(q, p, bound, config.hidden, init)
        self.critic1 = make_critic(q, p, config.hidden, init)
        self.critic2 = make_critic(q, p, config.hidden, init)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = AdamState.zeros(self.actor.n_params, config.effective_actor_lr)
        self.critic1_opt = AdamState.zeros(self.critic1.n_params, config.critic_lr)
        self.critic2_opt = AdamState.zeros(self.critic2.n_params, config.critic_lr)
        self.buffer = ReplayBuffer(q, p, config.buffer_capacity, rng=self.rngs["replay"])
        self.t = 0
        self.train_iterations = 0
        self.last_losses = (np.nan, np.nan)
        self.last_actor_grad_norm = np.nan

    def policy(self, state):
        """Deterministic action (no exploration noise)."""
        return np.clip(self.actor.forward(state), -self.action_bound, self.action_bound)

    def select_action(self, state):
        cfg = self.config
        if self.t < cfg.exploration_steps:
            return self.rngs["exploration"].uniform(-self.action_bound, self.action_bound)
        return act_explore(state, self.actor, cfg.mu, self.rngs["exploration"],
                           self.action_bound)

    def train_step(self):
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size)
        y = critic_target(batch, self.actor_target,
                          (self.critic1_target, self.critic2_target), cfg.gamma,
                          cfg.target_noise, cfg.noise_clip, self.rngs["target-noise"],
                          self.action_bound)
        self.last_losses = tuple(critic_update(batch, y, (self.critic1, self.critic2),
                                               (self.critic1_opt, self.critic2_opt)))
        self.train_iterations += 1
        if self.train_iterations % cfg.policy_delay == 0:
            if cfg.gradient_mode == "cpg":
                est = actor_update_cpg(batch.states, self.actor, self.critic1, cfg.mu,
                                       self.actor_opt, self.rngs["perturbation"],
                                       cfg.probes)
                grad = est.gradient
            else:
                grad = actor_update_dpg(batch.states, self.actor, self.critic1,
                                        self.actor_opt)
            self.last_actor_grad_norm = float(np.linalg.norm(grad))
            polyak_update(self.actor_target, self.actor, cfg.tau)
            polyak_update(self.critic1_target, self.critic1, cfg.tau)
            polyak_update(self.critic2_target, self.critic2, cfg.tau)

    # -- checkpoints ----------------------------------------------------------------

    def save(self, path, metadata=None):
        arrays = {}
        for name in self.NETWORKS:
            arrays[f"{name}/params"] = getattr(self, name).params
        for name in ("actor_opt", "critic1_opt", "critic2_opt"):
            opt = getattr(self, name)
            arrays[f"{name}/m"] = opt.m
            arrays[f"{name}/v"] = opt.v
            arrays[f"{name}/t"] = np.array(opt.t)
            arrays[f"{name}/lr"] = np.array(opt.lr)
        header = {
            "format": "ocpg-agent", "version": 1, "t": self.t,
            "train_iterations": self.train_iterations, "seed": self.seed,
            "config": self.config.to_dict(),
            "spec": {"name": self.spec.name, "state_dim": self.spec.state_dim,
                     "action_dim": self.spec.action_dim,
                     "action_bound": self.spec.action_bound.tolist(),
                     "max_episode_steps": self.spec.max_episode_steps},
            "metadata": metadata or {},
        }
        arrays["header"] = np.array(json.dumps(header, sort_keys=True))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        from .envs import EnvSpec
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != "ocpg-agent" or header.get("version") != 1:
                raise ConfigurationError("not a version-1 agent checkpoint")
            spec = EnvSpec(**header["spec"])
            agent = cls(spec, AgentConfig.from_dict(header["config"]), header["seed"])
            for name in cls.NETWORKS:
                getattr(agent, name).set_params(data[f"{name}/params"])
            for name in ("actor_opt", "critic1_opt", "critic2_opt"):
                opt = getattr(agent, name)
                opt.m[...] = data[f"{name}/m"]
                opt.v[...] = data[f"{name}/v"]
                opt.t = int(data[f"{name}/t"])
                opt.lr = float(data[f"{name}/lr"])
        agent.t = header["t"]
        agent.train_iterations = header["train_iterations"]
        agent.metadata = header["metadata"]
        return agent


@dataclass
class TrainResult:
    agent: Agent
    curve: EvalCurve
    stopped_early: bool = False


def train(env, config, total_steps, seed, eval_env=None, env_name=None,
          callback=None, checkpoint_every=0, checkpoint_path=None, checkpoint_meta=None):
    """Run the off-policy loop for ``total_steps`` environment steps.

    ``env`` is reseeded from the ``env`` stream of ``seed``.  Every
    ``config.eval_every`` steps the deterministic policy is scored on
    ``eval_env`` (reseeded with ``seed + eval_seed_offset`` each time).
    ``callback(step, reward)`` returning True stops training early.
    Checkpoints are written every ``checkpoint_every`` evaluations to
    ``checkpoint_path`` (a format string with ``{step}``).
    """
    agent = Agent(env.spec, config, seed)
    env.seed(agent.rngs["env"])
    name = env_name or env.spec.name
    curve = EvalCurve(config.algorithm, name, interval=config.eval_every)
    eval_seed = seed + config.eval_seed_offset
    state = env.reset()
    stopped = False
    n_evals = 0
    for t in range(1, total_steps + 1):
        action = agent.select_action(state)
        next_state, reward, terminal, _ = env.step(action)
        agent.buffer.push(state, action, reward, next_state, terminal)
        agent.t = t
        state = env.reset() if terminal else next_state
        if t > config.exploration_steps:
            try:
                agent.train_step()
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(
                    "training diverged", step=t, critic_losses=agent.last_losses,
                    actor_grad_norm=agent.last_actor_grad_norm, cause=str(exc),
                ) from exc
        if eval_env is not None and t % config.eval_every == 0:
            r = evaluate_policy(agent.policy, eval_env, config.eval_episodes, eval_seed)
            curve.append(seed, t, r)
            n_evals += 1
            if checkpoint_every and checkpoint_path and n_evals % checkpoint_every == 0:
                agent.save(checkpoint_path.format(step=t), checkpoint_meta)
            if callback is not None and callback(t, r):
                stopped = True
                break
    return TrainResult(agent, curve, stopped)


def build_env(name, seed, env_params=None, wrapper="none", wrapper_params=None):
    """Training environment (optionally reward-wrapped) plus a clean eval copy."""
    from .envs import make_env, wrap_rewards
    env_params = env_params or {}
    base = make_env(name, **env_params)
    env = wrap_rewards(base, wrapper, rng=stream(seed, "reward-wrapper"),
                       **(wrapper_params or {}))
    return env, make_env(name, **env_params)
