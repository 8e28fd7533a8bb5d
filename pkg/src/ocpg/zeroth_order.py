"""Gaussian smoothing and two-point gradient estimation in action space.

For ``f: R^p -> R`` and ``mu > 0`` the smoothed function
``f_mu(x) = E_u[f(x + mu u)]``, ``u ~ N(0, I_p)``, has gradient
``E_u[(f(x + mu u) - f(x)) / mu * u]``.  The compatible policy gradient
chains that estimate, evaluated on a critic at the policy's action, to the
actor's (transposed) Jacobian.

Scalar fields passed to the Monte-Carlo helpers must be vectorised: they take
an ``(n, p)`` array and return ``n`` values.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, EstimationError, \
    TrainingDivergenceError, VerificationFailure

_CHUNK = 200_000


@dataclass(frozen=True)
class SmoothingConfig:
    mu: float = 0.1
    dim_p: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if self.dim_p < 1:
            raise ConfigurationError(f"dim_p must be >= 1, got {self.dim_p}")

    def rng(self):
        return np.random.default_rng(self.rng_seed)


@dataclass
class CpgEstimate:
    """Batch compatible-policy-gradient estimate.

    ``perturbations[i]`` and ``deltas[i]`` belong to evaluation ``i``;
    with ``probes > 1`` evaluations are grouped probe-major per state.
    """

    perturbations: np.ndarray
    deltas: np.ndarray
    gradient: np.ndarray
    batch_size: int
    probes: int = 1


def sample_std_normal(dim, rng, size=None):
    if dim < 1:
        raise ContractError(f"dim must be >= 1, got {dim}")
    shape = (dim,) if size is None else (size, dim)
    return rng.standard_normal(shape)


def two_point_grad(f, x, mu, u):
    """Single-sample estimate ``(f(x + mu u) - f(x)) / mu * u``."""
    if not mu > 0:
        raise ContractError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    f1 = float(f(x + mu * u))
    f0 = float(f(x))
    if not (np.isfinite(f1) and np.isfinite(f0)):
        raise EstimationError("non-finite function value in two-point estimate")
    return (f1 - f0) / mu * u


def one_point_grad(f, x, mu, u):
    """Baseline-free variant ``f(x + mu u) / mu * u`` (same mean, more variance)."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    f1 = float(f(x + mu * u))
    if not np.isfinite(f1):
        raise EstimationError("non-finite function value in one-point estimate")
    return f1 / mu * u


def _two_point_samples(f, x, mu, u):
    fx = np.asarray(f(x[None, :]), dtype=np.float64).reshape(-1)[0]
    fu = np.asarray(f(x[None, :] + mu * u), dtype=np.float64).reshape(-1)
    if not (np.isfinite(fx) and np.all(np.isfinite(fu))):
        raise EstimationError("non-finite function value in two-point estimate")
    return ((fu - fx) / mu)[:, None] * u


def smoothed_grad_mc(f, x, mu, n_samples, rng, return_stderr=False):
    """Monte-Carlo mean of ``n_samples`` two-point estimates of grad f_mu(x).

    With ``return_stderr`` also returns the per-coordinate standard error of
    the mean.
    """
    if n_samples < 1:
        raise ContractError("n_samples must be >= 1")
    if not mu > 0:
        raise ContractError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=np.float64)
    p = x.size
    total = np.zeros(p)
    total_sq = np.zeros(p)
    done = 0
    while done < n_samples:
        n = min(_CHUNK, n_samples - done)
        u = rng.standard_normal((n, p))
        g = _two_point_samples(f, x, mu, u)
        total += g.sum(axis=0)
        total_sq += (g * g).sum(axis=0)
        done += n
    mean = total / n_samples
    if not return_stderr:
        return mean
    if n_samples > 1:
        var = np.maximum(total_sq - n_samples * mean * mean, 0.0) / (n_samples - 1)
    else:
        var = np.full(p, np.inf)
    return mean, np.sqrt(var / n_samples)


@dataclass
class BiasRow:
    test_function: str
    mu: float
    p: int
    measured_bias: float
    bound: float
    stderr: float
    passed: bool

    def as_row(self):
        return [self.test_function, self.mu, self.p, self.measured_bias,
                self.bound, self.passed]


BIAS_REPORT_COLUMNS = ["test_function", "mu", "p", "measured_bias", "bound", "pass"]


def smoothing_bias_check(f, grad_f, G, mu, test_points, rng, n_samples=1_000_000,
                         name="f", strict=True):
    """Check ``||grad f_mu(x) - grad f(x)|| <= mu G sqrt(p)`` at each test point.

    ``grad f_mu`` is estimated by Monte Carlo; a point passes when the measured
    gap is within the bound plus three standard errors of the MC mean.
    """
    rows = []
    for x in np.atleast_2d(np.asarray(test_points, dtype=np.float64)):
        p = x.size
        mean, se = smoothed_grad_mc(f, x, mu, n_samples, rng, return_stderr=True)
        bias = float(np.linalg.norm(mean - grad_f(x)))
        se_norm = float(np.sqrt(np.sum(se ** 2)))
        bound = mu * G * np.sqrt(p)
        rows.append(BiasRow(name, mu, p, bias, bound, se_norm,
                            bias <= bound + 3.0 * se_norm))
    if strict and not all(r.passed for r in rows):
        raise VerificationFailure(f"smoothing bias bound violated for {name}", rows)
    return rows


def write_bias_report(rows, path):
    with open(path, "w", newline="") as fh:
        fh.write("# ocpg.bias-report/1\n")
        writer = csv.writer(fh)
        writer.writerow(BIAS_REPORT_COLUMNS)
        for r in rows:
            writer.writerow(r.as_row())


def cpg_batch_gradient(actor, critic, states, mu, rng, probes=1, perturbations=None):
    """Batch compatible policy gradient ``(1/N) sum_i J_i^T (delta_i u_i)``.

    ``critic(states, actions)`` returns one value per row.  Perturbed actions
    are deliberately not clipped to the action box.  The ``1/(1 - gamma)``
    normaliser is omitted.  ``probes > 1`` draws several perturbations per
    state (diagnostics only).  Explicit ``perturbations`` of shape
    ``(N * probes, p)`` bypass the RNG.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    if n == 0:
        raise ContractError("empty state batch")
    if not mu > 0:
        raise ContractError(f"mu must be positive, got {mu}")
    if probes > 1:
        states = np.tile(states, (probes, 1))
    if hasattr(actor, "vjp"):
        actions, pullback = actor.vjp(states)
    else:
        actions = actor.forward(states)
        pullback = lambda v: actor.jacobian_transpose_vector(states, v)  # noqa: E731
    p = actions.shape[1]
    if perturbations is None:
        u = rng.standard_normal((states.shape[0], p))
    else:
        u = np.asarray(perturbations, dtype=np.float64).reshape(states.shape[0], p)
    q0 = np.asarray(critic(states, actions), dtype=np.float64).reshape(-1)
    q1 = np.asarray(critic(states, actions + mu * u), dtype=np.float64).reshape(-1)
    if q0.shape[0] != states.shape[0] or q1.shape[0] != states.shape[0]:
        raise ContractError("critic must return one value per state-action row")
    deltas = (q1 - q0) / mu
    bad = np.flatnonzero(~np.isfinite(deltas))
    if bad.size:
        raise TrainingDivergenceError("non-finite critic output in CPG estimate",
                                      sample=int(bad[0] % n))
    grad = pullback(deltas[:, None] * u) / states.shape[0]
    return CpgEstimate(perturbations=u, deltas=deltas, gradient=grad,
                       batch_size=n, probes=probes)
