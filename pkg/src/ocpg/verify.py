"""Verification suites behind ``ocpg verify``.

Each suite returns a :class:`SuiteResult` whose rows can be written as a
versioned CSV.  A suite passes only if every row passes.
"""

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import ConfigurationError, UnstablePolicyError
from .nn import MLP, finite_difference_gradient
from .oracle import (
    CompatibleCritic, LinearPolicy, LqrSystem, PerturbedCritic,
    compatibility_conditions_report, is_u_shaped, mlp_critic_action_gradient,
    random_error_field, riccati_optimal, solve_policy_q, theorem1_check,
)
from .stats import betainc, paired_test, student_test, t_ppf, welch_test, \
    wilcoxon_ranksum_test
from .zeroth_order import smoothing_bias_check

SUITES = ("proposition1", "theorem1", "gradcheck", "compat", "stats")


@dataclass
class SuiteResult:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self):
        return all(bool(r[-1]) for r in self.rows)

    def failures(self):
        return [r for r in self.rows if not r[-1]]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: ocpg.verify-{self.name}/1\n")
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            writer.writerows(self.rows)


# -- smoothing bias -------------------------------------------------------------

def _quadratic(p, rng):
    H = rng.normal(size=(p, p))
    H = 0.5 * (H + H.T)
    b = rng.normal(size=p)
    G = float(np.linalg.norm(H, 2))
    f = lambda X: 0.5 * np.einsum("ni,ij,nj->n", np.atleast_2d(X), H, np.atleast_2d(X)) \
        + np.atleast_2d(X) @ b  # noqa: E731
    grad = lambda x: H @ x + b  # noqa: E731
    # the smoothed gradient of a quadratic is its gradient
    return f, grad, grad, G


def _cosine(p, rng):
    f = lambda X: np.cos(np.atleast_2d(X)).sum(axis=1)  # noqa: E731
    grad = lambda x: -np.sin(x)  # noqa: E731
    return f, grad, lambda x, mu: -np.sin(x) * np.exp(-0.5 * mu * mu), 1.0


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softplus(p, rng):
    w = rng.normal(size=p)
    nw = float(np.linalg.norm(w))
    nodes, weights = hermegauss(80)
    weights = weights / weights.sum()

    def f(X):
        return np.logaddexp(0.0, np.atleast_2d(X) @ w)

    def grad(x):
        return _sigmoid(w @ x) * w

    def grad_mu(x, mu):
        return float(weights @ _sigmoid(w @ x + mu * nw * nodes)) * w

    return f, grad, grad_mu, nw * nw / 4.0


TEST_FUNCTIONS = {"quadratic": _quadratic, "cosine": _cosine, "softplus": _softplus}


def _smoothed(kind, grad, grad_mu):
    if kind == "quadratic":
        return lambda x, mu: grad(x)
    return grad_mu


def convergence_slope(f, grad_mu, x, mu, sizes, replicates, rng):
    """Log-log slope of the RMS two-point MC error against the sample size."""
    target = grad_mu(x, mu)
    fx = float(f(x[None, :])[0])
    rms = []
    for n in sizes:
        u = rng.standard_normal((replicates * n, x.size))
        d = (f(x[None, :] + mu * u) - fx) / mu
        est = (d[:, None] * u).reshape(replicates, n, x.size).mean(axis=1)
        rms.append(np.sqrt(np.mean(np.sum((est - target) ** 2, axis=1))))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    return float(slope), rms


def proposition1_suite(seed=0, mus=(0.05, 0.1, 0.2), dims=(1, 2, 6), n_points=2,
                       n_samples=200_000, sizes=(100, 400, 1600, 6400, 25600),
                       replicates=200):
    rng = np.random.default_rng(seed)
    res = SuiteResult("proposition1", ["check", "test_function", "mu", "p",
                                       "measured", "bound", "pass"])
    for kind, make in TEST_FUNCTIONS.items():
        for p in dims:
            f, grad, grad_mu, G = make(p, rng)
            points = rng.normal(size=(n_points, p))
            for mu in mus:
                for row in smoothing_bias_check(f, grad, G, mu, points, rng, n_samples,
                                                name=kind, strict=False):
                    res.rows.append(["bias", kind, mu, p, row.measured_bias,
                                     row.bound + 3 * row.stderr, row.passed])
            # the analytic smoothed gradient must itself respect the bound
            for mu in mus:
                gap = max(np.linalg.norm(_smoothed(kind, grad, grad_mu)(x, mu) - grad(x))
                          for x in points)
                res.rows.append(["bias-analytic", kind, mu, p, float(gap),
                                 mu * G * math.sqrt(p), bool(gap <= mu * G * math.sqrt(p))])
        f, grad, grad_mu, _ = make(2, rng)
        x = rng.normal(size=2)
        slope, _ = convergence_slope(f, _smoothed(kind, grad, grad_mu), x, 0.1,
                                     np.asarray(sizes), replicates, rng)
        res.rows.append(["mc-slope", kind, 0.1, 2, slope, -0.5, abs(slope + 0.5) < 0.1])
    return res


# -- gradient error bound on random LQR problems ----------------------------------

def random_lqr(rng, state_dim=None, action_dim=None, gamma=0.99):
    """Random stabilisable system with a stabilising near-optimal gain."""
    q = state_dim or int(rng.integers(1, 4))
    p = action_dim or int(rng.integers(1, 3))
    A = rng.normal(size=(q, q))
    A *= rng.uniform(0.5, 1.05) / max(abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(q, p))
    M = rng.normal(size=(q, q))
    Qc = M.T @ M / q + 0.1 * np.eye(q)
    Rc = np.diag(rng.uniform(0.1, 1.0, size=p))
    system = LqrSystem(A, B, Qc, Rc, gamma)
    K_opt, _ = riccati_optimal(system)
    for _ in range(50):
        K = K_opt + 0.05 * rng.normal(size=K_opt.shape)
        try:
            return system, K, solve_policy_q(system, K)
        except UnstablePolicyError:
            continue
    return system, K_opt, solve_policy_q(system, K_opt)


def linear_mlp_policy(K, rng, hidden=4):
    """Bias-free two-layer identity network computing ``a = K s``."""
    p, q = K.shape
    net = MLP([q, hidden, p], ["identity", "identity"])
    W1 = rng.normal(size=(hidden, q))
    net.weights[0][...] = W1
    net.weights[1][...] = K @ np.linalg.pinv(W1)
    return net


def theorem1_suite(seed=0, n_configs=20, n_states=32, n_per_state=2000,
                   error_kinds=("sine", "quadratic", "mlp", "offset"),
                   sweep_mus=(0.025, 0.05, 0.1, 0.2)):
    rng = np.random.default_rng(seed)
    cols = ["check", "config", "critic", "q", "p", "mu", "B", "G", "pre",
            "measured_error", "error_stderr", "bound", "pass"]
    res = SuiteResult("theorem1", cols)

    def add(check, cfg, critic, sys_, rep, ok=None):
        res.rows.append([check, cfg, critic, sys_.state_dim, sys_.action_dim, rep.mu,
                         rep.B, rep.G, rep.pre, rep.measured_error, rep.error_stderr,
                         rep.bound, rep.passed if ok is None else ok])

    for c in range(n_configs):
        system, K, oracle = random_lqr(rng)
        policy = LinearPolicy(K) if c % 2 == 0 else linear_mlp_policy(K, rng)
        states = rng.uniform(-1.0, 1.0, size=(n_states, system.state_dim))
        mu = 0.1
        rep = theorem1_check(oracle, oracle, policy, mu, states, n_per_state, rng,
                             label=f"cfg{c}-oracle", strict=False)
        add("bound", c, "oracle", system, rep)
        add("oracle-zero", c, "oracle", system, rep,
            rep.measured_error <= 3.0 * rep.error_stderr)
        kind = error_kinds[c % len(error_kinds)]
        field_ = random_error_field(system.state_dim, system.action_dim, rng, kind)
        critic = PerturbedCritic(oracle, field_, scale=0.05 * oracle.smoothness)
        rep = theorem1_check(oracle, critic, policy, mu, states, n_per_state, rng,
                             label=f"cfg{c}-{kind}", strict=False)
        add("bound", c, kind, system, rep)
    # the bound trades eps/mu against G mu: with eps ~ G mu*^2 it dips at mu*
    system, K, oracle = random_lqr(rng, 2, 1)
    policy = LinearPolicy(K)
    states = rng.uniform(-1.0, 1.0, size=(n_states, 2))
    field_ = random_error_field(2, 1, rng, "sine")
    critic = PerturbedCritic(oracle, field_, scale=0.07 ** 2 * oracle.smoothness)
    reports = [theorem1_check(oracle, critic, policy, m, states, n_per_state, rng,
                              label=f"sweep mu={m}", strict=False) for m in sweep_mus]
    for rep in reports:
        add("sweep", "sweep", "sine", system, rep)
    bounds = [r.bound for r in reports]
    res.rows.append(["sweep-u-shape", "sweep", "sine", 2, 1, float("nan"), float("nan"),
                     float("nan"), float("nan"), float("nan"), float("nan"),
                     float(min(bounds)), is_u_shaped(bounds)])
    gap_slope, term_slope = error_scaling_slopes(oracle, field_, policy, states,
                                                 n_per_state, seed)
    res.rows.append(["lambda-slope", "sweep", "sine", 2, 1, 0.1, float("nan"),
                     float("nan"), float("nan"), gap_slope, float("nan"), term_slope,
                     gap_slope <= term_slope + 0.1])
    return res


def error_scaling_slopes(oracle, field_, policy, states, n_per_state, seed,
                         lambdas=(0.25, 0.5, 1.0, 2.0, 4.0), mu=0.1):
    """Log-log slopes in ``lambda`` of the measured gap and of the bound's first term.

    The critic is ``Q + lambda * G * h``; every ``lambda`` reuses the same
    perturbations so the comparison is not swamped by sampling noise.
    """
    gaps, terms = [], []
    for lam in lambdas:
        critic = PerturbedCritic(oracle, field_, scale=lam * oracle.smoothness)
        rep = theorem1_check(oracle, critic, policy, mu, states, n_per_state,
                             np.random.default_rng(seed), strict=False)
        gaps.append(rep.measured_error)
        terms.append(rep.first_term)
    x = np.log(lambdas)
    return (float(np.polyfit(x, np.log(gaps), 1)[0]),
            float(np.polyfit(x, np.log(terms), 1)[0]))


# -- reverse mode against finite differences --------------------------------------

def relative_error(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradcheck_case(net, rng, batch=4, n_coords=10, n_dirs=2, h=1e-5):
    """Max relative error of parameter, direction and input gradients."""
    x = rng.normal(size=(batch, net.input_dim))
    v = rng.normal(size=(batch, net.output_dim))
    theta = net.get_params()

    def loss_params(t):
        net.set_params(t)
        return float(np.sum(v * net.forward(x)))

    grad = net.jacobian_transpose_vector(x, v)
    coords = rng.choice(net.n_params, size=n_coords, replace=False)
    worst = 0.0
    for k in coords:
        e = np.zeros_like(theta)
        e[k] = h
        fd = (loss_params(theta + e) - loss_params(theta - e)) / (2 * h)
        worst = max(worst, float(relative_error(grad[k], fd)))
    for _ in range(n_dirs):
        d = rng.normal(size=theta.size)
        d /= np.linalg.norm(d)
        fd = (loss_params(theta + h * d) - loss_params(theta - h * d)) / (2 * h)
        worst = max(worst, float(relative_error(grad @ d, fd)))
    net.set_params(theta)
    x0 = x[0]
    gx = net.input_gradient(x0, v[0])
    fd = finite_difference_gradient(lambda z: float(v[0] @ net.forward(z)), x0, h)
    worst = max(worst, float(np.max(relative_error(gx, fd))))
    return worst


def gradcheck_suite(seed=0, n_cases=50, hidden=(256, 256), tol=1e-4):
    rng = np.random.default_rng(seed)
    res = SuiteResult("gradcheck", ["case", "hidden_activation", "in", "out",
                                    "max_rel_error", "tol", "pass"])
    for c in range(n_cases):
        act = ("relu", "tanh")[c % 2]
        n_in = int(rng.integers(1, 12))
        n_out = int(rng.integers(1, 4))
        out_act = ("identity", "tanh")[(c // 2) % 2]
        net = MLP([n_in, *hidden, n_out], [act] * len(hidden) + [out_act], rng=rng)
        err = gradcheck_case(net, rng)
        res.rows.append([c, act, n_in, n_out, err, tol, err < tol])
    return res


# -- compatibility conditions -------------------------------------------------------

def compat_suite(seed=0, n_states=64):
    rng = np.random.default_rng(seed)
    res = SuiteResult("compat", ["case", "residual", "relative_residual", "expect",
                                 "pass"])
    system, K, oracle = random_lqr(rng, 3, 2)
    policy = LinearPolicy(K)
    states = rng.uniform(-1.0, 1.0, size=(n_states, 3))
    # grad_a Q at a = K s is linear in s: exactly compatible with a linear policy
    rep = compatibility_conditions_report(oracle.action_gradient, policy, states)
    res.rows.append(["lqr-oracle", rep.residual, rep.relative_residual, "zero",
                     rep.relative_residual < 1e-10])
    omega = rng.normal(size=policy.n_params)
    critic = CompatibleCritic(policy, omega, value_fn=lambda s: -np.sum(s * s, axis=1))
    rep = compatibility_conditions_report(critic.action_gradient, policy, states)
    res.rows.append(["compatible-critic", rep.residual, rep.relative_residual, "zero",
                     rep.relative_residual < 1e-10 and np.allclose(rep.omega, omega)])
    net = MLP([5, 32, 32, 1], ["relu", "relu", "identity"], rng=rng)
    rep = compatibility_conditions_report(mlp_critic_action_gradient(net, 2), policy,
                                          states)
    res.rows.append(["mlp-critic", rep.residual, rep.relative_residual, "positive",
                     rep.relative_residual > 1e-3])
    return res


# -- statistics against independent computations ---------------------------------

# two-sided 95% and one-sided 95% Student t critical values (standard tables)
T_TABLE = {
    0.975: {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 8: 2.306,
            10: 2.228, 15: 2.131, 18: 2.101, 20: 2.086, 30: 2.042, 60: 2.000},
    0.95: {1: 6.314, 2: 2.920, 5: 2.015, 10: 1.812, 18: 1.734, 20: 1.725, 30: 1.697},
    0.995: {1: 63.657, 5: 4.032, 10: 3.169, 18: 2.878, 30: 2.750},
}


def _t_pdf(x, df):
    c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return np.exp(c - (df + 1) / 2 * np.log1p(x * x / df))


def t_two_sided_quadrature(t, df, n=200_001):
    """Two-sided tail by Simpson's rule on ``u = atan(x)``, independent of betainc."""
    t = abs(float(t))
    if not np.isfinite(t):
        return 0.0
    lo = math.atan(t)
    u = np.linspace(lo, math.pi / 2, n)
    x = np.tan(u[:-1])
    y = np.append(_t_pdf(x, df) / np.cos(u[:-1]) ** 2, 0.0)
    h = (u[-1] - u[0]) / (n - 1)
    simpson = h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())
    return float(min(1.0, 2.0 * simpson))


def ranksum_pvalue_dp(a, b):
    """Exact two-sided rank-sum p-value by counting subsets with a DP table."""
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="mergesort")
    ranks2 = np.empty(pooled.size, dtype=np.int64)
    sx = pooled[order]
    i = 0
    while i < sx.size:  # doubled average ranks keep everything integral
        j = i
        while j + 1 < sx.size and sx[j + 1] == sx[i]:
            j += 1
        ranks2[order[i:j + 1]] = i + j + 2
        i = j + 1
    n_a = a.size
    counts = [dict() for _ in range(n_a + 1)]
    counts[0][0] = 1
    for r in ranks2:
        for k in range(n_a, 0, -1):
            for s, c in counts[k - 1].items():
                counts[k][s + r] = counts[k].get(s + r, 0) + c
    total = sum(counts[n_a].values())
    centre = n_a * (pooled.size + 1)
    obs = abs(int(ranks2[:n_a].sum()) - centre)
    hits = sum(c for s, c in counts[n_a].items() if abs(s - centre) >= obs)
    return hits / total


def _welch_oracle(a, b):
    va, vb = np.var(a, ddof=1) / len(a), np.var(b, ddof=1) / len(b)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return t_two_sided_quadrature((np.mean(a) - np.mean(b)) / math.sqrt(va + vb), df)


def _student_oracle(a, b):
    na, nb = len(a), len(b)
    sp = (np.sum((a - np.mean(a)) ** 2) + np.sum((b - np.mean(b)) ** 2)) / (na + nb - 2)
    t = (np.mean(a) - np.mean(b)) / math.sqrt(sp * (1 / na + 1 / nb))
    return t_two_sided_quadrature(t, na + nb - 2)


def _paired_oracle(a, b):
    d = np.asarray(a) - np.asarray(b)
    t = np.mean(d) / (np.std(d, ddof=1) / math.sqrt(d.size))
    return t_two_sided_quadrature(t, d.size - 1)


def stat_input_pairs(seed=0, n_pairs=20):
    """Fixed sample pairs: sizes 3..7, shifted normals, some with ties."""
    rng = np.random.default_rng(seed)
    pairs = []
    for k in range(n_pairs):
        n = 3 + k % 5
        a = rng.normal(size=n)
        b = rng.normal(loc=0.5 * (k % 4), size=n)
        if k % 3 == 0:
            a, b = np.round(a, 1), np.round(b, 1)
        pairs.append((a, b))
    return pairs


def stats_suite(seed=0, n_pairs=20, tol=1e-6):
    res = SuiteResult("stats", ["case", "test", "value", "reference", "abs_diff", "pass"])
    checks = (("welch", welch_test, _welch_oracle),
              ("student", student_test, _student_oracle),
              ("paired", paired_test, _paired_oracle),
              ("wilcoxon", wilcoxon_ranksum_test, ranksum_pvalue_dp))
    for k, (a, b) in enumerate(stat_input_pairs(seed, n_pairs)):
        for name, test, oracle in checks:
            got = test(a, b).p_value
            ref = oracle(a, b)
            diff = abs(got - ref)
            res.rows.append([k, name, got, ref, diff, diff < tol])
    for q, table in T_TABLE.items():
        for df, ref in table.items():
            got = t_ppf(q, df)
            res.rows.append([f"df={df}", f"t_ppf({q})", got, ref, abs(got - ref),
                             round(got, 3) == ref])
    # symmetric beta integral identity
    for a_ in (0.5, 2.0, 7.5):
        got = betainc(a_, a_, 0.5)
        res.rows.append([f"a=b={a_}", "betainc(x=0.5)", got, 0.5, abs(got - 0.5),
                         abs(got - 0.5) < 1e-12])
    return res


_RUNNERS = {
    "proposition1": proposition1_suite,
    "theorem1": theorem1_suite,
    "gradcheck": gradcheck_suite,
    "compat": compat_suite,
    "stats": stats_suite,
}


def run_suite(name, out_dir=None, seed=0, **kwargs):
    """Run one suite, optionally writing ``<out_dir>/<name>.csv``."""
    if name not in _RUNNERS:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {SUITES}")
    start = time.perf_counter()
    res = _RUNNERS[name](seed=seed, **kwargs)
    res.seconds = time.perf_counter() - start
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        res.write_csv(os.path.join(out_dir, f"{name}.csv"))
    return res
