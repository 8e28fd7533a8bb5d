"""Analytic ground truth for verifying compatible policy gradients.

Linear-quadratic systems give closed-form action values for any linear policy
``a = K s``::

    Q(s, a) = -s'Qc s - a'Rc a - gamma (As + Ba)' P (As + Ba) + c
    P = Qc + K'Rc K + gamma (A + BK)' P (A + BK)

(``c`` collects process-noise terms and is zero without noise).  On top of
that this module measures the gradient error of the batch two-point policy
gradient against the exact deterministic policy gradient and evaluates the
upper bound ``B sqrt(p) / (1 - gamma) * (pre / mu + G mu)``.

It also hosts the function-fitting counterexample: interpolants with zero
error at the samples whose derivatives are far from the true derivative.
"""

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, UnstablePolicyError, \
    VerificationFailure


# -- linear-quadratic systems -------------------------------------------------

@dataclass
class LqrSystem:
    A: np.ndarray
    B: np.ndarray
    Qc: np.ndarray
    Rc: np.ndarray
    gamma: float = 0.99
    noise_std: float = 0.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        self.Qc = np.atleast_2d(np.asarray(self.Qc, dtype=np.float64))
        self.Rc = np.atleast_2d(np.asarray(self.Rc, dtype=np.float64))
        q, p = self.B.shape
        if self.A.shape != (q, q) or self.Qc.shape != (q, q) or self.Rc.shape != (p, p):
            raise ConfigurationError("inconsistent LQR matrix shapes")

    @classmethod
    def from_env(cls, env):
        env = env.unwrapped
        return cls(env.A, env.B, env.Qc, env.Rc, env.gamma, env.noise_std)

    @property
    def state_dim(self):
        return self.B.shape[0]

    @property
    def action_dim(self):
        return self.B.shape[1]


def riccati_optimal(system, tol=1e-12, max_iter=100_000):
    """Optimal discounted gain ``K`` and value matrix ``P`` by value iteration."""
    A, B, Qc, Rc, g = system.A, system.B, system.Qc, system.Rc, system.gamma
    P = np.array(Qc, copy=True)
    for _ in range(max_iter):
        M = Rc + g * B.T @ P @ B
        K = -g * np.linalg.solve(M, B.T @ P @ A)
        L = A + B @ K
        P_new = Qc + K.T @ Rc @ K + g * L.T @ P @ L
        P_new = 0.5 * (P_new + P_new.T)
        if np.max(np.abs(P_new - P)) < tol * max(1.0, np.max(np.abs(P_new))):
            P = P_new
            break
        P = P_new
    else:
        raise UnstablePolicyError("Riccati iteration did not converge")
    M = Rc + g * B.T @ P @ B
    K = -g * np.linalg.solve(M, B.T @ P @ A)
    return K, P


def policy_value_matrix(system, K, tol=1e-12, max_iter=100_000):
    """Fixed point of ``P = Qc + K'RcK + gamma L'PL`` with ``L = A + BK``."""
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    if K.shape != (system.action_dim, system.state_dim):
        raise ContractError(f"gain has shape {K.shape}")
    L = system.A + system.B @ K
    stage = system.Qc + K.T @ system.Rc @ K
    g = system.gamma
    P = np.array(stage, copy=True)
    for _ in range(max_iter):
        P_new = stage + g * L.T @ P @ L
        P_new = 0.5 * (P_new + P_new.T)
        scale = max(1.0, np.max(np.abs(P_new)))
        if not np.all(np.isfinite(P_new)) or scale > 1e12:
            break
        if np.max(np.abs(P_new - P)) < tol * scale:
            return P_new
        P = P_new
    raise UnstablePolicyError(
        f"policy evaluation did not converge (gamma * rho(A+BK)^2 = "
        f"{g * max(abs(np.linalg.eigvals(L))) ** 2:.4f})"
    )


def finite_horizon_cost_matrix(system, K, horizon, discount=1.0):
    """``M`` with ``sum_{t<horizon} discount^t r_t = -s0' M s0`` (noise-free)."""
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    L = system.A + system.B @ K
    stage = system.Qc + K.T @ system.Rc @ K
    M = np.zeros_like(stage)
    Lt = np.eye(system.state_dim)
    for t in range(horizon):
        M += discount ** t * Lt.T @ stage @ Lt
        Lt = L @ Lt
    return M


class LqrOracle:
    """Exact ``Q``/``V`` and action derivatives for a linear policy."""

    def __init__(self, system, K, P):
        self.system = system
        self.K = np.atleast_2d(np.asarray(K, dtype=np.float64))
        self.P = P
        g = system.gamma
        noise_var = system.noise_std ** 2
        # E[w'Pw] per step, discounted from the next step on
        self.constant = -g * noise_var * np.trace(P) / (1.0 - g)
        self.action_hessian = -2.0 * (system.Rc + g * system.B.T @ P @ system.B)

    @property
    def smoothness(self):
        """Lipschitz constant of the action gradient (operator norm of the Hessian)."""
        return float(np.linalg.norm(self.action_hessian, 2))

    def residual(self):
        s = self.system
        L = s.A + s.B @ self.K
        rhs = s.Qc + self.K.T @ s.Rc @ self.K + s.gamma * L.T @ self.P @ L
        return float(np.max(np.abs(self.P - rhs)))

    def q_value(self, s, a):
        s = np.atleast_2d(s)
        a = np.atleast_2d(a)
        sys_ = self.system
        nxt = s @ sys_.A.T + a @ sys_.B.T
        return (-np.einsum("ni,ij,nj->n", s, sys_.Qc, s)
                - np.einsum("ni,ij,nj->n", a, sys_.Rc, a)
                - sys_.gamma * np.einsum("ni,ij,nj->n", nxt, self.P, nxt)
                + self.constant)

    __call__ = q_value

    def value(self, s):
        s = np.atleast_2d(s)
        # Q(s, Ks) and V(s) share the same noise constant
        return -np.einsum("ni,ij,nj->n", s, self.P, s) + self.constant

    def policy_action(self, s):
        return np.atleast_2d(s) @ self.K.T

    def action_gradient(self, s, a):
        s = np.atleast_2d(s)
        a = np.atleast_2d(a)
        sys_ = self.system
        nxt = s @ sys_.A.T + a @ sys_.B.T
        return -2.0 * a @ sys_.Rc - 2.0 * sys_.gamma * nxt @ self.P @ sys_.B

    def greedy_action(self, s):
        """Maximiser of ``Q(s, .)`` (stationary point of the concave quadratic)."""
        sys_ = self.system
        M = sys_.Rc + sys_.gamma * sys_.B.T @ self.P @ sys_.B
        rhs = sys_.gamma * sys_.B.T @ self.P @ sys_.A @ np.atleast_2d(s).T
        return -np.linalg.solve(M, rhs).T


def solve_policy_q(system, K, tol=1e-12, max_iter=100_000):
    P = policy_value_matrix(system, K, tol, max_iter)
    return LqrOracle(system, K, P)


def true_action_gradient(oracle, s, a):
    single = np.ndim(s) == 1
    g = oracle.action_gradient(s, a)
    return g[0] if single else g


# -- policies with explicit Jacobians ------------------------------------------

class LinearPolicy:
    """``a = K s`` with parameters ``vec(K)`` (row-major)."""

    def __init__(self, K):
        K = np.atleast_2d(np.asarray(K, dtype=np.float64))
        self.params = K.ravel().copy()
        self.shape = K.shape

    @property
    def K(self):
        return self.params.reshape(self.shape)

    @property
    def output_dim(self):
        return self.shape[0]

    @property
    def n_params(self):
        return self.params.size

    def forward(self, s):
        s = np.asarray(s, dtype=np.float64)
        return s @ self.K.T

    __call__ = forward

    def jacobian(self, s):
        p, q = self.shape
        J = np.zeros((p, p * q))
        for i in range(p):
            J[i, i * q:(i + 1) * q] = s
        return J

    def jacobian_transpose_vector(self, s, v):
        s = np.atleast_2d(s)
        v = np.atleast_2d(v)
        return (v.T @ s).ravel()


def linear_gain(policy):
    """Gain matrix of a linear policy: ``LinearPolicy`` or a bias-free linear MLP."""
    if isinstance(policy, LinearPolicy):
        return policy.K
    acts = getattr(policy, "activations", None)
    if acts is None or any(a != "identity" for a in acts) or \
            any(np.any(b != 0) for b in policy.biases) or policy.output_scale is not None:
        raise ContractError("policy is not linear in the state")
    K = np.eye(policy.input_dim)
    for W in policy.weights:
        K = W @ K
    return K


def policy_jacobian(policy, s):
    return policy.jacobian(np.asarray(s, dtype=np.float64))


# -- perturbation representation error and the gradient-error bound ------------

@dataclass
class PreEstimate:
    value: float
    stderr: float


def _stratified(states, n_per_state, p, mu, policy, rng):
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    m = states.shape[0]
    actions = policy.forward(states)
    u = rng.standard_normal((m, n_per_state, p))
    s_rep = np.repeat(states, n_per_state, axis=0)
    a_rep = np.repeat(actions, n_per_state, axis=0)
    return states, actions, u, s_rep, a_rep


def compute_pre(oracle, critic, policy, mu, states, n_per_state, rng):
    """Root-mean-square critic error at Gaussian-perturbed policy actions.

    The state expectation is the uniform average over ``states``.
    """
    p = oracle.system.action_dim
    states, _, u, s_rep, a_rep = _stratified(states, n_per_state, p, mu, policy, rng)
    pert = a_rep + mu * u.reshape(-1, p)
    err2 = (np.asarray(critic(s_rep, pert)).reshape(-1) - oracle.q_value(s_rep, pert)) ** 2
    mean = float(err2.mean())
    value = np.sqrt(mean)
    se_mean = float(err2.std(ddof=1) / np.sqrt(err2.size)) if err2.size > 1 else np.inf
    stderr = se_mean / (2.0 * value) if value > 0 else 0.0
    return PreEstimate(float(value), stderr)


@dataclass
class BoundReport:
    label: str
    B: float
    G: float
    p: int
    mu: float
    gamma: float
    pre: float
    measured_error: float
    error_stderr: float
    bound: float
    passed: bool

    COLUMNS = ("label", "B", "G", "p", "mu", "gamma", "pre", "measured_error",
               "error_stderr", "bound", "pass")

    def as_row(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return [d[c] for c in self.COLUMNS]

    @property
    def first_term(self):
        return self.B * np.sqrt(self.p) / (1.0 - self.gamma) * self.pre / self.mu


def gradient_bound(B, p, gamma, pre, mu, G):
    return B * np.sqrt(p) / (1.0 - gamma) * (pre / mu + G * mu)


def cpg_gradient_error(oracle, critic, policy, mu, states, n_per_state, rng):
    """Measured ``||grad_hat - grad J||`` and the standard error of ``grad_hat``.

    Both gradients carry the ``1/(1 - gamma)`` factor and average uniformly
    over ``states``.  Returns ``(error, stderr, B)`` with ``B`` the largest
    spectral norm of the policy Jacobian on ``states``.
    """
    sys_ = oracle.system
    p = sys_.action_dim
    scale = 1.0 / (1.0 - sys_.gamma)
    states, actions, u, s_rep, a_rep = _stratified(states, n_per_state, p, mu, policy, rng)
    m = states.shape[0]
    flat_u = u.reshape(-1, p)
    q0 = np.asarray(critic(states, actions)).reshape(-1)
    q1 = np.asarray(critic(s_rep, a_rep + mu * flat_u)).reshape(m, n_per_state)
    w = ((q1 - q0[:, None]) / mu)[:, :, None] * u          # (m, n, p)
    w_mean = w.mean(axis=1)
    true_grad_a = oracle.action_gradient(states, actions)
    est = np.zeros(policy.n_params)
    exact = np.zeros(policy.n_params)
    var_trace = 0.0
    B = 0.0
    for i in range(m):
        J = policy_jacobian(policy, states[i])
        B = max(B, float(np.linalg.norm(J, 2)))
        est += J.T @ w_mean[i]
        exact += J.T @ true_grad_a[i]
        if n_per_state > 1:
            cov = np.atleast_2d(np.cov(w[i], rowvar=False)) / n_per_state
            var_trace += float(np.trace(J @ J.T @ cov))
    est *= scale / m
    exact *= scale / m
    stderr = scale / m * np.sqrt(var_trace)
    return float(np.linalg.norm(est - exact)), float(stderr), B


def theorem1_check(oracle, critic, policy, mu, states, n_per_state, rng,
                   label="", strict=True):
    """Compare the measured CPG gradient error with its theoretical bound.

    Passes when ``error <= bound + 3 * stderr``.  ``G`` is the exact
    action-Hessian norm of the LQR action value and ``B`` the measured
    maximum policy-Jacobian norm over ``states``.
    """
    sys_ = oracle.system
    error, stderr, B = cpg_gradient_error(oracle, critic, policy, mu, states,
                                          n_per_state, rng)
    pre = compute_pre(oracle, critic, policy, mu, states, n_per_state, rng)
    G = oracle.smoothness
    bound = gradient_bound(B, sys_.action_dim, sys_.gamma, pre.value, mu, G)
    report = BoundReport(label, B, G, sys_.action_dim, mu, sys_.gamma, pre.value,
                         error, stderr, float(bound), bool(error <= bound + 3 * stderr))
    if strict and not report.passed:
        raise VerificationFailure(f"gradient-error bound violated ({label})", report)
    return report


def mu_sweep(oracle, critic, policy, mus, states, n_per_state, rng, label=""):
    return [theorem1_check(oracle, critic, policy, mu, states, n_per_state, rng,
                           label=f"{label} mu={mu}", strict=False) for mu in mus]


def is_u_shaped(values):
    """True when the minimum is interior and both ends lie above it."""
    values = np.asarray(values)
    k = int(np.argmin(values))
    return bool(0 < k < values.size - 1 and values[0] > values[k] and values[-1] > values[k])


def write_bound_reports(reports, path):
    with open(path, "w", newline="") as fh:
        fh.write("# ocpg.bound-report/1\n")
        writer = csv.writer(fh)
        writer.writerow(BoundReport.COLUMNS)
        for r in reports:
            writer.writerow(r.as_row())


class PerturbedCritic:
    """``Q(s, a) + scale * error(s, a)`` around an exact action value."""

    def __init__(self, base, error, scale=1.0):
        self.base = base
        self.error = error
        self.scale = scale

    def __call__(self, s, a):
        return self.base(s, a) + self.scale * np.asarray(self.error(s, a)).reshape(-1)


def random_error_field(state_dim, action_dim, rng, kind="sine"):
    """Smooth bounded injected critic error ``h(s, a)`` (unit amplitude)."""
    if kind == "offset":
        return lambda s, a: np.ones(np.atleast_2d(s).shape[0])
    if kind == "sine":
        wa = rng.normal(size=action_dim) * 3.0
        ws = rng.normal(size=state_dim)
        phase = rng.uniform(0, 2 * np.pi)
        return lambda s, a: np.sin(np.atleast_2d(a) @ wa + np.atleast_2d(s) @ ws + phase)
    if kind == "quadratic":
        E = rng.normal(size=(action_dim, action_dim))
        E = 0.5 * (E + E.T)
        f = rng.normal(size=action_dim)
        return lambda s, a: (np.einsum("ni,ij,nj->n", np.atleast_2d(a), E, np.atleast_2d(a))
                             + np.atleast_2d(a) @ f)
    if kind == "mlp":
        from .nn import MLP
        net = MLP([state_dim + action_dim, 16, 16, 1], ["tanh", "tanh", "identity"], rng=rng)
        return lambda s, a: net.forward(np.hstack([np.atleast_2d(s), np.atleast_2d(a)])).reshape(-1)
    raise ConfigurationError(f"unknown error field {kind!r}")


# -- compatibility conditions --------------------------------------------------

@dataclass
class CompatReport:
    omega: np.ndarray
    residual: float
    relative_residual: float
    n_states: int
    n_params: int


def compatibility_conditions_report(critic_action_grad, policy, states):
    """Least-squares fit of ``grad_a Q(s, pi(s)) ~ J(s) omega`` over ``states``.

    A zero residual means the critic's action gradient has the linear
    compatible form; generic neural critics leave a positive residual.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = policy.forward(states)
    g = np.asarray(critic_action_grad(states, actions), dtype=np.float64).reshape(-1)
    J = np.vstack([policy_jacobian(policy, s) for s in states])
    omega, *_ = np.linalg.lstsq(J, g, rcond=None)
    r = g - J @ omega
    norm_g = np.linalg.norm(g)
    return CompatReport(
        omega=omega,
        residual=float(np.linalg.norm(r) / np.sqrt(states.shape[0])),
        relative_residual=float(np.linalg.norm(r) / norm_g) if norm_g > 0 else 0.0,
        n_states=states.shape[0],
        n_params=J.shape[1],
    )


def mlp_critic_action_gradient(critic_net, action_dim):
    """``grad_a Q`` for a critic network over concatenated ``(s, a)``."""
    def grad(states, actions):
        x = np.hstack([np.atleast_2d(states), np.atleast_2d(actions)])
        return critic_net.input_gradient(x)[:, -action_dim:]
    return grad


class CompatibleCritic:
    """``Q(s, a) = (a - pi(s))' J(s) omega + V(s)``: compatible by construction."""

    def __init__(self, policy, omega, value_fn=None):
        self.policy = policy
        self.omega = np.asarray(omega, dtype=np.float64)
        self.value_fn = value_fn

    def __call__(self, s, a):
        s = np.atleast_2d(s)
        a = np.atleast_2d(a)
        diff = a - self.policy.forward(s)
        out = np.einsum("np,np->n", diff, self.action_gradient(s, a))
        if self.value_fn is not None:
            out = out + self.value_fn(s)
        return out

    def action_gradient(self, s, a):
        s = np.atleast_2d(s)
        return np.vstack([policy_jacobian(self.policy, si) @ self.omega for si in s])


# -- function-fitting counterexample ------------------------------------------

def runge(x):
    return 1.0 / (25.0 * np.asarray(x) ** 2 + 1.0)


def runge_derivative(x):
    x = np.asarray(x)
    return -50.0 * x / (25.0 * x ** 2 + 1.0) ** 2


def floater_hormann_weights(nodes, d):
    """Barycentric weights of the Floater-Hormann family (``d = n`` is Lagrange)."""
    x = np.asarray(nodes, dtype=np.float64)
    n = x.size - 1
    if not 0 <= d <= n:
        raise ConfigurationError(f"blending degree must lie in [0, {n}]")
    w = np.zeros(n + 1)
    for k in range(n + 1):
        total = 0.0
        for i in range(max(0, k - d), min(k, n - d) + 1):
            prod = 1.0
            for j in range(i, i + d + 1):
                if j != k:
                    prod /= abs(x[k] - x[j])
            total += prod
        w[k] = (-1.0) ** (k - d) * total
    return w


class BarycentricInterpolant:
    """Barycentric interpolant (second form) with value and derivative.

    ``blend=None`` gives the interpolating polynomial (Lagrange weights);
    an integer ``blend`` selects Floater-Hormann rational weights.
    """

    def __init__(self, nodes, values, blend=None):
        self.nodes = np.asarray(nodes, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        d = self.nodes.size - 1 if blend is None else int(blend)
        self.weights = floater_hormann_weights(self.nodes, d)

    def _split(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        diff = x[:, None] - self.nodes[None, :]
        # points within rounding distance of a node use the nodal formulas
        span = np.ptp(self.nodes) or 1.0
        exact = np.abs(diff) <= 1e-12 * span
        hit = exact.any(axis=1)
        return x, diff, exact, hit

    def __call__(self, x):
        x, diff, exact, hit = self._split(x)
        out = np.empty(x.size)
        miss = ~hit
        c = self.weights / diff[miss]
        out[miss] = (c @ self.values) / c.sum(axis=1)
        out[hit] = self.values[np.argmax(exact[hit], axis=1)]
        return out

    def derivative(self, x):
        x, diff, exact, hit = self._split(x)
        out = np.empty(x.size)
        miss = ~hit
        dm = diff[miss]
        c = self.weights / dm
        num, den = c @ self.values, c.sum(axis=1)
        dc = -self.weights / dm ** 2
        out[miss] = ((dc @ self.values) * den - num * dc.sum(axis=1)) / den ** 2
        for row, i in zip(np.flatnonzero(hit), np.argmax(exact[hit], axis=1)):
            others = np.arange(self.nodes.size) != i
            out[row] = np.sum(self.weights[others] / self.weights[i]
                              * (self.values[others] - self.values[i])
                              / (self.nodes[i] - self.nodes[others]))
        return out


VANDERMONDE_COND_LIMIT = 1e12


@dataclass
class InterpolationDemo:
    nodes: np.ndarray
    grid: np.ndarray
    true_values: np.ndarray
    true_derivative: np.ndarray
    poly_values: np.ndarray
    poly_derivative: np.ndarray
    bary_values: np.ndarray
    bary_derivative: np.ndarray
    poly_node_error: float
    bary_node_error: float
    poly_derivative_factor: float
    bary_derivative_factor: float
    polynomial_method: str
    vandermonde_cond: float

    @property
    def passed(self):
        return (self.poly_node_error < 1e-9 and self.bary_node_error < 1e-9
                and self.poly_derivative_factor > 5.0)


def interpolation_demo(n_nodes=11, out_path=None, blend=3, grid_points=2001):
    """Fit the Runge function at equispaced nodes two ways and compare slopes.

    (i) the degree ``n_nodes - 1`` interpolating polynomial from a
    Vandermonde solve (barycentric Lagrange form if the system is
    ill-conditioned); (ii) a barycentric rational interpolant with blending
    degree ``blend``.  Derivative factors are ``max |fit' - f'| / max |f'|``.
    """
    if n_nodes < 3:
        raise ContractError("need at least 3 nodes")
    nodes = np.linspace(-1.0, 1.0, n_nodes)
    f_nodes = runge(nodes)
    grid = np.linspace(-1.0, 1.0, grid_points)

    V = np.vander(nodes, increasing=True)
    cond = float(np.linalg.cond(V))
    if cond < VANDERMONDE_COND_LIMIT:
        coef = np.linalg.solve(V, f_nodes)
        poly = np.polynomial.Polynomial(coef)
        dpoly = poly.deriv()
        poly_vals, poly_der = poly(grid), dpoly(grid)
        poly_at_nodes = poly(nodes)
        method = "vandermonde"
    else:
        lagrange = BarycentricInterpolant(nodes, f_nodes)
        poly_vals, poly_der = lagrange(grid), lagrange.derivative(grid)
        poly_at_nodes = lagrange(nodes)
        method = "barycentric-lagrange"

    rational = BarycentricInterpolant(nodes, f_nodes, blend=min(blend, n_nodes - 1))
    true_vals, true_der = runge(grid), runge_derivative(grid)
    scale = np.max(np.abs(true_der))
    demo = InterpolationDemo(
        nodes=nodes, grid=grid, true_values=true_vals, true_derivative=true_der,
        poly_values=poly_vals, poly_derivative=poly_der,
        bary_values=rational(grid), bary_derivative=rational.derivative(grid),
        poly_node_error=float(np.max(np.abs(poly_at_nodes - f_nodes))),
        bary_node_error=float(np.max(np.abs(rational(nodes) - f_nodes))),
        poly_derivative_factor=float(np.max(np.abs(poly_der - true_der)) / scale),
        bary_derivative_factor=float(
            np.max(np.abs(rational.derivative(grid) - true_der)) / scale),
        polynomial_method=method,
        vandermonde_cond=cond,
    )
    if out_path is not None:
        write_interpolation_csv(demo, out_path)
    return demo


INTERPOLATION_COLUMNS = ["x", "true", "true_deriv", "poly", "poly_deriv", "bary", "bary_deriv"]


def write_interpolation_csv(demo, path):
    with open(path, "w", newline="") as fh:
        fh.write("# ocpg.interpolation/1\n")
        writer = csv.writer(fh)
        writer.writerow(INTERPOLATION_COLUMNS)
        cols = (demo.grid, demo.true_values, demo.true_derivative, demo.poly_values,
                demo.poly_derivative, demo.bary_values, demo.bary_derivative)
        for row in zip(*cols):
            writer.writerow([repr(float(v)) for v in row])


def read_interpolation_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, data = rows[0], np.array(rows[1:], dtype=np.float64)
    return {name: data[:, i] for i, name in enumerate(header)}
