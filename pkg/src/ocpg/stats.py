"""Evaluation protocol, learning-curve aggregation and significance tests.

The t-distribution is evaluated through the regularised incomplete beta
function (Lentz continued fraction), so the tests have no dependency beyond
numpy.  The Wilcoxon rank-sum p-value is exact (full enumeration of group
assignments) when either group has fewer than 8 samples and uses the normal
approximation with tie and continuity corrections otherwise.
"""

import csv
import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

ALPHA = 0.05
EVAL_INTERVAL = 1000
EVAL_SEED_OFFSET = 10 ** 6
CONVERGED_WINDOW = 50
EXACT_RANKSUM_BELOW = 8

CURVE_SCHEMA = "ocpg.curve/1"
CURVE_COLUMNS = ["algorithm", "env", "seed", "step", "eval_reward"]
REPORT_SCHEMA = "ocpg.stat-report/1"
REPORT_COLUMNS = ["env", "algo_a", "algo_b", "test", "statistic", "p_value", "reject"]


# -- special functions --------------------------------------------------------

def _betacf(a, b, x, max_iter=500, eps=3e-16):
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a, b, x):
    """Regularised incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf2(t, df):
    """Two-sided tail probability P(|T| >= |t|) for Student's t with ``df``."""
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc(0.5 * df, 0.5, df / (df + t * t)))


def t_cdf(t, df):
    tail = 0.5 * t_sf2(t, df)
    return 1.0 - tail if t >= 0 else tail


def t_ppf(q, df):
    """Quantile of Student's t (bisection on the CDF)."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_ppf(1.0 - q, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def norm_sf2(z):
    return math.erfc(abs(z) / math.sqrt(2.0))


# -- significance tests -------------------------------------------------------

@dataclass
class TestResult:
    statistic: float
    p_value: float
    reject: bool
    df: float = float("nan")


@dataclass
class StatReport:
    welch: TestResult
    student: TestResult
    paired: TestResult
    wilcoxon: TestResult

    def items(self):
        return [("welch", self.welch), ("student", self.student),
                ("paired", self.paired), ("wilcoxon", self.wilcoxon)]

    @property
    def unanimous_reject(self):
        return all(r.reject for _, r in self.items())

    @property
    def unanimous_accept(self):
        return not any(r.reject for _, r in self.items())


def _t_result(diff, se, df, alpha):
    if se == 0.0:
        if diff == 0.0:
            return TestResult(0.0, 1.0, False, df)
        return TestResult(math.copysign(math.inf, diff), 0.0, True, df)
    t = diff / se
    p = t_sf2(t, df)
    return TestResult(t, p, p < alpha, df)


def _as_sample(x, min_n=2):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < min_n:
        raise UsageError(f"need at least {min_n} observations, got {x.size}")
    return x


def welch_test(a, b, alpha=ALPHA):
    a, b = _as_sample(a), _as_sample(b)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        df = float(a.size + b.size - 2)
    else:
        # normalised so tiny variances do not underflow when squared
        ra, rb = va / se2, vb / se2
        df = 1.0 / (ra ** 2 / (a.size - 1) + rb ** 2 / (b.size - 1))
    return _t_result(a.mean() - b.mean(), math.sqrt(se2), df, alpha)


def student_test(a, b, alpha=ALPHA):
    a, b = _as_sample(a), _as_sample(b)
    df = a.size + b.size - 2
    sp2 = ((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / df
    se = math.sqrt(sp2 * (1.0 / a.size + 1.0 / b.size))
    return _t_result(a.mean() - b.mean(), se, float(df), alpha)


def paired_test(a, b, alpha=ALPHA):
    a, b = _as_sample(a), _as_sample(b)
    if a.size != b.size:
        raise UsageError("paired test needs equal-length groups")
    d = a - b
    se = d.std(ddof=1) / math.sqrt(d.size)
    return _t_result(d.mean(), se, float(d.size - 1), alpha)


def rankdata(x):
    """Average ranks (1-based), ties get the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def ranksum_exact_pvalue(ranks, n_a, w_obs):
    """Two-sided permutation p-value of the rank sum over all group splits."""
    n = ranks.size
    expected = n_a * (n + 1) / 2.0
    dev = abs(w_obs - expected) - 1e-9
    hits = total = 0
    for combo in itertools.combinations(range(n), n_a):
        total += 1
        if abs(ranks[list(combo)].sum() - expected) >= dev:
            hits += 1
    return hits / total


def wilcoxon_ranksum_test(a, b, alpha=ALPHA):
    a, b = _as_sample(a, 1), _as_sample(b, 1)
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    n_a, n_b, n = a.size, b.size, pooled.size
    w = float(ranks[:n_a].sum())
    if min(n_a, n_b) < EXACT_RANKSUM_BELOW:
        p = ranksum_exact_pvalue(ranks, n_a, w)
        return TestResult(w, p, p < alpha)
    _, counts = np.unique(pooled, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = n_a * n_b / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0.0:
        return TestResult(w, 1.0, False)
    z = max(abs(w - n_a * (n + 1) / 2.0) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, norm_sf2(z))
    return TestResult(w, p, p < alpha)


def significance_tests(group_a, group_b, alpha=ALPHA):
    """Welch, Student, paired t and Wilcoxon rank-sum tests, two-sided."""
    return StatReport(
        welch=welch_test(group_a, group_b, alpha),
        student=student_test(group_a, group_b, alpha),
        paired=paired_test(group_a, group_b, alpha),
        wilcoxon=wilcoxon_ranksum_test(group_a, group_b, alpha),
    )


def confidence_interval(values, level=0.95):
    """Student-t interval for the mean: returns ``(mean, half_width)``."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise UsageError("confidence interval needs at least 2 values")
    half = t_ppf(0.5 + level / 2.0, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size)
    return float(x.mean()), float(half)


# -- curves -------------------------------------------------------------------

@dataclass
class EvalCurve:
    """Evaluation rewards on a shared step grid, one row per seed."""

    algorithm: str
    env: str
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rewards: dict = field(default_factory=dict)
    interval: int = EVAL_INTERVAL

    def add_seed(self, seed, steps, rewards):
        steps = np.asarray(steps, dtype=np.int64)
        rewards = np.asarray(rewards, dtype=np.float64)
        if steps.shape != rewards.shape:
            raise ConfigurationError("steps and rewards differ in length")
        if np.any(steps % self.interval):
            raise ConfigurationError(f"evaluation steps must be multiples of {self.interval}")
        if self.rewards and not np.array_equal(steps, self.steps):
            raise UsageError("all seeds must share one evaluation-step grid")
        self.steps = steps
        self.rewards[int(seed)] = rewards

    def append(self, seed, step, reward):
        """Append one evaluation point for ``seed`` (single-seed curves)."""
        seed = int(seed)
        if step % self.interval:
            raise ConfigurationError(f"evaluation steps must be multiples of {self.interval}")
        self.rewards[seed] = np.append(self.rewards.get(seed, np.zeros(0)), reward)
        if len(self.rewards[seed]) > len(self.steps):
            self.steps = np.append(self.steps, np.int64(step))

    @property
    def seeds(self):
        return sorted(self.rewards)

    def matrix(self):
        return np.vstack([self.rewards[s] for s in self.seeds])

    def merge(self, other):
        if (other.algorithm, other.env) != (self.algorithm, self.env):
            raise UsageError("cannot merge curves of different algorithm/env")
        for seed in other.seeds:
            self.add_seed(seed, other.steps, other.rewards[seed])
        return self


def evaluate_policy(policy, env, n_episodes=10, eval_seed=None):
    """Mean undiscounted return of a deterministic ``policy(state) -> action``.

    ``env`` is reseeded with ``eval_seed`` first, so every call replays the
    same initial states.
    """
    if eval_seed is not None:
        env.seed(eval_seed)
    returns = []
    for _ in range(n_episodes):
        s = env.reset()
        total, done = 0.0, False
        while not done:
            s, r, done, _ = env.step(policy(s))
            total += r
        returns.append(total)
    return float(np.mean(returns))


def converged_reward(curve, window=CONVERGED_WINDOW):
    """Per-seed mean of the final ``window`` evaluations, ordered by seed."""
    mat = curve.matrix() if isinstance(curve, EvalCurve) else np.atleast_2d(curve)
    if mat.shape[1] < window:
        raise UsageError(f"curve has {mat.shape[1]} evaluations, need >= {window}")
    return mat[:, -window:].mean(axis=1)


def smoothing_window(n_points, fraction=0.05):
    return max(1, int(math.floor(fraction * n_points + 0.5)))


def smooth_curve(values, fraction=0.05):
    """Trailing moving average with window ``round(fraction * n)``.

    The first ``window - 1`` points average the available prefix.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise UsageError("cannot smooth an empty curve")
    w = smoothing_window(x.size, fraction)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - w, 0)
    out = (c[idx] - c[lo]) / (idx - lo)
    # cumulative sums can drift by an ulp; keep the output inside the data range
    return np.clip(out, x.min(), x.max())


# -- files --------------------------------------------------------------------

def write_curve_csv(curve, path, metadata=None):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {CURVE_SCHEMA}\n")
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for seed in curve.seeds:
            for step, r in zip(curve.steps, curve.rewards[seed]):
                writer.writerow([curve.algorithm, curve.env, seed, int(step), repr(float(r))])


def _data_lines(fh):
    return (line for line in fh if not line.startswith("#"))


def read_curve_csv(path, interval=None):
    """Return ``{(algorithm, env): EvalCurve}`` for the rows in ``path``.

    Without ``interval`` the grid spacing is taken from the first step.
    """
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(_data_lines(fh)):
            key = (row["algorithm"], row["env"])
            seed_rows = rows.setdefault(key, {}).setdefault(int(row["seed"]), [])
            seed_rows.append((int(row["step"]), float(row["eval_reward"])))
    curves = {}
    for (algo, env), per_seed in rows.items():
        for pts in per_seed.values():
            pts.sort()
        first = min(pts[0][0] for pts in per_seed.values())
        curve = EvalCurve(algo, env, interval=interval or first)
        for seed, pts in sorted(per_seed.items()):
            curve.add_seed(seed, [s for s, _ in pts], [r for _, r in pts])
        curves[(algo, env)] = curve
    return curves


def read_curve_dir(directory, interval=None):
    merged = {}
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".csv") or not name.startswith("curve"):
            continue
        for key, curve in read_curve_csv(os.path.join(directory, name), interval).items():
            if key in merged:
                merged[key].merge(curve)
            else:
                merged[key] = curve
    return merged


def write_report_csv(rows, path):
    """``rows``: iterables ordered as ``REPORT_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {REPORT_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(row)


def read_report_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(_data_lines(fh)))


def plot_curves(curves, path, title=None):
    """SVG of smoothed mean learning curves with shaded 95% CI bands."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for curve in curves:
        mat = np.vstack([smooth_curve(row) for row in curve.matrix()])
        mean = mat.mean(axis=0)
        if mat.shape[0] >= 2:
            half = np.array([confidence_interval(col)[1] for col in mat.T])
        else:
            half = np.zeros_like(mean)
        ax.plot(curve.steps, mean, label=curve.algorithm)
        ax.fill_between(curve.steps, mean - half, mean + half, alpha=0.25)
    ax.set_xlabel("time steps")
    ax.set_ylabel("evaluation reward")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
