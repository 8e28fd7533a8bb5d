"""Command-line entry point: ``ocpg {train,verify,demo-interpolation,compare,evaluate}``.

Exit codes: 0 success, 1 verification failure or aborted run, 2 usage error.
Environment variables ``OCPG_OUTPUT_ROOT`` and ``OCPG_JOBS`` supply defaults
for ``--out`` and ``--jobs``.
"""

import argparse
import ast
import configparser
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .agent import ALGORITHM_NAMES, AgentConfig, build_env, train
from .envs import ENV_NAMES
from .errors import ConfigurationError, OcpgError, TrainingDivergenceError, UsageError
from .stats import (
    CONVERGED_WINDOW, confidence_interval, evaluate_policy,
    plot_curves, read_curve_csv, significance_tests, write_curve_csv,
    write_report_csv,
)
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ALGOS = {v: k for k, v in ALGORITHM_NAMES.items()}  # name -> gradient mode
METADATA_NAME = "metadata.ini"
SUMMARY_SCHEMA = "ocpg.summary/1"
TABLE_SCHEMA = "ocpg.table/1"

# flag name -> AgentConfig field
AGENT_FLAGS = {
    "mu": float, "gamma": float, "tau": float, "batch_size": int, "actor_lr": float,
    "critic_lr": float, "policy_delay": int, "target_noise": float, "noise_clip": float,
    "exploration_steps": int, "hidden": str, "buffer_capacity": int, "eval_every": int,
    "eval_episodes": int, "eval_seed_offset": int, "probes": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_seeds(text):
    """``"0..9"``, ``"0,3,5"`` or a mix like ``"0..2,7"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(v) for v in part.split("..", 1))
                if hi < lo:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed specification {part!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise UsageError("duplicate seeds")
    return seeds


def format_seeds(seeds):
    seeds = list(seeds)
    if seeds == list(range(seeds[0], seeds[0] + len(seeds))) and len(seeds) > 1:
        return f"{seeds[0]}..{seeds[-1]}"
    return ",".join(str(s) for s in seeds)


def _parse_value(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _parse_hidden(value):
    if isinstance(value, (tuple, list)):
        return tuple(int(v) for v in value)
    text = str(value).strip("()[] ")
    return tuple(int(v) for v in text.replace("x", ",").split(",") if v.strip())


# -- run configuration ---------------------------------------------------------------

def load_run_config(path):
    """Read an INI run file into ``{"run": {...}, "agent": {...}, "env": {...}, "wrapper": {...}}``."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    out = {"run": {}, "agent": {}, "env": {}, "wrapper": {}}
    for section in cp.sections():
        if section not in out:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, value in cp[section].items():
            out[section][key] = value if section == "run" else _parse_value(value)
    return out


def resolve_run(args):
    """Merge config-file values with flags (flags win) into an effective run."""
    cfg = load_run_config(args.config) if args.config else \
        {"run": {}, "agent": {}, "env": {}, "wrapper": {}}
    run = dict(cfg["run"])
    for key in ("env", "algo", "steps", "seeds", "wrapper"):
        value = getattr(args, key)
        if value is not None:
            run[key] = value
    for key in ("env", "algo", "steps", "seeds"):
        if key not in run:
            raise UsageError(f"missing required setting --{key}")
    if run["env"] not in ENV_NAMES:
        raise UsageError(f"unknown env {run['env']!r}; choose from {ENV_NAMES}")
    if run["algo"] not in ALGOS:
        raise UsageError(f"unknown algo {run['algo']!r}; choose from {sorted(ALGOS)}")
    run["steps"] = int(run["steps"])
    if run["steps"] < 1:
        raise UsageError("--steps must be positive")
    run["seeds"] = format_seeds(parse_seeds(run["seeds"]))
    run.setdefault("wrapper", "none")
    run["checkpoint_every"] = int(args.checkpoint_every if args.checkpoint_every
                                  is not None else run.get("checkpoint_every", 0))

    agent = dict(cfg["agent"])
    for key, cast in AGENT_FLAGS.items():
        value = getattr(args, key)
        if value is not None:
            agent[key] = cast(value)
    if "hidden" in agent:
        agent["hidden"] = _parse_hidden(agent["hidden"])
    agent["gradient_mode"] = ALGOS[run["algo"]]
    config = AgentConfig.from_dict(agent)

    env_params = dict(cfg["env"])
    for item in args.env_param or []:
        key, _, value = item.partition("=")
        env_params[key] = _parse_value(value)
    wrapper_params = dict(cfg["wrapper"])
    for item in args.wrapper_param or []:
        key, _, value = item.partition("=")
        wrapper_params[key] = _parse_value(value)
    return run, config, env_params, wrapper_params


def write_metadata(path, run, config, env_params, wrapper_params):
    """Every effective value, so ``train --config <this file>`` reproduces the run."""
    cp = configparser.ConfigParser()
    cp["run"] = {k: str(run[k]) for k in ("env", "algo", "steps", "seeds", "wrapper",
                                         "checkpoint_every")}
    agent = config.to_dict()
    agent.pop("gradient_mode")
    agent["actor_lr"] = config.effective_actor_lr
    agent["hidden"] = ",".join(str(h) for h in config.hidden)
    cp["agent"] = {k: repr(v) if not isinstance(v, str) else v for k, v in agent.items()}
    cp["env"] = {k: repr(v) for k, v in env_params.items()}
    cp["wrapper"] = {k: repr(v) for k, v in wrapper_params.items()}
    with open(path, "w") as fh:
        fh.write(f"# ocpg run metadata, schema ocpg.run/1, ocpg {__version__}\n")
        cp.write(fh)


# -- train -----------------------------------------------------------------------

def run_seed(job):
    """Train one seed and write its curve; returns ``(seed, rewards, error)``."""
    run, config, env_params, wrapper_params, seed, out_dir = job
    env, eval_env = build_env(run["env"], seed, env_params, run["wrapper"], wrapper_params)
    meta = {"algorithm": config.algorithm, "env": run["env"], "seed": seed,
            "steps": run["steps"], "wrapper": run["wrapper"], "ocpg_version": __version__}
    ckpt = None
    if run["checkpoint_every"]:
        os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
        ckpt = os.path.join(out_dir, "checkpoints", f"seed{seed}_step{{step}}.npz")
    try:
        result = train(env, config, run["steps"], seed, eval_env=eval_env,
                       env_name=run["env"], checkpoint_every=run["checkpoint_every"],
                       checkpoint_path=ckpt,
                       checkpoint_meta={**meta, "env_params": env_params})
    except TrainingDivergenceError as exc:
        report = os.path.join(out_dir, f"divergence_seed{seed}.txt")
        with open(report, "w") as fh:
            fh.write(f"seed: {seed}\nmessage: {exc}\n")
            for key, value in sorted(exc.diagnostics.items()):
                fh.write(f"{key}: {value}\n")
        return seed, None, f"{exc} (step {exc.diagnostics.get('step')}; see {report})"
    curve = result.curve
    write_curve_csv(curve, os.path.join(out_dir, f"curve_seed{seed}.csv"), meta)
    if ckpt is not None:
        result.agent.save(os.path.join(out_dir, "checkpoints", f"seed{seed}_final.npz"),
                          {**meta, "env_params": env_params})
    rewards = curve.rewards.get(seed, np.zeros(0))
    return seed, rewards, None


def _jobs(args):
    jobs = args.jobs if args.jobs is not None else int(os.environ.get("OCPG_JOBS", "1"))
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return jobs


def _output_root(args, default="runs"):
    return args.out or os.environ.get("OCPG_OUTPUT_ROOT") or default


def cmd_train(args):
    run, config, env_params, wrapper_params = resolve_run(args)
    seeds = parse_seeds(run["seeds"])
    out_dir = args.out or os.path.join(_output_root(args), run["env"], run["algo"])
    os.makedirs(out_dir, exist_ok=True)
    write_metadata(os.path.join(out_dir, METADATA_NAME), run, config, env_params,
                   wrapper_params)
    jobs = [(run, config, env_params, wrapper_params, s, out_dir) for s in seeds]
    workers = min(_jobs(args), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run_seed, jobs))
    else:
        results = [run_seed(j) for j in jobs]
    failed = [(s, err) for s, _, err in results if err]
    ok = [(s, r) for s, r, err in results if not err]
    write_summary(os.path.join(out_dir, "summary.csv"), ok)
    for s, err in failed:
        print(f"seed {s}: {err}", file=sys.stderr)
    print(f"wrote {len(ok)} curve file(s) to {out_dir}")
    return EXIT_FAIL if failed else EXIT_OK


def write_summary(path, per_seed):
    """Per-seed final and converged rewards plus the across-seed mean and CI."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {SUMMARY_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["seed", "n_evals", "final_reward", "converged_reward", "window"])
        conv = []
        for seed, rewards in per_seed:
            if len(rewards) == 0:
                w.writerow([seed, 0, "", "", 0])
                continue
            window = min(CONVERGED_WINDOW, len(rewards))
            c = float(np.mean(rewards[-window:]))
            conv.append(c)
            w.writerow([seed, len(rewards), repr(float(rewards[-1])), repr(c), window])
        if len(conv) >= 2:
            mean, half = confidence_interval(conv)
            w.writerow(["mean", "", "", repr(mean), ""])
            w.writerow(["ci95_half_width", "", "", repr(half), ""])


# -- verify / demo ---------------------------------------------------------------------

def cmd_verify(args):
    out_dir = args.out or os.path.join(_output_root(args), "verify")
    res = run_suite(args.suite, out_dir=out_dir, seed=args.seed)
    status = "PASS" if res.passed else "FAIL"
    print(f"{args.suite}: {status} ({len(res.rows)} checks, {len(res.failures())} failed,"
          f" {res.seconds:.1f}s) -> {os.path.join(out_dir, args.suite + '.csv')}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_demo_interpolation(args):
    from .oracle import interpolation_demo, write_interpolation_csv
    out_dir = args.out or os.path.join(_output_root(args), "interpolation")
    os.makedirs(out_dir, exist_ok=True)
    demo = interpolation_demo(n_nodes=args.nodes)
    write_interpolation_csv(demo, os.path.join(out_dir, "interpolation.csv"))
    plot_interpolation(demo, os.path.join(out_dir, "interpolation.svg"))
    print(f"max node error (polynomial): {demo.poly_node_error:.3e}")
    print(f"max node error (barycentric): {demo.bary_node_error:.3e}")
    print(f"derivative discrepancy factor (polynomial): {demo.poly_derivative_factor:.3f}")
    print(f"derivative discrepancy factor (barycentric): {demo.bary_derivative_factor:.3f}")
    print(f"wrote {out_dir}")
    return EXIT_OK if demo.passed else EXIT_FAIL


def plot_interpolation(demo, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    from .oracle import runge
    for ax, suffix in ((ax0, "_values"), (ax1, "_derivative")):
        ax.plot(demo.grid, getattr(demo, "true" + suffix), label="1/(25x^2+1)")
        ax.plot(demo.grid, getattr(demo, "poly" + suffix), label="degree-10 polynomial")
        ax.plot(demo.grid, getattr(demo, "bary" + suffix), label="barycentric rational")
    ax0.plot(demo.nodes, runge(demo.nodes), "ko", ms=3)
    ax0.set_title("values")
    ax1.set_title("derivatives")
    ax0.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# -- compare -----------------------------------------------------------------------------

def collect_curves(dirs):
    """All ``curve*.csv`` under ``dirs`` merged by (algorithm, env)."""
    merged = {}
    for d in dirs:
        if not os.path.isdir(d):
            raise UsageError(f"not a directory: {d}")
        for root, subdirs, files in os.walk(d):
            subdirs.sort()
            for name in sorted(files):
                if not (name.startswith("curve") and name.endswith(".csv")):
                    continue
                for key, curve in read_curve_csv(os.path.join(root, name)).items():
                    if key in merged:
                        if set(curve.seeds) & set(merged[key].seeds):
                            raise UsageError(f"duplicate seeds for {key} in {root}")
                        merged[key].merge(curve)
                    else:
                        merged[key] = curve
    return merged


def compare_curves(curves, window=CONVERGED_WINDOW):
    """Table rows and report rows for every env with at least two algorithms."""
    by_env = {}
    for (algo, env), curve in curves.items():
        by_env.setdefault(env, {})[algo] = curve
    table, report = [], []
    for env in sorted(by_env):
        algos = by_env[env]
        if len(algos) < 2:
            raise UsageError(f"env {env!r} has curves for only one algorithm")
        grids = {a: (tuple(c.seeds), c.matrix().shape[1]) for a, c in algos.items()}
        if len(set(g[0] for g in grids.values())) != 1:
            raise UsageError(f"mismatched seed grids for {env!r}: "
                             + "; ".join(f"{a}: {g[0]}" for a, g in sorted(grids.items())))
        conv = {}
        for a, c in sorted(algos.items()):
            mat = c.matrix()
            w = min(window, mat.shape[1])
            conv[a] = mat[:, -w:].mean(axis=1)
        means = {a: float(np.mean(v)) for a, v in conv.items()}
        best = max(means, key=means.get)
        tests = {}
        names = sorted(algos)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                rep = significance_tests(conv[a], conv[b])
                tests[(a, b)] = tests[(b, a)] = rep
                for tname, r in rep.items():
                    report.append([env, a, b, tname, r.statistic, r.p_value, r.reject])
        tied = [a for a in names if a != best and not tests[(best, a)].unanimous_reject]
        for a in names:
            mean, half = confidence_interval(conv[a]) if len(conv[a]) >= 2 \
                else (means[a], float("nan"))
            if a == best:
                mark = "shared-best" if tied else "superior"
            else:
                mark = "shared-best" if a in tied else ""
            table.append([env, a, len(conv[a]), mean, half, a == best, mark])
    return table, report


TABLE_COLUMNS = ["env", "algorithm", "n_seeds", "converged_mean", "ci95_half_width",
                 "highest", "marking"]


def cmd_compare(args):
    curves = collect_curves(args.curve_dirs)
    if not curves:
        raise UsageError("no curve files found")
    table, report = compare_curves(curves, args.window)
    out_dir = args.out or os.path.join(_output_root(args), "compare")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "table.csv"), "w", newline="") as fh:
        fh.write(f"# schema: {TABLE_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        w.writerows(table)
    write_report_csv(report, os.path.join(out_dir, "report.csv"))
    for env in sorted({row[0] for row in table}):
        plot_curves([c for (a, e), c in sorted(curves.items()) if e == env],
                    os.path.join(out_dir, f"curves_{env}.svg"), title=env)
    for env, algo, n, mean, half, highest, mark in table:
        flag = f" [{mark}]" if mark else ""
        print(f"{env:<14} {algo:<14} {mean:12.3f} +/- {half:.3f} (n={n}){flag}")
    return EXIT_OK


# -- evaluate -----------------------------------------------------------------------------

def cmd_evaluate(args):
    from .agent import Agent
    from .envs import make_env
    if not os.path.exists(args.checkpoint):
        raise UsageError(f"no such checkpoint: {args.checkpoint}")
    agent = Agent.load(args.checkpoint)
    meta = getattr(agent, "metadata", {}) or {}
    env_name = args.env or meta.get("env") or agent.spec.name
    env = make_env(env_name, **(meta.get("env_params") or {}))
    seed = args.seed if args.seed is not None else agent.seed + agent.config.eval_seed_offset
    value = evaluate_policy(agent.policy, env, args.episodes, seed)
    print(f"{env_name}: mean return {value!r} over {args.episodes} episode(s), eval seed {seed}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="ocpg", description="Off-policy compatible policy gradient toolkit")
    p.add_argument("--version", action="version", version=f"ocpg {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train one algorithm on one environment over seeds")
    t.add_argument("--config", help="INI run file (e.g. a previous run's metadata.ini)")
    t.add_argument("--env", choices=ENV_NAMES)
    t.add_argument("--algo", choices=sorted(ALGOS))
    t.add_argument("--steps", type=int)
    t.add_argument("--seeds", help="e.g. 0..9 or 0,2,4")
    t.add_argument("--wrapper", choices=("none", "noisy", "sparse", "delayed"))
    t.add_argument("--env-param", action="append", metavar="KEY=VALUE")
    t.add_argument("--wrapper-param", action="append", metavar="KEY=VALUE")
    t.add_argument("--checkpoint-every", type=int, metavar="N_EVALS")
    for key, cast in AGENT_FLAGS.items():
        t.add_argument("--" + key.replace("_", "-"), type=cast, dest=key)
    t.add_argument("--out", help="run directory (default $OCPG_OUTPUT_ROOT/<env>/<algo>)")
    t.add_argument("--jobs", type=int, help="parallel seed workers (default $OCPG_JOBS or 1)")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("demo-interpolation", help="value-vs-derivative fitting example")
    d.add_argument("--nodes", type=int, default=11)
    d.add_argument("--out")
    d.set_defaults(func=cmd_demo_interpolation)

    c = sub.add_parser("compare", help="converged-reward table with significance tests")
    c.add_argument("curve_dirs", nargs="+")
    c.add_argument("--window", type=int, default=CONVERGED_WINDOW)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("evaluate", help="score a saved agent checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", choices=ENV_NAMES)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"ocpg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"ocpg: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OcpgError as exc:
        print(f"ocpg: {exc}", file=sys.stderr)
        return EXIT_FAIL
