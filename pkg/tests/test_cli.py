import configparser
import csv

import numpy as np
import pytest

from ocpg.cli import (
    EXIT_FAIL, EXIT_OK, EXIT_USAGE, collect_curves, compare_curves, format_seeds, main,
    parse_seeds,
)
from ocpg.errors import UsageError
from ocpg.stats import EvalCurve, read_curve_csv, read_report_csv, write_curve_csv

TINY = ["--hidden", "8,8", "--batch-size", "16", "--exploration-steps", "100",
        "--eval-episodes", "2", "--eval-every", "100"]


def train(tmp_path, *extra, name="run", steps="300", seeds="0..1", algo="ocpg"):
    out = tmp_path / name
    code = main(["train", "--env", "lqr-scalar", "--algo", algo, "--steps", steps,
                 "--seeds", seeds, "--out", str(out), *TINY, *extra])
    return code, out


def data_rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


class TestSeeds:
    @pytest.mark.parametrize("text,seeds", [("0..9", list(range(10))), ("0,2", [0, 2]),
                                            ("0..2,7", [0, 1, 2, 7]), (" 4 ", [4])])
    def test_parse(self, text, seeds):
        assert parse_seeds(text) == seeds

    @pytest.mark.parametrize("text", ["", "3..1", "1,1", "a..b", "x"])
    def test_bad(self, text):
        with pytest.raises(UsageError):
            parse_seeds(text)

    def test_format_round_trip(self):
        for seeds in ([0, 1, 2], [0, 2], [5]):
            assert parse_seeds(format_seeds(seeds)) == seeds


class TestExitCodes:
    def test_missing_required(self, tmp_path, capsys):
        code = main(["train", "--env", "lqr-scalar", "--steps", "10", "--seeds", "0",
                     "--out", str(tmp_path)])
        assert code == EXIT_USAGE
        assert "--algo" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["fly"]) == EXIT_USAGE

    def test_bad_choice(self):
        assert main(["train", "--env", "ant", "--algo", "ocpg"]) == EXIT_USAGE

    def test_invalid_agent_setting(self, tmp_path):
        code, _ = train(tmp_path, "--gamma", "1.5")
        assert code == EXIT_USAGE

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exits_one(self, tmp_path):
        code, out = train(tmp_path, "--env-param", "noise_std=1e300", seeds="3")
        assert code == EXIT_FAIL
        report = (out / "divergence_seed3.txt").read_text()
        assert "step: 101" in report and "critic_losses" in report


class TestTrain:
    def test_artifacts(self, tmp_path):
        code, out = train(tmp_path)
        assert code == EXIT_OK
        for seed in (0, 1):
            curves = read_curve_csv(out / f"curve_seed{seed}.csv")
            curve = curves[("ocpg", "lqr-scalar")]
            assert list(curve.steps) == [100, 200, 300] and curve.seeds == [seed]
        rows = data_rows(out / "summary.csv")
        assert rows[0][:3] == ["seed", "n_evals", "final_reward"]
        assert [r[0] for r in rows[1:]] == ["0", "1", "mean", "ci95_half_width"]

    def test_metadata_records_effective_values(self, tmp_path):
        _, out = train(tmp_path)
        cp = configparser.ConfigParser()
        cp.read(out / "metadata.ini")
        assert cp["run"]["seeds"] == "0..1" and cp["run"]["algo"] == "ocpg"
        assert float(cp["agent"]["actor_lr"]) == 5e-5
        assert float(cp["agent"]["mu"]) == 0.1 and cp["agent"]["hidden"] == "8,8"

    def test_rerun_from_metadata_is_bit_identical(self, tmp_path):
        _, first = train(tmp_path, seeds="2")
        out2 = tmp_path / "again"
        assert main(["train", "--config", str(first / "metadata.ini"),
                     "--out", str(out2)]) == EXIT_OK
        assert (first / "curve_seed2.csv").read_bytes() == \
            (out2 / "curve_seed2.csv").read_bytes()

    def test_flags_override_config(self, tmp_path):
        _, first = train(tmp_path, seeds="0")
        out2 = tmp_path / "override"
        main(["train", "--config", str(first / "metadata.ini"), "--seeds", "4",
              "--steps", "200", "--out", str(out2)])
        assert (out2 / "curve_seed4.csv").exists()
        assert len(read_curve_csv(out2 / "curve_seed4.csv")[("ocpg", "lqr-scalar")].steps) == 2

    def test_random_phase_only(self, tmp_path):
        code, out = train(tmp_path, "--exploration-steps", "1000", steps="200", seeds="0")
        assert code == EXIT_OK

    def test_wrapper_and_checkpoints(self, tmp_path, capsys):
        code, out = train(tmp_path, "--wrapper", "delayed", "--wrapper-param", "delay=3",
                          "--checkpoint-every", "2", seeds="0")
        assert code == EXIT_OK
        ckpts = sorted(p.name for p in (out / "checkpoints").iterdir())
        assert ckpts == ["seed0_final.npz", "seed0_step200.npz"]
        code = main(["evaluate", "--checkpoint", str(out / "checkpoints" / "seed0_final.npz")])
        assert code == EXIT_OK
        assert "lqr-scalar: mean return" in capsys.readouterr().out

    def test_missing_checkpoint(self, tmp_path):
        assert main(["evaluate", "--checkpoint", str(tmp_path / "nope.npz")]) == EXIT_USAGE

    def test_env_variables(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OCPG_OUTPUT_ROOT", str(tmp_path / "root"))
        monkeypatch.setenv("OCPG_JOBS", "2")
        code = main(["train", "--env", "lqr-scalar", "--algo", "td3-baseline",
                     "--steps", "200", "--seeds", "0,1", *TINY])
        assert code == EXIT_OK
        out = tmp_path / "root" / "lqr-scalar" / "td3-baseline"
        assert (out / "curve_seed0.csv").exists() and (out / "curve_seed1.csv").exists()

    def test_parallel_matches_serial(self, tmp_path):
        _, serial = train(tmp_path, name="serial")
        _, parallel = train(tmp_path, "--jobs", "2", name="parallel")
        for seed in (0, 1):
            assert (serial / f"curve_seed{seed}.csv").read_bytes() == \
                (parallel / f"curve_seed{seed}.csv").read_bytes()


def synthetic(tmp_path, algo, rewards_per_seed, name):
    d = tmp_path / name
    d.mkdir()
    for seed, rewards in enumerate(rewards_per_seed):
        curve = EvalCurve(algo, "lqr-scalar")
        curve.add_seed(seed, np.arange(1, len(rewards) + 1) * 1000, rewards)
        write_curve_csv(curve, d / f"curve_seed{seed}.csv")
    return d


class TestCompare:
    def test_identical_curves_share_best(self, tmp_path):
        rng = np.random.default_rng(0)
        rewards = [rng.normal(size=60) for _ in range(5)]
        a = synthetic(tmp_path, "ocpg", rewards, "a")
        b = synthetic(tmp_path, "td3-baseline", rewards, "b")
        table, report = compare_curves(collect_curves([a, b]))
        assert [row[-1] for row in table] == ["shared-best", "shared-best"]
        assert len(report) == 4 and not any(r[-1] for r in report)

    def test_disjoint_curves(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        a = synthetic(tmp_path, "ocpg", [rng.normal(10, 1, 60) for _ in range(10)], "a")
        b = synthetic(tmp_path, "td3-baseline", [rng.normal(0, 1, 60) for _ in range(10)], "b")
        out = tmp_path / "cmp"
        assert main(["compare", str(a), str(b), "--out", str(out)]) == EXIT_OK
        report = read_report_csv(out / "report.csv")
        assert {r["test"] for r in report} == {"welch", "student", "paired", "wilcoxon"}
        assert all(r["reject"] == "True" for r in report)
        table = data_rows(out / "table.csv")
        marks = {row[1]: row[-1] for row in table[1:]}
        assert marks == {"ocpg": "superior", "td3-baseline": ""}
        assert (out / "curves_lqr-scalar.svg").read_text().lstrip().startswith("<?xml")
        assert "[superior]" in capsys.readouterr().out

    def test_mismatched_seed_grid(self, tmp_path):
        a = synthetic(tmp_path, "ocpg", [np.zeros(60)] * 3, "a")
        b = synthetic(tmp_path, "td3-baseline", [np.zeros(60)] * 2, "b")
        assert main(["compare", str(a), str(b), "--out", str(tmp_path / "c")]) == EXIT_USAGE

    def test_single_algorithm(self, tmp_path):
        a = synthetic(tmp_path, "ocpg", [np.zeros(60)] * 3, "a")
        assert main(["compare", str(a), "--out", str(tmp_path / "c")]) == EXIT_USAGE

    def test_missing_dir(self, tmp_path):
        assert main(["compare", str(tmp_path / "none")]) == EXIT_USAGE


class TestVerifyAndDemo:
    @pytest.mark.parametrize("suite", ["compat", "gradcheck", "stats"])
    def test_verify_passes(self, suite, tmp_path):
        assert main(["verify", suite, "--out", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / f"{suite}.csv").read_text().splitlines()
        assert lines[0] == f"# schema: ocpg.verify-{suite}/1"

    def test_verify_failure_exit(self, tmp_path, monkeypatch):
        import ocpg.cli as cli
        from ocpg.verify import SuiteResult
        monkeypatch.setattr(cli, "run_suite", lambda name, out_dir, seed: SuiteResult(
            name, ["case", "pass"], [["x", False]], 0.0))
        assert main(["verify", "compat", "--out", str(tmp_path)]) == EXIT_FAIL

    def test_demo_interpolation(self, tmp_path, capsys):
        assert main(["demo-interpolation", "--out", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "derivative discrepancy factor (polynomial): 24.308" in out
        header = data_rows(tmp_path / "interpolation.csv")[0]
        assert header[0] == "x" and len(data_rows(tmp_path / "interpolation.csv")) == 2002
        assert (tmp_path / "interpolation.svg").stat().st_size > 0

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0 and "ocpg 0.1.0" in capsys.readouterr().out
