"""Configuration-driven experiment runner.

Commands:
  certibound run --config cfg.json [--output DIR] [--no-figures]
  certibound validate --config cfg.json
  certibound list-problems

The config is a JSON object. Keys: problem (registry id), mode (refine,
estimate-exact, estimate-mcmc, baseline, adversarial), n (evaluation budget,
or sample count in baseline mode), N (splitting sample size per vertex),
t (chain steps), alpha (CI level, default 0.05), seed (master seed for the
stochastic modes), output (directory), figures (bool, default true).

Exit codes: 0 ok, 2 config error, 3 runtime error.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

from . import __version__
from .distributions import density_view
from .errors import ConfigError
from .mcmc import MCMCConfig, mcmc_tree_estimate
from .problems import (
    adversarial_from_id,
    get_problem,
    list_problems,
    naive_mc,
    oracle_integrate,
    parse_problem_id,
)
from .refine import refine_with_trace
from .splitting import estimate_tree_exact
from .tree import format_path

MODES = ("refine", "estimate-exact", "estimate-mcmc", "baseline", "adversarial")
_ESTIMATE_MODES = ("estimate-exact", "estimate-mcmc")
_STOCHASTIC_MODES = ("estimate-exact", "estimate-mcmc", "baseline")
_KNOWN_KEYS = ("problem", "mode", "n", "N", "t", "alpha", "seed", "output", "figures")


@dataclass
class RunConfig:
    problem: str
    mode: str
    n: int
    big_n: int | None = None
    steps: int | None = None
    alpha: float = 0.05
    seed: int | None = None
    output: str = "."
    figures: bool = True

    def echo(self) -> dict:
        out = {"problem": self.problem, "mode": self.mode, "n": self.n}
        if self.big_n is not None:
            out["N"] = self.big_n
        if self.steps is not None:
            out["t"] = self.steps
        out["alpha"] = self.alpha
        if self.seed is not None:
            out["seed"] = self.seed
        out["output"] = self.output
        out["figures"] = self.figures
        return out


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config(raw) -> tuple[list[str], list[str]]:
    """Schema and cross-field checks. Never constructs a problem.

    Returns (violations, warnings); an empty violations list means the
    config is runnable.
    """
    violations: list[str] = []
    warnings: list[str] = []
    if not isinstance(raw, dict):
        return (["config must be a JSON object"], [])
    for key in raw:
        if key not in _KNOWN_KEYS:
            violations.append(f"unknown key {key!r}")

    problem = raw.get("problem")
    parsed = None
    if problem is None:
        violations.append("problem required")
    elif not isinstance(problem, str):
        violations.append("problem must be a string id")
    else:
        parsed = parse_problem_id(problem)
        if parsed is None:
            violations.append(
                f"unknown problem id {problem!r}; known ids: {', '.join(list_problems())}"
            )

    mode = raw.get("mode")
    if mode is None:
        violations.append("mode required")
    elif mode not in MODES:
        violations.append(f"mode must be one of {', '.join(MODES)}, got {mode!r}")

    n = raw.get("n")
    if n is None:
        violations.append("n required")
    elif not _is_int(n) or n < 0:
        violations.append("n must be a nonnegative integer")
    elif mode == "baseline" and n < 1:
        violations.append("n must be >= 1 in baseline mode")

    big_n = raw.get("N")
    if mode in _ESTIMATE_MODES:
        if big_n is None:
            violations.append("N required")
        elif not _is_int(big_n) or big_n < 1:
            violations.append("N must be a positive integer")
    elif big_n is not None and mode in MODES:
        warnings.append(f"N ignored in {mode} mode")

    steps = raw.get("t")
    if mode == "estimate-mcmc":
        if steps is None:
            violations.append("t required")
        elif not _is_int(steps) or steps < 0:
            violations.append("t must be a nonnegative integer")
    elif steps is not None and mode in MODES:
        warnings.append(f"t ignored in {mode} mode")

    seed = raw.get("seed")
    if mode in _STOCHASTIC_MODES:
        if seed is None:
            violations.append("seed required")
        elif not _is_int(seed) or seed < 0:
            violations.append("seed must be a nonnegative integer")
    elif seed is not None and mode in MODES:
        warnings.append(f"seed ignored in {mode} mode: the run is deterministic")

    alpha = raw.get("alpha")
    if alpha is not None:
        if not isinstance(alpha, (int, float)) or isinstance(alpha, bool) or not 0 < alpha < 1:
            violations.append("alpha must lie strictly between 0 and 1")
        elif mode in MODES and mode not in _ESTIMATE_MODES:
            warnings.append(f"alpha ignored in {mode} mode")

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        violations.append("output must be a path string")

    figures = raw.get("figures")
    if figures is not None and not isinstance(figures, bool):
        violations.append("figures must be a boolean")

    if mode == "adversarial" and parsed is not None:
        if parsed[0] != "adversarial":
            violations.append("adversarial mode requires an adversarial-* problem id")
        elif _is_int(n) and n > parsed[1]:
            warnings.append(
                f"n={n} exceeds the instance build budget {parsed[1]}; "
                "the runs may diverge past it"
            )
    return violations, warnings


def config_from_dict(raw: dict) -> RunConfig:
    violations, _ = validate_config(raw)
    if violations:
        raise ConfigError(violations)
    return RunConfig(
        problem=raw["problem"],
        mode=raw["mode"],
        n=raw["n"],
        big_n=raw.get("N"),
        steps=raw.get("t"),
        alpha=float(raw.get("alpha", 0.05)),
        seed=raw.get("seed"),
        output=raw.get("output", "."),
        figures=raw.get("figures", True),
    )


@dataclass(eq=False)
class RunReport:
    """Everything a run produced, ready for serialization."""

    config: dict
    g_calls: int = 0
    wall_clock_s: float = 0.0
    trace: tuple = field(default=())
    bounds: object = None
    estimate: object = None
    diagnostics: dict | None = None
    baseline: object = None
    adversarial: dict | None = None

    def to_json_dict(self) -> dict:
        out = {
            "version": __version__,
            "config": self.config,
            "problem": self.config["problem"],
            "mode": self.config["mode"],
            "g_calls": self.g_calls,
            "wall_clock_s": self.wall_clock_s,
        }
        if self.bounds is not None:
            out["bounds"] = {
                "n_final": self.trace[-1].n if self.trace else 0,
                "p_lower": self.bounds.lower,
                "p_upper": self.bounds.upper,
                "gap": self.bounds.gap,
            }
        if self.estimate is not None:
            out["estimate"] = self.estimate.to_json_dict()
        if self.baseline is not None:
            out["baseline"] = {
                "p_hat": self.baseline.estimate,
                "hits": self.baseline.hits,
                "n": self.baseline.n,
                "std_error": self.baseline.std_error,
            }
        if self.adversarial is not None:
            out["adversarial"] = self.adversarial
        return out


def _run_adversarial(config: RunConfig, report: RunReport) -> None:
    instance = adversarial_from_id(config.problem)
    instance.base.g.reset()
    instance.instance.g.reset()
    base_run = refine_with_trace(instance.base, config.n)
    inst_run = refine_with_trace(instance.instance, config.n)
    # fixed-resolution oracle: the adaptive loop cannot certify 1e-6 relative
    # accuracy against a discontinuous indicator, and the margin check only
    # needs a few digits
    resolution = 1 << 20 if instance.base.dim == 1 else 1024
    base_mass = oracle_integrate(instance.base, resolution=resolution, adaptive=False)
    inst_mass = oracle_integrate(instance.instance, resolution=resolution, adaptive=False)
    gap = inst_mass - base_mass
    section = {
        "build_budget": instance.build_budget,
        "run_budget": config.n,
        "identical_trees": base_run.tree == inst_run.tree,
        "identical_bounds": base_run.bounds == inst_run.bounds,
        "base_bounds": [base_run.bounds.lower, base_run.bounds.upper],
        "instance_bounds": [inst_run.bounds.lower, inst_run.bounds.upper],
        "base_mass": base_mass,
        "instance_mass": inst_mass,
        "mass_gap": gap,
        "required_margin": instance.mass_lower_bound,
        "margin_satisfied": gap >= instance.mass_lower_bound,
        "declared_lipschitz": instance.instance.lipschitz,
        "true_lipschitz": instance.true_lipschitz,
    }
    if instance.bump_cubes is not None:
        section["bump_count"] = len(instance.bump_cubes)
    if instance.interval is not None:
        section["interval"] = list(instance.interval)
    report.adversarial = section
    report.g_calls = instance.base.g.calls + instance.instance.g.calls


def run(config: RunConfig) -> RunReport:
    """Execute a validated config. Pure compute: writes nothing."""
    start = time.perf_counter()
    report = RunReport(config=config.echo())

    if config.mode == "adversarial":
        _run_adversarial(config, report)
    elif config.mode == "baseline":
        problem = get_problem(config.problem)
        report.baseline = naive_mc(problem, config.n, config.seed)
        report.g_calls = problem.g.calls
    else:
        problem = get_problem(config.problem)
        result = refine_with_trace(problem, config.n)
        report.trace = result.trace
        report.bounds = result.bounds
        calls_after_refine = problem.g.calls
        if config.mode == "estimate-exact":
            report.estimate = estimate_tree_exact(
                result.tree, problem.measure, config.big_n, config.seed, config.alpha
            )
        elif config.mode == "estimate-mcmc":
            mcfg = MCMCConfig(
                steps=config.steps, chains=config.big_n,
                seed=config.seed, diagnostics=True,
            )
            report.estimate = mcmc_tree_estimate(
                result.tree, density_view(problem.measure), mcfg, config.alpha
            )
            report.diagnostics = report.estimate.diagnostics
        if problem.g.calls != calls_after_refine:
            raise RuntimeError(
                "estimation phase consumed g evaluations "
                f"({problem.g.calls - calls_after_refine} extra)"
            )
        report.g_calls = problem.g.calls

    report.wall_clock_s = time.perf_counter() - start
    return report


def write_outputs(report: RunReport, out_dir: str) -> list[str]:
    """Serialize a report into out_dir; returns the files written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    render = bool(report.config.get("figures", True))

    if report.bounds is not None:
        path = os.path.join(out_dir, "bounds.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "p_lower", "p_upper", "gap"])
            for row in report.trace:
                writer.writerow([row.n, repr(row.lower), repr(row.upper), repr(row.gap)])
        written.append(path)

    if report.estimate is not None:
        path = os.path.join(out_dir, "estimate.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.estimate.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)

    if report.diagnostics is not None:
        path = os.path.join(out_dir, "mcmc_diagnostics.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "acceptance_rate", "beta_hat_estimate"])
            for vertex in sorted(report.diagnostics, key=lambda p: (len(p), p)):
                row = report.diagnostics[vertex]
                writer.writerow([
                    format_path(vertex),
                    repr(row["acceptance_rate"]),
                    repr(row["beta_hat_estimate"]),
                ])
        written.append(path)

    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    if render:
        from .plots import save_bounds_figure, save_estimate_figure

        if report.bounds is not None and report.trace:
            written.append(
                save_bounds_figure(report.trace, os.path.join(out_dir, "bounds.png"))
            )
        if report.estimate is not None:
            written.append(
                save_estimate_figure(
                    report.estimate, os.path.join(out_dir, "estimate.png"),
                    bounds=report.bounds,
                )
            )
    return written


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"config parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"]
        ) from exc
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc


def _cmd_run(args) -> int:
    raw = _load_json(args.config)
    violations, warnings = validate_config(raw)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    if violations:
        for message in violations:
            print(f"error: {message}", file=sys.stderr)
        return 2
    config = config_from_dict(raw)
    if args.output is not None:
        config.output = args.output
    if args.no_figures:
        config.figures = False
    report = run(config)
    report.config["output"] = config.output
    report.config["figures"] = config.figures
    written = write_outputs(report, config.output)
    for path in written:
        print(path)
    return 0


def _cmd_validate(args) -> int:
    raw = _load_json(args.config)
    violations, warnings = validate_config(raw)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    if violations:
        for message in violations:
            print(f"error: {message}", file=sys.stderr)
        return 2
    print("ok")
    return 0


def _cmd_list(_args) -> int:
    for problem_id in list_problems():
        print(problem_id)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="certibound",
        description="certified bounds and splitting estimates for P(g(X) > T)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config and write reports")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--output", default=None, help="output directory (overrides config)")
    p_run.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True, help="path to a JSON config")
    p_val.set_defaults(func=_cmd_validate)

    p_list = sub.add_parser("list-problems", help="print registered problem ids")
    p_list.set_defaults(func=_cmd_list)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for message in exc.violations:
            print(f"error: {message}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
