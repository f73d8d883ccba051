"""Command-line entry point: config parsing, run orchestration, CSV output.

Configs are flat ``key=value`` files (one pair per line, ``#`` comments);
the subcommand comes from the command line.  All randomness flows from
the single ``seed`` key through the counter-based stream contract
(seed, replication, particle), so reruns of the same config are
byte-identical.  Every output file starts with a header line echoing the
subcommand, the seed and the fully resolved config.

Exit codes: 0 success, 1 validation reported a violation, 2 bad config,
3 divergence, 4 implicit-stage non-convergence, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import experiments, model, scheme
from .fbm import Hurst, TimeGrid, sample_fbm_cholesky, sample_fbm_fast

__all__ = ["RunConfig", "ConfigError", "parse_config", "render_config", "run", "main"]

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_SOLVER = 4
EXIT_IO = 5

SUBCOMMANDS = ("sample-fbm", "simulate", "convergence", "chaos", "validate")


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists every problem found."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class RunConfig:
    """One fully validated run request (subcommand plus flat parameters)."""

    subcommand: str
    seed: int = 0
    problem: str | None = None
    theta: float | None = None
    alpha: float | None = None
    m: int | None = None
    N: int | None = None
    T: float | None = None
    H: float | None = None
    dt: float | None = None
    n_steps: int | None = None
    n_paths: int | None = None
    generator: str = "fast"
    picard_tol: float = 1e-12
    picard_max_iters: int = 100
    m_list: tuple[int, ...] | None = None
    m_ref: int | None = None
    N_list: tuple[int, ...] | None = None
    N_ref: int | None = None
    n_mc: int | None = None
    p: float | None = None
    budget: int = 100_000
    out: str = "."


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(",") if part.strip())


_KEY_PARSERS = {
    "problem": str,
    "theta": float,
    "alpha": float,
    "m": int,
    "N": int,
    "T": float,
    "H": float,
    "dt": float,
    "n_steps": int,
    "n_paths": int,
    "generator": str,
    "seed": int,
    "picard_tol": float,
    "picard_max_iters": int,
    "m_list": _parse_int_list,
    "m_ref": int,
    "N_list": _parse_int_list,
    "N_ref": int,
    "n_mc": int,
    "p": float,
    "budget": int,
    "out": str,
}

_REQUIRED = {
    "sample-fbm": ("H", "dt", "n_steps", "n_paths", "seed"),
    "simulate": ("problem", "theta", "alpha", "m", "N", "seed"),
    "convergence": ("problem", "theta", "alpha", "N", "m_list", "m_ref", "n_mc", "p", "seed"),
    "chaos": ("problem", "theta", "alpha", "m", "N_list", "N_ref", "n_mc", "p", "seed"),
    "validate": ("problem", "seed"),
}


def _check_ranges(values: dict, violations: list[str]) -> None:
    def bad(key, message):
        violations.append(f"{key}={values[key]}: {message}")

    if "theta" in values and not (0.0 <= values["theta"] <= 1.0):
        bad("theta", "theta must lie in [0, 1]")
    if "alpha" in values and not (0.0 < values["alpha"] <= 0.5):
        bad("alpha", "alpha must lie in (0, 0.5]")
    if "H" in values and not (0.5 <= values["H"] < 1.0):
        bad("H", "H must lie in [0.5, 1)")
    for key in ("m", "N", "n_steps", "n_paths", "m_ref", "N_ref", "n_mc",
                "picard_max_iters", "budget"):
        if key in values and values[key] < 1:
            bad(key, f"{key} must be a positive integer")
    for key in ("T", "dt", "picard_tol"):
        if key in values and values[key] <= 0.0:
            bad(key, f"{key} must be positive")
    if "seed" in values and values["seed"] < 0:
        bad("seed", "seed must be a nonnegative integer")
    if "p" in values and values["p"] <= 1.0:
        bad("p", "error moment order p must exceed 1")
    if "generator" in values and values["generator"] not in ("fast", "cholesky"):
        bad("generator", "generator must be 'fast' or 'cholesky'")
    for key in ("m_list", "N_list"):
        if key in values and (not values[key] or any(v < 1 for v in values[key])):
            bad(key, f"{key} must be a comma-separated list of positive integers")


def _check_cross(subcommand: str, values: dict, violations: list[str]) -> None:
    problem = None
    if "problem" in values:
        try:
            problem = model.get_problem(values["problem"])
        except KeyError as exc:
            violations.append(str(exc.args[0]))
    if problem is None:
        return
    horizon = values.get("T", problem.horizon)
    hurst = problem.hurst.value

    def check_steps(m):
        delta = problem.tau / m
        if delta >= 1.0:
            violations.append(
                f"tau/m = {delta:g} must be below 1 for the taming transform (m too small)"
            )
            return
        n_steps = horizon / delta
        if abs(n_steps - round(n_steps)) > 1e-12 * max(1.0, n_steps):
            violations.append(
                f"T/dt = {n_steps:g} is not an integer "
                f"(T={horizon:g} must be a multiple of tau/m = {delta:g})"
            )

    for m in [values["m"]] if "m" in values else []:
        check_steps(m)
    if "m_list" in values:
        for m in values["m_list"]:
            check_steps(m)
        if "m_ref" in values:
            check_steps(values["m_ref"])
            for m in values["m_list"]:
                if values["m_ref"] % m != 0:
                    violations.append(
                        f"m={m} does not divide m_ref={values['m_ref']} (drivers must nest)"
                    )
    if "N_list" in values and "N_ref" in values:
        for n in values["N_list"]:
            if n > values["N_ref"]:
                violations.append(
                    f"N={n} exceeds N_ref={values['N_ref']} (prefix coupling needs N <= N_ref)"
                )
    if subcommand in ("convergence", "chaos") and "p" in values:
        if values["p"] * hurst <= 1.0:
            violations.append(
                f"p={values['p']} violates p*H > 1 for H={hurst} "
                "(moment order too low for the fBm regularity)"
            )


def parse_config(text: str, subcommand: str) -> RunConfig:
    """Parse and fully validate a flat key=value config.

    Raises :class:`ConfigError` listing *all* violations, not just the
    first one.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError([f"unknown subcommand '{subcommand}'"])
    violations: list[str] = []
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"line {lineno}: expected key=value, got '{raw.strip()}'")
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_PARSERS:
            violations.append(f"line {lineno}: unknown key '{key}'")
            continue
        if key in values:
            violations.append(f"line {lineno}: duplicate key '{key}'")
            continue
        try:
            values[key] = _KEY_PARSERS[key](value)
        except ValueError:
            violations.append(f"line {lineno}: cannot parse {key}='{value}'")
    for key in _REQUIRED[subcommand]:
        if key not in values:
            violations.append(f"missing required key '{key}' for subcommand '{subcommand}'")
    if not violations:
        _check_ranges(values, violations)
    if not violations:
        _check_cross(subcommand, values, violations)
    if violations:
        raise ConfigError(violations)
    return RunConfig(subcommand=subcommand, **values)


def render_config(config: RunConfig) -> str:
    """Config file text that parses back to ``config``."""
    lines = []
    for f in fields(RunConfig):
        if f.name == "subcommand":
            continue
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def _echo(config: RunConfig) -> str:
    # full parameter echo for provenance; the output location is not a run
    # parameter and would break byte-identical reruns into fresh directories
    pairs = [kv for kv in render_config(config).split() if not kv.startswith("out=")]
    return " ".join(pairs)


def _scheme_config(config: RunConfig, m: int | None = None, n: int | None = None):
    return scheme.SchemeConfig(
        theta=config.theta,
        alpha=config.alpha,
        m=m if m is not None else config.m,
        n_particles=n if n is not None else config.N,
        seed=config.seed,
        picard_tol=config.picard_tol,
        picard_max_iters=config.picard_max_iters,
    )


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _write_lines(path, lines) -> None:
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def _run_sample_fbm(config: RunConfig, out_dir) -> int:
    grid = TimeGrid(dt=config.dt, n_steps=config.n_steps)
    sampler = sample_fbm_fast if config.generator == "fast" else sample_fbm_cholesky
    paths = sampler(grid, Hurst(config.H), config.seed, config.n_paths)
    lines = [f"# mvfbm sample-fbm {_echo(config)}"]
    lines.append("t," + ",".join(f"path_{i}" for i in range(config.n_paths)))
    times = grid.times()
    for k, t in enumerate(times):
        lines.append(_fmt(t) + "," + ",".join(_fmt(p.values[k]) for p in paths))
    _write_lines(out_dir / "fbm_paths.csv", lines)
    return EXIT_OK


def _run_simulate(config: RunConfig, out_dir) -> int:
    problem = model.get_problem(config.problem, horizon=config.T)
    output = scheme.simulate(problem, _scheme_config(config))
    lines = [f"# mvfbm simulate {_echo(config)}", "k,t,particle,dim,value"]
    times = output.times()
    for k in range(output.y.shape[0]):
        for i in range(output.y.shape[1]):
            for j in range(output.y.shape[2]):
                lines.append(
                    f"{k},{_fmt(times[k])},{i},{j},{_fmt(output.y[k, i, j])}"
                )
    _write_lines(out_dir / "trajectory.csv", lines)
    return EXIT_OK


def _rate_lines(config: RunConfig, name: str, result) -> list[str]:
    lines = [f"# mvfbm {name} {_echo(config)}", "param,error,stderr,n_mc"]
    for param, err, se, n_mc in result.table.rows:
        lines.append(f"{_fmt(param)},{_fmt(err)},{_fmt(se)},{n_mc}")
    summary = {
        "slope": result.rate.slope if result.rate else None,
        "intercept": result.rate.intercept if result.rate else None,
        "r_squared": result.rate.r_squared if result.rate else None,
        "excluded": [list(row) for row in result.excluded],
        "config": _echo(config),
    }
    lines.append("# summary " + json.dumps(summary, sort_keys=True))
    return lines


def _run_convergence(config: RunConfig, out_dir) -> int:
    problem = model.get_problem(config.problem, horizon=config.T)
    exp_config = experiments.ExperimentConfig(
        scheme=_scheme_config(config, m=min(config.m_list)),
        n_mc=config.n_mc,
        p=config.p,
        m_values=tuple(sorted(config.m_list)),
        m_ref=config.m_ref,
    )
    result = experiments.strong_rate_vs_dt(problem, exp_config)
    _write_lines(out_dir / "convergence.csv", _rate_lines(config, "convergence", result))
    return EXIT_OK


def _run_chaos(config: RunConfig, out_dir) -> int:
    problem = model.get_problem(config.problem, horizon=config.T)
    exp_config = experiments.ExperimentConfig(
        scheme=_scheme_config(config, n=config.N_ref),
        n_mc=config.n_mc,
        p=config.p,
        n_values=tuple(sorted(config.N_list)),
        n_ref=config.N_ref,
    )
    result = experiments.poc_rate_vs_N(problem, exp_config)
    _write_lines(out_dir / "chaos.csv", _rate_lines(config, "chaos", result))
    return EXIT_OK


def _run_validate(config: RunConfig, out_dir) -> int:
    entry = model.get_entry(config.problem)
    reports = model.validate_all(entry, budget=config.budget, seed=config.seed)
    lines = [f"# mvfbm validate {_echo(config)}"]
    lines.extend(str(report) for report in reports)
    _write_lines(out_dir / "validation.txt", lines)
    for line in lines[1:]:
        print(line)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VALIDATION_FAILED


def run(config: RunConfig) -> int:
    """Execute one validated run request; returns the process exit code."""
    out_dir = Path(config.out)
    runner = {
        "sample-fbm": _run_sample_fbm,
        "simulate": _run_simulate,
        "convergence": _run_convergence,
        "chaos": _run_chaos,
        "validate": _run_validate,
    }[config.subcommand]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return runner(config, out_dir)
    except scheme.DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except scheme.PicardNonConvergenceError as exc:
        print(f"solver non-convergence: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvfbm",
        description=(
            "Tamed theta Euler-Maruyama runs for neutral mean-field delay equations "
            "driven by fractional Brownian motion"
        ),
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="flat key=value config file")
        cmd.add_argument("--out", default=None, help="output directory (overrides config)")
        cmd.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
    args = parser.parse_args(argv)

    try:
        text = open(args.config).read()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config(text, args.subcommand)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(["seed must be a nonnegative integer"])
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, out=args.out)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
