"""Monte Carlo measurement of strong convergence rates.

No closed-form solutions exist for these equations, so every study is a
coupled self-comparison on one noise realisation per replication:

* step-size study: a fine-grid run (m_ref steps per delay) is the
  reference, coarse runs reuse the same drivers through block-summed
  increments, and the sup-norm gap at shared grid points is averaged in
  L^p over particles and replications;
* particle study: a large reference system (N_ref particles) stands in
  for the mean-field limit, smaller systems reuse the first N driver
  streams, and per-particle gaps are averaged the same way.

Reported errors are e(param) = (E sup-norm^p)^{1/p}, so fitted slopes
compare directly with the taming exponent alpha, with (1-alpha) ^ H, and
with the particle rates divided by p.  Rates come from ordinary least
squares on the log-log table.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fbm import TimeGrid, sample_driver_increments
from .model import NeutralDelayMvProblem
from .scheme import (
    DivergenceError,
    PicardNonConvergenceError,
    SchemeConfig,
    coarsen_driver,
    grid_for,
    simulate,
)

__all__ = [
    "ExperimentConfig",
    "ErrorTable",
    "RateEstimate",
    "RateStudyResult",
    "MomentReport",
    "ContinuityReport",
    "fit_rate",
    "strong_rate_vs_dt",
    "poc_rate_vs_N",
    "moment_bound_suite",
    "continuity_modulus_suite",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Ladders and replication counts for the rate studies.

    ``m_values``/``m_ref`` drive the step-size study (every ladder m must
    divide m_ref so the drivers nest); ``n_values``/``n_ref`` drive the
    particle study (prefix coupling needs N <= N_ref).  ``p`` is the
    error moment order and must satisfy p H > 1.
    """

    scheme: SchemeConfig
    n_mc: int
    p: float = 2.0
    m_values: tuple[int, ...] = ()
    m_ref: int = 0
    n_values: tuple[int, ...] = ()
    n_ref: int = 0

    def __post_init__(self) -> None:
        if self.n_mc < 1:
            raise ValueError(f"n_mc must be >= 1, got {self.n_mc}")
        if self.p <= 1.0:
            raise ValueError(f"error moment order must satisfy p > 1, got {self.p}")
        if self.m_values and any(m < 1 for m in self.m_values):
            raise ValueError("ladder m values must be positive")
        if self.m_values and self.m_ref:
            if self.m_ref < max(self.m_values):
                raise ValueError("m_ref must be at least the finest ladder m")
            for m in self.m_values:
                if self.m_ref % m != 0:
                    raise ValueError(
                        f"every ladder m must divide m_ref={self.m_ref}; offending m={m}"
                    )
        if self.n_values:
            if self.n_ref < 1:
                raise ValueError("n_ref must be set for a particle study")
            for n in self.n_values:
                if n < 1 or n > self.n_ref:
                    raise ValueError(
                        f"ladder sizes must embed into N_ref={self.n_ref} by prefix; "
                        f"offending N={n}"
                    )

    def check_moment_order(self, problem: NeutralDelayMvProblem) -> None:
        if self.p * problem.hurst.value <= 1.0:
            raise ValueError(
                f"moment order p={self.p} must satisfy p H > 1 (H = {problem.hurst.value})"
            )


@dataclass(frozen=True)
class ErrorTable:
    """Rows (parameter, error, Monte Carlo standard error, n_mc), sorted."""

    rows: tuple[tuple[float, float, float, int], ...]

    def __post_init__(self) -> None:
        params = [r[0] for r in self.rows]
        if sorted(params) != params:
            raise ValueError("rows must be sorted by parameter")
        if any(r[1] < 0 for r in self.rows):
            raise ValueError("errors must be nonnegative")

    @property
    def params(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


@dataclass(frozen=True)
class RateEstimate:
    """Least-squares slope of log error against log parameter."""

    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class RateStudyResult:
    table: ErrorTable
    rate: RateEstimate | None
    excluded: tuple[tuple[float, str], ...] = ()
    notes: str = ""


def fit_rate(table: ErrorTable) -> RateEstimate:
    """OLS fit of log e against log parameter over rows with e > 0."""
    mask = table.errors > 0
    if int(mask.sum()) < 2:
        raise ValueError("need at least 2 rows with positive error to fit a rate")
    x = np.log(table.params[mask])
    y = np.log(table.errors[mask])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateEstimate(slope=float(slope), intercept=float(intercept), r_squared=r_squared)


def _lp_mean(samples: np.ndarray, p: float) -> float:
    return float(np.mean(samples**p) ** (1.0 / p))


def _table_from_moments(
    params: list[float], rep_means: dict[float, list[float]], p: float
) -> ErrorTable:
    """Assemble the table from per-replication means of sup-norm^p.

    The standard error of e = (mean)^{1/p} follows from the CLT on the
    p-th-power mean by the delta method.
    """
    rows = []
    for param in sorted(params):
        vals = np.array(rep_means[param])
        mean_p = float(vals.mean())
        err = mean_p ** (1.0 / p)
        if len(vals) > 1 and mean_p > 0:
            se_mean = float(vals.std(ddof=1)) / np.sqrt(len(vals))
            se = se_mean / p * mean_p ** (1.0 / p - 1.0)
        else:
            se = 0.0
        rows.append((float(param), err, float(se), len(vals)))
    return ErrorTable(rows=tuple(rows))


def _sup_norm_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-particle sup over grid points of the Euclidean gap, shape (N,)."""
    return np.linalg.norm(a - b, axis=-1).max(axis=0)


def strong_rate_vs_dt(
    problem: NeutralDelayMvProblem, config: ExperimentConfig
) -> RateStudyResult:
    """Strong error against step size, coupled through coarsened drivers.

    Per replication one fine driver set is drawn; the m_ref run is the
    reference and every ladder m reruns the scheme on block-summed
    increments of the same paths.  Rows that diverge are excluded from
    the fit and reported.
    """
    if not config.m_values or not config.m_ref:
        raise ValueError("m_values and m_ref must be set for a step-size study")
    config.check_moment_order(problem)
    base = config.scheme
    ref_cfg = replace(base, m=config.m_ref)
    dt_ref, steps_ref = grid_for(problem, ref_cfg)
    grid = TimeGrid(dt=dt_ref, n_steps=steps_ref)
    deltas = {m: problem.tau / m for m in config.m_values}
    rep_means: dict[float, list[float]] = {deltas[m]: [] for m in config.m_values}
    failed: dict[int, str] = {}
    for rep in range(config.n_mc):
        fine = sample_driver_increments(
            grid, problem.hurst, base.seed, base.n_particles, problem.d, (rep,)
        )
        y_ref = simulate(problem, ref_cfg, driver_increments=fine).y
        for m in config.m_values:
            if m in failed:
                continue
            factor = config.m_ref // m
            try:
                y_coarse = simulate(
                    problem, replace(base, m=m), driver_increments=coarsen_driver(fine, factor)
                ).y
            except (DivergenceError, PicardNonConvergenceError) as exc:
                failed[m] = f"rep {rep}: {exc}"
                continue
            gap = _sup_norm_gap(y_ref[::factor], y_coarse)
            rep_means[deltas[m]].append(float(np.mean(gap**config.p)))
    params = [deltas[m] for m in config.m_values if m not in failed]
    table = _table_from_moments(params, rep_means, config.p)
    rate = None
    if int((table.errors > 0).sum()) >= 2:
        rate = fit_rate(table)
    excluded = tuple((deltas[m], msg) for m, msg in sorted(failed.items()))
    return RateStudyResult(
        table=table,
        rate=rate,
        excluded=excluded,
        notes=f"reference m_ref={config.m_ref}, shared drivers, p={config.p}",
    )


def poc_rate_vs_N(
    problem: NeutralDelayMvProblem, config: ExperimentConfig
) -> RateStudyResult:
    """Particle-approximation error against ensemble size.

    The N_ref-particle run is the proxy for the mean-field limit (its own
    bias is O(N_ref^{-1/2}) by the same chaos estimate); each ladder N
    reuses the first N driver streams, and gaps are measured on the
    shared particles.
    """
    if not config.n_values:
        raise ValueError("n_values must be set for a particle study")
    config.check_moment_order(problem)
    base = config.scheme
    ref_cfg = replace(base, n_particles=config.n_ref)
    dt, n_steps = grid_for(problem, ref_cfg)
    grid = TimeGrid(dt=dt, n_steps=n_steps)
    rep_means: dict[float, list[float]] = {float(n): [] for n in config.n_values}
    failed: dict[int, str] = {}
    for rep in range(config.n_mc):
        drivers = sample_driver_increments(
            grid, problem.hurst, base.seed, config.n_ref, problem.d, (rep,)
        )
        y_ref = simulate(problem, ref_cfg, driver_increments=drivers).y
        for n in config.n_values:
            if n in failed:
                continue
            try:
                y_n = simulate(
                    problem,
                    replace(base, n_particles=n),
                    driver_increments=drivers[:, :n],
                ).y
            except (DivergenceError, PicardNonConvergenceError) as exc:
                failed[n] = f"rep {rep}: {exc}"
                continue
            gap = _sup_norm_gap(y_ref[:, :n], y_n)
            rep_means[float(n)].append(float(np.mean(gap**config.p)))
    params = [float(n) for n in config.n_values if n not in failed]
    table = _table_from_moments(params, rep_means, config.p)
    rate = None
    if int((table.errors > 0).sum()) >= 2:
        rate = fit_rate(table)
    excluded = tuple((float(n), msg) for n, msg in sorted(failed.items()))
    return RateStudyResult(
        table=table,
        rate=rate,
        excluded=excluded,
        notes=(
            f"reference N_ref={config.n_ref} (proxy for the mean-field limit, "
            f"bias O(N_ref^-1/2)), prefix-coupled drivers, p={config.p}"
        ),
    )


@dataclass(frozen=True)
class MomentReport:
    """sup-over-time L^p norms across a step-size ladder."""

    deltas: tuple[float, ...]
    values: tuple[float, ...]
    relative_spread: float
    trend_slope: float
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] moment bound: spread {self.relative_spread:.3%}, "
            f"trend slope {self.trend_slope:+.4f} per log dt decrease"
        )


def moment_bound_suite(
    problem: NeutralDelayMvProblem,
    config: ExperimentConfig,
    spread_tol: float = 0.10,
    trend_tol: float = 0.02,
) -> MomentReport:
    """Check sup_k (E|Y_{t_k}|^p)^{1/p} is flat across the step ladder.

    The values must vary by less than ``spread_tol`` relative spread and
    must not trend upward as dt -> 0 (OLS slope against log(1/dt) at most
    ``trend_tol``).
    """
    if not config.m_values:
        raise ValueError("m_values must be set for the moment suite")
    config.check_moment_order(problem)
    base = config.scheme
    values = []
    deltas = []
    for m in sorted(config.m_values):
        cfg = replace(base, m=m)
        dt, n_steps = grid_for(problem, cfg)
        moments = np.zeros(n_steps + 1)
        for rep in range(config.n_mc):
            out = simulate(problem, cfg, stream_key=(rep,))
            moments += np.mean(
                np.linalg.norm(out.y, axis=-1) ** config.p, axis=1
            )
        moments /= config.n_mc
        deltas.append(dt)
        values.append(float(np.max(moments) ** (1.0 / config.p)))
    vals = np.array(values)
    spread = float((vals.max() - vals.min()) / vals.mean())
    # positive slope = growth as dt shrinks
    slope = float(np.polyfit(np.log(1.0 / np.array(deltas)), vals / vals.mean(), 1)[0])
    passed = spread < spread_tol and slope <= trend_tol
    return MomentReport(
        deltas=tuple(deltas),
        values=tuple(values),
        relative_spread=spread,
        trend_slope=slope,
        passed=passed,
    )


@dataclass(frozen=True)
class ContinuityReport:
    """Measured decay of the within-cell modulus of the fine reference run.

    ``exponent_max`` fits E[max over cells of the p-power modulus] and
    carries the extreme-value log factor; ``exponent_cell`` fits the
    per-cell average, the clean power law.
    """

    deltas: tuple[float, ...]
    modulus_max: tuple[float, ...]
    modulus_cell: tuple[float, ...]
    exponent_max: float
    exponent_cell: float


def continuity_modulus_suite(
    problem: NeutralDelayMvProblem, config: ExperimentConfig
) -> ContinuityReport:
    """Within-cell modulus of continuity of the reference run.

    Runs the scheme at m_ref, then for every coarse cell width dt = tau/m
    measures the p-th power modulus sup over fine grid points inside each
    cell of |Y(t) - Y(t_k)|, and fits the decay of both the cell-max and
    the cell-average statistic against dt.
    """
    if not config.m_values or not config.m_ref:
        raise ValueError("m_values and m_ref must be set for the continuity suite")
    config.check_moment_order(problem)
    base = config.scheme
    ref_cfg = replace(base, m=config.m_ref)
    sums_max = {m: 0.0 for m in config.m_values}
    sums_cell = {m: 0.0 for m in config.m_values}
    for rep in range(config.n_mc):
        out = simulate(problem, ref_cfg, stream_key=(rep,))
        y = out.y  # (M_ref+1, N, d)
        for m in config.m_values:
            factor = config.m_ref // m
            n_cells = (y.shape[0] - 1) // factor
            lefts = y[: n_cells * factor : factor]  # (n_cells, N, d)
            cells = y[: n_cells * factor].reshape(n_cells, factor, y.shape[1], y.shape[2])
            gaps = np.linalg.norm(cells - lefts[:, None], axis=-1)  # (n_cells, factor, N)
            cell_sup_p = gaps.max(axis=1) ** config.p  # (n_cells, N)
            sums_max[m] += float(np.mean(cell_sup_p.max(axis=0)))
            sums_cell[m] += float(np.mean(cell_sup_p))
    deltas = [problem.tau / m for m in sorted(config.m_values)]
    mod_max = [sums_max[m] / config.n_mc for m in sorted(config.m_values)]
    mod_cell = [sums_cell[m] / config.n_mc for m in sorted(config.m_values)]

    def decay_exponent(values):
        pairs = [(d, v) for d, v in zip(deltas, values) if v > 0]
        if len(pairs) < 2:
            return float("nan")
        xs, ys = zip(*pairs)
        return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])

    exp_max = decay_exponent(mod_max)
    exp_cell = decay_exponent(mod_cell)
    return ContinuityReport(
        deltas=tuple(deltas),
        modulus_max=tuple(mod_max),
        modulus_cell=tuple(mod_cell),
        exponent_max=exp_max,
        exponent_cell=exp_cell,
    )
