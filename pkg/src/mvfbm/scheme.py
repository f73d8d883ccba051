"""Tamed theta Euler-Maruyama stepping for the interacting particle system.

The drift is tamed, b_step = b / (1 + dt^alpha |b|), which caps one-step
drift increments at dt^{-alpha} without changing the one-sided structure,
and the theta scheme is realised in split-step form: an auxiliary
variable z carries the explicit noise recursion while the state Y solves
an implicit stage per step,

    Y_k = D(Y_{k-m}) + z_k - D(z_{k-m}) + theta dt b_step(Y_k, Y_{k-m}, mu_k)
    z_{k+1} = D(z_{k+1-m}) + z_k - D(z_{k-m})
              + b_step(Y_k, Y_{k-m}, mu_k) dt + sigma(mu_k) dB_k

with mu_k the empirical measure of the Y_k ensemble and lag m = tau/dt
steps.  The implicit stage couples all N particles through mu_k and is
solved by ensemble Picard iteration; the taming bound keeps the stage a
contraction for all practical step sizes.  At theta = 0 the (z, Y)
recursion collapses to the direct explicit recursion bit for bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fbm import TimeGrid, sample_driver_increments
from .measure import MeasureHandle
from .model import NeutralDelayMvProblem

__all__ = [
    "SchemeConfig",
    "EnsembleState",
    "SimulationOutput",
    "DivergenceError",
    "PicardNonConvergenceError",
    "tame_drift",
    "initial_state",
    "step_explicit",
    "implicit_stage_solve",
    "step_split",
    "simulate",
    "piecewise_constant_interpolant",
    "coarsen_driver",
    "split_identity_residual",
]


class DivergenceError(RuntimeError):
    """A state became non-finite; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class PicardNonConvergenceError(RuntimeError):
    """The implicit stage did not reach tolerance within the iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SchemeConfig:
    """Numerical parameters of the tamed theta scheme.

    ``m`` is the number of steps per delay, so dt = tau/m, and the
    horizon must satisfy T = M dt for an integer M.  ``alpha`` is the
    taming exponent in (0, 1/2]; ``theta`` in [0, 1] blends explicit and
    implicit drift.  ``n_particles`` is the interacting-system size.
    """

    theta: float
    alpha: float
    m: int
    n_particles: int
    seed: int = 0
    picard_tol: float = 1e-12
    picard_max_iters: int = 100

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not (0.0 < self.alpha <= 0.5):
            raise ValueError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if self.m < 1:
            raise ValueError(f"m (steps per delay) must be >= 1, got {self.m}")
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.picard_tol <= 0:
            raise ValueError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max_iters < 1:
            raise ValueError(f"picard_max_iters must be >= 1, got {self.picard_max_iters}")


def grid_for(problem: NeutralDelayMvProblem, config: SchemeConfig) -> tuple[float, int]:
    """Step size dt = tau/m and step count M = T/dt; M must be an integer."""
    dt = problem.tau / config.m
    if dt >= 1.0:
        raise ValueError(
            f"step size tau/m = {dt} must lie in (0, 1) for the taming transform; increase m"
        )
    steps = problem.horizon / dt
    if abs(steps - round(steps)) > 1e-12 * max(1.0, steps):
        raise ValueError(
            f"horizon T={problem.horizon} is not an integer multiple of dt=tau/m={dt} "
            f"(T/dt = {steps})"
        )
    return dt, int(round(steps))


def tame_drift(b_val: np.ndarray, delta: float, alpha: float) -> np.ndarray:
    """Tamed drift b / (1 + delta^alpha |b|); norm at most min(delta^{-alpha}, |b|).

    Acts on a single d-vector or row-wise on an (N, d) ensemble; the
    taming factor is a positive scalar per vector, so direction is kept.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError(f"step size must lie in (0, 1), got {delta}")
    if not (0.0 < alpha <= 0.5):
        raise ValueError(f"alpha must lie in (0, 0.5], got {alpha}")
    b_val = np.asarray(b_val, dtype=float)
    if b_val.ndim == 1:
        return b_val / (1.0 + delta**alpha * np.linalg.norm(b_val))
    norms = np.linalg.norm(b_val, axis=-1, keepdims=True)
    return b_val / (1.0 + delta**alpha * norms)


@dataclass
class EnsembleState:
    """Grid history of the ensemble: the last m+1 values of Y and z.

    ``y_window[j]`` holds Y at time t_{k-m+j} (so index m is the current
    value and index 0 the delayed one); ``z_window`` likewise for the
    split-step variable.  The scheme never reads other lags.
    """

    k: int
    y_window: np.ndarray
    z_window: np.ndarray

    def __post_init__(self) -> None:
        if self.y_window.shape != self.z_window.shape or self.y_window.ndim != 3:
            raise ValueError("y_window and z_window must share shape (m+1, N, d)")

    @property
    def y_current(self) -> np.ndarray:
        return self.y_window[-1]

    @property
    def y_delayed(self) -> np.ndarray:
        return self.y_window[0]

    @property
    def z_current(self) -> np.ndarray:
        return self.z_window[-1]

    @property
    def z_delayed(self) -> np.ndarray:
        return self.z_window[0]


def _check_finite(arr: np.ndarray, step: int, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr).all(axis=-1)))
        raise DivergenceError(
            f"{what} became non-finite at step {step} ({bad} particle(s) affected)", step
        )


def _drift_term(
    problem: NeutralDelayMvProblem,
    y_cur: np.ndarray,
    y_del: np.ndarray,
    handle: MeasureHandle,
    dt: float,
    alpha: float,
) -> np.ndarray:
    return tame_drift(np.asarray(problem.drift(y_cur, y_del, handle)), dt, alpha)


def _neutral_advance(
    problem: NeutralDelayMvProblem,
    cur: np.ndarray,
    delayed_new: np.ndarray,
    delayed_old: np.ndarray,
    drift_times_dt: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    # single source of the recursion arithmetic: both the direct explicit
    # recursion and the z update must round identically
    return (
        np.asarray(problem.neutral(delayed_new))
        + cur
        - np.asarray(problem.neutral(delayed_old))
        + drift_times_dt
        + noise
    )


def initial_state(problem: NeutralDelayMvProblem, config: SchemeConfig) -> EnsembleState:
    """History seeded from xi on {-m dt, ..., 0} plus the split-step origin.

    z agrees with xi before time zero; at time zero it carries the
    correction z_0 = xi(0) - theta dt b_step(xi(0), xi(-tau), mu_0), which
    makes the implicit stage at step 0 return exactly xi(0).
    """
    dt, _ = grid_for(problem, config)
    n, d, m = config.n_particles, problem.d, config.m
    times = np.arange(-m, 1) * dt
    hist = problem.initial_history(times)  # (m+1, d)
    y_window = np.broadcast_to(hist[:, None, :], (m + 1, n, d)).copy()
    z_window = y_window.copy()
    handle = MeasureHandle(y_window[-1])
    drift0 = _drift_term(problem, y_window[-1], y_window[0], handle, dt, config.alpha)
    z_window[-1] = y_window[-1] - config.theta * dt * drift0
    return EnsembleState(k=0, y_window=y_window, z_window=z_window)


def implicit_stage_solve(
    z_stage: np.ndarray,
    y_delayed: np.ndarray,
    z_delayed: np.ndarray,
    problem: NeutralDelayMvProblem,
    config: SchemeConfig,
) -> np.ndarray:
    """Ensemble fixed point of the implicit theta stage.

    Solves Y = z + (D(Y_del) - D(z_del)) + theta dt b_step(Y, Y_del, mu(Y))
    jointly over all particles by Picard iteration, recomputing the
    empirical measure each sweep, to ``picard_tol`` in max norm.
    """
    y, _, _ = _solve_implicit_stage(z_stage, y_delayed, z_delayed, problem, config)
    return y


def _solve_implicit_stage(
    z_stage: np.ndarray,
    y_delayed: np.ndarray,
    z_delayed: np.ndarray,
    problem: NeutralDelayMvProblem,
    config: SchemeConfig,
) -> tuple[np.ndarray, int, float]:
    dt, _ = grid_for(problem, config)
    base = z_stage + (
        np.asarray(problem.neutral(y_delayed)) - np.asarray(problem.neutral(z_delayed))
    )
    if config.theta == 0.0:
        return base, 0, 0.0
    scale = config.theta * dt ** (1.0 - config.alpha)
    if scale >= 1.0:
        warnings.warn(
            f"theta * dt^(1-alpha) = {scale:.3g} >= 1: the implicit stage may not contract",
            RuntimeWarning,
        )
    coeff = config.theta * dt
    # Relaxed Picard sweeps.  Taming caps the stage term's size but not its
    # slope, so at coarse steps the undamped map can have eigenvalues near -1
    # and converge too slowly (or 2-cycle).  When the residual ratio stalls
    # and the iterates alternate, the relaxation factor is retuned toward
    # 1/(1 - lambda) for the measured ratio; divergence halves it outright.
    # All monitors are ensemble max norms, so the solve is deterministic and
    # exactly permutation-invariant.
    y = base
    y_prev = base
    omega = 1.0
    prev_residual = np.inf
    residual = np.inf
    for iteration in range(1, config.picard_max_iters + 1):
        handle = MeasureHandle(y)
        stage = base + coeff * _drift_term(problem, y, y_delayed, handle, dt, config.alpha)
        residual = float(np.max(np.abs(stage - y))) if stage.size else 0.0
        if residual <= config.picard_tol:
            return y, iteration, residual
        ratio = residual / prev_residual
        if iteration > 1:
            if ratio >= 1.0:
                omega = max(0.5 * omega, 0.05)
            elif ratio > 0.5:
                step_gap = float(np.max(np.abs(y - y_prev)))
                flip_gap = float(np.max(np.abs(stage - y_prev)))
                if step_gap > 0 and flip_gap < 0.5 * step_gap:
                    # alternating iterates: dominant eigenvalue is negative
                    omega = max(omega / (1.0 + ratio), 0.05)
        y_prev = y
        y = y + omega * (stage - y)
        prev_residual = residual
    raise PicardNonConvergenceError(
        f"implicit stage did not converge within {config.picard_max_iters} Picard sweeps "
        f"(last residual {residual:.3e}, tol {config.picard_tol:.3e})",
        residual,
        config.picard_max_iters,
    )


def step_explicit(
    state: EnsembleState,
    problem: NeutralDelayMvProblem,
    config: SchemeConfig,
    db: np.ndarray,
) -> EnsembleState:
    """One step of the direct explicit recursion (theta = 0 only).

    Y_{k+1} = D(Y_{k+1-m}) + Y_k - D(Y_{k-m})
              + b_step(Y_k, Y_{k-m}, mu_k) dt + sigma(mu_k) dB_k.
    """
    if config.theta != 0.0:
        raise ValueError("step_explicit requires theta = 0")
    dt, _ = grid_for(problem, config)
    handle = MeasureHandle(state.y_current)
    drift = _drift_term(problem, state.y_current, state.y_delayed, handle, dt, config.alpha)
    sigma = np.asarray(problem.diffusion(handle))
    y_next = _neutral_advance(
        problem,
        state.y_current,
        state.y_window[1],
        state.y_delayed,
        drift * dt,
        db @ sigma.T,
    )
    _check_finite(y_next, state.k + 1, "explicit state")
    y_window = np.concatenate([state.y_window[1:], y_next[None]])
    return EnsembleState(k=state.k + 1, y_window=y_window, z_window=y_window.copy())


def step_split(
    state: EnsembleState,
    problem: NeutralDelayMvProblem,
    config: SchemeConfig,
    db: np.ndarray,
) -> EnsembleState:
    """One full split step: advance z explicitly, then solve the Y stage.

    Requires the state's current Y to be stage-consistent (as produced by
    ``initial_state`` or a previous split step).
    """
    dt, _ = grid_for(problem, config)
    handle = MeasureHandle(state.y_current)
    drift = _drift_term(problem, state.y_current, state.y_delayed, handle, dt, config.alpha)
    sigma = np.asarray(problem.diffusion(handle))
    z_next = _neutral_advance(
        problem,
        state.z_current,
        state.z_window[1],
        state.z_delayed,
        drift * dt,
        db @ sigma.T,
    )
    _check_finite(z_next, state.k + 1, "split-step variable")
    y_next, _, _ = _solve_implicit_stage(
        z_next, state.y_window[1], state.z_window[1], problem, config
    )
    _check_finite(y_next, state.k + 1, "implicit stage")
    y_window = np.concatenate([state.y_window[1:], y_next[None]])
    z_window = np.concatenate([state.z_window[1:], z_next[None]])
    return EnsembleState(k=state.k + 1, y_window=y_window, z_window=z_window)


@dataclass(frozen=True)
class SimulationOutput:
    """Grid values of one ensemble run, immutable once returned.

    ``y`` and ``z`` have shape (M+1, N, d); row k is time k dt.
    ``picard_iterations``/``picard_residuals`` hold per-step stats of the
    implicit stage (zeros when theta = 0).
    """

    problem_name: str
    config: SchemeConfig
    dt: float
    y: np.ndarray
    z: np.ndarray
    picard_iterations: np.ndarray
    picard_residuals: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.y.shape[0] - 1

    def times(self) -> np.ndarray:
        return np.arange(self.y.shape[0]) * self.dt


def simulate(
    problem: NeutralDelayMvProblem,
    config: SchemeConfig,
    driver_increments: np.ndarray | None = None,
    stream_key: tuple[int, ...] = (),
) -> SimulationOutput:
    """Run the tamed theta scheme from xi to the horizon.

    When ``driver_increments`` (shape (M, N, d)) is given it is used as
    the noise; otherwise fBm increments are drawn with particle i on the
    stream (config.seed, *stream_key, i).  Deterministic either way.
    """
    dt, n_steps = grid_for(problem, config)
    n, d, m = config.n_particles, problem.d, config.m
    if driver_increments is None:
        grid = TimeGrid(dt=dt, n_steps=n_steps)
        driver_increments = sample_driver_increments(
            grid, problem.hurst, config.seed, n, d, stream_key
        )
    driver_increments = np.asarray(driver_increments, dtype=float)
    if driver_increments.shape != (n_steps, n, d):
        raise ValueError(
            f"driver increments must have shape {(n_steps, n, d)}, "
            f"got {driver_increments.shape}"
        )

    # y_all[j] stores Y at time (j - m) dt, so lags are plain offsets
    y_all = np.empty((n_steps + m + 1, n, d))
    z_all = np.empty_like(y_all)
    times = np.arange(-m, 1) * dt
    y_all[: m + 1] = problem.initial_history(times)[:, None, :]
    z_all[: m + 1] = y_all[: m + 1]
    handle = MeasureHandle(y_all[m])
    drift0 = _drift_term(problem, y_all[m], y_all[0], handle, dt, config.alpha)
    z_all[m] = y_all[m] - config.theta * dt * drift0

    iters = np.zeros(n_steps, dtype=int)
    residuals = np.zeros(n_steps)
    try:
        for k in range(n_steps):
            j = k + m
            handle = MeasureHandle(y_all[j])
            drift = _drift_term(problem, y_all[j], y_all[k], handle, dt, config.alpha)
            sigma = np.asarray(problem.diffusion(handle))
            z_all[j + 1] = _neutral_advance(
                problem,
                z_all[j],
                z_all[k + 1],
                z_all[k],
                drift * dt,
                driver_increments[k] @ sigma.T,
            )
            _check_finite(z_all[j + 1], k + 1, "split-step variable")
            y_all[j + 1], iters[k], residuals[k] = _solve_implicit_stage(
                z_all[j + 1], y_all[k + 1], z_all[k + 1], problem, config
            )
            _check_finite(y_all[j + 1], k + 1, "state")
    except (DivergenceError, PicardNonConvergenceError) as exc:
        exc.args = (
            f"{exc.args[0]} [problem='{problem.name}', m={config.m}, "
            f"N={n}, theta={config.theta}]",
        ) + exc.args[1:]
        raise

    return SimulationOutput(
        problem_name=problem.name,
        config=config,
        dt=dt,
        y=y_all[m:].copy(),
        z=z_all[m:].copy(),
        picard_iterations=iters,
        picard_residuals=residuals,
    )


def piecewise_constant_interpolant(
    output: SimulationOutput, problem: NeutralDelayMvProblem, t: float
) -> np.ndarray:
    """Left-constant interpolant: xi(t) for t <= 0, Y_{t_k} on [t_k, t_{k+1}).

    Returns the (N, d) ensemble value; t must lie in [-tau, T].
    """
    horizon = output.n_steps * output.dt
    if t < -problem.tau or t > horizon:
        raise ValueError(f"t={t} outside [-tau, T] = [{-problem.tau}, {horizon}]")
    n, d = output.y.shape[1], output.y.shape[2]
    if t <= 0.0:
        xi = np.asarray(problem.initial_segment(float(t)), dtype=float)
        return np.broadcast_to(xi, (n, d)).copy()
    k = min(int(t / output.dt), output.n_steps)
    return output.y[k]


def coarsen_driver(fine_increments: np.ndarray, factor: int) -> np.ndarray:
    """Block sums of fine increments along the time axis.

    Couples a coarse run to a fine run of the same driver: summing blocks
    of r fine increments reproduces the increments of the same path on
    the r-times-coarser grid exactly.
    """
    if factor < 1:
        raise ValueError(f"coarsening factor must be >= 1, got {factor}")
    fine = np.asarray(fine_increments)
    if fine.shape[0] % factor != 0:
        raise ValueError(
            f"coarsening factor {factor} does not divide the step count {fine.shape[0]}"
        )
    shape = (fine.shape[0] // factor, factor) + fine.shape[1:]
    return fine.reshape(shape).sum(axis=1)


def split_identity_residual(
    output: SimulationOutput, problem: NeutralDelayMvProblem
) -> float:
    """Max grid residual of the split-step identity.

    Checks Y_k - D(Y_{k-m}) - theta dt b_step(Y_k, Y_{k-m}, mu_k)
    == z_k - D(z_{k-m}) at every grid point; bounded by picard_tol for a
    converged run.
    """
    config = output.config
    dt = output.dt
    m = config.m
    times = np.arange(-m, 1) * dt
    hist = problem.initial_history(times)[:, None, :]
    n = output.y.shape[1]
    y_all = np.concatenate([np.broadcast_to(hist, (m + 1, n, problem.d)).copy()[:-1], output.y])
    z_all = np.concatenate([y_all[:m], output.z])
    worst = 0.0
    for k in range(output.n_steps + 1):
        j = k + m
        handle = MeasureHandle(y_all[j])
        drift = _drift_term(problem, y_all[j], y_all[k], handle, dt, config.alpha)
        lhs = (
            y_all[j]
            - np.asarray(problem.neutral(y_all[k]))
            - config.theta * dt * drift
        )
        rhs = z_all[j] - np.asarray(problem.neutral(z_all[k]))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
