"""Problem definitions and randomized validation of the standing assumptions.

A problem bundles the coefficient callbacks of the neutral mean-field
delay equation

    d(X_t - D(X_{t-tau})) = b(X_t, X_{t-tau}, law(X_t)) dt + sigma(law(X_t)) dB^H_t

together with the delay, horizon, Hurst exponent and the constants under
which the coefficients satisfy the structural conditions (neutral
contraction, one-sided drift with polynomial growth, measure-Lipschitz
diffusion with linear growth).  Coefficients are arbitrary callbacks, so
the conditions are checked by randomized scanning over a box; the
built-in catalog problems are additionally verified analytically in
their ``notes``.

Callback conventions (vectorised over particles):

* ``drift(x, y, mu)``  with x, y of shape (N, d) and ``mu`` a
  :class:`~mvfbm.measure.MeasureHandle`; returns shape (N, d).
* ``neutral(y)`` maps (N, d) -> (N, d), with neutral(0) = 0.
* ``diffusion(mu)`` returns a (d, d) matrix; it may depend on the
  measure only, never on the state.
* ``initial_segment(t)`` returns the d-vector xi(t) for t in [-tau, 0].
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .fbm import Hurst, driver_stream
from .measure import MeasureHandle, wasserstein_1d, coupling_bound

__all__ = [
    "NeutralDelayMvProblem",
    "AssumptionConstants",
    "ProblemCatalogEntry",
    "ValidationReport",
    "validate_neutral_contraction",
    "validate_one_sided",
    "validate_sigma",
    "validate_all",
    "builtin_catalog",
    "catalog_names",
    "get_entry",
    "get_problem",
]

DEFAULT_BOX_HALFWIDTH = 5.0
_CLOUD_SIZE = 16
_POINTS_PER_CLOUD = 256
# randomized inequality checks tolerate accumulated rounding only
_SLACK_RTOL = 1e-9


@dataclass(frozen=True)
class NeutralDelayMvProblem:
    """Coefficients and parameters of one neutral mean-field delay equation."""

    name: str
    d: int
    tau: float
    horizon: float
    hurst: Hurst
    q: float
    drift: Callable[[np.ndarray, np.ndarray, MeasureHandle], np.ndarray]
    neutral: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[MeasureHandle], np.ndarray]
    initial_segment: Callable[[float], np.ndarray]

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.tau <= 0:
            raise ValueError(f"delay must be positive, got {self.tau}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.q < 1:
            raise ValueError(f"Wasserstein order must satisfy q >= 1, got {self.q}")
        zero = self.neutral(np.zeros((1, self.d)))
        if not np.all(np.asarray(zero) == 0.0):
            raise ValueError("the neutral term must satisfy D(0) = 0")
        for t in np.linspace(-self.tau, 0.0, 33):
            xi = np.asarray(self.initial_segment(float(t)), dtype=float)
            if xi.shape != (self.d,) or not np.all(np.isfinite(xi)):
                raise ValueError(
                    f"initial segment must return a finite {self.d}-vector on [-tau, 0]; "
                    f"failed at t={t}"
                )

    def initial_history(self, times: np.ndarray) -> np.ndarray:
        """xi evaluated at each time, stacked to shape (len(times), d)."""
        return np.stack([np.asarray(self.initial_segment(float(t)), dtype=float) for t in times])


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants under which a problem satisfies the structural conditions.

    ``lam`` is the neutral contraction factor (< 1), ``l`` the polynomial
    growth exponent (>= 1), ``k0`` the initial-segment Hoelder constant,
    ``k2``/``k3`` the one-sided and polynomial-Lipschitz drift constants,
    ``k4``/``k5`` the diffusion measure-Lipschitz and joint linear-growth
    constants, and ``k6`` the derived bound at the Dirac origin,
    k6 = |b(0,0,delta_0)| v ||sigma(delta_0)||.
    """

    lam: float
    l: float
    k0: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float

    def __post_init__(self) -> None:
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"neutral contraction factor must lie in (0, 1), got {self.lam}")
        if self.l < 1.0:
            raise ValueError(f"growth exponent must satisfy l >= 1, got {self.l}")
        for name in ("k0", "k2", "k3", "k4", "k5", "k6"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def growth_constant(self) -> float:
        """Constant for |b(x,y,mu)| <= C(1 + |x|^{l+1} + |y|^{l+1} + W_q(mu, delta_0))."""
        return max(self.k3, self.k5)


@dataclass(frozen=True)
class ProblemCatalogEntry:
    name: str
    problem: NeutralDelayMvProblem
    constants: AssumptionConstants
    notes: str


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of one randomized assumption scan."""

    check: str
    problem: str
    passed: bool
    n_samples: int
    worst_slack: float
    worst_ratio: float | None = None
    witness: tuple | None = None
    details: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f", worst ratio {self.worst_ratio:.6g}" if self.worst_ratio is not None else ""
        return (
            f"[{status}] {self.check} on '{self.problem}': {self.n_samples} samples, "
            f"worst slack {self.worst_slack:.3e}{extra}"
            + (f" ({self.details})" if self.details else "")
        )


def _box_points(rng: np.random.Generator, n: int, d: int, half: float) -> np.ndarray:
    return rng.uniform(-half, half, size=(n, d))


def _cloud_distance(a: np.ndarray, b: np.ndarray, q: float) -> float:
    if a.shape[1] == 1:
        return wasserstein_1d(a, b, q)
    # d > 1: identity-coupling surrogate, an upper bound on W_q
    return coupling_bound(a, b, q)


def validate_neutral_contraction(
    problem: NeutralDelayMvProblem,
    constants: AssumptionConstants,
    budget: int = 100_000,
    box_halfwidth: float = DEFAULT_BOX_HALFWIDTH,
    seed: int = 0,
) -> ValidationReport:
    """Scan |D(x) - D(xbar)| <= lam |x - xbar| and D(0) = 0 on random pairs."""
    if budget < 1:
        raise ValueError("sampler budget must be >= 1")
    rng = driver_stream(seed, 101)
    zero = np.asarray(problem.neutral(np.zeros((1, problem.d))))
    if not np.all(zero == 0.0):
        return ValidationReport(
            check="neutral-contraction",
            problem=problem.name,
            passed=False,
            n_samples=0,
            worst_slack=-float(np.linalg.norm(zero)),
            details="D(0) != 0",
        )
    x = _box_points(rng, budget, problem.d, box_halfwidth)
    xbar = _box_points(rng, budget, problem.d, box_halfwidth)
    gap = np.linalg.norm(x - xbar, axis=1)
    keep = gap > 0
    x, xbar, gap = x[keep], xbar[keep], gap[keep]
    dgap = np.linalg.norm(
        np.asarray(problem.neutral(x)) - np.asarray(problem.neutral(xbar)), axis=1
    )
    ratios = dgap / gap
    worst = int(np.argmax(ratios))
    worst_ratio = float(ratios[worst])
    slack = constants.lam - worst_ratio
    passed = slack >= -_SLACK_RTOL * max(1.0, constants.lam)
    return ValidationReport(
        check="neutral-contraction",
        problem=problem.name,
        passed=passed,
        n_samples=int(keep.sum()),
        worst_slack=float(slack),
        worst_ratio=worst_ratio,
        witness=None if passed else (x[worst], xbar[worst]),
        details=f"declared lam={constants.lam}",
    )


def validate_one_sided(
    problem: NeutralDelayMvProblem,
    constants: AssumptionConstants,
    budget: int = 100_000,
    box_halfwidth: float = DEFAULT_BOX_HALFWIDTH,
    seed: int = 0,
    drift: Callable[[np.ndarray, np.ndarray, MeasureHandle], np.ndarray] | None = None,
) -> ValidationReport:
    """Scan the one-sided and polynomial-Lipschitz drift conditions.

    Checks, over random point tuples and random same-size clouds,

        <x - D(y) - xbar + D(ybar), b(x,y,mu) - b(xbar,ybar,nu)>
            <= k2 (|x-xbar|^2 + |y-ybar|^2 + W_q(mu,nu)^2)

    and the polynomial-Lipschitz bound with constant k3 and exponent l.
    ``drift`` substitutes an alternative drift (e.g. the tamed one) while
    keeping the problem's neutral term and constants.
    """
    if budget < 1:
        raise ValueError("sampler budget must be >= 1")
    b = drift if drift is not None else problem.drift
    rng = driver_stream(seed, 202)
    n_rounds = max(1, int(np.ceil(budget / _POINTS_PER_CLOUD)))
    worst_slack = np.inf
    worst_lip_slack = np.inf
    witness = None
    total = 0
    for _ in range(n_rounds):
        n_pts = min(_POINTS_PER_CLOUD, budget - total)
        if n_pts <= 0:
            break
        total += n_pts
        cloud_mu = _box_points(rng, _CLOUD_SIZE, problem.d, box_halfwidth)
        cloud_nu = _box_points(rng, _CLOUD_SIZE, problem.d, box_halfwidth)
        w = _cloud_distance(cloud_mu, cloud_nu, problem.q)
        mu = MeasureHandle(cloud_mu)
        nu = MeasureHandle(cloud_nu)
        x = _box_points(rng, n_pts, problem.d, box_halfwidth)
        y = _box_points(rng, n_pts, problem.d, box_halfwidth)
        xbar = _box_points(rng, n_pts, problem.d, box_halfwidth)
        ybar = _box_points(rng, n_pts, problem.d, box_halfwidth)
        lever = x - np.asarray(problem.neutral(y)) - xbar + np.asarray(problem.neutral(ybar))
        bdiff = np.asarray(b(x, y, mu)) - np.asarray(b(xbar, ybar, nu))
        lhs = np.sum(lever * bdiff, axis=1)
        sq = (
            np.sum((x - xbar) ** 2, axis=1)
            + np.sum((y - ybar) ** 2, axis=1)
            + w**2
        )
        slack = constants.k2 * sq - lhs
        i = int(np.argmin(slack))
        if slack[i] < worst_slack:
            worst_slack = float(slack[i])
            if slack[i] < -_SLACK_RTOL * max(1.0, abs(lhs[i])):
                witness = (x[i], y[i], xbar[i], ybar[i], cloud_mu, cloud_nu)
        # polynomial-Lipschitz bound with exponent l
        pw = (
            1.0
            + np.linalg.norm(x, axis=1) ** constants.l
            + np.linalg.norm(xbar, axis=1) ** constants.l
            + np.linalg.norm(y, axis=1) ** constants.l
            + np.linalg.norm(ybar, axis=1) ** constants.l
        )
        gap = np.linalg.norm(x - xbar, axis=1) + np.linalg.norm(y - ybar, axis=1)
        lip_rhs = constants.k3 * (pw * gap + w)
        lip_lhs = np.linalg.norm(bdiff, axis=1)
        lip_slack = lip_rhs - lip_lhs
        j = int(np.argmin(lip_slack))
        if lip_slack[j] < worst_lip_slack:
            worst_lip_slack = float(lip_slack[j])
            if lip_slack[j] < -_SLACK_RTOL * max(1.0, lip_lhs[j]):
                witness = (x[j], y[j], xbar[j], ybar[j], cloud_mu, cloud_nu)
    passed = witness is None
    details = f"declared k2={constants.k2}, k3={constants.k3}, l={constants.l}"
    if problem.d > 1:
        details += "; d>1 cloud distances use the identity-coupling upper bound"
    return ValidationReport(
        check="one-sided-drift",
        problem=problem.name,
        passed=passed,
        n_samples=total,
        worst_slack=float(min(worst_slack, worst_lip_slack)),
        witness=witness,
        details=details,
    )


def validate_sigma(
    problem: NeutralDelayMvProblem,
    constants: AssumptionConstants,
    budget: int = 100_000,
    box_halfwidth: float = DEFAULT_BOX_HALFWIDTH,
    seed: int = 0,
) -> ValidationReport:
    """Scan measure-Lipschitz continuity of sigma and joint linear growth.

    Checks ||sigma(mu) - sigma(nu)|| <= k4 W_q(mu,nu) and
    ||sigma(mu)|| v |b(0,0,mu)| <= k5 (1 + W_q(mu, delta_0)) over random
    clouds, including clouds with inflated spread so unbounded growth is
    caught.
    """
    if budget < 1:
        raise ValueError("sampler budget must be >= 1")
    rng = driver_stream(seed, 303)
    n_pairs = max(1, budget // (2 * _CLOUD_SIZE))
    zero_pt = np.zeros((1, problem.d))
    worst_slack = np.inf
    witness = None
    for k in range(n_pairs):
        # geometric spread ladder so linear growth is probed far from the box
        spread = box_halfwidth * (1.0 + (k % 8))
        a = _box_points(rng, _CLOUD_SIZE, problem.d, spread)
        b = _box_points(rng, _CLOUD_SIZE, problem.d, spread)
        w = _cloud_distance(a, b, problem.q)
        mu = MeasureHandle(a)
        nu = MeasureHandle(b)
        sig_mu = np.asarray(problem.diffusion(mu))
        sig_nu = np.asarray(problem.diffusion(nu))
        lip_slack = constants.k4 * w - float(np.linalg.norm(sig_mu - sig_nu))
        w0 = mu.distance_to_dirac0(problem.q)
        b00 = float(np.linalg.norm(np.asarray(problem.drift(zero_pt, zero_pt, mu))))
        growth_lhs = max(float(np.linalg.norm(sig_mu)), b00)
        growth_slack = constants.k5 * (1.0 + w0) - growth_lhs
        slack = min(lip_slack, growth_slack)
        if slack < worst_slack:
            worst_slack = slack
            if slack < -_SLACK_RTOL * max(1.0, growth_lhs):
                witness = (a, b)
    passed = witness is None
    return ValidationReport(
        check="diffusion-growth",
        problem=problem.name,
        passed=passed,
        n_samples=2 * _CLOUD_SIZE * n_pairs,
        worst_slack=float(worst_slack),
        witness=witness,
        details=f"declared k4={constants.k4}, k5={constants.k5}",
    )


def validate_all(
    entry: "ProblemCatalogEntry",
    budget: int = 100_000,
    box_halfwidth: float = DEFAULT_BOX_HALFWIDTH,
    seed: int = 0,
) -> list[ValidationReport]:
    """Run the three assumption scans on a catalog entry."""
    return [
        validate_neutral_contraction(entry.problem, entry.constants, budget, box_halfwidth, seed),
        validate_one_sided(entry.problem, entry.constants, budget, box_halfwidth, seed),
        validate_sigma(entry.problem, entry.constants, budget, box_halfwidth, seed),
    ]


# --------------------------------------------------------------------------
# Built-in catalog
# --------------------------------------------------------------------------


def _linear_initial_segment(tau: float) -> Callable[[float], np.ndarray]:
    def xi(t: float) -> np.ndarray:
        return np.array([1.0 + t / (2.0 * tau)])

    return xi


def _cubic_mf_problem(tau: float = 1.0, horizon: float = 2.0) -> NeutralDelayMvProblem:
    def drift(x, y, mu):
        return x - x**3 + 0.5 * y + 0.5 * mu.mean()

    def neutral(y):
        return 0.25 * y

    def diffusion(mu):
        return np.array([[0.5 + 0.1 * mu.distance_to_dirac0(2.0)]])

    return NeutralDelayMvProblem(
        name="cubic-mf",
        d=1,
        tau=tau,
        horizon=horizon,
        hurst=Hurst(0.75),
        q=2.0,
        drift=drift,
        neutral=neutral,
        diffusion=diffusion,
        initial_segment=_linear_initial_segment(tau),
    )


def _linear_problem(tau: float = 1.0, horizon: float = 2.0) -> NeutralDelayMvProblem:
    def drift(x, y, mu):
        return -x + 0.5 * y + 0.5 * mu.mean()

    def neutral(y):
        return 0.25 * y

    def diffusion(mu):
        return np.array([[0.4]])

    return NeutralDelayMvProblem(
        name="linear",
        d=1,
        tau=tau,
        horizon=horizon,
        hurst=Hurst(0.75),
        q=2.0,
        drift=drift,
        neutral=neutral,
        diffusion=diffusion,
        initial_segment=_linear_initial_segment(tau),
    )


def _pure_delay_cubic_problem(tau: float = 1.0, horizon: float = 2.0) -> NeutralDelayMvProblem:
    def drift(x, y, mu):
        return -(x**3) - y**3

    def neutral(y):
        return 0.0 * y

    def diffusion(mu):
        return np.array([[0.4]])

    return NeutralDelayMvProblem(
        name="pure-delay-cubic",
        d=1,
        tau=tau,
        horizon=horizon,
        hurst=Hurst(0.75),
        q=2.0,
        drift=drift,
        neutral=neutral,
        diffusion=diffusion,
        initial_segment=_linear_initial_segment(tau),
    )


def _noise_only_problem(tau: float = 1.0, horizon: float = 2.0) -> NeutralDelayMvProblem:
    def drift(x, y, mu):
        return 0.0 * x

    def neutral(y):
        return 0.0 * y

    def diffusion(mu):
        return np.array([[0.5]])

    return NeutralDelayMvProblem(
        name="noise-only",
        d=1,
        tau=tau,
        horizon=horizon,
        hurst=Hurst(0.75),
        q=2.0,
        drift=drift,
        neutral=neutral,
        diffusion=diffusion,
        initial_segment=_linear_initial_segment(tau),
    )


def builtin_catalog() -> list[ProblemCatalogEntry]:
    """Problems known to satisfy the assumptions on the default scan box.

    Constants are verified analytically (sketches in ``notes``) and
    re-checked numerically by the validators in the test suite.
    """
    return [
        ProblemCatalogEntry(
            name="cubic-mf",
            problem=_cubic_mf_problem(),
            constants=AssumptionConstants(
                lam=0.25, l=2.0, k0=1.0, k2=2.0, k3=2.5, k4=0.1, k5=0.6, k6=0.5
            ),
            notes=(
                "b = x - x^3 + y/2 + mean(mu)/2, D = y/4, sigma = 0.5 + 0.1 W_2(mu, delta_0), "
                "xi(t) = 1 + t/(2 tau). The cubic is monotone decreasing, so the dangerous "
                "inner-product term is -u(x^3 - xbar^3) <= 0; the remaining cross terms are "
                "dominated by k2 = 2 on the box |x| <= 5 (the D(y) cross term needs "
                "x^2 + x xbar + xbar^2 > 135, i.e. |x| > 6.7, to violate it). "
                "|x^3 - xbar^3| <= 1.5 (x^2 + xbar^2) |u| gives k3 = 2.5 with l = 2; "
                "|mean mu - mean nu| <= W_1 <= W_2 covers the measure term. "
                "sigma is 0.1-Lipschitz in W_2 by the reverse triangle inequality."
            ),
        ),
        ProblemCatalogEntry(
            name="linear",
            problem=_linear_problem(),
            constants=AssumptionConstants(
                lam=0.25, l=1.0, k0=1.0, k2=2.0, k3=1.0, k4=0.0, k5=0.5, k6=0.4
            ),
            notes=(
                "b = -x + y/2 + mean(mu)/2, D = y/4, sigma = 0.4 constant. All bounds are "
                "global Cauchy-Schwarz estimates; k2 = 2 has a wide margin."
            ),
        ),
        ProblemCatalogEntry(
            name="pure-delay-cubic",
            problem=_pure_delay_cubic_problem(),
            constants=AssumptionConstants(
                lam=0.5, l=2.0, k0=1.0, k2=38.0, k3=1.5, k4=0.0, k5=0.4, k6=0.4
            ),
            notes=(
                "b = -x^3 - y^3, D = 0, sigma = 0.4 constant; stress test with a superlinear "
                "delay term. The delayed cubic contributes -u (y^3 - ybar^3) <= 75 |u||v| on "
                "the box |y| <= 5, hence k2 = 38 > 37.5. lam is vacuous (D = 0)."
            ),
        ),
        ProblemCatalogEntry(
            name="noise-only",
            problem=_noise_only_problem(),
            constants=AssumptionConstants(
                lam=0.5, l=1.0, k0=1.0, k2=1.0, k3=1.0, k4=0.0, k5=0.5, k6=0.5
            ),
            notes=(
                "b = 0, D = 0, sigma = 0.5 constant. Degenerate entry whose solution is "
                "xi(0) + 0.5 B^H; pins the zero-error couplings in the experiments layer."
            ),
        ),
    ]


def catalog_names() -> list[str]:
    return [entry.name for entry in builtin_catalog()]


def get_entry(name: str) -> ProblemCatalogEntry:
    for entry in builtin_catalog():
        if entry.name == name:
            return entry
    raise KeyError(f"unknown catalog problem '{name}'; known: {', '.join(catalog_names())}")


def get_problem(
    name: str, horizon: float | None = None, hurst: float | None = None
) -> NeutralDelayMvProblem:
    """Catalog problem by name, optionally with a different horizon or H."""
    problem = get_entry(name).problem
    if horizon is not None:
        problem = replace(problem, horizon=float(horizon))
    if hurst is not None:
        problem = replace(problem, hurst=Hurst(float(hurst)))
    return problem
