"""Empirical measures and the Wasserstein queries the solver consumes.

The solver only ever needs two transport quantities, both of which are
exact for equal-weight empirical measures: the 1-D distance between
same-size sample sets (sorted matching) and the distance to the Dirac
mass at the origin (a moment).  For d > 1 clouds the index-matched
coupling bound is provided as an explicit upper bound; general optimal
transport is out of scope.

Coefficients never see raw samples: they receive a ``MeasureHandle``,
whose statistics are computed in a canonical (sorted) order so that they
are exactly invariant under particle permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EmpiricalMeasure",
    "MeasureHandle",
    "wasserstein_1d",
    "coupling_bound",
    "distance_to_dirac0",
    "empirical_moment",
]


def _check_order(q: float) -> float:
    q = float(q)
    if q < 1.0:
        raise ValueError(f"Wasserstein order must satisfy q >= 1, got {q}")
    return q


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Equal-weight Dirac mixture over ``samples`` (an N x d matrix)."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError(f"samples must be an N x d matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def _as_samples(mu) -> np.ndarray:
    if isinstance(mu, EmpiricalMeasure):
        return mu.samples
    return EmpiricalMeasure(np.asarray(mu)).samples


def wasserstein_1d(mu, nu, q: float = 2.0) -> float:
    """Exact W_q between two equal-size 1-D empirical measures.

    On the line the optimal coupling of equal-weight samples matches
    order statistics, so W_q = ((1/N) sum_k |x_(k) - y_(k)|^q)^{1/q}.
    Only d = 1 and equal sample counts are supported.
    """
    q = _check_order(q)
    x = _as_samples(mu)
    y = _as_samples(nu)
    if x.shape[1] != 1 or y.shape[1] != 1:
        raise ValueError(
            f"wasserstein_1d needs d = 1 samples, got d = {x.shape[1]} and {y.shape[1]}; "
            "use coupling_bound for an upper bound in higher dimension"
        )
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"unequal sample counts ({x.shape[0]} vs {y.shape[0]}) are not supported"
        )
    diffs = np.abs(np.sort(x[:, 0]) - np.sort(y[:, 0]))
    return float(np.mean(diffs**q) ** (1.0 / q))


def coupling_bound(z1, z2, q: float = 2.0) -> float:
    """Index-matched transport cost ((1/N) sum_j |z1_j - z2_j|^q)^{1/q}.

    This is the cost of the identity coupling between the two empirical
    measures, hence an upper bound on their W_q (and not a metric between
    the measures: permuting one cloud changes the value).
    """
    q = _check_order(q)
    a = _as_samples(z1)
    b = _as_samples(z2)
    if a.shape != b.shape:
        raise ValueError(f"sample shape mismatch: {a.shape} vs {b.shape}")
    norms = np.linalg.norm(a - b, axis=1)
    return float(np.mean(norms**q) ** (1.0 / q))


def distance_to_dirac0(mu, q: float = 2.0) -> float:
    """W_q(mu, delta_0) = ((1/N) sum_j |x_j|^q)^{1/q} for an empirical measure."""
    q = _check_order(q)
    x = _as_samples(mu)
    norms = np.sort(np.linalg.norm(x, axis=1))
    return float(np.mean(norms**q) ** (1.0 / q))


def empirical_moment(mu, p: float) -> float:
    """Raw p-th moment (1/N) sum_j |x_j|^p, p >= 1."""
    if p < 1.0:
        raise ValueError(f"moment order must satisfy p >= 1, got {p}")
    x = _as_samples(mu)
    norms = np.sort(np.linalg.norm(x, axis=1))
    return float(np.mean(norms**p))


class MeasureHandle:
    """Narrow, order-insensitive query surface over a particle cloud.

    Every statistic is reduced over a sorted copy of the relevant column,
    so the handle returns bit-identical values for any permutation of the
    particles.  Coefficients must use this surface only; raw samples are
    deliberately not exposed.
    """

    __slots__ = ("_samples", "_sorted_cols", "_sorted_norms")

    def __init__(self, samples: np.ndarray):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        self._samples = samples
        self._sorted_cols = None
        self._sorted_norms = None

    @property
    def n(self) -> int:
        return self._samples.shape[0]

    @property
    def d(self) -> int:
        return self._samples.shape[1]

    def _cols(self) -> np.ndarray:
        if self._sorted_cols is None:
            self._sorted_cols = np.sort(self._samples, axis=0)
        return self._sorted_cols

    def _norms(self) -> np.ndarray:
        if self._sorted_norms is None:
            if self._samples.shape[1] == 1:
                self._sorted_norms = np.abs(self._cols()[:, 0])
            else:
                self._sorted_norms = np.sort(np.linalg.norm(self._samples, axis=1))
        return self._sorted_norms

    def mean(self) -> np.ndarray:
        """Coordinate-wise sample mean, a d-vector."""
        return np.mean(self._cols(), axis=0)

    def moment(self, p: float) -> float:
        """Raw p-th moment (1/N) sum |x_j|^p."""
        if p < 1.0:
            raise ValueError(f"moment order must satisfy p >= 1, got {p}")
        return float(np.mean(self._norms() ** p))

    def distance_to_dirac0(self, q: float = 2.0) -> float:
        """W_q to the Dirac mass at the origin."""
        q = _check_order(q)
        return float(np.mean(self._norms() ** q) ** (1.0 / q))
