import numpy as np

from mvfbm.fbm import Hurst
from mvfbm.model import NeutralDelayMvProblem


def toy_problem(
    drift,
    neutral=None,
    diffusion=None,
    initial=None,
    d=1,
    tau=1.0,
    horizon=2.0,
    hurst=0.75,
    q=2.0,
    name="toy",
):
    """One-off problem with sensible defaults for unit tests."""
    if neutral is None:
        neutral = lambda y: 0.0 * y
    if diffusion is None:
        diffusion = lambda mu: 0.4 * np.eye(d)
    if initial is None:
        initial = lambda t: np.full(d, 1.0 + t / (2.0 * tau))
    return NeutralDelayMvProblem(
        name=name,
        d=d,
        tau=tau,
        horizon=horizon,
        hurst=Hurst(hurst),
        q=q,
        drift=drift,
        neutral=neutral,
        diffusion=diffusion,
        initial_segment=initial,
    )
