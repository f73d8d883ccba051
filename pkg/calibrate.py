"""Acceptance-scale calibration runs (throwaway, not part of the package)."""
import time

import numpy as np

from mvfbm.experiments import (
    ExperimentConfig,
    continuity_modulus_suite,
    moment_bound_suite,
    poc_rate_vs_N,
    strong_rate_vs_dt,
)
from mvfbm.model import get_problem
from mvfbm.scheme import SchemeConfig


def main():
    prob = get_problem("cubic-mf")

    # criterion 6: strong rate in dt
    for theta in (0.0, 0.5, 1.0):
        t0 = time.time()
        config = ExperimentConfig(
            scheme=SchemeConfig(theta=theta, alpha=0.5, m=4, n_particles=64, seed=1234),
            n_mc=200,
            p=2.0,
            m_values=(4, 8, 16, 32, 64),
            m_ref=512,
        )
        res = strong_rate_vs_dt(prob, config)
        print(
            f"[c6] theta={theta}: slope={res.rate.slope:.4f} r2={res.rate.r_squared:.4f} "
            f"errors={np.array2string(res.table.errors, precision=5)} "
            f"({time.time()-t0:.0f}s)", flush=True,
        )

    # criterion 7: chaos rate in N
    t0 = time.time()
    config = ExperimentConfig(
        scheme=SchemeConfig(theta=0.5, alpha=0.5, m=32, n_particles=1024, seed=99),
        n_mc=100,
        p=2.0,
        n_values=(8, 16, 32, 64, 128),
        n_ref=1024,
    )
    res = poc_rate_vs_N(prob, config)
    print(
        f"[c7] slope={res.rate.slope:.4f} r2={res.rate.r_squared:.4f} "
        f"errors={np.array2string(res.table.errors, precision=5)} ({time.time()-t0:.0f}s)",
        flush=True,
    )

    # criterion 8: moment boundedness across ladder
    t0 = time.time()
    config = ExperimentConfig(
        scheme=SchemeConfig(theta=0.5, alpha=0.5, m=8, n_particles=64, seed=7),
        n_mc=50,
        p=2.0,
        m_values=(8, 16, 32, 64, 128, 256),
    )
    rep = moment_bound_suite(prob, config)
    print(
        f"[c8] spread={rep.relative_spread:.4f} trend={rep.trend_slope:+.5f} "
        f"values={np.array2string(np.array(rep.values), precision=5)} ({time.time()-t0:.0f}s)",
        flush=True,
    )

    # criterion 9: continuity modulus, noise-only and cubic-mf
    for name, theta in (("noise-only", 0.0), ("cubic-mf", 0.0), ("cubic-mf", 1.0)):
        t0 = time.time()
        p = get_problem(name)
        config = ExperimentConfig(
            scheme=SchemeConfig(theta=theta, alpha=0.5, m=8, n_particles=32, seed=11),
            n_mc=100,
            p=2.0,
            m_values=(8, 16, 32, 64),
            m_ref=512,
        )
        rep = continuity_modulus_suite(p, config)
        print(
            f"[c9] {name} theta={theta}: exp_max={rep.exponent_max:.4f} "
            f"exp_cell={rep.exponent_cell:.4f} ({time.time()-t0:.0f}s)", flush=True,
        )


if __name__ == "__main__":
    main()
