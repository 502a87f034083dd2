"""Compiled versus numpy kernels, and an end-to-end fit.

Usage::

    python benchmarks/bench_kernels.py [--n 6657] [--repeat 5]

Prints the median wall time of each kernel under both backends and of a full
fit with standard errors and one CIF band.
"""

import argparse
import statistics
import time

import numpy as np

from mpple import fit, kernels
from mpple.bands import BandRequest
from mpple.estimation import RiskSetLayout
from mpple.simulation import WORKING_TERMS, ScenarioConfig, generate_dataset


def timed(fn, repeat):
    runs = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - start)
    return statistics.median(runs)


def cox_inputs(ds):
    layout = RiskSetLayout(ds.time)
    d = (ds.cause == 1).astype(float)
    dn = layout.group_sum(d)
    zw = layout.group_sum(d[:, None] * ds.covariates)
    Z = ds.covariates[layout.order]
    risk = np.exp(Z @ np.array([-0.5, 0.2]))
    return layout.starts, risk, Z, dn, zw


def cif_inputs(n, m, k=2, seed=0):
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(k, n, m))
    s_minus = np.linspace(1.0, 0.3, m)
    return phi, s_minus, rng.uniform(0, 0.01, size=m)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=6657)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    ds = generate_dataset(ScenarioConfig(n=args.n, seed=1), 0)
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    print(f"n = {args.n}, default backend: {kernels.BACKEND}")
    cox = cox_inputs(ds)
    m = int(ds.event.sum())
    cif = cif_inputs(args.n, m)
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speed-up':>10}")
    for name, call in (("cox_pass", lambda b: kernels.cox_pass(*cox, backend=b)),
                       ("cif_influence_pass", lambda b: kernels.cif_influence_pass(*cif, 0,
                                                                                    backend=b))):
        times = [timed(lambda: call(b), args.repeat) for b in backends]
        speed = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else ""
        print(f"{name:<22}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + speed)

    def full():
        model = fit(ds, list(WORKING_TERMS))
        for j in (1, 2):
            model.beta_se(j)
            model.cumhaz(j).se
        model.cif_band(BandRequest(target="cif", z0=(0.5, 1.0), B=1000))

    print(f"full fit + SEs + CIF band ({kernels.BACKEND}): {timed(full, 1):.2f}s")


if __name__ == "__main__":
    main()
