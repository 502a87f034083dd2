"""Cumulative-residual goodness-of-fit check for the cause-probability model.

The observed process for cause ``j`` is
``n^-1 sum_i R_i [N_ij(t) - pi_j(W_i, gamma_hat) N_i(t)]``. Under a correct
model, ``sqrt(n)`` times it behaves like ``n^-1/2 sum_i h_i(t)`` with

    h_i(t) = R_i Delta_i 1{X_i <= t} [Delta_ij - pi_ij] - C_j(t)' omega_i,
    C_j(t) = n^-1 sum_i R_i Delta_i 1{X_i <= t} dpi_j(W_i) / dgamma,

and the null distribution of the supremum is simulated by replacing the sum
with ``sum_i h_i(t) xi_i``, ``xi_i ~ N(0, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bands import multiplier_draws, order_statistic_quantile
from .data import Dataset, design_matrix
from .exceptions import ConfigError
from .missingness import MissingnessFit
from .stepfunction import StepFunction


@dataclass
class GofResult:
    cause: int
    grid: np.ndarray
    process: np.ndarray
    sup_obs: float  # sqrt(n) * sup |process|
    p_value: float
    c_alpha: float
    band: tuple[np.ndarray, np.ndarray]
    alpha: float
    B: int
    seed: int

    def to_dict(self):
        return {"cause": self.cause, "p_value": self.p_value, "sup_obs": self.sup_obs,
                "c_alpha": self.c_alpha, "alpha": self.alpha, "B": self.B, "seed": self.seed}


def _complete_case_terms(dataset: Dataset, mfit: MissingnessFit, j: int):
    cc = np.flatnonzero(dataset.complete_case)
    order = cc[np.argsort(dataset.time[cc], kind="stable")]
    W = design_matrix(mfit.grammar, dataset, order)
    P = mfit.probabilities(W)
    resid = (dataset.cause[order] == j).astype(float) - P[:, j - 1]
    times = dataset.time[order]
    new = np.ones(times.size, dtype=bool)
    new[1:] = times[1:] != times[:-1]
    ends = np.append(np.flatnonzero(new)[1:], times.size) - 1  # last row of each tie group
    return order, W, resid, times[new], ends


def residual_process(dataset: Dataset, mfit: MissingnessFit, j: int) -> StepFunction:
    """Observed cumulative residual process on the complete-case failure times."""
    _, _, resid, grid, ends = _complete_case_terms(dataset, mfit, j)
    return StepFunction(grid, np.cumsum(resid)[ends] / dataset.n)


def gof_test(dataset: Dataset, mfit: MissingnessFit, j: int = 1, B: int = 1000,
             alpha: float = 0.05, seed: int = 0) -> GofResult:
    """Supremum test with a multiplier approximation of the null process.

    The p-value is ``(1 + #{b : sup_b >= sup_obs}) / (B + 1)``. Multipliers are
    drawn for all subjects in load order.
    """
    if B < 100:
        raise ConfigError("B must be at least 100")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    n = dataset.n
    order, W, resid, grid, ends = _complete_case_terms(dataset, mfit, j)
    process = np.cumsum(resid)[ends] / n
    sup_obs = math.sqrt(n) * float(np.max(np.abs(process))) if process.size else 0.0

    dpi = mfit.jacobian(W)[:, j - 1, :]
    c_t = np.cumsum(dpi, axis=0)[ends] / n  # (m, dim)
    omega = mfit.omega
    sups = np.empty(B)
    pos = 0
    for xi in multiplier_draws(B, n, seed):
        own = np.cumsum(xi[:, order] * resid, axis=1)[:, ends]
        corr = (xi @ omega) @ c_t.T
        sim = (own - corr) / math.sqrt(n)
        sups[pos:pos + xi.shape[0]] = np.max(np.abs(sim), axis=1) if sim.shape[1] else 0.0
        pos += xi.shape[0]
    p_value = (1 + int(np.sum(sups >= sup_obs))) / (B + 1)
    c_alpha = order_statistic_quantile(sups, alpha)
    half = np.full(grid.shape, c_alpha / math.sqrt(n))
    return GofResult(j, grid, process, sup_obs, p_value, c_alpha, (-half, half),
                     alpha, B, seed)
