"""Empirical influence functions and variance estimators.

Scaling convention: every influence array ``infl`` here satisfies
``estimate - truth ~ mean_i(infl_i)``, so the standard error of an estimate is
``sqrt(mean_i(infl_i**2) / n)`` and ``sigma = sqrt(mean_i(infl_i**2))`` is the
standard deviation of the root-n scaled process.

Step-function influences are stored as ``(n, m)`` arrays whose column ``k`` is
the right-continuous value at grid time ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .estimation import CauseSpecificFit, CoxFit
from .exceptions import SingularMatrixError
from .kernels import cif_influence_pass
from .missingness import MissingnessFit, failure_jacobian
from .stepfunction import evaluate_on


@dataclass
class BetaInfluence:
    """Influence of ``beta_hat_j``: ``psi_ij + R_j omega_i``."""

    psi: np.ndarray  # (n, p)
    r: np.ndarray  # (p, dim gamma)
    total: np.ndarray  # (n, p)
    sigma: np.ndarray  # (p, p)
    n: int

    @property
    def se(self):
        return np.sqrt(np.diag(self.sigma) / self.n)


@dataclass
class CumhazInfluence:
    """Influence of the Breslow estimate ``Lambda_hat_j(t)`` on its jump grid."""

    grid: np.ndarray
    phi: np.ndarray  # (n, m)
    r_star: np.ndarray  # (m, dim gamma)
    total: np.ndarray  # (n, m): phi + omega R*^T

    @property
    def sigma(self):
        return np.sqrt(np.mean(self.total ** 2, axis=0))

    def se(self):
        return self.sigma / np.sqrt(self.total.shape[0])

    def covariance(self, t, s):
        """Covariance function estimate at times ``t`` and ``s``."""
        a = evaluate_on(self.grid, self.total, np.atleast_1d(t), axis=1)
        b = evaluate_on(self.grid, self.total, np.atleast_1d(s), axis=1)
        return a.T @ b / a.shape[0]


def _missing_failure_terms(dataset: Dataset, mfit: MissingnessFit | None, j):
    """Mask of failures with a missing cause and their ``d pi_j / d gamma``."""
    miss = (dataset.event == 1) & (dataset.cause_observed == 0)
    if mfit is None or not miss.any():
        dim = 0 if mfit is None else mfit.dim
        return miss, np.zeros((int(miss.sum()), dim))
    return miss, failure_jacobian(mfit, dataset, miss)[:, j - 1, :]


def _omega(dataset, mfit):
    return np.zeros((dataset.n, 0)) if mfit is None else mfit.omega


def _grid_position(fit: CoxFit, time):
    """Number of grid points ``<= time`` for each subject."""
    return np.searchsorted(fit.grid, time, side="right")


def _cumulative(values):
    """Prepend a zero row and cumulate along axis 0."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((values.shape[0] + 1,) + values.shape[1:])
    np.cumsum(values, axis=0, out=out[1:])
    return out


def compute_beta_influence(dataset: Dataset, mfit: MissingnessFit | None,
                           cfit: CauseSpecificFit, j: int) -> BetaInfluence:
    """``psi_ij``, ``R_j`` and ``Sigma_j`` for cause ``j``."""
    fit = cfit.cause(j)
    n = dataset.n
    Z = dataset.covariates
    p = Z.shape[1]
    w = cfit.weights[j]
    omega = _omega(dataset, mfit)
    try:
        hinv = np.linalg.inv(fit.hessian)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"cause {j}: singular Hessian") from None

    pos = _grid_position(fit, dataset.time)
    cum_l = _cumulative(fit.dlambda)
    cum_el = _cumulative(fit.ebar * fit.dlambda[:, None])
    risk = np.exp(Z @ fit.beta)
    # E_n at each subject's own time (only used where w_ij > 0, which is a grid point)
    own = np.clip(pos - 1, 0, None)
    resid_own = Z - fit.ebar[own] if fit.grid.size else np.zeros_like(Z)
    mart = w[:, None] * resid_own - risk[:, None] * (Z * cum_l[pos][:, None] - cum_el[pos])
    psi = mart @ hinv

    miss, dpi = _missing_failure_terms(dataset, mfit, j)
    if dpi.shape[0]:
        r = hinv @ (resid_own[miss].T @ dpi) / n
    else:
        r = np.zeros((p, omega.shape[1]))
    total = psi + omega @ r.T
    sigma = total.T @ total / n
    return BetaInfluence(psi, r, total, sigma, n)


def compute_cumhaz_influence(dataset: Dataset, mfit: MissingnessFit | None,
                             cfit: CauseSpecificFit, j: int,
                             beta_infl: BetaInfluence) -> CumhazInfluence:
    """``phi_ij(t)`` and ``R_j*(t)`` on cause ``j``'s jump grid."""
    fit = cfit.cause(j)
    n = dataset.n
    m = fit.grid.size
    Z = dataset.covariates
    w = cfit.weights[j]
    omega = _omega(dataset, mfit)

    pos = _grid_position(fit, dataset.time)
    cum_c = _cumulative(fit.dlambda / fit.s0)
    cum_el = _cumulative(fit.ebar * fit.dlambda[:, None])[1:]  # (m, p)
    risk = np.exp(Z @ fit.beta)
    s0_own = np.where(pos > 0, fit.s0[np.clip(pos - 1, 0, None)], 1.0)

    k_idx = np.arange(1, m + 1)
    own_jump = (w / s0_own)[:, None] * (pos[:, None] <= k_idx[None, :])
    compensator = risk[:, None] * cum_c[np.minimum(k_idx[None, :], pos[:, None])]
    phi = n * (own_jump - compensator) - beta_infl.total @ cum_el.T

    miss, dpi = _missing_failure_terms(dataset, mfit, j)
    per_time = np.zeros((m, omega.shape[1]))
    if dpi.shape[0]:
        mpos = pos[miss] - 1
        np.add.at(per_time, mpos, dpi / fit.s0[mpos][:, None])
    r_star = np.cumsum(per_time, axis=0)
    total = phi + omega @ r_star.T
    return CumhazInfluence(fit.grid, phi, r_star, total)


def covariate_cumhaz_influence(cfit: CauseSpecificFit, j: int, z0,
                               beta_infl: BetaInfluence, cumhaz_infl: CumhazInfluence):
    """Influence of ``Lambda_hat_j(t; z0)`` on cause ``j``'s grid, shape (n, m)."""
    fit = cfit.cause(j)
    z0 = np.asarray(z0, dtype=float)
    lam = np.cumsum(fit.dlambda)
    lin = beta_infl.total @ z0
    return (lin[:, None] * lam[None, :] + cumhaz_infl.total) * np.exp(fit.beta @ z0)


def merged_grid(cfit: CauseSpecificFit):
    return np.unique(np.concatenate([f.grid for f in cfit.fits]))


def cif_influence(cfit: CauseSpecificFit, z0, phi_lambda, grid=None):
    """Influence of every ``F_hat_j(t; z0)`` on the merged grid.

    Parameters
    ----------
    phi_lambda : list of (n, m_l) arrays
        :func:`covariate_cumhaz_influence` for each cause.

    Returns
    -------
    grid : (M,) array
    phi_f : list of (n, M) arrays, one per cause
    """
    grid = merged_grid(cfit) if grid is None else grid
    z0 = np.asarray(z0, dtype=float)
    k = cfit.k
    on_grid = np.stack([
        evaluate_on(cfit.cause(l).grid, phi_lambda[l - 1], grid, axis=1)
        for l in range(1, k + 1)
    ])
    lam = np.array([
        evaluate_on(f.grid, np.cumsum(f.dlambda), grid) * np.exp(f.beta @ z0)
        for f in cfit.fits
    ])  # (k, M)
    total = lam.sum(axis=0)
    s_minus = np.exp(-np.concatenate([[0.0], total[:-1]]))
    dlam = np.diff(lam, axis=1, prepend=0.0)
    return grid, [cif_influence_pass(on_grid, s_minus, dlam[j], j) for j in range(k)]


@dataclass
class InfluenceSet:
    """Influence functions of all causes for one fitted model."""

    beta: list[BetaInfluence]
    cumhaz: list[CumhazInfluence]

    @property
    def psi(self):
        return [b.psi for b in self.beta]

    @property
    def r_j(self):
        return [b.r for b in self.beta]

    @property
    def sigma(self):
        return [b.sigma for b in self.beta]

    @property
    def grid(self):
        return [c.grid for c in self.cumhaz]


def compute_influence(dataset, mfit, cfit, *, cumhaz=True) -> InfluenceSet:
    betas = [compute_beta_influence(dataset, mfit, cfit, j) for j in range(1, cfit.k + 1)]
    hazards = []
    if cumhaz:
        hazards = [compute_cumhaz_influence(dataset, mfit, cfit, j, betas[j - 1])
                   for j in range(1, cfit.k + 1)]
    return InfluenceSet(betas, hazards)
