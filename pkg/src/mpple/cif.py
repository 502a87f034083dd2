"""Covariate-specific cumulative incidence functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .estimation import CauseSpecificFit
from .exceptions import DataError
from .influence import merged_grid
from .stepfunction import evaluate_on


@dataclass
class CifCurve:
    """``F_hat_j(t; z0)`` on the merged jump grid of all causes."""

    cause: int
    z0: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    se: np.ndarray | None = None
    lower: np.ndarray | None = None  # pointwise CI, NaN where undefined
    upper: np.ndarray | None = None
    alpha: float | None = None
    bands: dict = field(default_factory=dict)  # weight name -> Band

    def __call__(self, t):
        return evaluate_on(self.grid, self.values, t)


def cumhaz_on_grid(cfit: CauseSpecificFit, z0, grid):
    """``(k, M)`` covariate-specific cumulative hazards evaluated on ``grid``."""
    z0 = np.asarray(z0, dtype=float)
    return np.array([
        evaluate_on(f.grid, np.cumsum(f.dlambda), grid) * np.exp(f.beta @ z0)
        for f in cfit.fits
    ])


def cif_from_cumhaz(lam):
    """Plug-in CIFs from ``(k, M)`` cumulative hazards on a common grid.

    ``F_j(t) = sum_{s <= t} exp(-sum_l Lambda_l(s-)) dLambda_j(s)`` with the
    left limit taken at the preceding grid point.
    """
    lam = np.atleast_2d(lam)
    total = lam.sum(axis=0)
    s_minus = np.exp(-np.concatenate([[0.0], total[:-1]]))
    dlam = np.diff(lam, axis=1, prepend=0.0)
    return np.cumsum(s_minus * dlam, axis=1)


def predict_cif(cfit: CauseSpecificFit, z0) -> list[CifCurve]:
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (cfit.beta.shape[1],):
        raise DataError(f"z0 must have length {cfit.beta.shape[1]}")
    grid = merged_grid(cfit)
    values = cif_from_cumhaz(cumhaz_on_grid(cfit, z0, grid))
    return [CifCurve(j + 1, z0, grid, values[j]) for j in range(cfit.k)]


def loglog_interval(f, se, alpha):
    """Pointwise CI on the ``log(-log F)`` scale; NaN where ``F`` is 0 or >= 1."""
    f = np.asarray(f, dtype=float)
    se = np.asarray(se, dtype=float)
    z = norm.ppf(1 - alpha / 2)
    ok = (f > 0) & (f < 1)
    lower = np.full(f.shape, np.nan)
    upper = np.full(f.shape, np.nan)
    fo = f[ok]
    sg = se[ok] / np.abs(fo * np.log(fo))
    lower[ok] = fo ** np.exp(z * sg)
    upper[ok] = fo ** np.exp(-z * sg)
    return lower, upper


def cif_with_uncertainty(cfit: CauseSpecificFit, phi_f, z0, alpha=0.05) -> list[CifCurve]:
    """CIF curves with standard errors and pointwise ``1 - alpha`` intervals.

    ``phi_f`` is the list of per-cause influence arrays from
    :func:`mpple.influence.cif_influence` at the same ``z0``.
    """
    curves = predict_cif(cfit, z0)
    for c, infl in zip(curves, phi_f):
        n = infl.shape[0]
        c.se = np.sqrt(np.mean(infl ** 2, axis=0) / n)
        c.lower, c.upper = loglog_interval(c.values, c.se, alpha)
        c.alpha = alpha
    return curves
