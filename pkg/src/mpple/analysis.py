"""High-level workflow tying the estimation stages together."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import bands as _bands
from .cif import CifCurve, cif_with_uncertainty
from .data import Dataset, TermGrammar
from .exceptions import ConfigError, DataError
from .estimation import CauseSpecificFit, fit_mpple
from .gof import GofResult, gof_test
from .influence import (BetaInfluence, CumhazInfluence, cif_influence,
                        compute_beta_influence, compute_cumhaz_influence,
                        covariate_cumhaz_influence)
from .missingness import MissingnessFit, fit_cause_probability


@dataclass
class CumhazEstimate:
    cause: int
    z0: np.ndarray | None
    times: np.ndarray
    values: np.ndarray
    infl: np.ndarray  # (n, m)

    @property
    def se(self):
        return np.sqrt(np.mean(self.infl ** 2, axis=0) / self.infl.shape[0])


@dataclass
class FittedModel:
    """Both fitting stages plus lazily computed influence functions."""

    dataset: Dataset
    mfit: MissingnessFit | None
    cfit: CauseSpecificFit
    _beta: dict = field(default_factory=dict, repr=False)
    _cumhaz: dict = field(default_factory=dict, repr=False)

    @property
    def k(self):
        return self.dataset.k

    @property
    def n(self):
        return self.dataset.n

    def beta_influence(self, j) -> BetaInfluence:
        if j not in self._beta:
            self._beta[j] = compute_beta_influence(self.dataset, self.mfit, self.cfit, j)
        return self._beta[j]

    def cumhaz_influence(self, j) -> CumhazInfluence:
        if j not in self._cumhaz:
            self._cumhaz[j] = compute_cumhaz_influence(
                self.dataset, self.mfit, self.cfit, j, self.beta_influence(j))
        return self._cumhaz[j]

    def beta_se(self, j):
        return self.beta_influence(j).se

    def coefficient_table(self, alpha=0.05):
        z = norm.ppf(1 - alpha / 2)
        rows = []
        for j in range(1, self.k + 1):
            f = self.cfit.cause(j)
            se = self.beta_se(j)
            for m, name in enumerate(self.dataset.covariate_names):
                b, s = float(f.beta[m]), float(se[m])
                rows.append({
                    "cause": j, "covariate": name, "beta": b, "se": s,
                    "z": b / s if s > 0 else float("nan"),
                    "p_value": float(2 * norm.sf(abs(b / s))) if s > 0 else float("nan"),
                    "hazard_ratio": float(np.exp(b)),
                    "hr_lower": float(np.exp(b - z * s)),
                    "hr_upper": float(np.exp(b + z * s)),
                })
        return rows

    def cumhaz(self, j, z0=None) -> CumhazEstimate:
        f = self.cfit.cause(j)
        lam = np.cumsum(f.dlambda)
        if z0 is None:
            return CumhazEstimate(j, None, f.grid, lam, self.cumhaz_influence(j).total)
        z0 = np.asarray(z0, dtype=float)
        infl = covariate_cumhaz_influence(self.cfit, j, z0, self.beta_influence(j),
                                          self.cumhaz_influence(j))
        return CumhazEstimate(j, z0, f.grid, lam * np.exp(f.beta @ z0), infl)

    def cif_influence(self, z0):
        z0 = np.asarray(z0, dtype=float)
        phi_l = [self.cumhaz(j, z0).infl for j in range(1, self.k + 1)]
        return cif_influence(self.cfit, z0, phi_l)

    def cif(self, z0, alpha=0.05, with_influence=False):
        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (self.dataset.p,):
            raise DataError(f"z0 must have {self.dataset.p} components, got {z0.size}")
        _, phi_f = self.cif_influence(z0)
        curves = cif_with_uncertainty(self.cfit, phi_f, z0, alpha)
        return (curves, phi_f) if with_influence else curves

    def band_domain(self, request: _bands.BandRequest):
        """Domain from the cause's baseline cumulative-hazard variance."""
        ci = self.cumhaz_influence(request.cause)
        return _bands.band_domain(ci.grid, ci.sigma ** 2, request.domain_rule,
                                  request.c1, request.c2)

    def cumhaz_band(self, request: _bands.BandRequest) -> _bands.Band:
        z0 = None if request.target == "cumhaz" else request.z0
        est = self.cumhaz(request.cause, z0)
        domain = self.band_domain(request)
        return _bands.transformed_band(est.times, est.values, est.infl, request, domain, "log")

    def cif_band(self, request: _bands.BandRequest, curves=None, phi_f=None) -> _bands.Band:
        if curves is None or phi_f is None:
            curves, phi_f = self.cif(request.z0, request.alpha, with_influence=True)
        j = request.cause
        domain = self.band_domain(request)
        return _bands.band_cif(curves[j - 1], phi_f[j - 1], request, domain)

    def band(self, request: _bands.BandRequest) -> _bands.Band:
        if request.target == "cif":
            return self.cif_band(request)
        return self.cumhaz_band(request)

    def gof(self, j=1, B=1000, alpha=0.05, seed=0) -> GofResult:
        if self.mfit is None:
            raise ConfigError("goodness of fit needs a fitted cause-probability model")
        return gof_test(self.dataset, self.mfit, j, B, alpha, seed)


def fit(dataset: Dataset, terms=None) -> FittedModel:
    """Fit the cause-probability model (when ``terms`` is given or needed)
    and the cause-specific hazards.

    ``terms`` is a :class:`TermGrammar` or a list of term strings.
    """
    has_missing = bool(np.any((dataset.event == 1) & (dataset.cause_observed == 0)))
    mfit = None
    if terms is not None:
        grammar = terms if isinstance(terms, TermGrammar) else TermGrammar.for_dataset(terms, dataset)
        mfit = fit_cause_probability(dataset, grammar)
    elif has_missing:
        raise ConfigError("missing causes present: a cause-probability model is required")
    cfit = fit_mpple(dataset, mfit)
    return FittedModel(dataset, mfit, cfit)


__all__ = ["CifCurve", "CumhazEstimate", "FittedModel", "fit"]
