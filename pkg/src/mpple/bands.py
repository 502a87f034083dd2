"""Simultaneous confidence bands by multiplier resampling.

For an estimate ``theta(t)`` with influence array ``infl`` (see
:mod:`mpple.influence` for the scaling) and transformation ``g``, the band is
``g^-1[g(theta(t)) +/- c_alpha / (sqrt(n) q(t))]`` where ``c_alpha`` is the
``1 - alpha`` quantile of ``sup_t |q(t) g'(theta(t)) W_b(t)|`` over multiplier
draws ``W_b(t) = n^-1/2 sum_i infl_i(t) xi_bi``, ``xi ~ N(0, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, EmptyDomainError

WEIGHTS = ("equal_precision", "hall_wellner")
_WEIGHT_ALIASES = {"ep": "equal_precision", "hw": "hall_wellner"}
TARGETS = ("cumhaz", "cumhaz_at_z0", "cif")
_CHUNK = 256


def normalize_weight(weight):
    weight = _WEIGHT_ALIASES.get(weight, weight)
    if weight not in WEIGHTS:
        raise ConfigError(f"unknown band weight {weight!r}")
    return weight


@dataclass(frozen=True)
class BandRequest:
    target: str = "cif"
    cause: int = 1
    z0: tuple | None = None
    alpha: float = 0.05
    weight: str = "equal_precision"
    B: int = 1000
    domain_rule: str = "quantile_clip"
    c1: float = 0.1
    c2: float = 0.9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weight", normalize_weight(self.weight))
        if self.target not in TARGETS:
            raise ConfigError(f"unknown band target {self.target!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.B < 100:
            raise ConfigError("B must be at least 100")
        if self.domain_rule not in ("event_range", "quantile_clip"):
            raise ConfigError(f"unknown domain rule {self.domain_rule!r}")
        if not 0 < self.c1 < self.c2 < 1:
            raise ConfigError("need 0 < c1 < c2 < 1")
        if self.target != "cumhaz" and self.z0 is None:
            raise ConfigError(f"target {self.target!r} needs z0")


@dataclass
class Band:
    target: str
    cause: int
    weight: str
    alpha: float
    times: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    c_alpha: float
    domain: tuple[float, float]
    B: int
    seed: int
    degenerate: bool = False

    def contains(self, truth):
        """Whether ``truth`` (values at :attr:`times`) lies inside the band."""
        truth = np.asarray(truth, dtype=float)
        return bool(np.all((truth >= self.lower) & (truth <= self.upper)))

    def metadata(self):
        return {
            "target": self.target, "cause": self.cause, "weight": self.weight,
            "alpha": self.alpha, "c_alpha": self.c_alpha,
            "domain": list(self.domain), "B": self.B, "seed": self.seed,
            "degenerate": self.degenerate,
        }


def multiplier_draws(B, n, seed):
    """Standard normal multipliers, one row per replication, one stream per seed.

    Rows are generated in fixed-size chunks from a single generator, so the
    values do not depend on how the caller consumes them.
    """
    rng = np.random.default_rng(seed)
    for start in range(0, B, _CHUNK):
        yield rng.standard_normal((min(_CHUNK, B - start), n))


def order_statistic_quantile(values, alpha):
    """The ``ceil((1 - alpha) B)``-th smallest of ``values``."""
    values = np.sort(np.asarray(values))
    r = math.ceil(round((1 - alpha) * values.size, 10))
    return float(values[max(r, 1) - 1])


def multiplier_sup(infl, scale, B=1000, seed=0, alpha=0.05):
    """Critical value of the supremum of a weighted multiplier process.

    Parameters
    ----------
    infl : (n, m) array
        Influence functions on the band domain.
    scale : (m,) array
        ``q(t) * g'(theta(t))`` on the same points.

    Returns
    -------
    c_alpha : float
    sups : (B,) array
    """
    infl = np.asarray(infl, dtype=float)
    scale = np.abs(np.asarray(scale, dtype=float))
    n = infl.shape[0]
    sups = np.empty(B)
    pos = 0
    for xi in multiplier_draws(B, n, seed):
        w = (xi @ infl) * (scale / math.sqrt(n))
        sups[pos:pos + xi.shape[0]] = np.max(np.abs(w), axis=1) if w.shape[1] else 0.0
        pos += xi.shape[0]
    return order_statistic_quantile(sups, alpha), sups


def band_domain(grid, sigma2, rule="quantile_clip", c1=0.1, c2=0.9):
    """Time range ``[t1, t2]`` for a band on a cause's jump grid.

    ``event_range`` spans the first to last jump; ``quantile_clip`` picks the
    grid points where ``sigma^2 / (1 + sigma^2)`` is nearest to ``c1`` and
    ``c2``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyDomainError("empty band domain: no jump times")
    if rule == "event_range":
        return float(grid[0]), float(grid[-1])
    ratio = np.asarray(sigma2) / (1 + np.asarray(sigma2))
    t1 = float(grid[np.argmin(np.abs(ratio - c1))])
    t2 = float(grid[np.argmin(np.abs(ratio - c2))])
    if t1 >= t2:
        raise EmptyDomainError(f"empty band domain after clipping ([{t1:g}, {t2:g}])")
    return t1, t2


def _weights(est, sigma, weight, transform):
    """``q(t)`` and ``q(t) * g'(est)`` for the log or log(-log) transform."""
    if transform == "log":
        base = est
        deriv = 1.0 / est
    else:
        base = np.abs(est * np.log(est))
        deriv = 1.0 / (est * np.log(est))
    if weight == "equal_precision":
        q = base / sigma
    else:
        q = base / (1 + sigma ** 2)
    return q, np.abs(q * deriv)


def transformed_band(times, est, infl, request: BandRequest, domain, transform):
    """Band for ``est`` with influence ``infl`` (n, m) restricted to ``domain``."""
    times = np.asarray(times, dtype=float)
    sel = (times >= domain[0]) & (times <= domain[1])
    if not sel.any():
        raise EmptyDomainError("empty band domain")
    t, e, inf = times[sel], np.asarray(est)[sel], infl[:, sel]
    if transform == "log" and np.any(e <= 0):
        raise EmptyDomainError("empty band domain: estimate is zero on the domain")
    if transform == "loglog" and np.any((e <= 0) | (e >= 1)):
        raise EmptyDomainError("empty band domain: estimate not inside (0, 1)")
    n = inf.shape[0]
    sigma = np.sqrt(np.mean(inf ** 2, axis=0))
    degenerate = not np.any(sigma > 0)
    if degenerate:
        c_alpha = 0.0
        half = np.zeros_like(e)
    else:
        sigma = np.where(sigma > 0, sigma, np.min(sigma[sigma > 0]))
        q, scale = _weights(e, sigma, request.weight, transform)
        c_alpha, _ = multiplier_sup(inf, scale, request.B, request.seed, request.alpha)
        half = c_alpha / (math.sqrt(n) * q)
    if transform == "log":
        lower, upper = e * np.exp(-half), e * np.exp(half)
    else:
        g = np.log(-np.log(e))
        lower, upper = np.exp(-np.exp(g + half)), np.exp(-np.exp(g - half))
    return Band(request.target, request.cause, request.weight, request.alpha, t, e,
                lower, upper, c_alpha, (float(domain[0]), float(domain[1])),
                request.B, request.seed, degenerate)


def band_cumhaz(times, estimate, infl, request: BandRequest, clip_sigma2=None):
    """Log-transformed band for a cumulative hazard.

    ``clip_sigma2`` (defaults to the variance function of ``infl``) drives the
    ``quantile_clip`` domain rule.
    """
    if clip_sigma2 is None:
        clip_sigma2 = np.mean(np.asarray(infl) ** 2, axis=0)
    domain = band_domain(times, clip_sigma2, request.domain_rule, request.c1, request.c2)
    return transformed_band(times, estimate, infl, request, domain, "log")


def band_cif(curve, infl, request: BandRequest, domain):
    """``log(-log)``-transformed band for a CIF curve on ``domain``."""
    sel = (curve.grid >= domain[0]) & (curve.grid <= domain[1])
    if not np.any(sel) or np.all(curve.values[sel] <= 0):
        raise EmptyDomainError("empty band domain: CIF is zero on the requested range")
    return transformed_band(curve.grid, curve.values, infl, request, domain, "loglog")
