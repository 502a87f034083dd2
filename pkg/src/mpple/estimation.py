"""Maximum pseudo-partial-likelihood fit of the cause-specific Cox models.

Failures with a missing cause enter every cause's partial likelihood with the
fractional weight ``pi_j(W_i, gamma_hat)``; observed causes enter with weight
one for their own cause. Ties use the Breslow convention and the risk set at
``t`` is ``{l : X_l >= t}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .data import Dataset
from .exceptions import (ConfigError, ConvergenceError, DegenerateCauseError, SeparationError,
                         SingularMatrixError)
from .kernels import cox_pass
from .missingness import MissingnessFit, failure_probabilities
from .stepfunction import StepFunction

SCORE_TOL = 1e-9
MAX_ITER = 100
MAX_HALVINGS = 20
DIVERGENCE_BOUND = 50.0
# information at the solution below this fraction of its value at beta = 0
# signals a monotone likelihood that "converged" far out along a ray
INFO_COLLAPSE = 1e-8


@dataclass(frozen=True)
class CauseWeights:
    """Imputed event weights ``w_ij``; row ``i`` sums to ``Delta_i``."""

    w: np.ndarray  # (n, k)

    def __getitem__(self, j):
        """Weights of cause ``j`` (1-based)."""
        return self.w[:, j - 1]


def cause_weights(dataset: Dataset, mfit: MissingnessFit | None) -> CauseWeights:
    """``w_ij = R_i Delta_ij + (1 - R_i) Delta_i pi_j(W_i, gamma_hat)``."""
    w = np.zeros((dataset.n, dataset.k))
    cc = dataset.complete_case
    w[cc, dataset.cause[cc] - 1] = 1.0
    miss = (dataset.event == 1) & (dataset.cause_observed == 0)
    if miss.any():
        if mfit is None:
            raise ConfigError("missing causes present but no cause-probability fit given")
        w[miss] = failure_probabilities(mfit, dataset)[miss]
    w.flags.writeable = False
    return CauseWeights(w)


class RiskSetLayout:
    """Sort order and distinct-time grouping shared by all causes."""

    def __init__(self, time):
        self.order = np.argsort(time, kind="stable")
        ts = time[self.order]
        new = np.empty(ts.size, dtype=bool)
        new[0] = True
        new[1:] = ts[1:] != ts[:-1]
        self.starts = np.append(np.flatnonzero(new), ts.size).astype(np.int64)
        self.times = ts[new]
        # group of each subject in original order
        self.group = np.empty(ts.size, dtype=np.int64)
        self.group[self.order] = np.cumsum(new) - 1

    @property
    def n_groups(self):
        return self.times.size

    def group_sum(self, values):
        """Sum ``values`` (original order, leading axis n) within time groups."""
        values = np.asarray(values, dtype=float)
        out = np.zeros((self.n_groups,) + values.shape[1:])
        np.add.at(out, self.group, values)
        return out


@dataclass
class _CoxState:
    beta: np.ndarray
    score: np.ndarray  # n^-1 scaled
    neg_jacobian: np.ndarray  # n^-1 scaled
    objective: float  # n^-1 scaled log pseudo-partial likelihood
    s0: np.ndarray  # per group, true scale
    s1: np.ndarray


def _cox_state(layout, Z_sorted, Z, dn, zw, beta):
    n = Z.shape[0]
    eta = Z_sorted @ beta
    shift = float(eta.max()) if eta.size else 0.0
    risk = np.exp(eta - shift)
    s0, s1, score, info, logsum = cox_pass(layout.starts, risk, Z_sorted, dn, zw)
    total = dn.sum()
    objective = (float(zw.sum(axis=0) @ beta) - logsum - shift * total) / n
    scale = np.exp(shift)
    return _CoxState(beta, score / n, info / n, objective, s0 * scale, s1 * scale)


@dataclass
class CoxFit:
    """Weighted Cox fit for one cause."""

    beta: np.ndarray
    hessian: np.ndarray  # n^-1 * negative Jacobian of the score at beta
    score: np.ndarray
    iterations: int
    converged: bool
    grid: np.ndarray  # weighted event times
    dlambda: np.ndarray  # Breslow jumps on grid
    s0: np.ndarray  # S0 at grid points (true scale)
    ebar: np.ndarray  # E_n(t, beta) at grid points, (m, p)
    grid_groups: np.ndarray  # layout groups that are grid points
    degenerate: bool = False

    @cached_property
    def baseline(self) -> StepFunction:
        return StepFunction.from_jumps(self.grid, self.dlambda)


def fit_cox(layout: RiskSetLayout, Z, weights, *, tol=SCORE_TOL, max_iter=MAX_ITER,
            cause=None) -> CoxFit:
    """Newton-Raphson for the (weighted) Breslow partial likelihood.

    ``weights`` are the event weights ``dN_i`` of each subject for this cause
    (0 for censored subjects or other causes).
    """
    Z = np.asarray(Z, dtype=float)
    n, p = Z.shape
    weights = np.asarray(weights, dtype=float)
    if not weights.sum() > 0:
        raise DegenerateCauseError(cause)
    Z_sorted = np.ascontiguousarray(Z[layout.order])
    dn = layout.group_sum(weights)
    zw = layout.group_sum(weights[:, None] * Z)
    ev = np.flatnonzero(dn > 0)

    degenerate = p == 0 or not np.any(Z)
    beta = np.zeros(p)
    state = _cox_state(layout, Z_sorted, Z, dn, zw, beta)
    it = 0
    converged = True
    if not degenerate:
        if np.linalg.matrix_rank(state.neg_jacobian) < p:
            raise SingularMatrixError(
                f"cause {cause}: covariates are collinear or constant among weighted failures")
        info0 = np.linalg.eigvalsh(state.neg_jacobian)[0]
        converged = False
        for it in range(max_iter + 1):
            if np.max(np.abs(state.score)) < tol:
                converged = True
                break
            if it == max_iter:
                break
            try:
                step = np.linalg.solve(state.neg_jacobian, state.score)
            except np.linalg.LinAlgError:
                raise SingularMatrixError(f"cause {cause}: singular Jacobian") from None
            s = 1.0
            for _ in range(MAX_HALVINGS + 1):
                cand = _cox_state(layout, Z_sorted, Z, dn, zw, state.beta + s * step)
                if cand.objective >= state.objective - 1e-12 * (1 + abs(state.objective)):
                    break
                s *= 0.5
            state = cand
            if np.max(np.abs(state.beta)) > DIVERGENCE_BOUND:
                raise SeparationError(f"cause {cause}: coefficients diverged (|beta| > 50)")
        if not converged:
            raise ConvergenceError(f"cause {cause}: no convergence in {max_iter} iterations")
        if np.linalg.eigvalsh(state.neg_jacobian)[0] < INFO_COLLAPSE * info0:
            raise SeparationError(
                f"cause {cause}: monotone likelihood (information vanished at beta = "
                f"{np.round(state.beta, 2).tolist()})")

    s0 = state.s0[ev]
    return CoxFit(
        beta=state.beta,
        hessian=state.neg_jacobian,
        score=state.score,
        iterations=it,
        converged=converged,
        grid=layout.times[ev],
        dlambda=dn[ev] / s0,
        s0=s0,
        ebar=state.s1[ev] / s0[:, None],
        grid_groups=ev,
        degenerate=degenerate,
    )


@dataclass
class CauseSpecificFit:
    """Per-cause coefficients and Breslow baselines."""

    fits: list[CoxFit]
    weights: CauseWeights
    layout: RiskSetLayout = field(repr=False)
    n: int

    @property
    def k(self):
        return len(self.fits)

    @property
    def beta(self):
        return np.array([f.beta for f in self.fits])

    @property
    def hessian(self):
        return np.array([f.hessian for f in self.fits])

    @property
    def baseline(self) -> list[StepFunction]:
        return [f.baseline for f in self.fits]

    @property
    def iterations(self):
        return [f.iterations for f in self.fits]

    @property
    def converged(self):
        return [f.converged for f in self.fits]

    def cause(self, j) -> CoxFit:
        return self.fits[j - 1]


def fit_mpple(dataset: Dataset, mfit: MissingnessFit | None, *, tol=SCORE_TOL,
              max_iter=MAX_ITER) -> CauseSpecificFit:
    """Solve the pseudo-score equations for every cause."""
    weights = cause_weights(dataset, mfit)
    layout = RiskSetLayout(dataset.time)
    fits = [
        fit_cox(layout, dataset.covariates, weights[j], tol=tol, max_iter=max_iter, cause=j)
        for j in range(1, dataset.k + 1)
    ]
    return CauseSpecificFit(fits, weights, layout, dataset.n)


def pseudo_score(dataset: Dataset, weights: CauseWeights, j: int, beta):
    """``n^-1``-scaled pseudo-score and negative Jacobian for cause ``j``."""
    layout = RiskSetLayout(dataset.time)
    Z = np.asarray(dataset.covariates, dtype=float)
    w = weights[j]
    st = _cox_state(layout, np.ascontiguousarray(Z[layout.order]), Z,
                    layout.group_sum(w), layout.group_sum(w[:, None] * Z),
                    np.asarray(beta, dtype=float))
    return st.score, st.neg_jacobian


def pseudo_loglik(dataset: Dataset, weights: CauseWeights, j: int, beta):
    """``n^-1``-scaled log pseudo-partial likelihood of cause ``j``."""
    layout = RiskSetLayout(dataset.time)
    Z = np.asarray(dataset.covariates, dtype=float)
    w = weights[j]
    st = _cox_state(layout, np.ascontiguousarray(Z[layout.order]), Z,
                    layout.group_sum(w), layout.group_sum(w[:, None] * Z),
                    np.asarray(beta, dtype=float))
    return st.objective


def cumhaz_at_covariate(cfit: CauseSpecificFit, j: int, z0) -> StepFunction:
    """``Lambda_j(t; z0) = Lambda_j(t) exp(beta_j' z0)``."""
    f = cfit.cause(j)
    return f.baseline.scaled(float(np.exp(f.beta @ np.asarray(z0, dtype=float))))
