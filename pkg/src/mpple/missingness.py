"""Parametric model for the probability of each cause given a failure.

``pi_j(W, gamma)`` is a generalized (multinomial) logit with cause ``k`` as
reference; for ``k = 2`` this is the binary logit ``pi_1 = expit(gamma' w)``.
The stacked parameter holds ``k - 1`` blocks of length ``d = len(grammar)``,
block ``l`` belonging to cause ``l + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, SubjectRecord, TermGrammar, design_matrix, design_row
from .exceptions import ConvergenceError, DataError, SeparationError, SingularMatrixError

SCORE_TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 20
SEPARATION_BOUND = 50.0


def _probabilities(gamma, W):
    """Row-wise cause probabilities, shape (m, k)."""
    eta = np.zeros((W.shape[0], gamma.shape[0] + 1))
    eta[:, :-1] = W @ gamma.T
    return np.exp(eta - logsumexp(eta, axis=1, keepdims=True))


def _jacobian(P, W):
    """d pi_j / d gamma for every row: shape (m, k, (k-1)*d)."""
    m, k = P.shape
    d = W.shape[1]
    # dpi_j/dgamma_l = pi_j (1{j=l} - pi_l) w
    eye = np.eye(k)[:, : k - 1]
    coef = P[:, :, None] * (eye[None, :, :] - P[:, None, : k - 1])
    return (coef[:, :, :, None] * W[:, None, None, :]).reshape(m, k, (k - 1) * d)


def _loglik(gamma, W, y):
    eta = np.zeros((W.shape[0], gamma.shape[0] + 1))
    eta[:, :-1] = W @ gamma.T
    return float(np.sum(eta[np.arange(len(y)), y] - logsumexp(eta, axis=1)))


def _score_info(gamma, W, Y):
    P = _probabilities(gamma, W)
    k = P.shape[1]
    resid = (Y - P)[:, : k - 1]
    score = (resid.T @ W).ravel()
    d = W.shape[1]
    info = np.empty(((k - 1) * d, (k - 1) * d))
    for a in range(k - 1):
        for b in range(a, k - 1):
            c = P[:, a] * ((a == b) - P[:, b])
            block = (W * c[:, None]).T @ W
            info[a * d:(a + 1) * d, b * d:(b + 1) * d] = block
            info[b * d:(b + 1) * d, a * d:(a + 1) * d] = block.T
    return score, info, resid


@dataclass(frozen=True)
class MissingnessFit:
    """Fitted cause-probability model.

    ``fisher_info`` is the total information over complete cases. ``omega``
    is scaled so that ``gamma_hat - gamma_0 ~ mean(omega)``, i.e.
    ``omega_i = n * fisher_info^{-1} U_i`` with ``n`` the dataset size.
    """

    gamma: np.ndarray  # (k - 1, d)
    grammar: TermGrammar
    k: int
    fisher_info: np.ndarray
    omega: np.ndarray  # (n, (k - 1) * d)
    loglik: float
    converged: bool
    iterations: int
    n_complete: int

    @property
    def gamma_hat(self):
        return self.gamma.ravel()

    @property
    def dim(self):
        return self.gamma.size

    @property
    def se(self):
        return np.sqrt(np.diag(np.linalg.inv(self.fisher_info)))

    def probabilities(self, W):
        return _probabilities(self.gamma, np.atleast_2d(W))

    def jacobian(self, W):
        """``(m, k, dim)`` array of probability gradients."""
        W = np.atleast_2d(W)
        return _jacobian(self.probabilities(W), W)

    def to_dict(self):
        return {
            "terms": list(self.grammar.labels),
            "k": self.k,
            "gamma": self.gamma.tolist(),
            "se": self.se.reshape(self.gamma.shape).tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_complete": self.n_complete,
        }


def fit_cause_probability(dataset: Dataset, grammar: TermGrammar, *, tol=SCORE_TOL,
                          max_iter=MAX_ITER, trace=None) -> MissingnessFit:
    """Maximum likelihood on complete cases by Newton-Raphson with step halving.

    If ``trace`` is a list, the log-likelihood of every iterate is appended.
    """
    cc = dataset.complete_case
    k = dataset.k
    causes = dataset.cause[cc] - 1
    counts = np.bincount(causes, minlength=k)
    if np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0]) + 1
        raise DataError(f"no complete cases observed for cause {j}")
    W = design_matrix(grammar, dataset, cc)
    d = W.shape[1]
    if np.linalg.matrix_rank(W) < d:
        raise SingularMatrixError("cause-probability design matrix is rank deficient")
    Y = np.eye(k)[causes]
    gamma = np.zeros((k - 1, d))
    ll = _loglik(gamma, W, causes)
    if trace is not None:
        trace.append(ll)
    converged = False
    it = 0
    for it in range(max_iter + 1):
        score, info, _ = _score_info(gamma, W, Y)
        if np.max(np.abs(score)) < tol:
            converged = True
            break
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(info, score).reshape(gamma.shape)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("singular information in cause-probability fit") from None
        s = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = gamma + s * step
            ll_new = _loglik(cand, W, causes)
            if ll_new >= ll - 1e-12 * (1 + abs(ll)):
                break
            s *= 0.5
        gamma, ll = cand, ll_new
        if trace is not None:
            trace.append(ll)
        if np.max(np.abs(gamma)) > SEPARATION_BOUND:
            raise SeparationError(
                "cause-probability coefficients diverged (|gamma| > 50); "
                "the complete cases are (quasi-)separated")
    if not converged:
        raise ConvergenceError(f"cause-probability fit did not converge in {max_iter} iterations")

    score, info, resid = _score_info(gamma, W, Y)
    try:
        inv = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("singular information in cause-probability fit") from None
    U = (resid[:, :, None] * W[:, None, :]).reshape(W.shape[0], -1)
    omega = np.zeros((dataset.n, gamma.size))
    omega[cc] = dataset.n * U @ inv
    return MissingnessFit(gamma, grammar, k, info, omega, ll, converged, it, int(cc.sum()))


def influence_omega(fit: MissingnessFit, dataset: Dataset | None = None):
    """Per-subject influence vectors for ``gamma_hat`` (rows of zeros for
    subjects without a likelihood term)."""
    if dataset is not None and dataset.n != fit.omega.shape[0]:
        raise ValueError("dataset does not match the fit")
    return fit.omega


def predict_pi(fit: MissingnessFit, record: SubjectRecord):
    if record.event != 1:
        raise DataError("cause probabilities are defined for failures only")
    return fit.probabilities(design_row(fit.grammar, record))[0]


def pi_gradient(fit: MissingnessFit, record: SubjectRecord, j: int):
    """Gradient of ``pi_j`` with respect to the stacked parameter."""
    if not 1 <= j <= fit.k:
        raise ValueError(f"cause {j} outside 1..{fit.k}")
    if record.event != 1:
        raise DataError("cause probabilities are defined for failures only")
    return fit.jacobian(design_row(fit.grammar, record))[0, j - 1]


def failure_probabilities(fit: MissingnessFit, dataset: Dataset):
    """``(n, k)`` probabilities for failures, zero rows for censored subjects."""
    out = np.zeros((dataset.n, fit.k))
    f = dataset.event == 1
    if f.any():
        out[f] = fit.probabilities(design_matrix(fit.grammar, dataset, f))
    return out


def failure_jacobian(fit: MissingnessFit, dataset: Dataset, rows):
    """Probability gradients at the subjects selected by boolean mask ``rows``."""
    W = design_matrix(fit.grammar, dataset, rows)
    return fit.jacobian(W) if W.shape[0] else np.zeros((0, fit.k, fit.dim))
