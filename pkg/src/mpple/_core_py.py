"""Pure numpy implementations of the hot kernels.

Each function here has a compiled twin in ``_core.pyx`` with the same
signature and results equal up to floating-point summation order.
"""

import numpy as np


def cox_pass(starts, risk, Z, dn, zw):
    """Risk-set sums and weighted partial-likelihood derivatives.

    Subjects are sorted by ascending time; group ``g`` holds the subjects with
    the ``g``-th distinct time, rows ``starts[g]:starts[g + 1]``. The risk set
    of group ``g`` is every subject in groups ``>= g``.

    Parameters
    ----------
    starts : int64 array, shape (G + 1,)
    risk : float array, shape (n,)
        ``exp(linear predictor)`` in sorted order (any common scale factor).
    Z : float array, shape (n, p)
    dn : float array, shape (G,)
        Total event weight at each distinct time.
    zw : float array, shape (G, p)
        Event-weighted covariate sums at each distinct time.

    Returns
    -------
    s0 : (G,) array
    s1 : (G, p) array
    score : (p,) array
        ``sum_g zw_g - dn_g * s1_g / s0_g``.
    info : (p, p) array
        ``sum_g dn_g * (s2_g / s0_g - e_g e_g^T)``.
    logsum : float
        ``sum_g dn_g * log(s0_g)`` over groups with ``dn_g > 0``.
    """
    head = starts[:-1]
    s0 = np.cumsum(risk[::-1])[::-1][head]
    rz = risk[:, None] * Z
    s1 = np.cumsum(rz[::-1], axis=0)[::-1][head]
    ev = dn > 0
    d = dn[ev]
    e = s1[ev] / s0[ev, None]
    score = zw.sum(axis=0) - d @ e
    s2 = np.cumsum((rz[:, :, None] * Z[:, None, :])[::-1], axis=0)[::-1][head[ev]]
    v = s2 / s0[ev, None, None] - e[:, :, None] * e[:, None, :]
    info = np.einsum("g,gab->ab", d, v)
    logsum = float(d @ np.log(s0[ev]))
    return s0, s1, score, info, logsum


def cif_influence_pass(phi, s_minus, dlam, j):
    """Influence of a cumulative incidence estimate on the merged grid.

    Parameters
    ----------
    phi : float array, shape (k, n, M)
        Covariate-specific cumulative-hazard influence of every cause,
        evaluated on the merged grid.
    s_minus : (M,) array
        ``exp(-sum_l Lambda_l(t_m-))``.
    dlam : (M,) array
        Jumps of cause ``j``'s covariate-specific cumulative hazard.
    j : int
        Zero-based cause index.

    Returns
    -------
    (n, M) array
    """
    cur = phi[j]
    prev = np.zeros_like(cur)
    prev[:, 1:] = cur[:, :-1]
    tot_prev = np.zeros_like(cur)
    tot_prev[:, 1:] = phi[:, :, :-1].sum(axis=0)
    inc = s_minus * (cur - prev) - tot_prev * (s_minus * dlam)
    return np.cumsum(inc, axis=1)
