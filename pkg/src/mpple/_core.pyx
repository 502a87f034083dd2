# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_core_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def cox_pass(const cnp.int64_t[::1] starts, const double[::1] risk,
             const double[:, ::1] Z, const double[::1] dn, const double[:, ::1] zw):
    cdef Py_ssize_t G = dn.shape[0]
    cdef Py_ssize_t p = Z.shape[1]
    cdef Py_ssize_t g, i, a, b
    cdef double r, d, inv
    s0_arr = np.zeros(G)
    s1_arr = np.zeros((G, p))
    score_arr = np.zeros(p)
    info_arr = np.zeros((p, p))
    cdef double[::1] s0 = s0_arr
    cdef double[:, ::1] s1 = s1_arr
    cdef double[::1] score = score_arr
    cdef double[:, ::1] info = info_arr
    cdef double[::1] run1 = np.zeros(p)
    cdef double[:, ::1] run2 = np.zeros((p, p))
    cdef double[::1] e = np.zeros(p)
    cdef double run0 = 0.0
    cdef double logsum = 0.0

    for a in range(p):
        for g in range(G):
            score[a] += zw[g, a]

    for g in range(G - 1, -1, -1):
        for i in range(starts[g], starts[g + 1]):
            r = risk[i]
            run0 += r
            for a in range(p):
                run1[a] += r * Z[i, a]
                for b in range(a + 1):
                    run2[a, b] += r * Z[i, a] * Z[i, b]
        s0[g] = run0
        for a in range(p):
            s1[g, a] = run1[a]
        d = dn[g]
        if d > 0:
            inv = 1.0 / run0
            logsum += d * log(run0)
            for a in range(p):
                e[a] = run1[a] * inv
                score[a] -= d * e[a]
            for a in range(p):
                for b in range(a + 1):
                    info[a, b] += d * (run2[a, b] * inv - e[a] * e[b])
    for a in range(p):
        for b in range(a):
            info[b, a] = info[a, b]
    return s0_arr, s1_arr, score_arr, info_arr, logsum


def cif_influence_pass(const double[:, :, ::1] phi, const double[::1] s_minus,
                       const double[::1] dlam, Py_ssize_t j):
    cdef Py_ssize_t k = phi.shape[0]
    cdef Py_ssize_t n = phi.shape[1]
    cdef Py_ssize_t M = phi.shape[2]
    cdef Py_ssize_t i, m, l
    cdef double acc, prev_j, prev_tot, cur
    out_arr = np.empty((n, M))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        acc = 0.0
        prev_j = 0.0
        prev_tot = 0.0
        for m in range(M):
            cur = phi[j, i, m]
            acc += s_minus[m] * (cur - prev_j) - prev_tot * s_minus[m] * dlam[m]
            out[i, m] = acc
            prev_j = cur
            prev_tot = 0.0
            for l in range(k):
                prev_tot += phi[l, i, m]
    return out_arr
