# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the uncertain-input moment-matching kernel.

Same contract as `_moment_np.mm_core`; the O(n^2 E^2) exponent and
reduction loops run as typed C without temporaries, which is where the
smoother spends nearly all of its time under moment matching.  The small
D x D factorizations stay in numpy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

from .linalg import chol, chol_inv, chol_solve, logdet_from_chol

cnp.import_array()

NAME = "compiled"


def mm_core(nu, inv_ell2, log_sf2, sw2, beta, iK, Sigma):
    """Moment-matched mean, covariance and premultiplied cross-covariance."""
    cdef cnp.ndarray[double, ndim=2] nu_c = np.ascontiguousarray(nu, dtype=np.float64)
    cdef int n = nu_c.shape[0]
    cdef int D = nu_c.shape[1]
    cdef cnp.ndarray[double, ndim=2] beta_c = np.ascontiguousarray(beta, dtype=np.float64)
    cdef int E = beta_c.shape[0]

    mean = np.zeros(E)
    V = np.zeros((D, E))
    cov = np.zeros((E, E))
    q = np.zeros((E, n))
    logk = np.zeros((E, n))
    scaled = np.zeros((E, n, D))
    eyeD = np.eye(D)

    cdef int a, b
    for a in range(E):
        ell2 = 1.0 / inv_ell2[a]
        La = chol(Sigma + np.diag(ell2), "input covariance plus lengthscales")
        logdet_ratio = logdet_from_chol(La) - float(np.sum(np.log(ell2)))
        t = chol_solve(La, nu_c.T).T
        lq = log_sf2[a] - 0.5 * logdet_ratio - 0.5 * np.einsum("nd,nd->n", nu_c, t)
        q[a] = np.exp(lq)
        mean[a] = q[a] @ beta_c[a]
        V[:, a] = (beta_c[a] * q[a]) @ t
        logk[a] = log_sf2[a] - 0.5 * np.einsum("nd,nd->n", nu_c, nu_c * inv_ell2[a])
        scaled[a] = nu_c * inv_ell2[a]

    cdef cnp.ndarray[double, ndim=2] iK_a
    cdef cnp.ndarray[double, ndim=2] ya_c, ij_c
    cdef cnp.ndarray[double, ndim=1] lka_c, lkb_c, ai_c, bj_c, bta_c, btb_c
    cdef double[:, :] ya_v, ij_v, iK_v
    cdef double[:] lka_v, lkb_v, ai_v, bj_v, bta_v, btb_v
    cdef int i, j, d
    cdef double e, acc, tr, base, half_logdet
    cdef bint diag_pair

    for a in range(E):
        for b in range(a, E):
            w = inv_ell2[a] + inv_ell2[b]
            rw = np.sqrt(w)
            G = rw[:, None] * Sigma * rw[None, :] + eyeD
            LG = chol(G, "moment-matching pair matrix")
            half_logdet = 0.5 * logdet_from_chol(LG)
            M = 0.5 * ((eyeD - chol_inv(LG)) / rw[:, None]) / rw[None, :]
            ii = scaled[a]
            ij_c = np.ascontiguousarray(scaled[b])
            ya_c = np.ascontiguousarray(ii @ (2.0 * M))
            ai_c = np.einsum("nd,de,ne->n", ii, M, ii)
            bj_c = np.einsum("nd,de,ne->n", ij_c, M, ij_c)
            lka_c = np.ascontiguousarray(logk[a])
            lkb_c = np.ascontiguousarray(logk[b])
            bta_c = np.ascontiguousarray(beta_c[a])
            btb_c = np.ascontiguousarray(beta_c[b])
            iK_a = np.ascontiguousarray(iK[a])
            diag_pair = a == b

            ya_v = ya_c; ij_v = ij_c; iK_v = iK_a
            lka_v = lka_c; lkb_v = lkb_c; ai_v = ai_c; bj_v = bj_c
            bta_v = bta_c; btb_v = btb_c
            acc = 0.0
            tr = 0.0
            with nogil:
                for i in range(n):
                    base = lka_v[i] + ai_v[i] - half_logdet
                    for j in range(n):
                        e = base + lkb_v[j] + bj_v[j]
                        for d in range(D):
                            e += ya_v[i, d] * ij_v[j, d]
                        e = exp(e)
                        acc += bta_v[i] * e * btb_v[j]
                        if diag_pair:
                            tr += iK_v[i, j] * e
            cov[a, b] = cov[b, a] = acc
            if diag_pair:
                cov[a, a] += float(np.exp(log_sf2[a])) - tr + sw2[a]

    cov -= np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T), V
