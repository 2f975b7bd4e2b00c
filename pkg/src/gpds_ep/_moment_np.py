"""Numpy implementation of the uncertain-input moment-matching kernel.

This is the reference backend; `_moment_cy` is a compiled drop-in with the
same contract.  Given a GP over E output dims and a Gaussian input
N(mu, Sigma), it computes the exact predictive mean, covariance and the
premultiplied input-output covariance

    V = Sigma^-1 cov[x, f(x)]        (shape D x E)

without ever inverting Sigma, so zero-variance input directions (known
controls) are handled for free.

All quantities follow from Gaussian integrals of products of squared
exponential kernels.  With nu_i = x_i - mu and Lambda_a the squared
lengthscales of output a:

    q_a_i   = sf2_a |Sigma Lambda_a^-1 + I|^-1/2
              exp(-1/2 nu_i . (Sigma + Lambda_a)^-1 nu_i)
    mean_a  = q_a . beta_a
    V[:,a]  = sum_i beta_a_i q_a_i (Sigma + Lambda_a)^-1 nu_i
    Q_ab_ij = k_a(x_i, mu) k_b(x_j, mu) |R|^-1/2 exp(z_ij . R^-1 Sigma z_ij / 2)
              with R = Sigma (Lambda_a^-1 + Lambda_b^-1) + I,
              z_ij = Lambda_a^-1 nu_i + Lambda_b^-1 nu_j
    cov_ab  = beta_a . Q_ab . beta_b - mean_a mean_b
    cov_aa += sf2_a - tr(K_a^-1 Q_aa) + sw2_a

R^-1 Sigma is evaluated in the symmetric similarity form
W^-1/2 (I - G^-1) W^-1/2 with G = W^1/2 Sigma W^1/2 + I and
W = Lambda_a^-1 + Lambda_b^-1, which is PD for any PSD Sigma.
"""

import numpy as np

from .linalg import chol, chol_inv, chol_solve, logdet_from_chol

NAME = "numpy"


def mm_core(nu, inv_ell2, log_sf2, sw2, beta, iK, Sigma):
    """Moment-matched prediction core.

    nu       (n, D)   training inputs minus the input mean
    inv_ell2 (E, D)   inverse squared lengthscales per output dim
    log_sf2  (E,)     log signal variances
    sw2      (E,)     noise variances
    beta     (E, n)   K^-1 y per output dim
    iK       (E, n, n) kernel matrix inverses
    Sigma    (D, D)   input covariance (PSD, possibly singular)

    Returns (mean (E,), cov (E, E), V (D, E)).
    """
    nu = np.ascontiguousarray(nu, dtype=float)
    n, D = nu.shape
    E = beta.shape[0]
    eyeD = np.eye(D)

    mean = np.zeros(E)
    V = np.zeros((D, E))
    cov = np.zeros((E, E))
    q = np.zeros((E, n))
    logk = np.zeros((E, n))
    scaled = []                       # nu Lambda_a^-1 per output dim

    for a in range(E):
        ell2 = 1.0 / inv_ell2[a]
        La = chol(Sigma + np.diag(ell2), "input covariance plus lengthscales")
        # log |Sigma Lambda^-1 + I| = log |Sigma + Lambda| - log |Lambda|
        logdet_ratio = logdet_from_chol(La) - float(np.sum(np.log(ell2)))
        t = chol_solve(La, nu.T).T    # rows (Sigma + Lambda_a)^-1 nu_i
        lq = log_sf2[a] - 0.5 * logdet_ratio - 0.5 * np.einsum("nd,nd->n", nu, t)
        q[a] = np.exp(lq)
        mean[a] = q[a] @ beta[a]
        V[:, a] = (beta[a] * q[a]) @ t
        logk[a] = log_sf2[a] - 0.5 * np.einsum("nd,nd->n", nu, nu * inv_ell2[a])
        scaled.append(nu * inv_ell2[a])

    for a in range(E):
        for b in range(a, E):
            w = inv_ell2[a] + inv_ell2[b]
            rw = np.sqrt(w)
            G = rw[:, None] * Sigma * rw[None, :] + eyeD
            LG = chol(G, "moment-matching pair matrix")
            logdet_r = logdet_from_chol(LG)
            M = 0.5 * ((eyeD - chol_inv(LG)) / rw[:, None]) / rw[None, :]
            ii, ij = scaled[a], scaled[b]
            ai = np.einsum("nd,de,ne->n", ii, M, ii)
            bj = np.einsum("nd,de,ne->n", ij, M, ij)
            expo = (logk[a][:, None] + logk[b][None, :] + ai[:, None]
                    + bj[None, :] + 2.0 * (ii @ M @ ij.T) - 0.5 * logdet_r)
            Qm = np.exp(expo)
            s_ab = float(beta[a] @ Qm @ beta[b])
            cov[a, b] = cov[b, a] = s_ab
            if a == b:
                cov[a, a] += (np.exp(log_sf2[a])
                              - float(np.sum(iK[a] * Qm)) + sw2[a])
    cov -= np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T), V
