r"""Linear MMSE channel estimation from noisy pilot observations.

With y = Phi^H h + n, h ~ CN(0, C), n ~ CN(0, I/power_dl), the LMMSE estimate
and its error covariance are

    h_hat = C Phi (Phi^H C Phi + I/power_dl)^{-1} y
    C_err = C - C Phi (Phi^H C Phi + I/power_dl)^{-1} Phi^H C.

The estimate and the error h - h_hat are uncorrelated (orthogonality), which
is what makes C_err usable as an interference term in robust rate bounds.
All solves go through a Cholesky factorization of the T x T Gram matrix, no
explicit inverses.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class ChannelEstimate:
    """LMMSE estimate of one user's channel together with its error covariance."""

    h_hat: np.ndarray      # (M,) complex
    error_cov: np.ndarray  # (M, M) complex Hermitian PSD


def lmmse_filter(covariance, pilot, power_dl):
    """Estimator matrix F (M, T) and error covariance C_err (M, M).

    One factorization serves both: h_hat = F y for any observation of the
    same user, and C_err = C - F Phi^H C.
    """
    if not power_dl > 0:
        raise ValueError(f"power_dl must be positive, got {power_dl}")
    c = np.asarray(covariance, dtype=complex)
    phi = np.asarray(pilot, dtype=complex)
    t = phi.shape[1]
    g = c @ phi                                   # (M, T)
    s = phi.conj().T @ g + np.eye(t) / power_dl   # (T, T), Hermitian PD
    s = (s + s.conj().T) / 2
    factor = scipy.linalg.cho_factor(s, lower=True)
    f = scipy.linalg.cho_solve(factor, g.conj().T).conj().T  # C Phi S^{-1}
    c_err = c - f @ g.conj().T
    c_err = (c_err + c_err.conj().T) / 2
    return f, c_err


def lmmse_estimate(covariance, pilot, power_dl, observation):
    """LMMSE channel estimate from the observation y (shape (T,) or (S, T))."""
    f, _ = lmmse_filter(covariance, pilot, power_dl)
    y = np.asarray(observation, dtype=complex)
    if y.ndim == 1:
        return f @ y
    return y @ f.T


def error_covariance(covariance, pilot, power_dl):
    """Posterior error covariance C_err of the LMMSE estimate."""
    _, c_err = lmmse_filter(covariance, pilot, power_dl)
    return c_err


def estimate_channels(covariances, pilot, power_dl, observations):
    """LMMSE-estimate all users from their observations.

    covariances is a length-K sequence of (M, M) matrices and observations a
    length-K sequence of (T,) vectors; returns a list of ChannelEstimate.
    """
    estimates = []
    for c, y in zip(covariances, observations):
        f, c_err = lmmse_filter(c, pilot, power_dl)
        estimates.append(ChannelEstimate(h_hat=f @ np.asarray(y, dtype=complex),
                                         error_cov=c_err))
    return estimates


def stack_estimates(estimates):
    """Stack a list of ChannelEstimate into arrays (M, K) and (K, M, M)."""
    h_hats = np.stack([e.h_hat for e in estimates], axis=1)
    c_errs = np.stack([e.error_cov for e in estimates], axis=0)
    return h_hats, c_errs
