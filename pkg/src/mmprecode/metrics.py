r"""Rate metrics: robust SINR lower bounds, perfect-CSI rates, surrogates.

With LMMSE estimates h_hat_k and error covariances C_err_k, the robust SINR
lower bound of user k under precoder P = [p_1 .. p_K] is

    g_k = |h_hat_k^H p_k|^2
          / (sum_{j != k} |h_hat_k^H p_j|^2
             + sum_j p_j^H C_err_k p_j + 1),

and R_k = log2(1 + g_k) is an achievable-rate lower bound. The error
covariance enters the denominator for every precoder column, including the
user's own, because the estimation error is uncorrelated with the estimate
but not with the transmitted signal.

The MM solvers maximize a concave surrogate of the sum of these bounds. The
scalar building block is a tangent minorizer of log2(1 + |x|^2 / z), exposed
here as log_ratio_minorizer so its global validity can be property-tested.
"""

from dataclasses import dataclass

import numpy as np

_LN2 = np.log(2.0)


@dataclass
class RateReport:
    """Per-user SINR and rate values plus their sum, in bits per channel use."""

    sinr: np.ndarray      # (K,) real, nonnegative
    rates: np.ndarray     # (K,) real, log2(1 + sinr)
    sum_rate: float


def bound_terms(h_hats, c_errs, precoder):
    """Signal scalars and robust denominators for all users.

    Returns (s, z) with s[k] = h_hat_k^H p_k and
    z[k] = sum_{j != k} |h_hat_k^H p_j|^2 + sum_j p_j^H C_err_k p_j + 1,
    so the SINR lower bound is |s|^2 / z. z >= 1 always.
    """
    h_hats = np.asarray(h_hats, dtype=complex)
    p = np.asarray(precoder, dtype=complex)
    gains = h_hats.conj().T @ p                      # gains[k, j] = h_hat_k^H p_j
    sig = np.abs(np.diagonal(gains)) ** 2
    interference = (np.abs(gains) ** 2).sum(axis=1) - sig
    if c_errs is None:
        err = 0.0
    else:
        c_errs = np.asarray(c_errs, dtype=complex)
        err = np.einsum("mj,kmn,nj->k", p.conj(), c_errs, p).real
    s = np.diagonal(gains).copy()
    z = interference + err + 1.0
    return s, z


def sinr_lower_bound(estimates, precoder, user_index):
    """Robust SINR lower bound of one user under the given precoder."""
    from .estimation import stack_estimates

    h_hats, c_errs = stack_estimates(estimates)
    s, z = bound_terms(h_hats, c_errs, precoder)
    return float(np.abs(s[user_index]) ** 2 / z[user_index])


def sum_rate_lower_bound(estimates, precoder):
    """RateReport of the robust lower bounds for all users."""
    from .estimation import stack_estimates

    h_hats, c_errs = stack_estimates(estimates)
    return rate_report(h_hats, c_errs, precoder)


def rate_report(h_hats, c_errs, precoder):
    """Same as sum_rate_lower_bound but on stacked arrays (hot path).

    Pass c_errs=None (or zeros) to treat the estimates as exact channels.
    """
    s, z = bound_terms(h_hats, c_errs, precoder)
    sinr = np.abs(s) ** 2 / z
    rates = np.log1p(sinr) / _LN2
    return RateReport(sinr=sinr, rates=rates, sum_rate=float(rates.sum()))


def perfect_csi_sum_rate(channels, precoder):
    """RateReport with exact channel knowledge (no error-covariance term).

    channels is (M, K) with one column per user, or a length-K sequence of
    (M,) vectors. Used as the genie benchmark for precoders designed from
    estimates.
    """
    if isinstance(channels, np.ndarray):
        h = channels.astype(complex, copy=False)
        if h.ndim == 1:
            h = h[:, None]
    else:
        h = np.stack([np.asarray(c, dtype=complex) for c in channels], axis=1)
    return rate_report(h, None, precoder)


def log_ratio_minorizer(x, z, x_ref, z_ref):
    r"""Tangent lower bound of log2(1 + |x|^2 / z) at the pair (x_ref, z_ref).

    With g = |x_ref|^2 / z_ref and a = |x_ref|^2 / (z_ref (z_ref + |x_ref|^2)),

        log2(1 + |x|^2 / z)
            >= log2(1 + g)
               + (1/ln 2) * (-g + 2 Re{(x_ref^* / z_ref) x} - a (z + |x|^2))

    for all complex x and z > 0, with equality at (x, z) = (x_ref, z_ref).
    The correction terms come from expanding log(1 + |x|^2/z) in natural
    units (concavity of the log in the SINR plus the quadratic lower bound
    on the ratio |x|^2 / (z + |x|^2)), then the whole bound is rescaled to
    bits. Broadcasts over array inputs.
    """
    x = np.asarray(x, dtype=complex)
    z = np.asarray(z, dtype=float)
    x_ref = np.asarray(x_ref, dtype=complex)
    z_ref = np.asarray(z_ref, dtype=float)
    if np.any(z <= 0) or np.any(z_ref <= 0):
        raise ValueError("z and z_ref must be positive")
    g = np.abs(x_ref) ** 2 / z_ref
    a = np.abs(x_ref) ** 2 / (z_ref * (z_ref + np.abs(x_ref) ** 2))
    corr = -g + 2.0 * (np.conj(x_ref) / z_ref * x).real - a * (z + np.abs(x) ** 2)
    return np.log1p(g) / _LN2 + corr / _LN2


def surrogate_value(estimates, precoder, reference_precoder):
    """Concave surrogate of the sum-rate lower bound, expanded at a reference.

    Equals sum_rate_lower_bound(estimates, reference_precoder).sum_rate when
    precoder == reference_precoder and never exceeds the true sum-rate lower
    bound elsewhere. This is the objective each MM update maximizes (with
    the power scaling factor at its reference value of one).
    """
    from .estimation import stack_estimates

    h_hats, c_errs = stack_estimates(estimates)
    return surrogate_from_arrays(h_hats, c_errs, precoder, reference_precoder)


def surrogate_from_arrays(h_hats, c_errs, precoder, reference_precoder):
    """surrogate_value on stacked arrays (hot path)."""
    s_ref, z_ref = bound_terms(h_hats, c_errs, reference_precoder)
    s, z = bound_terms(h_hats, c_errs, precoder)
    return float(log_ratio_minorizer(s, z, s_ref, z_ref).sum())
