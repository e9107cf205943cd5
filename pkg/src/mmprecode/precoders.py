r"""Linear precoder design under a sum power constraint.

All solvers maximize the robust sum-rate lower bound built from LMMSE
channel estimates and their error covariances (see metrics). The baseline
is zero forcing on the estimates. The iterative solvers share one
minorize-maximize skeleton: linearize each user's rate bound at the current
precoder, collect the linearization into per-user coefficients (a_k, b_k)
and the weighted error covariance Z = sum_k a_k C_err_k, then maximize the
resulting concave surrogate subject to ||P||_F^2 <= power_dl. They differ
in how that constrained quadratic problem is solved:

  mm_lb     joint update of the precoder and a power scaling factor; the
            constraint multiplier has the closed form sum(a) / power_dl, so
            each iteration costs one Hermitian solve
  mm_bisec  scaling factor pinned to one; the multiplier is found by
            bisection on the power of the candidate precoder
  mmplus    an extra isotropic quadratic bound turns the subproblem into a
            projection, one matrix-vector pass per iteration, no solve

mm_lb with treat_estimate_as_truth=True ignores the error covariances and
reduces to a perfect-CSI method running on the estimates (the "instantaneous"
variant used as a benchmark of what robustness buys).

Iterates are kept feasible at every step, which is what makes the recorded
objective sequence nondecreasing (standard minorize-maximize argument: the
surrogate is tangent at the feasible reference and never exceeds the true
objective).
"""

import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .metrics import bound_terms, rate_report


class DegenerateChannelError(RuntimeError):
    """Channel estimate matrix is (numerically) rank deficient where full rank is needed."""


class StalledSolverError(RuntimeError):
    """All linearization coefficients vanished; the iteration cannot move."""


SOLVER_IDS = ("zf", "mm_lb", "mm_lb_inst", "mm_bisec", "mmplus")

# default iteration caps; the projection solver needs far more, cheaper steps
_DEFAULT_MAX_ITER = 500
_DEFAULT_MAX_ITER_MMPLUS = 2000


@dataclass
class SolverOptions:
    """Knobs shared by the iterative solvers.

    max_iterations=None picks the solver default (500; 2000 for mmplus).
    rel_tolerance is the relative sum-rate change that counts as converged.
    treat_estimate_as_truth drops the error covariances inside the solver.
    """

    max_iterations: int | None = None
    rel_tolerance: float = 1e-6
    bisection_tolerance: float = 1e-8
    bisection_max_steps: int = 200
    treat_estimate_as_truth: bool = False

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1 when given")
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be positive")
        if not self.bisection_tolerance > 0:
            raise ValueError("bisection_tolerance must be positive")
        if self.bisection_max_steps < 1:
            raise ValueError("bisection_max_steps must be >= 1")


@dataclass
class MMCoefficients:
    """Linearization of the sum-rate lower bound at a reference precoder.

    a[k] >= 0 weights user k's quadratic (power) penalty, b[k] its linear
    reward, and weighted_error_cov = sum_k a[k] C_err_k collects the error
    covariances. a[k] = 0 exactly when b[k] = 0 (a user whose estimated
    signal is zero contributes nothing and stays silent).
    """

    a: np.ndarray                   # (K,) real, nonnegative
    b: np.ndarray                   # (K,) complex
    weighted_error_cov: np.ndarray  # (M, M) complex Hermitian PSD


@dataclass
class SolverTrace:
    """Per-run diagnostics.

    objective_per_iteration holds the solver's own objective after each
    precoder update (the robust bound, or the estimate-as-truth bound for
    that variant). wall_time_seconds is measured with a monotonic clock and
    covers solver work only; it is not reproducible across runs.
    """

    objective_per_iteration: np.ndarray
    iterations_used: int
    wall_time_seconds: float
    final_beta: float = 1.0
    final_delta: float = 0.0


def _as_matrix(h_hats):
    h = np.asarray(h_hats, dtype=complex)
    if h.ndim != 2:
        raise ValueError(f"h_hats must be (M, K), got shape {h.shape}")
    return h


def zf_precoder(h_hats, power_dl):
    """Zero forcing on the estimates, scaled to the full power budget.

    P = c H (H^H H)^{-1} with c such that ||P||_F^2 = power_dl, so
    H^H P = c I and the estimated interference is exactly zero. Raises
    DegenerateChannelError when the Gram matrix is singular within a
    relative tolerance of 1e-12 (more users than antennas included).
    """
    h = _as_matrix(h_hats)
    m, k = h.shape
    if k > m:
        raise DegenerateChannelError(f"zero forcing needs K <= M, got K={k}, M={m}")
    gram = h.conj().T @ h
    gram = (gram + gram.conj().T) / 2
    w = np.linalg.eigvalsh(gram)
    if w[-1] <= 0 or w[0] <= 1e-12 * w[-1]:
        raise DegenerateChannelError("estimate matrix is numerically rank deficient")
    factor = scipy.linalg.cho_factor(gram, lower=True)
    p0 = scipy.linalg.cho_solve(factor, h.conj().T).conj().T  # H (H^H H)^{-1}
    norm2 = np.linalg.norm(p0) ** 2
    return p0 * np.sqrt(power_dl / norm2)


def matched_filter_precoder(h_hats, power_dl):
    """Columns proportional to the estimates, scaled to the power budget."""
    h = _as_matrix(h_hats)
    norm2 = np.linalg.norm(h) ** 2
    if norm2 == 0:
        raise StalledSolverError("all channel estimates are zero")
    return h * np.sqrt(power_dl / norm2)


def initial_precoder(h_hats, power_dl):
    """Zero forcing when the estimates allow it, matched filter otherwise."""
    try:
        return zf_precoder(h_hats, power_dl)
    except DegenerateChannelError:
        return matched_filter_precoder(h_hats, power_dl)


def mm_coefficients(h_hats, c_errs, reference_precoder):
    """Linearize the sum-rate lower bound at the reference precoder.

    With s_k = h_hat_k^H p_k and z_k the robust interference-plus-noise term
    (both at the reference),

        a_k = |s_k|^2 / (z_k (z_k + |s_k|^2)),    b_k = conj(s_k) / z_k.

    Both are written without dividing by s_k, so a vanishing signal gives
    a_k = b_k = 0 continuously. c_errs may be None to ignore estimation
    error (then weighted_error_cov is zero).
    """
    h = _as_matrix(h_hats)
    s, z = bound_terms(h, c_errs, reference_precoder)
    sig = np.abs(s) ** 2
    a = sig / (z * (z + sig))
    b = s.conj() / z
    m = h.shape[0]
    if c_errs is None:
        zmat = np.zeros((m, m), dtype=complex)
    else:
        zmat = np.einsum("k,kmn->mn", a, np.asarray(c_errs, dtype=complex))
    return MMCoefficients(a=a, b=b, weighted_error_cov=zmat)


def _system_matrix(h_hats, coefficients, shift):
    x = coefficients.weighted_error_cov + (h_hats * coefficients.a) @ h_hats.conj().T
    x = (x + x.conj().T) / 2
    if shift:
        x = x + shift * np.eye(x.shape[0])
    return x


def _solve_hermitian(x, rhs):
    """Cholesky solve with one jittered retry for marginally indefinite input."""
    try:
        factor = scipy.linalg.cho_factor(x, lower=True)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * max(np.trace(x).real, 1.0) / x.shape[0]
        factor = scipy.linalg.cho_factor(x + jitter * np.eye(x.shape[0]), lower=True)
    return scipy.linalg.cho_solve(factor, rhs)


def mm_lb_update(h_hats, coefficients, power_dl):
    """Unscaled maximizer of the surrogate under the closed-form multiplier.

    Solves (Z + H A H^H + (sum(a)/power_dl) I) P = H B^* and returns P.
    The caller rescales by sqrt(mm_beta(P, power_dl)) to land exactly on the
    power budget. Raises StalledSolverError for all-zero coefficients.
    """
    h = _as_matrix(h_hats)
    tr_a = float(coefficients.a.sum())
    if tr_a == 0 and not np.any(coefficients.weighted_error_cov):
        raise StalledSolverError("all linearization coefficients are zero")
    x = _system_matrix(h, coefficients, shift=tr_a / power_dl)
    rhs = h * coefficients.b.conj()
    return _solve_hermitian(x, rhs)


def mm_beta(p_unscaled, power_dl):
    """Power scaling factor: beta with ||sqrt(beta) P||_F^2 = power_dl."""
    norm2 = np.linalg.norm(p_unscaled) ** 2
    if norm2 == 0:
        raise StalledSolverError("unscaled precoder is zero")
    return float(power_dl / norm2)


def multiplier_objective(h_hats, coefficients, power_dl, deltas):
    """Penalized surrogate along the solution curve of the multiplier.

    For each delta > 0, forms the candidate P(delta) =
    (Z + H A H^H + delta I)^{-1} H B^* and evaluates

        2 Re sum_k b_k h_hat_k^H p_k - sum_j p_j^H (Z + H A H^H) p_j
            - (sum(a) / power_dl) ||P||_F^2

    at it. The penalty coefficient is held fixed at the closed-form
    multiplier, so the curve touches the unconstrained maximizer of this
    concave objective exactly at delta = sum(a) / power_dl; scanning a grid
    of deltas is therefore an independent check of that closed form.
    Returns one value per delta.
    """
    h = _as_matrix(h_hats)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if np.any(deltas <= 0):
        raise ValueError("deltas must be positive")
    s = _system_matrix(h, coefficients, shift=0.0)
    d, u = np.linalg.eigh(s)
    d = np.clip(d, 0.0, None)
    rhs_t = u.conj().T @ (h * coefficients.b.conj())   # rhs in the eigenbasis
    g_t = u.conj().T @ h                               # estimates in the eigenbasis
    z_t = u.conj().T @ coefficients.weighted_error_cov @ u
    a = coefficients.a
    b = coefficients.b
    tr_a = float(a.sum())
    values = np.empty(deltas.shape[0])
    for i, delta in enumerate(deltas):
        p_t = rhs_t / (d + delta)[:, None]             # unscaled precoder, eigenbasis
        gains = g_t.conj().T @ p_t                     # gains[k, j] = h_hat_k^H p_j
        lin = 2.0 * np.real(np.sum(b * np.diagonal(gains)))
        quad_users = float(np.sum(a[:, None] * np.abs(gains) ** 2))
        quad_err = float(np.einsum("mj,mn,nj->", p_t.conj(), z_t, p_t).real)
        norm2 = float(np.linalg.norm(p_t) ** 2)
        values[i] = lin - quad_users - quad_err - tr_a * norm2 / power_dl
    return values


def _check_initial(precoder, power_dl):
    p = np.asarray(precoder, dtype=complex)
    if np.linalg.norm(p) ** 2 > power_dl * (1 + 1e-9):
        raise ValueError("initial precoder exceeds the power budget")
    return p


def _converged(objective, previous, rel_tolerance):
    return abs(objective - previous) / max(abs(objective), 1e-12) < rel_tolerance


def mm_lb_solve(h_hats, c_errs, power_dl, options=None, initial=None):
    """Maximize the robust sum-rate lower bound by minorize-maximize.

    Each iteration linearizes at the current feasible precoder, applies the
    closed-form update, and rescales to the power budget, so every iterate
    (including the returned one) satisfies ||P||_F^2 = power_dl and the
    recorded objective sequence is nondecreasing. Returns (precoder, trace).
    """
    options = options or SolverOptions()
    h = _as_matrix(h_hats)
    errs = None if options.treat_estimate_as_truth else c_errs
    max_iter = options.max_iterations or _DEFAULT_MAX_ITER

    start = time.perf_counter()
    p = _check_initial(initial, power_dl) if initial is not None \
        else initial_precoder(h, power_dl)
    previous = rate_report(h, errs, p).sum_rate
    objective = []
    beta = 1.0
    delta = 0.0
    for _ in range(max_iter):
        coeff = mm_coefficients(h, errs, p)
        if not np.any(coeff.a):
            raise StalledSolverError("all linearization coefficients are zero")
        delta = float(coeff.a.sum()) / power_dl
        p_unscaled = mm_lb_update(h, coeff, power_dl)
        beta = mm_beta(p_unscaled, power_dl)
        p = np.sqrt(beta) * p_unscaled
        value = rate_report(h, errs, p).sum_rate
        objective.append(value)
        if _converged(value, previous, options.rel_tolerance):
            break
        previous = value
    wall = time.perf_counter() - start
    trace = SolverTrace(objective_per_iteration=np.asarray(objective),
                        iterations_used=len(objective),
                        wall_time_seconds=wall,
                        final_beta=beta,
                        final_delta=delta)
    return p, trace


def mm_bisec_update(h_hats, coefficients, power_dl,
                    tolerance=1e-8, max_steps=200):
    """Surrogate maximizer with the scaling pinned to one, found by bisection.

    The candidate P(lam) = (Z + H A H^H + lam I)^{-1} H B^* has Frobenius
    power strictly decreasing in lam. If the unconstrained candidate already
    fits the budget, lam = 0. Otherwise lam is bisected until the power is
    within tolerance * power_dl below the budget (never above it). One
    eigendecomposition makes each probe of the bracket cheap. Returns
    (precoder, lam).
    """
    h = _as_matrix(h_hats)
    s = _system_matrix(h, coefficients, shift=0.0)
    d, u = np.linalg.eigh(s)
    d = np.clip(d, 0.0, None)
    rhs_t = u.conj().T @ (h * coefficients.b.conj())
    w2 = np.abs(rhs_t) ** 2

    def power(lam):
        with np.errstate(divide="ignore"):
            return float(np.sum(w2 / (d[:, None] + lam) ** 2))

    def build(lam):
        return u @ (rhs_t / (d + lam)[:, None])

    tol_abs = tolerance * power_dl
    if d[0] > 0 and power(0.0) <= power_dl + tol_abs:
        return build(0.0), 0.0

    a = coefficients.a
    eta1 = float(np.sum(a * np.sum(np.abs(h) ** 2, axis=0)))
    hi = float(a.sum()) / power_dl + eta1
    if hi <= 0:
        hi = 1.0
    for _ in range(200):
        if power(hi) < power_dl:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(max_steps):
        if power_dl - power(hi) <= tol_abs:
            break
        mid = (lo + hi) / 2
        if power(mid) > power_dl:
            lo = mid
        else:
            hi = mid
    return build(hi), hi


def mm_bisec_solve(h_hats, c_errs, power_dl, options=None, initial=None):
    """Same minorize-maximize loop as mm_lb_solve, multiplier by bisection."""
    options = options or SolverOptions()
    h = _as_matrix(h_hats)
    errs = None if options.treat_estimate_as_truth else c_errs
    max_iter = options.max_iterations or _DEFAULT_MAX_ITER

    start = time.perf_counter()
    p = _check_initial(initial, power_dl) if initial is not None \
        else initial_precoder(h, power_dl)
    previous = rate_report(h, errs, p).sum_rate
    objective = []
    lam = 0.0
    for _ in range(max_iter):
        coeff = mm_coefficients(h, errs, p)
        if not np.any(coeff.a):
            raise StalledSolverError("all linearization coefficients are zero")
        p, lam = mm_bisec_update(h, coeff, power_dl,
                                 tolerance=options.bisection_tolerance,
                                 max_steps=options.bisection_max_steps)
        value = rate_report(h, errs, p).sum_rate
        objective.append(value)
        if _converged(value, previous, options.rel_tolerance):
            break
        previous = value
    wall = time.perf_counter() - start
    trace = SolverTrace(objective_per_iteration=np.asarray(objective),
                        iterations_used=len(objective),
                        wall_time_seconds=wall,
                        final_beta=1.0,
                        final_delta=lam)
    return p, trace


def mmplus_eta(h_hats, c_errs, a):
    """Cheap upper bound on the top eigenvalue of H A H^H + sum_k a_k C_err_k.

    eta = sum_k a_k ||h_hat_k||^2 + sum_k a_k ||C_err_k||_F. The first term
    dominates the rank-one sum via its trace, the second bounds each PSD
    summand's top eigenvalue by its Frobenius norm.
    """
    h = _as_matrix(h_hats)
    a = np.asarray(a, dtype=float)
    eta = float(np.sum(a * np.sum(np.abs(h) ** 2, axis=0)))
    if c_errs is not None:
        c = np.asarray(c_errs, dtype=complex)
        eta += float(np.sum(a * np.linalg.norm(c, axis=(1, 2))))
    return eta


def mmplus_update(h_hats, c_errs, coefficients, reference_precoder, power_dl):
    """One projection step of the extra-minorized surrogate.

    Bounding the quadratic form by eta ||p_k||^2 turns the subproblem into
    nearest-point projection of Q = [q_1 .. q_K] onto the power ball, with

        q_k = (b_k^* h_hat_k - (L - eta I) p_ref_k) / eta,
        L = H A H^H + sum_k a_k C_err_k.

    No matrix solve is involved. Raises StalledSolverError when eta = 0.
    """
    h = _as_matrix(h_hats)
    eta = mmplus_eta(h, c_errs, coefficients.a)
    if eta == 0:
        raise StalledSolverError("all linearization coefficients are zero")
    p_ref = np.asarray(reference_precoder, dtype=complex)
    lmat = _system_matrix(h, coefficients, shift=0.0)
    q = (h * coefficients.b.conj() - lmat @ p_ref + eta * p_ref) / eta
    norm2 = np.linalg.norm(q) ** 2
    if norm2 == 0:
        raise StalledSolverError("projection target is zero")
    return q * min(np.sqrt(power_dl / norm2), 1.0)


def mmplus_solve(h_hats, c_errs, power_dl, options=None, initial=None):
    """Minorize-maximize with projection updates (no solves, more iterations)."""
    options = options or SolverOptions()
    h = _as_matrix(h_hats)
    errs = None if options.treat_estimate_as_truth else c_errs
    max_iter = options.max_iterations or _DEFAULT_MAX_ITER_MMPLUS

    start = time.perf_counter()
    p = _check_initial(initial, power_dl) if initial is not None \
        else initial_precoder(h, power_dl)
    previous = rate_report(h, errs, p).sum_rate
    objective = []
    for _ in range(max_iter):
        coeff = mm_coefficients(h, errs, p)
        if not np.any(coeff.a):
            raise StalledSolverError("all linearization coefficients are zero")
        p = mmplus_update(h, errs, coeff, p, power_dl)
        value = rate_report(h, errs, p).sum_rate
        objective.append(value)
        if _converged(value, previous, options.rel_tolerance):
            break
        previous = value
    wall = time.perf_counter() - start
    trace = SolverTrace(objective_per_iteration=np.asarray(objective),
                        iterations_used=len(objective),
                        wall_time_seconds=wall,
                        final_beta=1.0,
                        final_delta=0.0)
    return p, trace


def run_solver(solver_id, h_hats, c_errs, power_dl, options=None):
    """Dispatch by solver identifier. Returns (precoder, trace).

    Identifiers: zf, mm_lb, mm_lb_inst (estimate treated as truth),
    mm_bisec, mmplus.
    """
    options = options or SolverOptions()
    if solver_id == "zf":
        start = time.perf_counter()
        p = zf_precoder(h_hats, power_dl)
        wall = time.perf_counter() - start
        value = rate_report(np.asarray(h_hats, dtype=complex), c_errs, p).sum_rate
        trace = SolverTrace(objective_per_iteration=np.array([value]),
                            iterations_used=0,
                            wall_time_seconds=wall)
        return p, trace
    if solver_id == "mm_lb":
        return mm_lb_solve(h_hats, c_errs, power_dl, options)
    if solver_id == "mm_lb_inst":
        return mm_lb_solve(h_hats, c_errs, power_dl,
                           replace(options, treat_estimate_as_truth=True))
    if solver_id == "mm_bisec":
        return mm_bisec_solve(h_hats, c_errs, power_dl, options)
    if solver_id == "mmplus":
        return mmplus_solve(h_hats, c_errs, power_dl, options)
    raise ValueError(f"unknown solver {solver_id!r}, expected one of {SOLVER_IDS}")
