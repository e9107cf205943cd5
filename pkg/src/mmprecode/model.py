r"""Downlink system model: dimensions, channel covariances, pilots, training.

A base station with ``num_antennas`` transmit antennas serves ``num_users``
single-antenna receivers. During training the station sends ``num_pilots``
pilot vectors (the columns of an M x T pilot matrix with unit-norm columns)
and each user feeds back its noisy observation

    y_k = Phi^H h_k + n_k,    n_k ~ CN(0, (1/power_dl) I_T),

where h_k ~ CN(0, C_k) is the user's channel. The same power budget is used
for training and data transmission, so the training noise level is tied to
``power_dl``. The interesting regime is num_pilots < num_antennas, where the
channel cannot be estimated completely within one coherence block.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class SystemConfig:
    """Static scenario parameters shared by the simulation components.

    power_dl is the downlink transmit power in linear scale (the noise at the
    receivers is normalized to unit variance). rng_seed is the master seed;
    Monte Carlo trials derive their streams as seed + trial_index.
    """

    num_antennas: int
    num_users: int
    num_pilots: int
    power_dl: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if self.num_users < 1:
            raise ValueError(f"num_users must be >= 1, got {self.num_users}")
        if self.num_pilots < 1:
            raise ValueError(f"num_pilots must be >= 1, got {self.num_pilots}")
        if self.num_pilots > self.num_antennas:
            raise ValueError(
                f"num_pilots ({self.num_pilots}) cannot exceed "
                f"num_antennas ({self.num_antennas})"
            )
        if not self.power_dl > 0:
            raise ValueError(f"power_dl must be positive, got {self.power_dl}")
        if self.rng_seed < 0:
            raise ValueError(f"rng_seed must be nonnegative, got {self.rng_seed}")


def db_to_linear(power_db):
    """Convert a power value in dB to linear scale, 10^(dB/10)."""
    return float(10.0 ** (power_db / 10.0))


@dataclass
class CovarianceModel:
    """Recipe for a channel covariance matrix.

    kind is one of
      "identity"      uncorrelated antennas, C = I
      "exponential"   C[i, j] = rho^|i - j| with 0 <= rho < 1
      "diagonal"      C = diag(diagonal), entries nonnegative
      "explicit"      a user-supplied Hermitian PSD matrix
    """

    kind: str = "identity"
    rho: float = 0.0
    diagonal: np.ndarray | None = None
    matrix: np.ndarray | None = None


# relative tolerance for Hermitian / PSD validation of explicit covariances
_PSD_TOL = 1e-10


def generate_covariance(model, num_antennas):
    """Build the (M, M) complex covariance matrix described by ``model``."""
    m = num_antennas
    if model.kind == "identity":
        return np.eye(m, dtype=complex)
    if model.kind == "exponential":
        if not 0.0 <= model.rho < 1.0:
            raise ValueError(f"exponential correlation needs 0 <= rho < 1, got {model.rho}")
        idx = np.arange(m)
        return (model.rho ** np.abs(idx[:, None] - idx[None, :])).astype(complex)
    if model.kind == "diagonal":
        if model.diagonal is None:
            raise ValueError("diagonal covariance model needs the 'diagonal' field")
        d = np.asarray(model.diagonal, dtype=float)
        if d.shape != (m,):
            raise ValueError(f"diagonal must have shape ({m},), got {d.shape}")
        if np.any(d < 0):
            raise ValueError("diagonal covariance entries must be nonnegative")
        return np.diag(d).astype(complex)
    if model.kind == "explicit":
        if model.matrix is None:
            raise ValueError("explicit covariance model needs the 'matrix' field")
        c = np.asarray(model.matrix, dtype=complex)
        if c.shape != (m, m):
            raise ValueError(f"covariance must have shape ({m}, {m}), got {c.shape}")
        scale = max(np.linalg.norm(c), 1.0)
        if np.linalg.norm(c - c.conj().T) > _PSD_TOL * scale:
            raise ValueError("explicit covariance is not Hermitian")
        w = np.linalg.eigvalsh((c + c.conj().T) / 2)
        if w.min() < -_PSD_TOL * scale:
            raise ValueError(f"explicit covariance is not PSD (min eigenvalue {w.min():.3e})")
        return (c + c.conj().T) / 2
    raise ValueError(f"unknown covariance kind {model.kind!r}")


def covariance_sqrt(covariance):
    """Factor L with L L^H = C, for sampling.

    Cholesky when the matrix is numerically positive definite; otherwise an
    eigendecomposition with negative eigenvalues clipped to zero, which also
    covers rank-deficient covariances.
    """
    c = np.asarray(covariance, dtype=complex)
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh((c + c.conj().T) / 2)
        w = np.clip(w, 0.0, None)
        return v * np.sqrt(w)[None, :]


def complex_normal(rng, shape):
    """Standard circularly-symmetric complex Gaussian entries, unit variance.

    Each entry is (a + jb) / sqrt(2) with a, b ~ N(0, 1). The real parts are
    drawn before the imaginary parts so the stream layout is reproducible.
    """
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def sample_channel(covariance, rng, size=None):
    """Draw h ~ CN(0, C). Returns shape (M,) or (size, M) when size is given."""
    sqrt_factor = covariance_sqrt(covariance)
    m = sqrt_factor.shape[0]
    if size is None:
        return sqrt_factor @ complex_normal(rng, (m,))
    w = complex_normal(rng, (int(size), m))
    return w @ sqrt_factor.T


def haar_unitary(dim, rng):
    """Random unitary matrix from the Haar distribution (QR with phase fix)."""
    g = complex_normal(rng, (dim, dim))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


def build_pilot_matrix(num_antennas, num_pilots, strategy="dft_truncated",
                       mean_covariance=None, columns=None):
    r"""Construct the (M, T) pilot matrix with unit-norm columns.

    strategy:
      "dft_truncated"           first T columns of the unitary M-point DFT
      "covariance_eigenvectors" T dominant eigenvectors of mean_covariance
      "explicit"                validate and pass through ``columns``
    """
    m, t = num_antennas, num_pilots
    if t < 1:
        raise ValueError(f"num_pilots must be >= 1, got {t}")
    if t > m:
        raise ValueError(f"num_pilots ({t}) cannot exceed num_antennas ({m})")
    if strategy == "dft_truncated":
        rows = np.arange(m)[:, None]
        cols = np.arange(t)[None, :]
        return np.exp(-2j * np.pi * rows * cols / m) / np.sqrt(m)
    if strategy == "covariance_eigenvectors":
        if mean_covariance is None:
            raise ValueError("covariance_eigenvectors strategy needs mean_covariance")
        c = np.asarray(mean_covariance, dtype=complex)
        if c.shape != (m, m):
            raise ValueError(f"mean_covariance must have shape ({m}, {m}), got {c.shape}")
        _, v = np.linalg.eigh((c + c.conj().T) / 2)
        # eigh sorts ascending; take the T strongest directions, strongest first
        return v[:, ::-1][:, :t].copy()
    if strategy == "explicit":
        if columns is None:
            raise ValueError("explicit pilot strategy needs the 'columns' argument")
        phi = np.asarray(columns, dtype=complex)
        if phi.shape != (m, t):
            raise ValueError(f"pilot matrix must have shape ({m}, {t}), got {phi.shape}")
        norms = np.linalg.norm(phi, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-8):
            raise ValueError("pilot columns must have unit norm")
        return phi
    raise ValueError(f"unknown pilot strategy {strategy!r}")


def simulate_training(channel, pilot, power_dl, rng):
    """Noisy training observation y = Phi^H h + n with n ~ CN(0, I/power_dl).

    ``channel`` may be a single (M,) vector or a (S, M) batch; the output is
    (T,) or (S, T) accordingly.
    """
    if not power_dl > 0:
        raise ValueError(f"power_dl must be positive, got {power_dl}")
    h = np.asarray(channel, dtype=complex)
    phi = np.asarray(pilot, dtype=complex)
    if h.ndim == 1:
        noise = complex_normal(rng, (phi.shape[1],))
        return phi.conj().T @ h + noise / np.sqrt(power_dl)
    noise = complex_normal(rng, (h.shape[0], phi.shape[1]))
    return h @ phi.conj() + noise / np.sqrt(power_dl)
