"""Shared helpers: random scenario construction through the full pipeline."""

import numpy as np

from mmprecode.estimation import estimate_channels, stack_estimates
from mmprecode.model import (CovarianceModel, build_pilot_matrix,
                             complex_normal, generate_covariance, haar_unitary,
                             sample_channel, simulate_training)


def rotated_covariances(rng, num_antennas, num_users, rho):
    """Shared exponential profile, independently rotated per user."""
    base = generate_covariance(CovarianceModel(kind="exponential", rho=rho),
                               num_antennas)
    covs = []
    for _ in range(num_users):
        u = haar_unitary(num_antennas, rng)
        c = u @ base @ u.conj().T
        covs.append((c + c.conj().T) / 2)
    return covs


def random_instance(rng, num_antennas, num_users, num_pilots, power_dl, rho=None):
    """Channels, training, LMMSE estimates for one random scenario.

    Returns (h_hats, c_errs, h_true) with shapes (M, K), (K, M, M), (M, K).
    """
    if rho is None:
        rho = float(rng.uniform(0.0, 0.95))
    covs = rotated_covariances(rng, num_antennas, num_users, rho)
    pilot = build_pilot_matrix(num_antennas, num_pilots)
    channels = [sample_channel(c, rng) for c in covs]
    obs = [simulate_training(h, pilot, power_dl, rng) for h in channels]
    estimates = estimate_channels(covs, pilot, power_dl, obs)
    h_hats, c_errs = stack_estimates(estimates)
    return h_hats, c_errs, np.stack(channels, axis=1)


def random_feasible_precoder(rng, num_antennas, num_users, power_dl):
    """Uniform random direction scaled to the full power budget."""
    q = complex_normal(rng, (num_antennas, num_users))
    return q * np.sqrt(power_dl) / np.linalg.norm(q)
