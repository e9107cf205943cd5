"""Robust multi-user MISO downlink precoding under imperfect CSI.

The package covers the full experiment pipeline: synthetic channel
covariances and training (model), LMMSE estimation with error covariances
(estimation), robust rate lower bounds (metrics), minorize-maximize precoder
solvers with a zero-forcing baseline (precoders), a paired Monte Carlo
harness (harness), and a CSV-emitting command line front end (cli).
"""

from .estimation import (ChannelEstimate, error_covariance, estimate_channels,
                         lmmse_estimate, lmmse_filter, stack_estimates)
from .harness import (AllocationRow, CellSummary, PowerAllocationReport,
                      SweepResult, SweepSpec, TrialRecord, aggregate_records,
                      build_user_covariances, convergence_cdf, power_allocation,
                      run_allocation, run_sweep, run_trial)
from .metrics import (RateReport, bound_terms, log_ratio_minorizer,
                      perfect_csi_sum_rate, rate_report, sinr_lower_bound,
                      sum_rate_lower_bound, surrogate_value)
from .model import (CovarianceModel, SystemConfig, build_pilot_matrix,
                    complex_normal, covariance_sqrt, db_to_linear,
                    generate_covariance, haar_unitary, sample_channel,
                    simulate_training)
from .precoders import (SOLVER_IDS, DegenerateChannelError, MMCoefficients,
                        SolverOptions, SolverTrace, StalledSolverError,
                        initial_precoder, matched_filter_precoder, mm_beta,
                        mm_bisec_solve, mm_bisec_update, mm_coefficients,
                        mm_lb_solve, mm_lb_update, mmplus_eta, mmplus_solve,
                        mmplus_update, multiplier_objective, run_solver,
                        zf_precoder)

__version__ = "0.1.0"

__all__ = [
    "AllocationRow", "CellSummary", "ChannelEstimate", "CovarianceModel",
    "DegenerateChannelError", "MMCoefficients", "PowerAllocationReport",
    "RateReport", "SOLVER_IDS", "SolverOptions", "SolverTrace",
    "StalledSolverError", "SweepResult", "SweepSpec", "SystemConfig",
    "TrialRecord", "aggregate_records", "bound_terms", "build_pilot_matrix",
    "build_user_covariances", "complex_normal", "convergence_cdf",
    "covariance_sqrt", "db_to_linear", "error_covariance", "estimate_channels",
    "generate_covariance", "haar_unitary", "initial_precoder", "lmmse_estimate",
    "lmmse_filter", "log_ratio_minorizer", "matched_filter_precoder", "mm_beta",
    "mm_bisec_solve", "mm_bisec_update", "mm_coefficients", "mm_lb_solve",
    "mm_lb_update", "mmplus_eta", "mmplus_solve", "mmplus_update",
    "multiplier_objective", "perfect_csi_sum_rate", "power_allocation",
    "rate_report", "run_allocation", "run_solver", "run_sweep", "run_trial",
    "sample_channel", "simulate_training", "sinr_lower_bound",
    "stack_estimates", "sum_rate_lower_bound", "surrogate_value", "zf_precoder",
]
