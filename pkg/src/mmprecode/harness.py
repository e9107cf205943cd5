r"""Monte Carlo harness: paired solver comparisons over power and pilot grids.

Each trial draws user channels from fixed per-user covariances, simulates
noisy training, forms LMMSE estimates, and runs every requested solver on
the same estimates, so solver comparisons are paired per trial. Trial t
uses the stream numpy.random.default_rng(rng_seed + t) and all randomness
is consumed before any solver runs, which makes every recorded number
(except measured wall times) deterministic given the SweepSpec.

Recorded per trial and solver: the robust sum-rate lower bound evaluated
with the true error covariances (also for the estimate-as-truth variant,
whose internal objective ignores them), the genie rate of the returned
precoder on the true channels, iteration count, and solver wall time.
Stalled or degenerate trials are recorded with status "failed" and NaN
metrics; the sweep continues.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import estimate_channels, stack_estimates
from .metrics import perfect_csi_sum_rate, rate_report
from .model import (CovarianceModel, SystemConfig, build_pilot_matrix,
                    db_to_linear, generate_covariance, haar_unitary,
                    sample_channel, simulate_training)
from .precoders import (SOLVER_IDS, DegenerateChannelError, SolverOptions,
                        StalledSolverError, run_solver)


@dataclass
class SweepSpec:
    """Everything a sweep needs: scenario, grids, solvers, covariance recipe.

    pilot_counts=None means a single cell at config.num_pilots. The user
    covariances are one base model, optionally rotated per user by a seeded
    Haar unitary to make the users asymmetric; they are generated once per
    sweep and shared by all grid cells.
    """

    config: SystemConfig
    power_grid_db: tuple = (0.0, 10.0, 20.0, 30.0, 40.0)
    pilot_counts: tuple | None = None
    num_trials: int = 50
    solvers: tuple = SOLVER_IDS
    covariance: CovarianceModel = field(default_factory=CovarianceModel)
    per_user_rotation: bool = True
    pilot_strategy: str = "dft_truncated"
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.num_trials < 1:
            raise ValueError("num_trials must be >= 1")
        for s in self.solvers:
            if s not in SOLVER_IDS:
                raise ValueError(f"unknown solver {s!r}, expected one of {SOLVER_IDS}")
        if len(self.power_grid_db) < 1:
            raise ValueError("power_grid_db must not be empty")
        for t in self.pilot_counts or ():
            if not 1 <= t <= self.config.num_antennas:
                raise ValueError(f"pilot count {t} outside [1, {self.config.num_antennas}]")


@dataclass
class TrialRecord:
    """One solver run on one channel realization."""

    solver: str
    p_dl_db: float
    t_dl: int
    trial: int
    sum_rate_lb: float
    genie_rate: float
    iterations: int
    wall_time_s: float
    status: str            # "ok" or "failed"


@dataclass
class CellSummary:
    """Aggregates over the successful trials of one (solver, power, pilots) cell."""

    solver: str
    p_dl_db: float
    t_dl: int
    num_trials: int
    num_failed: int
    mean_sum_rate_lb: float
    mean_genie_rate: float
    mean_iterations: float
    median_iterations: float
    mean_wall_time_s: float


@dataclass
class SweepResult:
    records: list
    aggregates: list


@dataclass
class PowerAllocationReport:
    """Per-user share of the power budget under one precoder."""

    fractions: np.ndarray   # (K,) real, ||p_k||^2 / power_dl
    active: np.ndarray      # (K,) bool, fraction > threshold
    num_active: int
    threshold: float


def build_user_covariances(spec):
    """Per-user covariance matrices for a sweep (deterministic given the seed).

    Rotations come from the dedicated stream default_rng([rng_seed, 1]) so
    they never alias the per-trial streams rng_seed + t.
    """
    m = spec.config.num_antennas
    base = generate_covariance(spec.covariance, m)
    if not spec.per_user_rotation:
        return [base.copy() for _ in range(spec.config.num_users)]
    rng = np.random.default_rng([spec.config.rng_seed, 1])
    covariances = []
    for _ in range(spec.config.num_users):
        u = haar_unitary(m, rng)
        c = u @ base @ u.conj().T
        covariances.append((c + c.conj().T) / 2)
    return covariances


def _cell_pilot(spec, t_dl, covariances):
    mean_cov = None
    if spec.pilot_strategy == "covariance_eigenvectors":
        mean_cov = np.mean(np.stack(covariances), axis=0)
    return build_pilot_matrix(spec.config.num_antennas, t_dl,
                              strategy=spec.pilot_strategy,
                              mean_covariance=mean_cov)


def run_trial(config, covariances, pilot, solvers, trial_index,
              options=None, p_dl_db=None, return_precoders=False):
    """Run all requested solvers on one channel realization.

    The realization (channels, then training noise, in user order) is drawn
    from default_rng(config.rng_seed + trial_index) before any solver runs,
    so records are deterministic given (seed, trial index, solver). Returns
    a list of TrialRecord, plus a {solver: precoder} dict when
    return_precoders is set (failed solvers are absent from the dict).
    """
    options = options or SolverOptions()
    power_dl = config.power_dl
    if p_dl_db is None:
        p_dl_db = 10.0 * np.log10(power_dl)
    rng = np.random.default_rng(config.rng_seed + trial_index)
    channels = [sample_channel(c, rng) for c in covariances]
    observations = [simulate_training(h, pilot, power_dl, rng) for h in channels]
    estimates = estimate_channels(covariances, pilot, power_dl, observations)
    h_hats, c_errs = stack_estimates(estimates)
    h_true = np.stack(channels, axis=1)

    records = []
    precoders = {}
    for solver_id in solvers:
        try:
            precoder, trace = run_solver(solver_id, h_hats, c_errs, power_dl, options)
        except (StalledSolverError, DegenerateChannelError):
            records.append(TrialRecord(solver=solver_id, p_dl_db=float(p_dl_db),
                                       t_dl=pilot.shape[1], trial=trial_index,
                                       sum_rate_lb=float("nan"),
                                       genie_rate=float("nan"),
                                       iterations=0, wall_time_s=float("nan"),
                                       status="failed"))
            continue
        lb = rate_report(h_hats, c_errs, precoder).sum_rate
        genie = perfect_csi_sum_rate(h_true, precoder).sum_rate
        records.append(TrialRecord(solver=solver_id, p_dl_db=float(p_dl_db),
                                   t_dl=pilot.shape[1], trial=trial_index,
                                   sum_rate_lb=lb, genie_rate=genie,
                                   iterations=trace.iterations_used,
                                   wall_time_s=trace.wall_time_seconds,
                                   status="ok"))
        precoders[solver_id] = precoder
    if return_precoders:
        return records, precoders
    return records


def _trial_task(args):
    return run_trial(*args)


def _resolve_threads(threads):
    if threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads


def run_sweep(spec, threads=1):
    """Run the full grid. threads=1 runs inline, 0 uses all cores.

    Trials are independent (own rng streams), so the execution order does
    not affect any recorded value; records are sorted deterministically
    before aggregation.
    """
    threads = _resolve_threads(threads)
    covariances = build_user_covariances(spec)
    pilot_counts = spec.pilot_counts or (spec.config.num_pilots,)

    tasks = []
    for t_dl in pilot_counts:
        pilot = _cell_pilot(spec, t_dl, covariances)
        for p_db in spec.power_grid_db:
            cell_config = replace(spec.config, power_dl=db_to_linear(p_db),
                                  num_pilots=t_dl)
            for trial in range(spec.num_trials):
                tasks.append((cell_config, covariances, pilot, tuple(spec.solvers),
                              trial, spec.options, float(p_db)))

    if threads == 1:
        per_trial = [_trial_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(_trial_task, tasks, chunksize=4))

    records = [rec for batch in per_trial for rec in batch]
    records.sort(key=lambda r: (r.solver, r.t_dl, r.p_dl_db, r.trial))
    return SweepResult(records=records, aggregates=aggregate_records(records))


def aggregate_records(records):
    """Per-cell means over successful trials (NaN when a cell has none)."""
    cells = {}
    for r in records:
        cells.setdefault((r.solver, r.t_dl, r.p_dl_db), []).append(r)
    summaries = []
    for (solver, t_dl, p_db), rows in sorted(cells.items()):
        ok = [r for r in rows if r.status == "ok"]
        if ok:
            mean_lb = float(np.mean([r.sum_rate_lb for r in ok]))
            mean_genie = float(np.mean([r.genie_rate for r in ok]))
            mean_it = float(np.mean([r.iterations for r in ok]))
            med_it = float(np.median([r.iterations for r in ok]))
            mean_wall = float(np.mean([r.wall_time_s for r in ok]))
        else:
            mean_lb = mean_genie = mean_it = med_it = mean_wall = float("nan")
        summaries.append(CellSummary(solver=solver, p_dl_db=p_db, t_dl=t_dl,
                                     num_trials=len(rows),
                                     num_failed=len(rows) - len(ok),
                                     mean_sum_rate_lb=mean_lb,
                                     mean_genie_rate=mean_genie,
                                     mean_iterations=mean_it,
                                     median_iterations=med_it,
                                     mean_wall_time_s=mean_wall))
    return summaries


def convergence_cdf(records, field_name="iterations"):
    """Empirical CDF of one record field per solver, over successful trials.

    Returns {solver: (values, fractions)} with values sorted ascending and
    fractions i/n for i = 1..n.
    """
    per_solver = {}
    for r in records:
        if r.status == "ok":
            per_solver.setdefault(r.solver, []).append(getattr(r, field_name))
    out = {}
    for solver, values in sorted(per_solver.items()):
        v = np.sort(np.asarray(values, dtype=float))
        out[solver] = (v, np.arange(1, v.size + 1) / v.size)
    return out


def power_allocation(precoder, power_dl, threshold=0.01):
    """How the power budget is split across users, with an activity flag."""
    if not 0 <= threshold < 1:
        raise ValueError("threshold must be in [0, 1)")
    p = np.asarray(precoder, dtype=complex)
    fractions = np.sum(np.abs(p) ** 2, axis=0) / power_dl
    active = fractions > threshold
    return PowerAllocationReport(fractions=fractions, active=active,
                                 num_active=int(active.sum()),
                                 threshold=threshold)


@dataclass
class AllocationRow:
    solver: str
    trial: int
    user: int
    power_fraction: float
    active: bool


def run_allocation(spec, power_db, threshold=0.01):
    """Per-user power fractions for every solver over num_trials realizations.

    Runs one grid cell at power_db with config.num_pilots pilots. Returns
    (rows, mean_active) where rows are AllocationRow sorted by
    (solver, trial, user) and mean_active maps solver to its average number
    of active users over successful trials.
    """
    covariances = build_user_covariances(spec)
    t_dl = spec.config.num_pilots
    pilot = _cell_pilot(spec, t_dl, covariances)
    config = replace(spec.config, power_dl=db_to_linear(power_db))

    rows = []
    counts = {s: [] for s in spec.solvers}
    for trial in range(spec.num_trials):
        _, precoders = run_trial(config, covariances, pilot, tuple(spec.solvers),
                                 trial, spec.options, float(power_db),
                                 return_precoders=True)
        for solver_id in spec.solvers:
            if solver_id not in precoders:
                continue
            report = power_allocation(precoders[solver_id], config.power_dl, threshold)
            counts[solver_id].append(report.num_active)
            for user in range(spec.config.num_users):
                rows.append(AllocationRow(solver=solver_id, trial=trial, user=user,
                                          power_fraction=float(report.fractions[user]),
                                          active=bool(report.active[user])))
    rows.sort(key=lambda r: (r.solver, r.trial, r.user))
    mean_active = {s: (float(np.mean(c)) if c else float("nan"))
                   for s, c in counts.items()}
    return rows, mean_active


def _fmt(value):
    """Serialize a float with 17 significant digits (round-trip exact)."""
    return f"{float(value):.17g}"


def write_sweep_csv(records, path):
    lines = ["solver,p_dl_db,t_dl,trial,sum_rate_lb,genie_rate,iterations,wall_time_s,status"]
    for r in records:
        lines.append(f"{r.solver},{_fmt(r.p_dl_db)},{r.t_dl},{r.trial},"
                     f"{_fmt(r.sum_rate_lb)},{_fmt(r.genie_rate)},{r.iterations},"
                     f"{_fmt(r.wall_time_s)},{r.status}")
    _write_lines(path, lines)


def write_aggregates_csv(aggregates, path):
    lines = ["solver,p_dl_db,t_dl,num_trials,num_failed,mean_sum_rate_lb,"
             "mean_genie_rate,mean_iterations,median_iterations,mean_wall_time_s"]
    for c in aggregates:
        lines.append(f"{c.solver},{_fmt(c.p_dl_db)},{c.t_dl},{c.num_trials},"
                     f"{c.num_failed},{_fmt(c.mean_sum_rate_lb)},"
                     f"{_fmt(c.mean_genie_rate)},{_fmt(c.mean_iterations)},"
                     f"{_fmt(c.median_iterations)},{_fmt(c.mean_wall_time_s)}")
    _write_lines(path, lines)


def write_cdf_csv(cdfs, path):
    lines = ["solver,value,cumulative_fraction"]
    for solver in sorted(cdfs):
        values, fractions = cdfs[solver]
        for v, f in zip(values, fractions):
            lines.append(f"{solver},{_fmt(v)},{_fmt(f)}")
    _write_lines(path, lines)


def write_allocation_csv(rows, path):
    lines = ["solver,trial,user,power_fraction,active"]
    for r in rows:
        lines.append(f"{r.solver},{r.trial},{r.user},{_fmt(r.power_fraction)},"
                     f"{1 if r.active else 0}")
    _write_lines(path, lines)


def _write_lines(path, lines):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
