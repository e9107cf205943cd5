"""Monte Carlo harness: trials, sweeps, aggregation, CSV serialization."""

import numpy as np
import pytest

from mmprecode.harness import (CellSummary, SweepSpec, TrialRecord,
                               aggregate_records, build_user_covariances,
                               convergence_cdf, power_allocation, run_allocation,
                               run_sweep, run_trial, write_aggregates_csv,
                               write_allocation_csv, write_cdf_csv,
                               write_sweep_csv)
from mmprecode.model import (CovarianceModel, SystemConfig, build_pilot_matrix,
                             db_to_linear)


def _small_spec(num_trials=3, solvers=("zf", "mm_lb"), **kwargs):
    config = SystemConfig(num_antennas=4, num_users=2, num_pilots=2,
                          power_dl=10.0, rng_seed=5)
    defaults = dict(config=config, power_grid_db=(0.0, 10.0),
                    num_trials=num_trials, solvers=solvers,
                    covariance=CovarianceModel(kind="exponential", rho=0.5))
    defaults.update(kwargs)
    return SweepSpec(**defaults)


def _record_key(r):
    return (r.solver, r.p_dl_db, r.t_dl, r.trial, r.sum_rate_lb, r.genie_rate,
            r.iterations, r.status)


class TestSweepSpec:
    def test_rejects_unknown_solver(self):
        with pytest.raises(ValueError, match="unknown solver"):
            _small_spec(solvers=("zf", "dirty_paper"))

    def test_rejects_bad_pilot_count(self):
        with pytest.raises(ValueError, match="pilot count"):
            _small_spec(pilot_counts=(2, 5))

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError):
            _small_spec(power_grid_db=())
        with pytest.raises(ValueError):
            _small_spec(num_trials=0)


class TestUserCovariances:
    def test_deterministic_and_rotation_preserves_spectrum(self):
        spec = _small_spec()
        covs_a = build_user_covariances(spec)
        covs_b = build_user_covariances(spec)
        base = np.linalg.eigvalsh(
            np.array([[1.0, 0.5, 0.25, 0.125],
                      [0.5, 1.0, 0.5, 0.25],
                      [0.25, 0.5, 1.0, 0.5],
                      [0.125, 0.25, 0.5, 1.0]]))
        assert len(covs_a) == 2
        for ca, cb in zip(covs_a, covs_b):
            np.testing.assert_array_equal(ca, cb)
            np.testing.assert_allclose(np.linalg.eigvalsh(ca), base, atol=1e-12)
        # rotations make the users distinct
        assert np.linalg.norm(covs_a[0] - covs_a[1]) > 1e-3

    def test_without_rotation_all_users_share_base(self):
        spec = _small_spec(per_user_rotation=False)
        covs = build_user_covariances(spec)
        np.testing.assert_array_equal(covs[0], covs[1])
        assert covs[0][0, 1] == pytest.approx(0.5, rel=1e-15)


class TestRunTrial:
    @pytest.fixture()
    def setup(self):
        spec = _small_spec()
        covs = build_user_covariances(spec)
        pilot = build_pilot_matrix(4, 2)
        return spec.config, covs, pilot

    def test_deterministic_except_wall_time(self, setup):
        config, covs, pilot = setup
        rec_a = run_trial(config, covs, pilot, ("zf", "mm_lb"), 0)
        rec_b = run_trial(config, covs, pilot, ("zf", "mm_lb"), 0)
        assert [_record_key(r) for r in rec_a] == [_record_key(r) for r in rec_b]

    def test_solver_subset_does_not_shift_randomness(self, setup):
        """All randomness is consumed before the solvers run, so dropping a
        solver from the list leaves the remaining records untouched."""
        config, covs, pilot = setup
        both = run_trial(config, covs, pilot, ("zf", "mm_lb"), 1)
        only = run_trial(config, covs, pilot, ("mm_lb",), 1)
        mm_both = [r for r in both if r.solver == "mm_lb"][0]
        assert _record_key(mm_both) == _record_key(only[0])

    def test_trials_differ(self, setup):
        config, covs, pilot = setup
        rec_0 = run_trial(config, covs, pilot, ("zf",), 0)
        rec_1 = run_trial(config, covs, pilot, ("zf",), 1)
        assert rec_0[0].sum_rate_lb != rec_1[0].sum_rate_lb

    def test_mm_improves_on_zero_forcing(self, setup):
        """mm_lb starts from the zero-forcing precoder and ascends, so its
        robust bound can never fall below the zf record of the same trial."""
        config, covs, pilot = setup
        for trial in range(5):
            recs = run_trial(config, covs, pilot, ("zf", "mm_lb"), trial)
            by_solver = {r.solver: r for r in recs}
            assert by_solver["mm_lb"].sum_rate_lb >= \
                by_solver["zf"].sum_rate_lb - 1e-9

    def test_returned_precoders(self, setup):
        config, covs, pilot = setup
        recs, precoders = run_trial(config, covs, pilot, ("zf", "mm_lb"), 0,
                                    return_precoders=True)
        assert set(precoders) == {"zf", "mm_lb"}
        for p in precoders.values():
            assert p.shape == (4, 2)
            assert np.linalg.norm(p) ** 2 <= config.power_dl * (1 + 1e-9)
        assert all(r.status == "ok" for r in recs)

    def test_explicit_power_label(self, setup):
        config, covs, pilot = setup
        recs = run_trial(config, covs, pilot, ("zf",), 0, p_dl_db=17.5)
        assert recs[0].p_dl_db == 17.5
        # default label is derived from the linear power
        recs = run_trial(config, covs, pilot, ("zf",), 0)
        assert recs[0].p_dl_db == pytest.approx(10.0, abs=1e-12)


class TestRunSweep:
    def test_grid_shape_and_aggregates(self):
        spec = _small_spec(pilot_counts=(2, 4))
        result = run_sweep(spec)
        # 2 solvers x 2 powers x 2 pilot counts x 3 trials
        assert len(result.records) == 2 * 2 * 2 * 3
        assert len(result.aggregates) == 2 * 2 * 2
        cell = [r for r in result.records
                if r.solver == "mm_lb" and r.p_dl_db == 10.0 and r.t_dl == 2]
        agg = [c for c in result.aggregates
               if c.solver == "mm_lb" and c.p_dl_db == 10.0 and c.t_dl == 2][0]
        assert agg.num_trials == 3
        assert agg.num_failed == 0
        assert agg.mean_sum_rate_lb == pytest.approx(
            np.mean([r.sum_rate_lb for r in cell]), rel=1e-12)
        assert agg.median_iterations == pytest.approx(
            np.median([r.iterations for r in cell]), rel=1e-12)

    def test_records_sorted(self):
        spec = _small_spec()
        result = run_sweep(spec)
        keys = [(r.solver, r.t_dl, r.p_dl_db, r.trial) for r in result.records]
        assert keys == sorted(keys)

    def test_parallel_matches_serial(self):
        spec = _small_spec(num_trials=2)
        serial = run_sweep(spec, threads=1)
        parallel = run_sweep(spec, threads=2)
        assert [_record_key(r) for r in serial.records] == \
            [_record_key(r) for r in parallel.records]

    def test_rejects_negative_threads(self):
        with pytest.raises(ValueError):
            run_sweep(_small_spec(num_trials=1), threads=-1)


class TestAggregation:
    def test_failed_rows_excluded_from_means(self):
        records = [
            TrialRecord("zf", 0.0, 2, 0, 4.0, 5.0, 0, 0.1, "ok"),
            TrialRecord("zf", 0.0, 2, 1, 8.0, 9.0, 0, 0.3, "ok"),
            TrialRecord("zf", 0.0, 2, 2, float("nan"), float("nan"), 0,
                        float("nan"), "failed"),
        ]
        summary = aggregate_records(records)
        assert len(summary) == 1
        cell = summary[0]
        assert cell.num_trials == 3
        assert cell.num_failed == 1
        assert cell.mean_sum_rate_lb == pytest.approx(6.0, rel=1e-15)
        assert cell.mean_genie_rate == pytest.approx(7.0, rel=1e-15)
        assert cell.mean_wall_time_s == pytest.approx(0.2, rel=1e-12)

    def test_all_failed_cell_is_nan(self):
        records = [TrialRecord("zf", 0.0, 2, 0, float("nan"), float("nan"), 0,
                               float("nan"), "failed")]
        cell = aggregate_records(records)[0]
        assert np.isnan(cell.mean_sum_rate_lb)
        assert cell.num_failed == 1

    def test_convergence_cdf(self):
        records = [
            TrialRecord("mm_lb", 30.0, 2, t, 1.0, 1.0, it, 0.0, "ok")
            for t, it in enumerate([3, 1, 2])
        ]
        records.append(TrialRecord("mm_lb", 30.0, 2, 3, float("nan"),
                                   float("nan"), 0, float("nan"), "failed"))
        cdf = convergence_cdf(records)
        values, fractions = cdf["mm_lb"]
        np.testing.assert_array_equal(values, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(fractions, [1 / 3, 2 / 3, 1.0], rtol=1e-15)

    def test_convergence_cdf_other_field(self):
        records = [TrialRecord("zf", 0.0, 2, 0, 1.0, 1.0, 0, 0.5, "ok"),
                   TrialRecord("zf", 0.0, 2, 1, 1.0, 1.0, 0, 0.25, "ok")]
        values, fractions = convergence_cdf(records, "wall_time_s")["zf"]
        np.testing.assert_array_equal(values, [0.25, 0.5])
        np.testing.assert_allclose(fractions, [0.5, 1.0], rtol=1e-15)


class TestPowerAllocation:
    def test_fractions_and_activity(self):
        p = np.array([[2.0, 0.1, 0.0],
                      [0.0, 0.1, 0.0]], dtype=complex)
        power = 8.0
        report = power_allocation(p, power, threshold=0.01)
        np.testing.assert_allclose(report.fractions, [0.5, 0.0025, 0.0],
                                   atol=1e-15)
        np.testing.assert_array_equal(report.active, [True, False, False])
        assert report.num_active == 1

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            power_allocation(np.eye(2, dtype=complex), 1.0, threshold=1.0)

    def test_run_allocation_rows(self):
        spec = _small_spec(num_trials=2)
        rows, mean_active = run_allocation(spec, 10.0, threshold=0.01)
        # 2 solvers x 2 trials x 2 users
        assert len(rows) == 8
        keys = [(r.solver, r.trial, r.user) for r in rows]
        assert keys == sorted(keys)
        for solver in ("zf", "mm_lb"):
            per_trial = {}
            for r in rows:
                if r.solver == solver and r.active:
                    per_trial[r.trial] = per_trial.get(r.trial, 0) + 1
            expected = np.mean([per_trial.get(t, 0) for t in range(2)])
            assert mean_active[solver] == pytest.approx(expected, rel=1e-12)
        # every trial's fractions sum to at most one (full budget or less)
        for solver in ("zf", "mm_lb"):
            for t in range(2):
                total = sum(r.power_fraction for r in rows
                            if r.solver == solver and r.trial == t)
                assert total <= 1.0 + 1e-9


class TestCsvWriters:
    def test_sweep_round_trip(self, tmp_path):
        spec = _small_spec(num_trials=2)
        result = run_sweep(spec)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(result.records, path)
        lines = path.read_text(encoding="ascii").splitlines()
        assert lines[0] == ("solver,p_dl_db,t_dl,trial,sum_rate_lb,genie_rate,"
                            "iterations,wall_time_s,status")
        assert len(lines) == 1 + len(result.records)
        first = lines[1].split(",")
        assert first[0] == result.records[0].solver
        # 17 significant digits reproduce the float exactly
        assert float(first[4]) == result.records[0].sum_rate_lb

    def test_aggregates_csv(self, tmp_path):
        records = [TrialRecord("zf", 0.0, 2, 0, 4.0, 5.0, 0, 0.0, "ok")]
        path = tmp_path / "agg.csv"
        write_aggregates_csv(aggregate_records(records), path)
        lines = path.read_text(encoding="ascii").splitlines()
        assert lines[0].startswith("solver,p_dl_db,t_dl,num_trials,num_failed")
        assert lines[1].startswith("zf,0,2,1,0,4,")

    def test_cdf_csv(self, tmp_path):
        cdfs = {"mm_lb": (np.array([1.0, 2.0]), np.array([0.5, 1.0]))}
        path = tmp_path / "cdf.csv"
        write_cdf_csv(cdfs, path)
        lines = path.read_text(encoding="ascii").splitlines()
        assert lines == ["solver,value,cumulative_fraction",
                         "mm_lb,1,0.5", "mm_lb,2,1"]

    def test_allocation_csv(self, tmp_path):
        spec = _small_spec(num_trials=1)
        rows, _ = run_allocation(spec, 10.0)
        path = tmp_path / "alloc.csv"
        write_allocation_csv(rows, path)
        lines = path.read_text(encoding="ascii").splitlines()
        assert lines[0] == "solver,trial,user,power_fraction,active"
        assert len(lines) == 1 + len(rows)
        assert lines[1].split(",")[4] in {"0", "1"}

    def test_float_format_is_exact(self):
        from mmprecode.harness import _fmt
        rng = np.random.default_rng(90)
        for x in rng.standard_normal(100):
            assert float(_fmt(x)) == x
        assert _fmt(float("nan")) == "nan"
