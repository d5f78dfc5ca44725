import csv
from dataclasses import replace

import numpy as np
import pytest

from emergency_response.config import load_preset
from emergency_response.exceptions import DegenerateDataError
from emergency_response.harness import (
    AGGREGATE_COLUMNS,
    RUN_COLUMNS,
    SUMMARY_COLUMNS,
    SweepConfig,
    aggregate_rows,
    format_report,
    nominal_errors,
    read_summary,
    run_calibration,
    run_episode,
    run_sweep,
)
from emergency_response.sim import ErrorModelParams, make_rngs


@pytest.fixture(scope="module")
def straight():
    return load_preset("straight")


@pytest.fixture(scope="module")
def ule(straight):
    return run_calibration(straight)[0]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestCalibration:
    def test_noise_free_empirical(self, straight):
        spec = replace(straight, error_model=replace(straight.error_model, noise_sd=0.0))
        ule, report, errors = run_calibration(spec, 1000)
        assert np.all(errors == spec.error_model.e_base)
        assert ule == spec.error_model.e_base
        assert "method = empirical" in report

    def test_noise_free_burr_is_degenerate(self, straight):
        spec = replace(straight, error_model=replace(straight.error_model, noise_sd=0.0))
        with pytest.raises(DegenerateDataError):
            run_calibration(spec, 1000, method="burr")

    def test_default_noise(self, straight):
        ule, _, errors = run_calibration(straight, 2000)
        em = straight.error_model
        # oracle: nearest-rank order statistic of the returned trace
        assert ule == np.sort(errors)[int(np.ceil(0.995 * errors.size)) - 1]
        assert em.e_base < ule < em.e_base + 4 * em.noise_sd

    def test_trace_is_obstacle_free_nominal(self, straight):
        errors = nominal_errors(straight, 1500)
        assert abs(errors.mean() - 20.0) < 0.1
        assert abs(errors.std() - 0.5) < 0.05

    def test_deterministic(self, straight):
        assert run_calibration(straight)[0] == run_calibration(straight)[0]

    def test_minimum_duration(self, straight):
        with pytest.raises(ValueError):
            run_calibration(straight, 999)

    def test_burr_method(self, straight):
        ule, report, _ = run_calibration(straight, method="burr")
        assert 20.0 < ule < 22.5
        assert "c = " in report and "c = \n" not in report


class TestEpisode:
    @pytest.mark.parametrize("preset", ["straight", "arc_left", "arc_right"])
    def test_noaction_never_succeeds(self, preset):
        spec = load_preset(preset)
        u = run_calibration(spec)[0]
        for seed in range(5):
            rec = run_episode(spec, "noaction", u, run_index=seed)
            assert not rec.success and rec.collided

    def test_bogp_structure(self, straight, ule):
        rec = run_episode(straight, "bogp", ule, run_index=0)
        assert rec.trigger_step is not None and rec.trigger_distance is not None
        resp = [r for r in rec.trace if r["phase"] == "response"]
        collided = [r for r in rec.trace if r["phase"] == "collided"]
        # the response window is always 30 rows; actions stop after a collision
        assert len(resp) + len(collided) >= 30
        steps = [r["step"] for r in rec.trace]
        assert steps == list(range(len(steps)))
        for r in resp:
            assert 0.0 <= r["a1"] <= 1.0 and 0.0 <= r["a2"] <= 1.0

    def test_bogp_full_response_when_no_collision(self, straight, ule):
        for seed in range(10):
            rec = run_episode(straight, "bogp", ule, run_index=seed)
            if not rec.collided:
                assert len([r for r in rec.trace if r["phase"] == "response"]) == 30
                assert len([r for r in rec.trace if r["phase"] == "post"]) == 60
                return
        pytest.fail("no collision-free BoGp run in 10 seeds")

    def test_success_implies_no_collision(self, straight, ule):
        for policy in ("bogp", "random"):
            for seed in range(5):
                rec = run_episode(straight, policy, ule, run_index=seed)
                if rec.success:
                    assert not rec.collided and not rec.off_road

    def test_manual_trigger_shares_prefix(self, straight, ule):
        recs = [run_episode(straight, p, ule, run_index=3, manual_trigger_distance=10.0) for p in ("bogp", "random", "noaction")]
        k = recs[0].trigger_step
        assert all(r.trigger_step == k for r in recs)
        prefix = [r.trace[: k] for r in recs]
        assert prefix[0] == prefix[1] == prefix[2]
        assert recs[0].trigger_distance <= 10.0

    def test_random_policy_uses_policy_stream(self, straight, ule):
        rec = run_episode(straight, "random", ule, run_index=2)
        _, pol = make_rngs(straight.seed, 2)
        resp = [r for r in rec.trace if r["phase"] == "response"]
        draws = pol.uniform(0.0, 1.0, size=(len(resp), 2))
        np.testing.assert_array_equal([[r["a1"], r["a2"]] for r in resp], draws)

    def test_deterministic(self, straight, ule):
        a = run_episode(straight, "bogp", ule, run_index=4)
        b = run_episode(straight, "bogp", ule, run_index=4)
        assert a.trace == b.trace

    def test_unknown_policy(self, straight, ule):
        with pytest.raises(ValueError):
            run_episode(straight, "teleport", ule)


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory, straight):
    out = tmp_path_factory.mktemp("sweep")
    cfg = SweepConfig(scenarios=(straight,), policies=("bogp", "random", "noaction"), reps=4)
    return cfg, run_sweep(cfg, out_dir=out), out


class TestSweep:
    def test_noaction_zero(self, straight):
        cfg = SweepConfig(scenarios=(straight,), policies=("noaction",), reps=5)
        assert run_sweep(cfg).success_rate("straight", "noaction") == 0.0

    def test_files_and_columns(self, small_sweep):
        _, summary, out = small_sweep
        assert (out / "summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
        assert (out / "aggregate.csv").read_text().splitlines()[0] == ",".join(AGGREGATE_COLUMNS)
        run_file = out / "runs" / "straight__bogp__0.csv"
        assert run_file.read_text().splitlines()[0] == ",".join(RUN_COLUMNS)
        assert len(list((out / "runs").glob("*.csv"))) == 12

    def test_summary_matches_runs(self, small_sweep):
        _, _, out = small_sweep
        runs = read_csv(out / "runs.csv")
        for row in read_summary(out / "summary.csv"):
            cell = [r for r in runs if r["scenario"] == row["scenario"] and r["policy"] == row["policy"]]
            assert int(row["reps"]) == len(cell)
            assert int(row["successes"]) == sum(r["success"] == "1" for r in cell)
            assert float(row["success_rate"]) == int(row["successes"]) / int(row["reps"])

    def test_aggregate_recomputable(self, small_sweep):
        cfg, _, out = small_sweep
        runs = read_csv(out / "runs.csv")
        agg = read_csv(out / "aggregate.csv")
        for policy in cfg.policies:
            traces = []
            for r in (r for r in runs if r["policy"] == policy):
                rows = read_csv(out / "runs" / f"straight__{policy}__{r['seed']}.csv")
                k = int(r["trigger_step"])
                traces.append([x for x in rows if int(x["step"]) >= k and x["phase"] in ("response", "collided")])
            for row in (a for a in agg if a["policy"] == policy):
                k = int(row["response_step"])
                errs = np.array([float(t[k]["error"]) for t in traces if len(t) > k])
                rates = np.array([float(t[k]["rate"]) for t in traces if len(t) > k])
                assert int(row["n_runs"]) == errs.size
                assert float(row["error_median"]) == float(np.percentile(errs, 50))
                assert float(row["error_p25"]) == float(np.percentile(errs, 25))
                assert float(row["rate_p75"]) == float(np.percentile(rates, 75))

    def test_rerun_and_parallel_byte_identical(self, small_sweep, tmp_path):
        cfg, _, out = small_sweep
        run_sweep(cfg, out_dir=tmp_path / "serial", jobs=1)
        run_sweep(cfg, out_dir=tmp_path / "parallel", jobs=2)
        for other in (tmp_path / "serial", tmp_path / "parallel"):
            files = sorted(p.relative_to(out) for p in out.rglob("*.csv"))
            assert files == sorted(p.relative_to(other) for p in other.rglob("*.csv"))
            for f in files:
                assert (out / f).read_bytes() == (other / f).read_bytes(), f

    def test_io_error_names_path(self, straight, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        cfg = SweepConfig(scenarios=(straight,), policies=("noaction",), reps=1)
        with pytest.raises(OSError, match="blocker"):
            run_sweep(cfg, out_dir=blocker / "sub")

    def test_reps_validation(self, straight):
        with pytest.raises(ValueError):
            SweepConfig(scenarios=(straight,), reps=0)

    def test_fixed_ule(self, straight):
        cfg = SweepConfig(scenarios=(straight,), policies=("noaction",), reps=1, ule=25.0)
        assert run_sweep(cfg).runs[0].ule == 25.0

    def test_report(self, small_sweep):
        _, summary, _ = small_sweep
        text = format_report(summary.rows)
        lines = text.splitlines()
        assert lines[0].split() == ["scenario", "bogp", "random", "noaction"]
        assert lines[2].startswith("straight")
        assert "0.0%" in lines[2]
        assert lines[-1] == "(12 runs)"


def test_aggregate_skips_untriggered_runs(straight):
    spec = replace(straight, error_model=ErrorModelParams(d_vis=9.0, amplitude=1e-3))
    rec = run_episode(spec, "noaction", 1e6, run_index=0)
    assert rec.trigger_step is None and not rec.success
    assert aggregate_rows([rec], 30) == []
