"""Closed-loop simulation, metrics, trace files, scenario library."""

import numpy as np
import pytest

from reachplan.planner import PlannerConfig
from reachplan.sim import (
    FOOTPRINT,
    SCENARIOS,
    HvPhase,
    HvScript,
    NoiseParams,
    Scenario,
    TraceRecord,
    _brake_state,
    _hv_step,
    compute_metrics,
    empty_road,
    footprint_clearance,
    highway_cutin,
    measure,
    read_trace_csv,
    run_closed_loop,
    write_trace_csv,
)


class TestScenario:
    def test_json_round_trip(self):
        sc = highway_cutin(headway=4.8, duration=3.0)
        back = Scenario.from_json(sc.to_json())
        assert back == sc

    def test_bad_schema_version_rejected(self):
        text = empty_road().to_json().replace('"schema_version": 1',
                                              '"schema_version": 99')
        with pytest.raises(ValueError):
            Scenario.from_json(text)

    def test_library_complete(self):
        for name, factory in SCENARIOS.items():
            sc = factory()
            assert sc.name == name
            assert sc.duration > 0

    def test_phase_ramp(self):
        ph = HvPhase(t_start=0.0, t_end=2.0, ax=0.0, ay=0.0,
                     ax_end=2.0, ay_end=-1.0)
        assert ph.accel(0.0) == (0.0, 0.0)
        assert ph.accel(1.0) == (1.0, -0.5)
        assert ph.accel(2.0) == (2.0, -1.0)

    def test_script_outside_phases_coasts(self):
        s = HvScript(z0=(0, 0, 10, 0), phases=(HvPhase(1.0, 2.0, ax=-3.0),))
        assert s.accel(0.5) == (0.0, 0.0)
        assert s.accel(1.5) == (-3.0, 0.0)
        assert s.accel(2.5) == (0.0, 0.0)


class TestKinematics:
    def test_hv_step_constant_accel(self):
        z = _hv_step(np.array([0.0, 0.0, 10.0, 0.0]), (2.0, 0.0), 0.1)
        assert np.allclose(z, [1.01, 0.0, 10.2, 0.0])

    def test_brake_state_reduces_speed(self):
        ev = np.array([0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0])
        out = _brake_state(ev, 0.08, 5.0)
        assert out[4] == pytest.approx(9.6)
        assert out[0] == pytest.approx(0.5 * (10.0 + 9.6) * 0.08)

    def test_brake_state_floors_at_zero(self):
        ev = np.array([0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0])
        out = _brake_state(ev, 0.08, 5.0)
        assert out[4] == 0.0


class TestMeasurement:
    def test_noise_shrinks_up_close(self):
        n = NoiseParams()
        assert n.scale(100.0) == pytest.approx(1.0)
        assert n.scale(0.9) == pytest.approx(0.1)

    def test_measure_statistics(self):
        rng = np.random.default_rng(0)
        z = np.array([100.0, 0.0, 10.0, 0.0])
        n = NoiseParams()
        meas = np.array([measure(z, (0.0, 0.0), n, rng) for _ in range(4000)])
        err = meas - z
        assert np.abs(err.mean(axis=0)).max() < 0.02
        assert err[:, 0].std() == pytest.approx(n.sigma_px, rel=0.1)
        assert err[:, 2].std() == pytest.approx(n.sigma_vx, rel=0.1)


class TestClearance:
    def test_far_apart_approaches_center_distance(self):
        ev = np.zeros(9)
        hv = np.array([100.0, 0.0, 10.0, 0.0])
        d = footprint_clearance(ev, hv)
        assert d == pytest.approx(100.0 - 2 * FOOTPRINT[0], abs=0.1)

    def test_overlap_is_zero(self):
        ev = np.zeros(9)
        hv = np.array([1.0, 0.0, 10.0, 0.0])
        assert footprint_clearance(ev, hv) == 0.0

    def test_lateral_gap(self):
        ev = np.zeros(9)
        hv = np.array([0.0, 5.0, 10.0, 0.0])
        d = footprint_clearance(ev, hv)
        assert d == pytest.approx(5.0 - 2 * FOOTPRINT[1], abs=0.1)


class TestClosedLoop:
    def test_variant_validation(self):
        with pytest.raises(ValueError):
            run_closed_loop(empty_road(1.0), variant="bogus")

    def test_empty_road_tracks_desired_speed(self):
        trace, metrics = run_closed_loop(empty_road(duration=4.0), seed=0)
        assert not metrics.collided
        assert metrics.n_fallbacks == 0
        assert abs(metrics.v_mean - 20.0) / 20.0 < 0.02
        assert metrics.j_max < 1e-6
        assert metrics.d_min == np.inf

    def test_same_seed_reproduces_trace(self, tmp_path):
        sc = highway_cutin(headway=5.0, duration=2.0)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (pa, pb):
            trace, _ = run_closed_loop(sc, seed=3)
            write_trace_csv(trace, str(p))

        def stripped(p):
            return b"".join(line for line in p.read_bytes().splitlines(True)
                            if not line.startswith(b"#"))

        assert stripped(pa) == stripped(pb)

    def test_trace_and_plan_collection(self):
        sc = highway_cutin(headway=5.0, duration=1.0)
        trace, metrics, plans = run_closed_loop(sc, seed=1, collect_plans=True)
        assert len(plans) == len(trace) == metrics.n_steps
        assert all(len(r.intent_volumes) == 1 for r in trace)
        # intent volumes only ever grow
        vols = [r.intent_volumes[0] for r in trace]
        assert all(b >= a - 1e-12 for a, b in zip(vols, vols[1:]))


class TestTraceFiles:
    def _trace(self):
        sc = highway_cutin(headway=5.0, duration=1.0)
        trace, metrics = run_closed_loop(sc, seed=2)
        return trace, metrics

    def test_round_trip_bytes(self, tmp_path):
        trace, _ = self._trace()
        p1 = tmp_path / "t1.csv"
        p2 = tmp_path / "t2.csv"
        write_trace_csv(trace, str(p1), header_comment="run: demo\nseed: 2")
        back = read_trace_csv(str(p1))
        write_trace_csv(back, str(p2))
        # the re-written file reproduces the first byte-for-byte, including
        # the solve-time metadata recovered from the '#' line
        stripped1 = [line for line in p1.read_bytes().splitlines(True)
                     if not line.startswith(b"# run") and
                     not line.startswith(b"# seed")]
        assert b"".join(stripped1) == p2.read_bytes()

    def test_metrics_round_trip(self, tmp_path):
        trace, metrics = self._trace()
        p = tmp_path / "t.csv"
        write_trace_csv(trace, str(p))
        again = compute_metrics(read_trace_csv(str(p)), PlannerConfig().dt)
        for field in ("d_min", "v_mean", "j_max", "s_travel", "t_solve_mean",
                      "min_plan_speed"):
            assert getattr(again, field) == pytest.approx(
                getattr(metrics, field), abs=1e-5)
        assert again.collided == metrics.collided
        assert again.n_steps == metrics.n_steps
        assert again.n_fallbacks == metrics.n_fallbacks
        assert again.n_triggers == metrics.n_triggers


class TestMetrics:
    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            compute_metrics([], 0.08)

    def test_hand_built_trace(self):
        dt = 0.1
        recs = []
        for k in range(3):
            ev = np.zeros(9)
            ev[0] = k * 1.0
            ev[4] = 10.0
            ev[7] = 2.0
            recs.append(TraceRecord(
                step=k, t=k * dt, ev_state=ev, converged=True, iterations=5,
                solve_time=0.01, fallback="" if k < 2 else "brake",
                d_min=3.0 - k, hv_states=np.zeros((0, 4)), triggers=()))
        m = compute_metrics(recs, dt)
        assert m.d_min == 1.0
        assert not m.collided
        assert m.v_mean == pytest.approx(10.0)
        assert m.j_max == pytest.approx(2.0)
        assert m.s_travel == pytest.approx(2.0)
        assert m.n_fallbacks == 1

    def test_collision_flag(self):
        ev = np.zeros(9)
        rec = TraceRecord(step=0, t=0.0, ev_state=ev, converged=True,
                          iterations=1, solve_time=0.01, fallback="",
                          d_min=0.0, hv_states=np.zeros((0, 4)), triggers=())
        assert compute_metrics([rec], 0.08).collided
