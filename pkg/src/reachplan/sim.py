"""Closed-loop simulation: scripted human-driven vehicles, noisy measurement,
online intent learning, reachability, and receding-horizon replanning.

Three planner variants share the pipeline and differ only in what the
contingency branch avoids: learned-intent reachable tubes (proposed), the
nominal prediction itself (deterministic_barrier), or tubes grown from the
full admissible control set (worst_case_barrier).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from reachplan.ellipsoid import AxisAlignedEllipse, Ellipsoid
from reachplan.ellipsoid import volume as ellipsoid_volume
from reachplan.intent import (
    AdmissibleBox,
    ControlIntentState,
    infer_control,
    init_intent,
    observe,
)
from reachplan.planner import (
    PlannerConfig,
    PlannerError,
    PlanResult,
    shift_warm_start,
    solve,
)
from reachplan.reach import HvModel, predict_constant_velocity, propagate_frs

SCHEMA_VERSION = 1
VARIANTS = ("proposed", "deterministic_barrier", "worst_case_barrier")

# physical footprint of one vehicle (half-length, half-width), metres
FOOTPRINT = (2.4, 1.0)
_BOUNDARY_PTS = 64


@dataclass(frozen=True)
class HvPhase:
    """Piecewise acceleration command, constant or linearly ramped."""

    t_start: float
    t_end: float
    ax: float = 0.0
    ay: float = 0.0
    ax_end: float | None = None
    ay_end: float | None = None

    def accel(self, t: float) -> tuple[float, float]:
        if self.t_end <= self.t_start:
            return self.ax, self.ay
        f = (t - self.t_start) / (self.t_end - self.t_start)
        f = min(max(f, 0.0), 1.0)
        ax = self.ax if self.ax_end is None else (1 - f) * self.ax + f * self.ax_end
        ay = self.ay if self.ay_end is None else (1 - f) * self.ay + f * self.ay_end
        return ax, ay


@dataclass(frozen=True)
class HvScript:
    z0: tuple          # (px, py, vx, vy)
    phases: tuple = ()

    def accel(self, t: float) -> tuple[float, float]:
        for ph in self.phases:
            if ph.t_start <= t < ph.t_end:
                return ph.accel(t)
        return 0.0, 0.0


@dataclass(frozen=True)
class NoiseParams:
    sigma_px: float = 0.2
    sigma_py: float = 0.2
    sigma_vx: float = 0.1
    sigma_vy: float = 0.1

    def scale(self, dist: float) -> float:
        """Noise shrinks for nearby vehicles (better sensing up close)."""
        return 1.0 / max(10.0 / (dist + 0.1), 1.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    ev_init: tuple
    v_xd: float = 20.0
    p_yd: float = 0.0
    y_min: float = -1e3
    y_max: float = 1e3
    hv_scripts: tuple = ()
    noise: NoiseParams = NoiseParams()
    safety_lx: float = 6.0
    safety_ly: float = 4.0
    intent_ax: float = 0.2
    intent_ay: float = 0.1
    admissible: float = 5.0
    # acceleration bound assumed by the worst-case variant before any
    # observation; matches the prior control-intent set
    worst_accel: float = 3.0
    # finite-difference window (steps) for inferring HV controls; a longer
    # window filters the velocity measurement noise out of the estimate
    intent_window: int = 6

    def to_json(self) -> str:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return json.dumps(d, indent=2)

    @staticmethod
    def from_json(text: str) -> "Scenario":
        d = json.loads(text)
        ver = d.pop("schema_version", None)
        if ver != SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario schema version {ver!r}")
        d["noise"] = NoiseParams(**d["noise"])
        d["hv_scripts"] = tuple(
            HvScript(z0=tuple(s["z0"]),
                     phases=tuple(HvPhase(**p) for p in s["phases"]))
            for s in d["hv_scripts"]
        )
        d["ev_init"] = tuple(d["ev_init"])
        return Scenario(**d)


@dataclass
class TraceRecord:
    step: int
    t: float
    ev_state: np.ndarray
    converged: bool
    iterations: int
    solve_time: float
    fallback: str            # "", "shifted", "brake"
    d_min: float
    hv_states: np.ndarray    # (M, 4) true states
    triggers: tuple
    intent_volumes: tuple = ()   # learned control-intent set area per HV


@dataclass
class MetricsReport:
    collided: bool
    d_min: float
    v_mean: float
    j_max: float
    s_travel: float
    t_solve_mean: float
    n_steps: int
    n_fallbacks: int
    n_triggers: int
    min_plan_speed: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _hv_step(z: np.ndarray, accel, dt: float) -> np.ndarray:
    ax, ay = accel
    px, py, vx, vy = z
    return np.array([
        px + dt * vx + 0.5 * dt * dt * ax,
        py + dt * vy + 0.5 * dt * dt * ay,
        vx + dt * ax,
        vy + dt * ay,
    ])


def measure(z_true: np.ndarray, ev_pos, noise: NoiseParams,
            rng: np.random.Generator) -> np.ndarray:
    dist = float(np.hypot(z_true[0] - ev_pos[0], z_true[1] - ev_pos[1]))
    s = noise.scale(dist)
    sig = np.array([noise.sigma_px, noise.sigma_py, noise.sigma_vx, noise.sigma_vy])
    return z_true + s * sig * rng.standard_normal(4)


def _footprint_boundary(px, py, heading, k=_BOUNDARY_PTS):
    phi = np.linspace(0.0, 2 * np.pi, k, endpoint=False)
    a, b = FOOTPRINT
    x = a * np.cos(phi)
    y = b * np.sin(phi)
    c, s = np.cos(heading), np.sin(heading)
    return np.column_stack([px + c * x - s * y, py + s * x + c * y])


def _inside_footprint(points, px, py, heading):
    c, s = np.cos(heading), np.sin(heading)
    dx = points[:, 0] - px
    dy = points[:, 1] - py
    u = c * dx + s * dy
    w = -s * dx + c * dy
    a, b = FOOTPRINT
    return (u / a) ** 2 + (w / b) ** 2 <= 1.0


def footprint_clearance(ev_state, hv_state) -> float:
    """Boundary-to-boundary distance of the two oriented footprints, 0 when
    they overlap (sampled approximation)."""
    ev_b = _footprint_boundary(ev_state[0], ev_state[1], ev_state[2])
    hv_heading = (np.arctan2(hv_state[3], hv_state[2])
                  if np.hypot(hv_state[2], hv_state[3]) > 1e-6 else 0.0)
    hv_b = _footprint_boundary(hv_state[0], hv_state[1], hv_heading)
    if (_inside_footprint(hv_b, ev_state[0], ev_state[1], ev_state[2]).any()
            or _inside_footprint(ev_b, hv_state[0], hv_state[1], hv_heading).any()):
        return 0.0
    diff = ev_b[:, None, :] - hv_b[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2)).min())


def _brake_state(ev, dt: float, a_brake: float) -> np.ndarray:
    """One maximum-braking step along the current heading."""
    out = ev.copy()
    v = max(ev[4] - a_brake * dt, 0.0)
    step = 0.5 * (ev[4] + v) * dt
    out[0] += step * np.cos(ev[2])
    out[1] += step * np.sin(ev[2])
    out[4] = v
    out[3] = 0.0
    out[5] = -a_brake * np.cos(ev[2])
    out[6] = -a_brake * np.sin(ev[2])
    out[7:] = 0.0
    return out


def run_closed_loop(scenario: Scenario, config: PlannerConfig | None = None,
                    variant: str = "proposed", seed: int = 0,
                    collect_plans: bool = False):
    """Simulate the scenario; returns (trace, metrics), or
    (trace, metrics, plans) when collect_plans is set."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    config = config or PlannerConfig()
    config = replace(config, v_xd=scenario.v_xd, p_yd=scenario.p_yd,
                     y_min=scenario.y_min, y_max=scenario.y_max)
    rng = np.random.default_rng(seed)
    dt = config.dt
    n_steps = int(round(scenario.duration / dt))

    geometry = AxisAlignedEllipse(np.zeros(2),
                                  np.array([scenario.safety_lx, scenario.safety_ly]))
    sigma_omega = np.diag([scenario.noise.sigma_px ** 2, scenario.noise.sigma_py ** 2,
                           scenario.noise.sigma_vx ** 2, scenario.noise.sigma_vy ** 2])
    model = HvModel(dt=dt, sigma_omega=sigma_omega, geometry=geometry)
    box = AdmissibleBox(-scenario.admissible, scenario.admissible,
                        -scenario.admissible, scenario.admissible)
    worst_intent = Ellipsoid(np.zeros(2), 2.0 * scenario.worst_accel ** 2 * np.eye(2))

    ev = np.asarray(scenario.ev_init, dtype=float).copy()
    hv_true = [np.asarray(s.z0, dtype=float).copy() for s in scenario.hv_scripts]
    intents: list[ControlIntentState] = [
        init_intent(i, scenario.intent_ax, scenario.intent_ay)
        for i in range(len(hv_true))
    ]
    meas_hist: list[list] = [[] for _ in hv_true]
    win = max(1, scenario.intent_window)
    committed: PlanResult | None = None
    committed_step = -1
    last_attempt: PlanResult | None = None
    basis = None
    trace: list[TraceRecord] = []
    plans = [] if collect_plans else None

    for step in range(n_steps):
        t = step * dt
        triggers = []
        predictions, tubes = [], []
        for i, z in enumerate(hv_true):
            z_meas = measure(z, ev[:2], scenario.noise, rng)
            hist = meas_hist[i]
            if len(hist) >= win:
                u = infer_control(hist[-win], z_meas, win * dt, box)
                intents[i], trig = observe(intents[i], u, step)
                triggers.append(trig)
            else:
                triggers.append(False)
            hist.append(z_meas)
            if len(hist) > win:
                del hist[0]
            pred = predict_constant_velocity(model, z_meas, config.N, hv_id=i)
            predictions.append(pred)
            if variant == "deterministic_barrier":
                tubes.append(pred)
            elif variant == "worst_case_barrier":
                tubes.append(propagate_frs(model, z_meas, worst_intent, config.N,
                                           hv_id=i, start_step=step))
            else:
                tubes.append(propagate_frs(model, z_meas, intents[i].ellipsoid,
                                           config.N, hv_id=i, start_step=step))

        fallback = ""
        warm = None
        # warm-start from the previous cycle's attempt even when it did not
        # converge: consecutive problems are nearly identical, so the partly
        # grown duals continue their ascent instead of restarting from zero
        if last_attempt is not None and basis is not None:
            warm = shift_warm_start(last_attempt, basis, config.horizon_mode)
        try:
            result = solve(config, ev, predictions, tubes, warm=warm, basis=basis)
            basis = result.trajectory.basis
        except PlannerError:
            result = None
        last_attempt = result

        if result is not None and result.converged:
            ev_next = result.states_nominal[1].copy()
            committed, committed_step = result, step
        elif committed is not None:
            # follow the committed contingency branch: it was planned to stay
            # safe against the avoided set over its whole horizon, which is
            # exactly the situation a failed replan indicates
            idx = min(step - committed_step + 1, config.N)
            ev_next = committed.states_contingency[idx].copy()
            fallback = "shifted"
        else:
            ev_next = _brake_state(ev, dt, config.a_max)
            fallback = "brake"

        d_min = min((footprint_clearance(ev, z) for z in hv_true), default=np.inf)
        trace.append(TraceRecord(
            step=step, t=t, ev_state=ev.copy(),
            converged=bool(result is not None and result.converged),
            iterations=result.iterations if result is not None else 0,
            solve_time=result.solve_time if result is not None else 0.0,
            fallback=fallback, d_min=float(d_min),
            hv_states=np.array(hv_true) if hv_true else np.zeros((0, 4)),
            triggers=tuple(triggers),
            intent_volumes=tuple(ellipsoid_volume(s.ellipsoid) for s in intents),
        ))
        if plans is not None:
            plans.append(result)

        ev = ev_next
        hv_true = [_hv_step(z, scenario.hv_scripts[i].accel(t), dt)
                   for i, z in enumerate(hv_true)]

    metrics = compute_metrics(trace, dt, plans)
    if collect_plans:
        return trace, metrics, plans
    return trace, metrics


def _last_good_step(trace: list) -> int:
    for rec in reversed(trace):
        if rec.converged:
            return rec.step
    return 0


def compute_metrics(trace: list, dt: float, plans=None) -> MetricsReport:
    if not trace:
        raise ValueError("empty trace")
    d_min = min(rec.d_min for rec in trace)
    speeds = np.array([rec.ev_state[4] for rec in trace])
    jerks = np.array([np.hypot(rec.ev_state[7], rec.ev_state[8]) for rec in trace])
    xy = np.array([rec.ev_state[:2] for rec in trace])
    s_travel = float(np.sum(np.hypot(*np.diff(xy, axis=0).T))) if len(xy) > 1 else 0.0
    times = [rec.solve_time for rec in trace if rec.solve_time > 0]
    min_plan_speed = float(speeds.min())
    if plans:
        ok = [p for p in plans if p is not None and p.converged]
        if ok:
            min_plan_speed = float(min(p.states_nominal[:, 4].min() for p in ok))
    return MetricsReport(
        collided=bool(d_min <= 0.0),
        d_min=float(d_min),
        v_mean=float(speeds.mean()),
        j_max=float(jerks.max()),
        s_travel=s_travel,
        t_solve_mean=float(np.mean(times)) if times else 0.0,
        n_steps=len(trace),
        n_fallbacks=sum(1 for rec in trace if rec.fallback),
        n_triggers=sum(sum(rec.triggers) for rec in trace),
        min_plan_speed=min_plan_speed,
    )


def write_trace_csv(trace: list, path: str, header_comment: str = "") -> None:
    """CSV trace; lines starting with '#' carry run metadata.

    Per-step solver wall times live on a '#' metadata line rather than in the
    data rows, so that the data section of two identical-seed runs compares
    byte-for-byte while the timings still round-trip through read_trace_csv.
    """
    n_hv = trace[0].hv_states.shape[0] if trace else 0
    cols = ["step", "t", "px", "py", "theta", "theta_dot", "v", "ax", "ay",
            "jx", "jy", "converged", "iterations", "fallback", "d_min"]
    for i in range(n_hv):
        cols += [f"hv{i}_px", f"hv{i}_py", f"hv{i}_vx", f"hv{i}_vy",
                 f"hv{i}_trig", f"hv{i}_vol"]
    with open(path, "w", newline="") as f:
        if header_comment:
            for line in header_comment.splitlines():
                f.write(f"# {line}\n")
        f.write("# solve_times: "
                + ",".join(f"{rec.solve_time:.6f}" for rec in trace) + "\n")
        w = csv.writer(f)
        w.writerow(cols)
        for rec in trace:
            row = [rec.step, f"{rec.t:.6f}"]
            row += [f"{x:.9f}" for x in rec.ev_state]
            row += [int(rec.converged), rec.iterations,
                    rec.fallback, f"{rec.d_min:.9f}"]
            vols = rec.intent_volumes or (0.0,) * n_hv
            for i in range(n_hv):
                row += [f"{x:.9f}" for x in rec.hv_states[i]]
                row.append(int(rec.triggers[i]))
                row.append(f"{vols[i]:.9f}")
            w.writerow(row)


def read_trace_csv(path: str) -> list:
    """Parse a trace CSV back into records; '#' metadata lines are skipped
    except for the solve-time line, which is reattached to the records."""
    solve_times: list[float] = []
    data_lines = []
    with open(path, newline="") as f:
        for line in f:
            if line.startswith("#"):
                if line.startswith("# solve_times:"):
                    payload = line.split(":", 1)[1].strip()
                    if payload:
                        solve_times = [float(x) for x in payload.split(",")]
                continue
            if line.strip():
                data_lines.append(line)
    rows = list(csv.reader(data_lines))
    header, rows = rows[0], rows[1:]
    n_hv = sum(1 for c in header if c.endswith("_trig"))
    trace = []
    for j, r in enumerate(rows):
        ev = np.array([float(x) for x in r[2:11]])
        hv = np.zeros((n_hv, 4))
        trig, vols = [], []
        for i in range(n_hv):
            base = 15 + 6 * i
            hv[i] = [float(x) for x in r[base:base + 4]]
            trig.append(bool(int(r[base + 4])))
            vols.append(float(r[base + 5]))
        trace.append(TraceRecord(
            step=int(r[0]), t=float(r[1]), ev_state=ev,
            converged=bool(int(r[11])), iterations=int(r[12]),
            solve_time=solve_times[j] if j < len(solve_times) else 0.0,
            fallback=r[13], d_min=float(r[14]),
            hv_states=hv, triggers=tuple(trig), intent_volumes=tuple(vols),
        ))
    return trace


# ---------------------------------------------------------------------------
# scenario library


def empty_road(duration: float = 8.0) -> Scenario:
    return Scenario(name="empty_road", duration=duration,
                    ev_init=(0.0, 0.0, 0.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0),
                    y_min=-6.0, y_max=6.0)


def highway_cutin(headway: float = 5.0, duration: float = 8.0) -> Scenario:
    """HV one lane over, ahead by `headway` seconds at 20 m/s, cutting into
    the ego lane while braking."""
    gap = headway * 20.0 * 0.25
    hv = HvScript(
        z0=(gap, 3.6, 16.0, 0.0),
        phases=(
            HvPhase(t_start=1.0, t_end=2.8, ax=-2.0, ay=-1.2),
            HvPhase(t_start=2.8, t_end=4.2, ax=-0.5, ay=1.2),
            HvPhase(t_start=4.2, t_end=5.4, ax=-3.5, ay=0.3),
        ),
    )
    return Scenario(name="highway_cutin", duration=duration,
                    ev_init=(0.0, 0.0, 0.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0),
                    hv_scripts=(hv,), y_min=-2.0, y_max=6.0)


def intersection(duration: float = 8.0) -> Scenario:
    """Crossing HV approaching the conflict point from the side."""
    hv = HvScript(
        z0=(60.0, -30.0, 0.0, 6.0),
        phases=(HvPhase(t_start=1.0, t_end=3.0, ax=0.0, ay=0.5),),
    )
    return Scenario(name="intersection", duration=duration,
                    ev_init=(0.0, 0.0, 0.0, 0.0, 12.0, 0.0, 0.0, 0.0, 0.0),
                    v_xd=12.0, hv_scripts=(hv,), y_min=-4.0, y_max=4.0)


def adversarial(duration: float = 8.0) -> Scenario:
    """Leading HV alternating hard braking and acceleration."""
    hv = HvScript(
        z0=(35.0, 0.0, 18.0, 0.0),
        phases=(
            HvPhase(t_start=0.5, t_end=1.5, ax=-4.0),
            HvPhase(t_start=1.5, t_end=2.5, ax=3.0),
            HvPhase(t_start=2.5, t_end=4.0, ax=-3.5, ay=0.8),
            HvPhase(t_start=4.0, t_end=5.5, ax=2.0, ay=-0.8),
        ),
    )
    return Scenario(name="adversarial", duration=duration,
                    ev_init=(0.0, 0.0, 0.0, 0.0, 18.0, 0.0, 0.0, 0.0, 0.0),
                    v_xd=18.0, hv_scripts=(hv,), y_min=-2.0, y_max=6.0)


SCENARIOS = {
    "empty_road": empty_road,
    "highway_cutin": highway_cutin,
    "intersection": intersection,
    "adversarial": adversarial,
}
