"""Event-triggered online learning of per-vehicle control-intent sets.

Each surrounding vehicle carries an ellipsoid over accelerations it is likely
to apply.  Observed controls inside the set leave it untouched; a sample on or
outside the boundary triggers an incremental minimum-volume enclosure update,
so the set only ever grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from reachplan.ellipsoid import Ellipsoid, enclose_point, mahalanobis, volume

TRIGGER_TOL = 1e-12
MAX_SAMPLES = 4096


@dataclass(frozen=True)
class AdmissibleBox:
    """Physically admissible acceleration bounds, used as a clamp."""

    ax_min: float = -3.0
    ax_max: float = 3.0
    ay_min: float = -3.0
    ay_max: float = 3.0

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.array([
            min(max(u[0], self.ax_min), self.ax_max),
            min(max(u[1], self.ay_min), self.ay_max),
        ])


@dataclass(frozen=True)
class ControlIntentState:
    hv_id: int
    ellipsoid: Ellipsoid
    samples: tuple = ()
    last_update_step: int = 0
    update_count: int = 0
    volume_history: tuple = ()


def init_intent(hv_id: int, ax_bound: float, ay_bound: float) -> ControlIntentState:
    """Axis-aligned seed set centered at zero with the given semi-axes."""
    if ax_bound <= 0 or ay_bound <= 0:
        raise ValueError("intent bounds must be positive")
    ell = Ellipsoid(np.zeros(2), np.diag([ax_bound**2, ay_bound**2]))
    seeds = (
        (ax_bound, 0.0),
        (-ax_bound, 0.0),
        (0.0, ay_bound),
        (0.0, -ay_bound),
    )
    return ControlIntentState(
        hv_id=hv_id,
        ellipsoid=ell,
        samples=seeds,
        volume_history=((0, volume(ell)),),
    )


def infer_control(z_prev: np.ndarray, z_curr: np.ndarray, dt: float,
                  box: AdmissibleBox | None = None) -> np.ndarray:
    """Finite-difference acceleration from two observed states, clamped.

    States are [px, py, vx, vy]; the clamp keeps sensor spikes from blowing
    up the learned set.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_prev = np.asarray(z_prev, dtype=float)
    z_curr = np.asarray(z_curr, dtype=float)
    u = (z_curr[2:4] - z_prev[2:4]) / dt
    box = box or AdmissibleBox()
    return box.clamp(u)


def observe(state: ControlIntentState, u, step: int) -> tuple[ControlIntentState, bool]:
    """Fold one observed control into the intent state.

    Returns the new state and whether the boundary trigger fired.  Interior
    samples leave the ellipsoid bitwise unchanged.
    """
    u = np.asarray(u, dtype=float).reshape(2)
    if not np.all(np.isfinite(u)):
        raise ValueError("control sample must be finite")
    samples = state.samples
    if len(samples) < MAX_SAMPLES:
        samples = samples + (tuple(u),)
    triggered = mahalanobis(state.ellipsoid, u) >= 1.0 - TRIGGER_TOL
    if not triggered:
        return replace(state, samples=samples), False
    new_ell = enclose_point(state.ellipsoid, u)
    return replace(
        state,
        ellipsoid=new_ell,
        samples=samples,
        last_update_step=step,
        update_count=state.update_count + 1,
        volume_history=state.volume_history + ((step, volume(new_ell)),),
    ), True
