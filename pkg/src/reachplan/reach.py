"""Forward reachable tubes and constant-velocity occupancy prediction.

A surrounding vehicle is a double integrator; from a noisy measured state and
its learned acceleration-intent ellipsoid we propagate an ellipsoidal state
tube over the horizon and project/inflate each slice into an axis-aligned
positional occupancy that also covers the combined vehicle geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from reachplan.ellipsoid import (
    AxisAlignedEllipse,
    Ellipsoid,
    axis_aligned_outer,
    contains,
    minkowski_outer,
    project_position,
)

EPS_CONTROL = 1e-6  # regularizer lifting the rank-2 control term to PD in 4-D


def integrator_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of the planar double integrator."""
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    B = np.zeros((4, 2))
    B[0, 0] = B[1, 1] = 0.5 * dt * dt
    B[2, 0] = B[3, 1] = dt
    return A, B


@dataclass(frozen=True)
class HvModel:
    dt: float
    sigma_omega: np.ndarray
    geometry: AxisAlignedEllipse

    def __post_init__(self):
        object.__setattr__(self, "sigma_omega", np.asarray(self.sigma_omega, dtype=float))
        if np.linalg.eigvalsh(self.sigma_omega).min() <= 0:
            raise ValueError("sigma_omega must be positive definite")
        A, B = integrator_matrices(self.dt)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)


@dataclass(frozen=True)
class ReachTube:
    hv_id: int
    start_step: int
    state_sets: tuple      # N+1 four-dimensional ellipsoids
    occupancies: tuple     # N+1 axis-aligned positional ellipses


@dataclass(frozen=True)
class NominalPrediction:
    hv_id: int
    centers: np.ndarray    # (N+1, 2) constant-velocity extrapolation
    semi_axes: np.ndarray  # geometry semi-axes shared by every step


def propagate_frs(model: HvModel, z_meas, intent: Ellipsoid, N: int,
                  hv_id: int = 0, start_step: int = 0) -> ReachTube:
    """Propagate the state tube and occupancy sequence over N steps.

    Step 0 is the measurement ellipsoid; each following slice is the outer
    Minkowski sum of the propagated previous slice and the (regularized)
    control-intent image.  Occupancies inflate the positional shadow by the
    combined vehicle geometry.
    """
    if N < 1:
        raise ValueError("horizon must be at least 1")
    z_meas = np.asarray(z_meas, dtype=float).reshape(4)
    A, B = model.A, model.B

    control_term = Ellipsoid(
        B @ intent.center,
        B @ intent.shape @ B.T + EPS_CONTROL * np.eye(4),
    )
    geom = model.geometry.as_ellipsoid()

    state_sets = [Ellipsoid(z_meas, model.sigma_omega)]
    for _ in range(N):
        state_sets.append(minkowski_outer(state_sets[-1].transform(A), control_term))
    occupancies = [
        axis_aligned_outer(minkowski_outer(project_position(s), geom))
        for s in state_sets
    ]
    return ReachTube(hv_id=hv_id, start_step=start_step,
                     state_sets=tuple(state_sets), occupancies=tuple(occupancies))


def one_step_nesting_check(tube_i: ReachTube, tube_i1: ReachTube,
                           tol: float = 1e-6) -> bool:
    """Diagnostic: every slice of the newer tube nests in the older shifted one."""
    if tube_i1.start_step != tube_i.start_step + 1:
        raise ValueError("tubes are not one step apart")
    K = min(len(tube_i1.state_sets), len(tube_i.state_sets) - 1)
    return all(
        contains(tube_i.state_sets[k + 1], tube_i1.state_sets[k], tol)
        for k in range(K)
    )


def predict_constant_velocity(model: HvModel, z_meas, N: int,
                              hv_id: int = 0) -> NominalPrediction:
    """Constant-velocity center extrapolation with the geometry footprint."""
    z_meas = np.asarray(z_meas, dtype=float).reshape(4)
    k = np.arange(N + 1)[:, None]
    centers = z_meas[:2] + k * model.dt * z_meas[2:4]
    return NominalPrediction(hv_id=hv_id, centers=centers,
                             semi_axes=model.geometry.semi_axes.copy())
