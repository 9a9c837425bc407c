"""Dual-branch contingency trajectory optimization via consensus ADMM.

A nominal branch avoids predicted obstacle occupancies, a contingency branch
avoids reachable-set occupancies, and both share their first N_s steps.  The
nonconvex kinematic and obstacle constraints split biconvexly: heading,
longitudinal, and lateral control points each solve a small equality-
constrained QP per iteration; the repulsion angles and distance targets have
analytic updates; consensus variables average the branches.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from reachplan._kernels import polar_targets
from reachplan.bezier import (
    BernsteinBasis,
    BranchCurve,
    DualBranchTrajectory,
    build_basis,
    fit_curve,
    line_control_points,
    reconstruct_states,
)
from reachplan.reach import NominalPrediction, ReachTube


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    N: int = 50
    N_s: int = 5
    dt: float = 0.08
    n: int = 10
    alpha: float = 0.8
    p_s: float = 0.5
    # smoothness (second-derivative energy) and tracking weights; the
    # per-branch probability scale folds in multiplicatively
    w_x: float = 50.0
    w_y: float = 50.0
    w_theta: float = 50.0
    w_vd: float = 100.0
    w_yd: float = 100.0
    # quadratic penalty parameters
    rho_x: float = 20.0
    rho_y: float = 20.0
    rho_theta: float = 20.0
    rho_obs_r: float = 20.0
    rho_obs_s: float = 20.0
    rho_cx: float = 20.0
    rho_cy: float = 20.0
    rho_ctheta: float = 20.0
    relax: float = 1.0           # inequality dual relaxation, 1.0 = unrelaxed
    warm_dual_scale: float = 1.0  # damping on duals carried across cycles
    # state bounds
    a_max: float = 5.0
    j_max: float = 15.0
    vx_min: float = 0.3          # forward-speed floor, keeps heading defined
    vx_max: float = 1e3
    vy_max: float = 1e3
    y_min: float = -1e3
    y_max: float = 1e3
    x_min: float = -1e6
    x_max: float = 1e6
    # termination
    eps_pri: float = 0.5
    eps_consensus: float = 0.025  # tighter per-stack threshold (m) for branch agreement
    iter_max: int = 200
    horizon_mode: str = "receding"
    # targets
    v_xd: float = 20.0
    p_yd: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.p_s < 1.0:
            raise ValueError("p_s must lie in (0, 1)")
        if self.eps_pri <= 0:
            raise ValueError("eps_pri must be positive")
        if self.N_s > self.N:
            raise ValueError("N_s must not exceed N")


def _occupancy_arrays(obj, N: int):
    """Per-step obstacle centers and semi-axes, steps 0..N, from a tube or a
    nominal prediction."""
    if isinstance(obj, ReachTube):
        cx = np.array([o.center[0] for o in obj.occupancies[:N + 1]])
        cy = np.array([o.center[1] for o in obj.occupancies[:N + 1]])
        lx = np.array([o.semi_axes[0] for o in obj.occupancies[:N + 1]])
        ly = np.array([o.semi_axes[1] for o in obj.occupancies[:N + 1]])
    else:
        cx = obj.centers[:N + 1, 0].copy()
        cy = obj.centers[:N + 1, 1].copy()
        lx = np.full(N + 1, obj.semi_axes[0])
        ly = np.full(N + 1, obj.semi_axes[1])
    return cx, cy, lx, ly


@dataclass
class ProblemData:
    basis: BernsteinBasis
    n_obstacles: int
    F0: np.ndarray
    E_x0: np.ndarray
    E_y0: np.ndarray
    F_theta: np.ndarray     # stacked initial (2 rows) + terminal rate (1 row)
    E_theta: np.ndarray     # (3, 2)
    G: np.ndarray
    h_x: np.ndarray
    h_y: np.ndarray
    A_cx: np.ndarray        # (n+1, 3*N_s)
    A_cth: np.ndarray       # (n+1, N_s)
    # obstacle data, shape (N, M, 2): column 0 nominal, column 1 contingency
    obs_cx: np.ndarray
    obs_cy: np.ndarray
    obs_lx: np.ndarray
    obs_ly: np.ndarray
    # grid evaluation matrices over steps 1..N
    Bp: np.ndarray
    Bv: np.ndarray
    Ba: np.ndarray          # acceleration rows, the smoothness energy basis


@dataclass
class AdmmWorkspace:
    c_theta: np.ndarray
    c_x: np.ndarray
    c_y: np.ndarray
    Z_x: np.ndarray
    Z_y: np.ndarray
    omega: np.ndarray       # (N, M, 2)
    d: np.ndarray           # (N, M, 2)
    Y_x: np.ndarray
    Y_y: np.ndarray
    Y_theta: np.ndarray
    lam_theta: np.ndarray
    mu_x: np.ndarray        # raw inequality duals in constraint space
    mu_y: np.ndarray
    lam_obs_x: np.ndarray
    lam_obs_y: np.ndarray
    lam_cx: np.ndarray
    lam_cy: np.ndarray
    lam_ctheta: np.ndarray
    v: np.ndarray           # frozen speed profile (N, 2)
    iteration: int = 0
    residual_history: list = field(default_factory=list)
    warm: bool = False
    refit_residual: float = 0.0

    @property
    def lam_x(self):
        return None  # projected form computed on demand in the c-updates


@dataclass
class PlanResult:
    trajectory: DualBranchTrajectory
    converged: bool
    iterations: int
    final_residual: float
    solve_time: float
    states_nominal: np.ndarray
    states_contingency: np.ndarray
    barrier_residuals: np.ndarray   # (N-1, M, 2) step residuals of actual distances
    residual_history: list
    workspace: AdmmWorkspace
    config: PlannerConfig
    refit_residual: float = 0.0


def assemble(config: PlannerConfig, ev_state, predictions, tubes,
             basis: BernsteinBasis | None = None) -> ProblemData:
    """Build all constant matrices of one solve.

    predictions feed the nominal branch, tubes (or predictions, for the
    deterministic variant) the contingency branch.  A supplied prediction
    whose center escapes the matching tube occupancy is rejected.
    """
    ev_state = np.asarray(ev_state, dtype=float).reshape(9)
    if not np.all(np.isfinite(ev_state)):
        raise PlannerError("non-finite ego state")
    N, n = config.N, config.n
    if basis is None:
        basis = build_basis(n, N, N * config.dt)
    B0, B1, B2, B3 = basis.B0, basis.B1, basis.B2, basis.B3

    F0 = np.vstack([B0[:, 0], B1[:, 0], B2[:, 0]])
    F_theta = np.vstack([B0[:, 0], B1[:, 0], B1[:, N]])
    px, py, theta, theta_dot, v, ax, ay = ev_state[:7]
    vx, vy = v * np.cos(theta), v * np.sin(theta)
    E_x0 = np.tile(np.array([[px], [vx], [ax]]), (1, 2))
    E_y0 = np.tile(np.array([[py], [vy], [ay]]), (1, 2))
    E_theta = np.tile(np.array([[theta], [theta_dot], [0.0]]), (1, 2))

    Bp, Bv = B0[:, 1:], B1[:, 1:]
    G = np.vstack([Bp.T, -Bp.T, Bv.T, -Bv.T,
                   B2[:, 1:].T, -B2[:, 1:].T, B3[:, 1:].T, -B3[:, 1:].T])
    ones = np.ones(N)
    # the forward-speed floor keeps the heading well defined: without it a
    # braking branch can cross v = 0, where arctan2 flips and the iteration
    # falls into a limit cycle
    h_x = np.tile(np.concatenate([
        config.x_max * ones, -config.x_min * ones,
        config.vx_max * ones, -config.vx_min * ones,
        config.a_max * ones, config.a_max * ones,
        config.j_max * ones, config.j_max * ones]), (2, 1)).T
    h_y = np.tile(np.concatenate([
        config.y_max * ones, -config.y_min * ones,
        config.vy_max * ones, config.vy_max * ones,
        config.a_max * ones, config.a_max * ones,
        config.j_max * ones, config.j_max * ones]), (2, 1)).T

    Ns = config.N_s
    A_cx = np.hstack([B0[:, 1:Ns + 1], B1[:, 1:Ns + 1], B2[:, 1:Ns + 1]])
    A_cth = B0[:, 1:Ns + 1].copy()

    M = len(predictions)
    if len(tubes) != M:
        raise PlannerError("predictions and tubes must align")
    obs_cx = np.zeros((N, M, 2))
    obs_cy = np.zeros((N, M, 2))
    obs_lx = np.ones((N, M, 2))
    obs_ly = np.ones((N, M, 2))
    for h, (pred, tube) in enumerate(zip(predictions, tubes)):
        if isinstance(tube, ReachTube) and isinstance(pred, NominalPrediction):
            for k, occ in enumerate(tube.occupancies[:N + 1]):
                c = pred.centers[k]
                chk = (((c[0] - occ.center[0]) / occ.semi_axes[0]) ** 2
                       + ((c[1] - occ.center[1]) / occ.semi_axes[1]) ** 2)
                if chk > 1.0 + 1e-9:
                    raise PlannerError(
                        f"prediction for HV {pred.hv_id} leaves its reachable "
                        f"occupancy at step {k}")
        for col, src in ((0, pred), (1, tube)):
            cx, cy, lx, ly = _occupancy_arrays(src, N)
            obs_cx[:, h, col] = cx[1:]
            obs_cy[:, h, col] = cy[1:]
            obs_lx[:, h, col] = lx[1:]
            obs_ly[:, h, col] = ly[1:]

    return ProblemData(basis=basis, n_obstacles=M, F0=F0, E_x0=E_x0, E_y0=E_y0,
                       F_theta=F_theta, E_theta=E_theta, G=G, h_x=h_x, h_y=h_y,
                       A_cx=A_cx, A_cth=A_cth, obs_cx=obs_cx, obs_cy=obs_cy,
                       obs_lx=obs_lx, obs_ly=obs_ly,
                       Bp=Bp, Bv=Bv, Ba=B2[:, 1:])


def _branch_scales(config: PlannerConfig) -> np.ndarray:
    return np.array([2.0 * (1.0 - config.p_s), 2.0 * config.p_s])


class _KktCache:
    """Prefactorized KKT systems; the Hessians are constant within a solve."""

    def __init__(self, pd: ProblemData, config: PlannerConfig):
        n1 = config.n + 1
        M = pd.n_obstacles
        scales = _branch_scales(config)
        BpBp = pd.Bp @ pd.Bp.T
        BvBv = pd.Bv @ pd.Bv.T
        BaBa = pd.Ba @ pd.Ba.T
        GtG = pd.G.T @ pd.G
        AxAx = pd.A_cx @ pd.A_cx.T
        AthAth = pd.A_cth @ pd.A_cth.T
        rho_obs = (config.rho_obs_r, config.rho_obs_s)

        self.theta = []
        self.x = []
        self.y = []
        for b in range(2):
            s = scales[b]
            H_th = (s * config.w_theta * BaBa
                    + 2.0 * config.rho_theta * BpBp
                    + 2.0 * config.rho_ctheta * AthAth)
            self.theta.append(self._factor(H_th, pd.F_theta))
            H_x = (s * config.w_x * BaBa
                   + s * config.w_vd * BvBv
                   + 2.0 * config.rho_theta * BvBv
                   + 2.0 * rho_obs[b] * M * BpBp
                   + 2.0 * config.rho_x * GtG
                   + 2.0 * config.rho_cx * AxAx)
            self.x.append(self._factor(H_x, pd.F0))
            H_y = (s * config.w_y * BaBa
                   + s * config.w_yd * BpBp
                   + 2.0 * config.rho_theta * BvBv
                   + 2.0 * rho_obs[b] * M * BpBp
                   + 2.0 * config.rho_y * GtG
                   + 2.0 * config.rho_cy * AxAx)
            self.y.append(self._factor(H_y, pd.F0))

    @staticmethod
    def _factor(H, F):
        n1 = H.shape[0]
        m = F.shape[0]
        K = np.zeros((n1 + m, n1 + m))
        K[:n1, :n1] = H
        K[:n1, n1:] = F.T
        K[n1:, :n1] = F
        try:
            Kinv = np.linalg.inv(K)
        except np.linalg.LinAlgError as exc:
            raise PlannerError("singular KKT system") from exc
        # primal rows only: c = S g + T e, fastest per-iteration form
        return np.ascontiguousarray(Kinv[:n1, :n1]), np.ascontiguousarray(Kinv[:n1, n1:])

    @staticmethod
    def solve(factor, g, e):
        S, T = factor
        return S @ g + T @ e


def _obstacle_targets(pd: ProblemData, ws: AdmmWorkspace, b: int):
    tx = pd.obs_cx[:, :, b] + pd.obs_lx[:, :, b] * ws.d[:, :, b] * np.cos(ws.omega[:, :, b])
    ty = pd.obs_cy[:, :, b] + pd.obs_ly[:, :, b] * ws.d[:, :, b] * np.sin(ws.omega[:, :, b])
    return tx, ty


def update_theta(ws: AdmmWorkspace, pd: ProblemData, config: PlannerConfig,
                 kkt: _KktCache) -> np.ndarray:
    """Heading control points: tracks the arctan of the current velocity
    direction under the kinematic dual, subject to exact endpoint rows."""
    vx = pd.Bv.T @ ws.c_x
    vy = pd.Bv.T @ ws.c_y
    theta_hat = np.arctan2(vy, vx)
    for b in range(2):
        g = (2.0 * config.rho_theta * pd.Bp @ (theta_hat[:, b] - ws.lam_theta[:, b] / config.rho_theta)
             + 2.0 * config.rho_ctheta * pd.A_cth @ (ws.Y_theta[:, b] - ws.lam_ctheta[:, b] / config.rho_ctheta))
        ws.c_theta[:, b] = _KktCache.solve(kkt.theta[b], g, pd.E_theta[:, b])
    return ws.c_theta


def update_positions(ws: AdmmWorkspace, pd: ProblemData, config: PlannerConfig,
                     kkt: _KktCache) -> tuple[np.ndarray, np.ndarray]:
    """Longitudinal then lateral control points as equality-constrained QPs."""
    scales = _branch_scales(config)
    theta = pd.Bp.T @ ws.c_theta
    rho_obs = (config.rho_obs_r, config.rho_obs_s)
    ones = np.ones(pd.Bp.shape[1])

    for b in range(2):
        s = scales[b]
        tx, _ = _obstacle_targets(pd, ws, b)
        g = (s * config.w_vd * config.v_xd * pd.Bv @ ones
             + 2.0 * config.rho_theta * pd.Bv @ (ws.v[:, b] * np.cos(theta[:, b]) - ws.lam_theta[:, b] / config.rho_theta)
             + 2.0 * rho_obs[b] * pd.Bp @ (tx - ws.lam_obs_x[:, :, b] / rho_obs[b]).sum(axis=1)
             + 2.0 * config.rho_x * pd.G.T @ (pd.h_x[:, b] - ws.Z_x[:, b])
             - pd.G.T @ ws.mu_x[:, b]
             + 2.0 * config.rho_cx * pd.A_cx @ (ws.Y_x[:, b] - ws.lam_cx[:, b] / config.rho_cx))
        ws.c_x[:, b] = _KktCache.solve(kkt.x[b], g, pd.E_x0[:, b])

    for b in range(2):
        s = scales[b]
        _, ty = _obstacle_targets(pd, ws, b)
        g = (s * config.w_yd * config.p_yd * pd.Bp @ ones
             + 2.0 * config.rho_theta * pd.Bv @ (ws.v[:, b] * np.sin(theta[:, b]) - ws.lam_theta[:, b] / config.rho_theta)
             + 2.0 * rho_obs[b] * pd.Bp @ (ty - ws.lam_obs_y[:, :, b] / rho_obs[b]).sum(axis=1)
             + 2.0 * config.rho_y * pd.G.T @ (pd.h_y[:, b] - ws.Z_y[:, b])
             - pd.G.T @ ws.mu_y[:, b]
             + 2.0 * config.rho_cy * pd.A_cx @ (ws.Y_y[:, b] - ws.lam_cy[:, b] / config.rho_cy))
        ws.c_y[:, b] = _KktCache.solve(kkt.y[b], g, pd.E_y0[:, b])
    return ws.c_x, ws.c_y


def update_slack_polar(ws: AdmmWorkspace, pd: ProblemData,
                       config: PlannerConfig) -> None:
    """Exact slack projection plus analytic repulsion-angle/distance updates."""
    ws.Z_x_prev = ws.Z_x
    ws.Z_y_prev = ws.Z_y
    # exact AL minimizer over Z >= 0 includes the scaled-dual shift; without
    # it the inequality duals only ever grow and bias feasible solutions
    ws.Z_x = np.maximum(0.0, pd.h_x - pd.G @ ws.c_x - ws.mu_x / config.rho_x)
    ws.Z_y = np.maximum(0.0, pd.h_y - pd.G @ ws.c_y - ws.mu_y / config.rho_y)
    if pd.n_obstacles:
        px = pd.Bp.T @ ws.c_x
        py = pd.Bp.T @ ws.c_y
        for b in range(2):
            dx = px[:, b][:, None] - pd.obs_cx[:, :, b]
            dy = py[:, b][:, None] - pd.obs_cy[:, :, b]
            om, d = polar_targets(np.ascontiguousarray(dx), np.ascontiguousarray(dy),
                                  np.ascontiguousarray(pd.obs_lx[:, :, b]),
                                  np.ascontiguousarray(pd.obs_ly[:, :, b]),
                                  config.alpha,
                                  np.ascontiguousarray(ws.d[:, :, b]))
            ws.omega[:, :, b] = om
            ws.d[:, :, b] = d


def update_consensus_duals(ws: AdmmWorkspace, pd: ProblemData,
                           config: PlannerConfig) -> dict:
    """Average the branches into the consensus targets, step all duals,
    refresh the speed profile, and report the residual stacks."""
    for A, c, Y in ((pd.A_cx, ws.c_x, ws.Y_x), (pd.A_cx, ws.c_y, ws.Y_y),
                    (pd.A_cth, ws.c_theta, ws.Y_theta)):
        mean = 0.5 * A.T @ (c[:, 0] + c[:, 1])
        Y[:, 0] = mean
        Y[:, 1] = mean

    vx = pd.Bv.T @ ws.c_x
    vy = pd.Bv.T @ ws.c_y
    theta_hat = np.arctan2(vy, vx)
    theta = pd.Bp.T @ ws.c_theta
    ws.lam_theta += config.rho_theta * (theta - theta_hat)

    a = config.relax
    for rho, G, c, h, Z, Zp, mu in (
            (config.rho_x, pd.G, ws.c_x, pd.h_x, ws.Z_x, ws.Z_x_prev, ws.mu_x),
            (config.rho_y, pd.G, ws.c_y, pd.h_y, ws.Z_y, ws.Z_y_prev, ws.mu_y)):
        resid = G @ c - h + Z
        mu += rho * ((1.0 - a) * (Z - Zp) + a * resid)

    r_obs = 0.0
    if pd.n_obstacles:
        px = pd.Bp.T @ ws.c_x
        py = pd.Bp.T @ ws.c_y
        rho_obs = (config.rho_obs_r, config.rho_obs_s)
        for b in range(2):
            tx, ty = _obstacle_targets(pd, ws, b)
            rx = px[:, b][:, None] - tx
            ry = py[:, b][:, None] - ty
            ws.lam_obs_x[:, :, b] += rho_obs[b] * rx
            ws.lam_obs_y[:, :, b] += rho_obs[b] * ry
            r_obs = max(r_obs, np.abs(rx).max(), np.abs(ry).max())

    # consensus residual split: the tight threshold applies to the shared
    # position rows only (what branch agreement is measured on), the
    # velocity/acceleration rows and heading fall under the primal threshold
    Ns = config.N_s
    r_cons_pos = 0.0
    r_cons_rest = 0.0
    for rho, A, c, Y, lam, pos_rows in (
            (config.rho_ctheta, pd.A_cth, ws.c_theta, ws.Y_theta, ws.lam_ctheta, 0),
            (config.rho_cx, pd.A_cx, ws.c_x, ws.Y_x, ws.lam_cx, Ns),
            (config.rho_cy, pd.A_cx, ws.c_y, ws.Y_y, ws.lam_cy, Ns)):
        resid = A.T @ c - Y
        lam += rho * resid
        ar = np.abs(resid)
        if pos_rows:
            r_cons_pos = max(r_cons_pos, ar[:pos_rows].max())
            r_cons_rest = max(r_cons_rest, ar[pos_rows:].max())
        else:
            r_cons_rest = max(r_cons_rest, ar.max())

    # kinematic residual against the frozen speed profile the position
    # updates actually used; refreshing first would zero it tautologically
    r_kin = max(np.abs(vx - ws.v * np.cos(theta)).max(),
                np.abs(vy - ws.v * np.sin(theta)).max())
    ws.v = np.hypot(vx, vy)
    r_ineq = max(np.maximum(pd.G @ ws.c_x - pd.h_x, 0.0).max(),
                 np.maximum(pd.G @ ws.c_y - pd.h_y, 0.0).max())
    return {"kinematic": r_kin, "obstacle": r_obs,
            "consensus": r_cons_pos, "consensus_deriv": r_cons_rest,
            "inequality": r_ineq}


def _workspace_shapes(config: PlannerConfig, M: int):
    n1 = config.n + 1
    N, Ns = config.N, config.N_s
    return dict(
        c_theta=np.zeros((n1, 2)), c_x=np.zeros((n1, 2)), c_y=np.zeros((n1, 2)),
        Z_x=np.zeros((8 * N, 2)), Z_y=np.zeros((8 * N, 2)),
        omega=np.zeros((N, M, 2)), d=np.ones((N, M, 2)),
        Y_x=np.zeros((3 * Ns, 2)), Y_y=np.zeros((3 * Ns, 2)), Y_theta=np.zeros((Ns, 2)),
        lam_theta=np.zeros((N, 2)), mu_x=np.zeros((8 * N, 2)), mu_y=np.zeros((8 * N, 2)),
        lam_obs_x=np.zeros((N, M, 2)), lam_obs_y=np.zeros((N, M, 2)),
        lam_cx=np.zeros((3 * Ns, 2)), lam_cy=np.zeros((3 * Ns, 2)),
        lam_ctheta=np.zeros((Ns, 2)), v=np.zeros((N, 2)),
    )


def _cold_start(config: PlannerConfig, pd: ProblemData, ev_state) -> AdmmWorkspace:
    ws = AdmmWorkspace(**_workspace_shapes(config, pd.n_obstacles))
    px, py, theta, _, v = ev_state[:5]
    cx = line_control_points(px, v * np.cos(theta), pd.basis)
    cy = line_control_points(py, v * np.sin(theta), pd.basis)
    for b in range(2):
        ws.c_x[:, b] = cx
        ws.c_y[:, b] = cy
        ws.c_theta[:, b] = theta
    _init_state_dependent(ws, pd, config)
    return ws


def _init_state_dependent(ws: AdmmWorkspace, pd: ProblemData,
                          config: PlannerConfig) -> None:
    """Seed slack, polar, consensus, and speed variables from the curves."""
    ws.Z_x_prev = np.zeros_like(ws.Z_x)
    ws.Z_y_prev = np.zeros_like(ws.Z_y)
    ws.Z_x = np.maximum(0.0, pd.h_x - pd.G @ ws.c_x)
    ws.Z_y = np.maximum(0.0, pd.h_y - pd.G @ ws.c_y)
    if pd.n_obstacles:
        # seed distance targets at the actual normalized distances so a
        # violating initial curve is pushed out gradually from where it is
        px = pd.Bp.T @ ws.c_x
        py = pd.Bp.T @ ws.c_y
        for b in range(2):
            dx = px[:, b][:, None] - pd.obs_cx[:, :, b]
            dy = py[:, b][:, None] - pd.obs_cy[:, :, b]
            ws.d[:, :, b] = np.sqrt((dx / pd.obs_lx[:, :, b]) ** 2
                                    + (dy / pd.obs_ly[:, :, b]) ** 2)
    update_slack_polar(ws, pd, config)
    ws.v = np.hypot(pd.Bv.T @ ws.c_x, pd.Bv.T @ ws.c_y)
    for A, c, Y in ((pd.A_cx, ws.c_x, ws.Y_x), (pd.A_cx, ws.c_y, ws.Y_y),
                    (pd.A_cth, ws.c_theta, ws.Y_theta)):
        mean = 0.5 * A.T @ (c[:, 0] + c[:, 1])
        Y[:, 0] = mean
        Y[:, 1] = mean


def shift_warm_start(prev: PlanResult, basis: BernsteinBasis,
                     mode: str = "receding") -> AdmmWorkspace | None:
    """Workspace seeded from the one-step-shifted contingency suffix.

    Receding mode extends the suffix by one constant-velocity step; shrinking
    mode refits the shortened suffix on the caller-supplied smaller basis.
    Non-converged results are accepted: their partly grown duals give the
    next, nearly identical problem a head start over a cold restart.
    """
    states = prev.states_contingency
    if mode == "receding":
        ext = states[-1].copy()
        dt = prev.config.dt
        ext[0] += dt * ext[4] * np.cos(ext[2])
        ext[1] += dt * ext[4] * np.sin(ext[2])
        suffix = np.vstack([states[1:], ext])
    elif mode == "shrinking":
        suffix = states[1:]
    else:
        raise ValueError(f"unknown horizon mode {mode!r}")

    vx = suffix[:, 4] * np.cos(suffix[:, 2])
    vy = suffix[:, 4] * np.sin(suffix[:, 2])
    cx, res_x = fit_curve(suffix[:, 0], vx, suffix[:, 5], basis)
    cy, res_y = fit_curve(suffix[:, 1], vy, suffix[:, 6], basis)
    cth, _ = fit_curve(suffix[:, 2], suffix[:, 3], np.zeros(len(suffix)), basis)

    cfg = replace(prev.config, N=basis.horizon)
    M = prev.workspace.d.shape[1]
    ws = AdmmWorkspace(**_workspace_shapes(cfg, M))
    for b in range(2):
        ws.c_x[:, b] = cx
        ws.c_y[:, b] = cy
        ws.c_theta[:, b] = cth
    if cfg.N == prev.config.N:
        # carry duals damped: the obstacle geometry shifts between cycles,
        # and full-strength stale duals can slow convergence badly
        s = cfg.warm_dual_scale
        ws.lam_theta = s * prev.workspace.lam_theta
        ws.mu_x = s * prev.workspace.mu_x
        ws.mu_y = s * prev.workspace.mu_y
        ws.lam_obs_x = s * prev.workspace.lam_obs_x
        ws.lam_obs_y = s * prev.workspace.lam_obs_y
        ws.lam_cx = s * prev.workspace.lam_cx
        ws.lam_cy = s * prev.workspace.lam_cy
        ws.lam_ctheta = s * prev.workspace.lam_ctheta
    ws.warm = True
    ws.refit_residual = max(res_x, res_y)
    return ws


def _barrier_audit(pd: ProblemData, states_r, states_s, alpha: float) -> np.ndarray:
    """Step residuals of the barrier recurrence on the realized distances."""
    N, M = pd.obs_cx.shape[:2]
    out = np.zeros((max(N - 1, 0), M, 2))
    for b, states in ((0, states_r), (1, states_s)):
        dx = states[1:, 0][:, None] - pd.obs_cx[:, :, b]
        dy = states[1:, 1][:, None] - pd.obs_cy[:, :, b]
        d = np.sqrt((dx / pd.obs_lx[:, :, b]) ** 2 + (dy / pd.obs_ly[:, :, b]) ** 2)
        out[:, :, b] = (d[1:] - 1.0) - (1.0 - alpha) * (d[:-1] - 1.0)
    return out


def solve(config: PlannerConfig, ev_state, predictions, tubes,
          warm: AdmmWorkspace | None = None,
          basis: BernsteinBasis | None = None) -> PlanResult:
    """Run the ADMM loop until the residual stacks fall below their
    thresholds or the iteration cap, and reconstruct both branches."""
    t0 = time.perf_counter()
    ev_state = np.asarray(ev_state, dtype=float).reshape(9)
    pd = assemble(config, ev_state, predictions, tubes, basis)
    kkt = _KktCache(pd, config)

    if warm is not None:
        ws = warm
        _init_state_dependent(ws, pd, config)
    else:
        ws = _cold_start(config, pd, ev_state)

    converged = False
    final = np.inf
    for it in range(1, config.iter_max + 1):
        update_theta(ws, pd, config, kkt)
        update_positions(ws, pd, config, kkt)
        update_slack_polar(ws, pd, config)
        res = update_consensus_duals(ws, pd, config)
        ws.iteration = it
        ws.residual_history.append(res)
        final = max(res.values())
        if not np.isfinite(final):
            raise PlannerError(f"non-finite iterate at ADMM iteration {it}")
        if (res["kinematic"] <= config.eps_pri and res["obstacle"] <= config.eps_pri
                and res["inequality"] <= config.eps_pri
                and res["consensus_deriv"] <= config.eps_pri
                and res["consensus"] <= config.eps_consensus):
            converged = True
            break

    nominal = BranchCurve(ws.c_x[:, 0].copy(), ws.c_y[:, 0].copy(), ws.c_theta[:, 0].copy())
    contingency = BranchCurve(ws.c_x[:, 1].copy(), ws.c_y[:, 1].copy(), ws.c_theta[:, 1].copy())
    traj = DualBranchTrajectory(nominal=nominal, contingency=contingency, basis=pd.basis)
    states_r = reconstruct_states(nominal, pd.basis)
    states_s = reconstruct_states(contingency, pd.basis)
    return PlanResult(
        trajectory=traj, converged=converged, iterations=ws.iteration,
        final_residual=float(final), solve_time=time.perf_counter() - t0,
        states_nominal=states_r, states_contingency=states_s,
        barrier_residuals=_barrier_audit(pd, states_r, states_s, config.alpha),
        residual_history=ws.residual_history, workspace=ws, config=config,
        refit_residual=ws.refit_residual,
    )
