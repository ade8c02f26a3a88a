"""Regularized spectral scheme for strong-solution approximants.

Displacements are expanded on the Neumann eigenbasis V_n = span{1, y_1, ..,
y_n} of -d/dx(V d/dx); the damage flow rule is replaced by the
delta-regularized, nu-hyperbolic system in (omega, chi):

    c-dot-dot_j + [D(chi) c-dot]_j + [A(chi) c]_j = f_j            (modal)
    nu omega_tt + omega + chi_t + I_delta'(chi_t)
        + a'(chi) C/2 |u_x|^2 + Wcheck'(chi) - chi = 0             (nodal)
    -Delta chi + Wbreve_delta'(chi) + chi = omega                  (nodal FEM)

with D(chi) = Y^T S_{b(chi)V} Y, A(chi) = Y^T S_{a(chi)C} Y.  chi is always
recovered from omega through the semilinear Neumann solve (coherence), and
chi_t from omega_t through the linearized solve
(S + W_L diag(1 + Wbreve_delta''(chi))) chi_t = W_L omega_t.

Time stepping is implicit midpoint; each stage reduces, after eliminating
the modal block (a small dense solve) and omega through
omega_t = W_L^{-1} B_sym chi_t, to one monotone tridiagonal Newton solve in
chi_t per outer iteration:

  (nu/dt + dt) B_sym chi_t + W_L (chi_t + I_delta'(chi_t))
      = (nu/dt) W_L omega_t^k - W_L (omega^k + G(chi, u)).

The division by (nu/dt) keeps the stiff 1/nu term exact, so arbitrarily
small nu is stable; because the midpoint rule does not damp the initial
fast layer when omega_t(0) is off the slow manifold, the first
``startup_steps`` steps are taken as pairs of backward-Euler half-steps
(Rannacher smoothing), which preserves the overall second order.

The scheme conserves the mean-displacement identity exactly in the discrete
sense (constant test function), tracked per step with scheme-consistent
quadrature weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded

from .discretization import (
    EigenBasis,
    Operators,
    assemble_operators,
    banded_matvec,
    banded_quadform,
    build_mesh,
    neumann_eigenbasis,
    weighted_stiffness_banded,
)
from .forcing import Forcing
from .model import MaterialLaw, PotentialSplit, ScenarioConfig
from .regularization import RegularizedFunction, make_I_delta, make_W_delta
from .trajectory import Snapshot, StepReport, Trajectory

__all__ = [
    "RegParams",
    "SpectralState",
    "BlowupMonitor",
    "StrongOperators",
    "StageError",
    "chi_from_omega",
    "chi_rate_from_omega_rate",
    "step_regularized",
    "run_strong",
]


class StageError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegParams:
    """Regularization pair (delta, nu) with the vanishing-scaling schedule."""

    delta: float
    nu: float
    schedule_n: Optional[int] = None
    varpi0: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")

    @classmethod
    def from_schedule(cls, n: int, varpi0: float = 0.0) -> "RegParams":
        # nu_n^(1/2)/delta_n = 2^-n -> 0 along the schedule
        return cls(delta=2.0 ** -n, nu=2.0 ** (-4 * n), schedule_n=n,
                   varpi0=varpi0)

    @property
    def scaling_ratio(self) -> float:
        return math.sqrt(self.nu) / self.delta


@dataclass
class SpectralState:
    t: float
    c: np.ndarray          # modal u coefficients
    cdot: np.ndarray       # modal velocity coefficients
    omega: np.ndarray
    omega_t: np.ndarray
    chi: np.ndarray
    chi_t: np.ndarray

    def copy(self) -> "SpectralState":
        return SpectralState(self.t, self.c.copy(), self.cdot.copy(),
                             self.omega.copy(), self.omega_t.copy(),
                             self.chi.copy(), self.chi_t.copy())


@dataclass
class BlowupMonitor:
    psi_max: float
    times: list = field(default_factory=list)
    ut_h2: list = field(default_factory=list)
    chi_h2: list = field(default_factory=list)
    omega_l2: list = field(default_factory=list)
    int_ut_h3: list = field(default_factory=list)
    psi: list = field(default_factory=list)
    nu_omega_t_sq: list = field(default_factory=list)
    horizon_time: Optional[float] = None
    growth_beta: Optional[float] = None
    horizon_formula: Optional[float] = None

    @property
    def horizon_hit(self) -> bool:
        return self.horizon_time is not None

    def record(self, t, ut_h2, chi_h2, omega_l2, int_h3, nu_wt) -> float:
        val = ut_h2**2 + chi_h2**2 + omega_l2**2 + int_h3 + 1.0
        self.times.append(t)
        self.ut_h2.append(ut_h2)
        self.chi_h2.append(chi_h2)
        self.omega_l2.append(omega_l2)
        self.int_ut_h3.append(int_h3)
        self.nu_omega_t_sq.append(nu_wt)
        self.psi.append(val)
        return val

    def finalize_formula(self, p: float, q: float) -> None:
        """Exploratory only: the local-horizon formula with the growth
        exponents; the Gronwall constant is not explicit, so nothing is
        asserted against this value."""
        rho = max(p, q)
        beta = max(4.0 * rho + 12.0, 4.0 * p)
        self.growth_beta = beta
        psi0 = self.psi[0] if self.psi else 1.0
        self.horizon_formula = psi0 ** (1.0 - beta) / (2.0 * (beta - 1.0))

    def to_dict(self) -> dict:
        return {
            "psi_max": self.psi_max,
            "times": list(self.times),
            "psi": list(self.psi),
            "ut_h2": list(self.ut_h2),
            "chi_h2": list(self.chi_h2),
            "omega_l2": list(self.omega_l2),
            "int_ut_h3": list(self.int_ut_h3),
            "nu_omega_t_sq": list(self.nu_omega_t_sq),
            "horizon_time": self.horizon_time,
            "growth_beta": self.growth_beta,
            "horizon_formula_exploratory": self.horizon_formula,
            "verdict": "horizon" if self.horizon_hit else "completed",
        }


@dataclass
class StrongOperators:
    """Assembled spatial machinery shared by all stages of one run."""

    ops: Operators
    basis: EigenBasis
    material: MaterialLaw
    potential: PotentialSplit
    reg_W: RegularizedFunction
    reg_I: RegularizedFunction
    params: RegParams

    def elastic_density(self, u_nodal) -> np.ndarray:
        """Nodal density q_i of C/2 |u_x|^2 (load / quadrature weight)."""
        return self.ops.elastic_load(u_nodal, self.material.C) / self.ops.w

    def flow_source(self, chi, u_nodal) -> np.ndarray:
        """G = a'(chi) C/2 |u_x|^2 + Wcheck'(chi) - chi."""
        return (self.material.a.d1(chi) * self.elastic_density(u_nodal)
                - self.potential.ell * chi - chi)

    def modal_matrices(self, chi):
        Y = self.basis.vectors
        Sb = weighted_stiffness_banded(self.ops.mesh, self.material.b(chi),
                                       scale=self.material.V)
        Sa = weighted_stiffness_banded(self.ops.mesh, self.material.a(chi),
                                       scale=self.material.C)
        SbY = np.column_stack([banded_matvec(Sb, Y[:, j]) for j in range(Y.shape[1])])
        SaY = np.column_stack([banded_matvec(Sa, Y[:, j]) for j in range(Y.shape[1])])
        return Y.T @ SbY, Y.T @ SaY

    def bsym(self, chi) -> np.ndarray:
        B = self.ops.S.copy()
        B[1] += self.ops.w * (1.0 + self.reg_W.d1(chi))
        return B

    def omega_of_chi(self, chi) -> np.ndarray:
        return (banded_matvec(self.ops.S, chi) / self.ops.w
                + self.reg_W.value(chi) + chi)


def chi_from_omega(sops: StrongOperators, omega: np.ndarray,
                   chi_init: Optional[np.ndarray] = None,
                   tol_ell: float = 1e-10, max_iter: int = 60):
    """Solve the semilinear Neumann problem -Delta chi + W'(chi) + chi = omega.

    Damped Newton on the lumped FEM system; monotonicity of the regularized
    derivative makes the Jacobian S + W_L diag(1 + W'') SPD, so the iteration
    is globally convergent with backtracking.  Returns (chi, info) where info
    reports the measured stability ratio S0 = (||chi||_H2 + ||W'(chi)||) /
    ||omega|| (not asserted).
    """
    ops = sops.ops
    chi = (omega.copy() if chi_init is None else chi_init.copy())

    def residual(c):
        return (banded_matvec(ops.S, c)
                + ops.w * (sops.reg_W.value(c) + c - omega))

    def res_norm(r):
        return float(np.sqrt(np.dot(ops.w, (r / ops.w) ** 2)))

    r = residual(chi)
    rn = res_norm(r)
    scale = 1.0 + float(np.max(np.abs(omega)))
    for it in range(1, max_iter + 1):
        if rn <= tol_ell * scale:
            break
        J = ops.S.copy()
        J[1] += ops.w * (1.0 + sops.reg_W.d1(chi))
        step = solveh_banded(J, -r)
        lam = 1.0
        for _ in range(40):
            cand = chi + lam * step
            rc = residual(cand)
            rcn = res_norm(rc)
            if rcn <= (1.0 - 0.25 * lam) * rn or rcn <= tol_ell * scale:
                chi, r, rn = cand, rc, rcn
                break
            lam *= 0.5
        else:
            raise StageError("chi_from_omega Newton damping exhausted")
    else:
        raise StageError(f"chi_from_omega did not converge: residual {rn:.3e}")

    wnorm = ops.l2_norm_lumped(sops.reg_W.value(chi))
    onorm = ops.l2_norm_lumped(omega)
    s0 = (ops.h2_norm(chi) + wnorm) / onorm if onorm > 0 else math.inf
    return chi, {"iterations": it, "residual": rn, "S0_measured": s0}


def chi_rate_from_omega_rate(sops: StrongOperators, chi: np.ndarray,
                             omega_t: np.ndarray) -> np.ndarray:
    """Solve (S + W_L diag(1 + W''(chi))) chi_t = W_L omega_t."""
    return solveh_banded(sops.bsym(chi), sops.ops.w * omega_t)


def _slaved_omega_t(sops: StrongOperators, chi0, u0_nodal, omega0) -> np.ndarray:
    """Compatible omega_t(0): solve the quasi-static (nu = 0) flow rule
    chi_t + I_delta'(chi_t) = -(omega + G) nodewise, then push the rate
    through the coherence relation omega_t = W_L^{-1} B_sym chi_t."""
    rhs = -(omega0 + sops.flow_source(chi0, u0_nodal))
    x = np.minimum(rhs, 0.0)
    for _ in range(80):
        r = x + sops.reg_I.value(x) - rhs
        if np.max(np.abs(r)) <= 1e-14 * (1.0 + np.max(np.abs(rhs))):
            break
        x = x - r / (1.0 + sops.reg_I.d1(x))
    return banded_matvec(sops.bsym(chi0), x) / sops.ops.w


def _stage_solve(sops: StrongOperators, state: SpectralState, dt: float,
                 f_modal, tol_ode: float, max_outer: int = 40):
    """Solve the theta-stage system m = z + dt F(m); returns the stage state."""
    ops = sops.ops
    nu = sops.params.nu
    chi_m = state.chi.copy()
    chit_m = state.chi_t.copy()
    v_m = state.cdot.copy()
    c_m = state.c.copy()
    n1 = state.c.size

    flow_scale = 1.0 + float(np.max(np.abs(state.omega)))
    for outer in range(1, max_outer + 1):
        Dm, Am = sops.modal_matrices(chi_m)
        lhs = np.eye(n1) + dt * Dm + dt * dt * Am
        rhs = state.cdot + dt * (f_modal - Am @ state.c)
        v_m = np.linalg.solve(lhs, rhs)
        c_m = state.c + dt * v_m
        u_m = sops.basis.synthesize(c_m)

        G = sops.flow_source(chi_m, u_m)
        B = sops.bsym(chi_m)
        coeff = nu / dt + dt
        rhs_chi = (nu / dt) * ops.w * state.omega_t - ops.w * (state.omega + G)

        # Newton in chi_t with SPD tridiagonal Jacobian
        x = chit_m.copy()
        for _ in range(60):
            ival = sops.reg_I.value(x)
            F = coeff * banded_matvec(B, x) + ops.w * (x + ival) - rhs_chi
            fn = float(np.max(np.abs(F)))
            if fn <= 1e-13 * (1.0 + float(np.max(np.abs(rhs_chi)))):
                break
            J = coeff * B
            J[1] += ops.w * (1.0 + sops.reg_I.d1(x))
            x = x + solveh_banded(J, -F)
        chit_m = x
        omt_m = banded_matvec(B, chit_m) / ops.w
        om_m = state.omega + dt * omt_m
        chi_new, _ = chi_from_omega(sops, om_m, chi_init=chi_m,
                                    tol_ell=min(tol_ode, 1e-10))

        # flow-rule residual at the stage point
        flow_res = (nu * (omt_m - state.omega_t) / dt + om_m + chit_m
                    + sops.reg_I.value(chit_m) + sops.flow_source(chi_new,
                                                                  u_m))
        rn = float(np.sqrt(np.dot(ops.w, flow_res**2)))
        drift = float(np.max(np.abs(chi_new - chi_m)))
        chi_m = chi_new
        if rn <= tol_ode * flow_scale and drift <= tol_ode:
            break
    else:
        raise StageError(f"stage iteration stalled: flow residual {rn:.3e}")

    return SpectralState(t=state.t + dt, c=c_m, cdot=v_m, omega=om_m,
                         omega_t=omt_m, chi=chi_m, chi_t=chit_m), outer


def step_regularized(sops: StrongOperators, state: SpectralState, tau: float,
                     forcing_modal, tol_ode: float = 1e-8,
                     kind: str = "midpoint", min_dt_factor: float = 2.0 ** -6):
    """Advance one step of size tau; halves the substep on stage failure.

    kind = "midpoint": symmetric second-order stage at t + tau/2;
    kind = "be": two backward-Euler half-steps (startup smoothing).
    Returns (state, stage_records) where each record carries the quadrature
    data (dt, t_eval, f_modal, extra_weight) of the mean-identity bookkeeping.
    """
    records = []

    def advance(z, dt_nominal, scheme):
        dt_try = dt_nominal
        while True:
            nsub = int(round(dt_nominal / dt_try))
            try:
                cur = z
                recs = []
                for i in range(nsub):
                    if scheme == "midpoint":
                        t_eval = cur.t + 0.5 * dt_try
                        fm = forcing_modal(t_eval)
                        stage, _ = _stage_solve(sops, cur, 0.5 * dt_try, fm,
                                                tol_ode)
                        new = SpectralState(
                            t=cur.t + dt_try,
                            c=2.0 * stage.c - cur.c,
                            cdot=2.0 * stage.cdot - cur.cdot,
                            omega=2.0 * stage.omega - cur.omega,
                            omega_t=2.0 * stage.omega_t - cur.omega_t,
                            chi=stage.chi, chi_t=stage.chi_t)
                        recs.append((dt_try, t_eval, fm, 0.0))
                    else:
                        t_eval = cur.t + dt_try
                        fm = forcing_modal(t_eval)
                        new, _ = _stage_solve(sops, cur, dt_try, fm, tol_ode)
                        recs.append((dt_try, t_eval, fm, dt_try))
                    cur = new
                return cur, recs
            except StageError:
                if dt_try <= dt_nominal * min_dt_factor:
                    raise
                dt_try *= 0.5

    if kind == "be":
        out, recs = advance(state, 0.5 * tau, "be")
        records.extend(recs)
        out, recs = advance(out, 0.5 * tau, "be")
        records.extend(recs)
    else:
        out, recs = advance(state, tau, "midpoint")
        records.extend(recs)

    # coherence restoration at the accepted time level
    chi, _ = chi_from_omega(sops, out.omega, chi_init=out.chi)
    out.chi = chi
    out.chi_t = chi_rate_from_omega_rate(sops, chi, out.omega_t)
    return out, records


def run_strong(config: ScenarioConfig):
    """Integrate the regularized spectral system; returns (Trajectory, BlowupMonitor).

    Hitting the psi_max threshold stops the run and is reported as the
    numerical local-existence horizon, not as an error.
    """
    mesh = build_mesh(config.N, config.L)
    ops = assemble_operators(mesh)
    config.validate(mesh.nodes, mode="strong")

    settings = config.strong.resolved()
    params = RegParams(delta=settings.delta, nu=settings.nu,
                       schedule_n=settings.schedule_n,
                       varpi0=settings.varpi0)
    basis = neumann_eigenbasis(mesh, config.material.V, settings.n_modes,
                               ops=ops, tol_eig=config.tolerances.eig)
    reg_W = make_W_delta(config.potential, params.delta)
    reg_I = make_I_delta(params.delta)
    sops = StrongOperators(ops=ops, basis=basis, material=config.material,
                           potential=config.potential, reg_W=reg_W,
                           reg_I=reg_I, params=params)

    u0, v0, chi0 = config.initial_fields(mesh.nodes)
    c0 = basis.project(ops, u0)
    cdot0 = basis.project(ops, v0)
    omega0 = sops.omega_of_chi(chi0)
    if settings.varpi0 == "slaved":
        omega_t0 = _slaved_omega_t(sops, chi0, basis.synthesize(c0), omega0)
    else:
        omega_t0 = np.full(mesh.N, float(settings.varpi0))
    chi_t0 = chi_rate_from_omega_rate(sops, chi0, omega_t0)
    state = SpectralState(t=0.0, c=c0, cdot=cdot0, omega=omega0,
                          omega_t=omega_t0, chi=chi0.copy(), chi_t=chi_t0)

    forcing = config.forcing or Forcing.zero()

    def forcing_modal(t):
        return basis.project(ops, forcing.at(t, mesh.nodes))

    steps = settings.steps
    tau = config.T / steps
    traj = Trajectory(mode="strong", mesh=mesh, ops=ops,
                      material=config.material, potential=config.potential,
                      tau=tau,
                      extras={"config": config, "params": params,
                              "reg_W": reg_W, "reg_I": reg_I, "basis": basis,
                              "mean_identity": [], "stage_records": []})
    monitor = BlowupMonitor(psi_max=settings.psi_max)

    ones = np.ones(mesh.N)
    sqrtL = math.sqrt(banded_quadform(ops.M, ones))
    int_u0 = sqrtL * c0[0]
    int_v0 = sqrtL * cdot0[0]

    int_h3 = 0.0
    prev_h3sq = ops.h3_norm(basis.synthesize(cdot0)) ** 2
    last_t = 0.0

    def record(state, stage_log):
        nonlocal int_h3, prev_h3sq, last_t
        u = basis.synthesize(state.c)
        v = basis.synthesize(state.cdot)
        if state.t > last_t:
            cur = ops.h3_norm(v) ** 2
            int_h3 += 0.5 * (state.t - last_t) * (prev_h3sq + cur)
            prev_h3sq = cur
            last_t = state.t
        psi = monitor.record(
            state.t, ops.h2_norm(v), ops.h2_norm(state.chi),
            ops.l2_norm_lumped(state.omega), int_h3,
            params.nu * ops.l2_norm_lumped(state.omega_t) ** 2)
        # discrete mean identity (constant test function)
        dd = sum(dt * (state.t - te + extra) * sqrtL * fm[0]
                 for dt, te, fm, extra in stage_log)
        res = abs(sqrtL * state.c[0] - int_u0 - state.t * int_v0 - dd)
        traj.extras["mean_identity"].append(
            (state.t, res, 1.0 + abs(sqrtL * state.c[0])))
        traj.append(Snapshot(
            t=state.t, u=u, v=v, chi=state.chi.copy(),
            chi_t=state.chi_t.copy(), omega=state.omega.copy(),
            omega_t=state.omega_t.copy(), u_modal=state.c.copy(),
            v_modal=state.cdot.copy()))
        return psi

    stage_log = []
    record(state, stage_log)

    stride = max(1, int(config.output_stride))
    for k in range(1, steps + 1):
        kind = "be" if k <= settings.startup_steps else "midpoint"
        state, recs = step_regularized(sops, state, tau, forcing_modal,
                                       tol_ode=config.tolerances.ode,
                                       kind=kind)
        stage_log.extend(recs)
        traj.step_reports.append(StepReport(step=k))
        if k % stride == 0 or k == steps:
            psi = record(state, stage_log)
            if psi > settings.psi_max:
                monitor.horizon_time = state.t
                break
    traj.extras["stage_records"] = [
        (dt, te, extra) for dt, te, _, extra in stage_log]
    monitor.finalize_formula(config.material.growth_p, config.material.growth_q)
    return traj, monitor
