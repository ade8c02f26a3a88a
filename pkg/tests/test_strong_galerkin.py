import numpy as np
import pytest

from damage_sim.discretization import (
    assemble_operators,
    banded_to_dense,
    build_mesh,
    neumann_eigenbasis,
)
from damage_sim.model import (
    MaterialLaw,
    ScenarioConfig,
    StrongSettings,
    make_potential,
    scalar_fn,
)
from damage_sim.regularization import make_I_delta, make_W_delta, graph_quadratic, regularize
from damage_sim.strong_galerkin import (
    RegParams,
    StrongOperators,
    chi_from_omega,
    chi_rate_from_omega_rate,
    run_strong,
)

from oracles import modal_exact_solution


def strong_material(**kw):
    base = dict(a=scalar_fn("cubic_plus"), b=scalar_fn("constant"),
                C=1.0, V=1.0)
    base.update(kw)
    return MaterialLaw(**base)


def make_sops(N=41, delta=0.1, nu=1e-4, n_modes=6, potential=None,
              material=None):
    mesh = build_mesh(N, 1.0)
    ops = assemble_operators(mesh)
    mat = material or strong_material()
    pot = potential or make_potential("quadratic")
    basis = neumann_eigenbasis(mesh, mat.V, n_modes, ops=ops)
    return StrongOperators(
        ops=ops, basis=basis, material=mat, potential=pot,
        reg_W=make_W_delta(pot, delta), reg_I=make_I_delta(delta),
        params=RegParams(delta=delta, nu=nu))


# ---------------------------------------------------------------------------
# RegParams schedule
# ---------------------------------------------------------------------------

def test_schedule_satisfies_vanishing_scaling():
    ratios = [RegParams.from_schedule(n).scaling_ratio for n in range(1, 6)]
    assert all(r1 > r2 for r1, r2 in zip(ratios, ratios[1:]))
    assert ratios[-1] < ratios[0] / 10


def test_regparams_validation():
    with pytest.raises(ValueError):
        RegParams(delta=1.5, nu=1e-4)
    with pytest.raises(ValueError):
        RegParams(delta=0.5, nu=0.0)


# ---------------------------------------------------------------------------
# chi from omega
# ---------------------------------------------------------------------------

def test_chi_from_omega_constants_with_unit_slope():
    # graph beta(r) = r/(1-delta) has regularized derivative exactly r,
    # so constants solve 2 chi = omega
    delta = 0.25
    g = graph_quadratic(slope=1.0 / (1.0 - delta))
    sops = make_sops(delta=delta)
    sops.reg_W = regularize(g, delta)
    chi, info = chi_from_omega(sops, np.full(41, 3.0))
    assert np.allclose(chi, 1.5, atol=1e-10)
    assert info["residual"] <= 1e-9


def test_chi_from_omega_zero_gives_zero():
    sops = make_sops()
    chi, _ = chi_from_omega(sops, np.zeros(41))
    assert np.max(np.abs(chi)) <= 1e-12


def test_chi_from_omega_indicator_vs_picard_oracle():
    delta = 0.1
    pot = make_potential("indicator_box")
    sops = make_sops(N=201, delta=delta, potential=pot)
    ops = sops.ops
    omega = 2.0 * np.cos(np.pi * ops.mesh.nodes)
    chi, info = chi_from_omega(sops, omega, tol_ell=1e-12)

    # contraction fixed point: (S + W_L (1 + 1/delta)) chi
    #   = W_L (omega - W'(chi) + chi/delta)
    from scipy.linalg import solveh_banded
    A = ops.S.copy()
    A[1] += ops.w * (1.0 + 1.0 / delta)
    x = omega.copy()
    for _ in range(400):
        rhs = ops.w * (omega - sops.reg_W.value(x) + x / delta)
        x_new = solveh_banded(A, rhs)
        if np.max(np.abs(x_new - x)) < 1e-13:
            x = x_new
            break
        x = x_new
    assert np.max(np.abs(chi - x)) <= 1e-8


def test_chi_from_omega_reports_stability_ratio():
    sops = make_sops()
    omega = 1.0 + 0.3 * np.cos(np.pi * sops.ops.mesh.nodes)
    _, info = chi_from_omega(sops, omega)
    assert np.isfinite(info["S0_measured"]) and info["S0_measured"] > 0


# ---------------------------------------------------------------------------
# chi rate
# ---------------------------------------------------------------------------

def test_chi_rate_zero_and_constant_cases():
    sops = make_sops()
    chi = np.full(41, 0.5)
    assert np.max(np.abs(chi_rate_from_omega_rate(sops, chi, np.zeros(41)))) == 0.0
    # with curvature c = W''(chi) constant: chi_t = omega_t / (1 + c)
    c = float(np.atleast_1d(sops.reg_W.d1(np.array([0.5])))[0])
    rate = chi_rate_from_omega_rate(sops, chi, np.full(41, 2.0))
    assert np.allclose(rate, 2.0 / (1.0 + c), atol=1e-10)


def test_chi_rate_against_dense_factorization():
    sops = make_sops(N=5, n_modes=2)
    rng = np.random.default_rng(3)
    chi = rng.uniform(0.2, 0.8, 5)
    omega_t = rng.standard_normal(5)
    rate = chi_rate_from_omega_rate(sops, chi, omega_t)
    B = banded_to_dense(sops.bsym(chi))
    ref = np.linalg.solve(B, sops.ops.w * omega_t)
    assert np.max(np.abs(rate - ref)) <= 1e-10


# ---------------------------------------------------------------------------
# Stage stepping
# ---------------------------------------------------------------------------

def _strong_config(**kw):
    defaults = dict(
        N=41, L=1.0, T=0.25, K=50, material=strong_material(),
        potential=make_potential("quadratic"),
        u0=lambda x: 0.1 * np.cos(np.pi * x), v0=0.0,
        chi0=lambda x: 0.8 + 0.1 * np.cos(np.pi * x), mode="strong",
        strong=StrongSettings(n_modes=6, delta=0.05, nu=1e-6, steps=50,
                              varpi0="slaved"))
    defaults.update(kw)
    return ScenarioConfig(**defaults)


def test_stationary_state_is_preserved():
    # constant chi at the minimum of a centered quadratic potential, no
    # forcing, no displacement: everything stays put
    cfg = _strong_config(
        u0=0.0, chi0=0.6,
        potential=make_potential("quadratic", {"center": 0.6}),
        strong=StrongSettings(n_modes=4, delta=0.1, nu=1e-4, steps=20,
                              varpi0=0.0, startup_steps=0))
    traj, _ = run_strong(cfg)
    for s in traj.snapshots:
        assert np.max(np.abs(s.chi - 0.6)) <= 1e-9
        assert np.max(np.abs(s.u)) <= 1e-12


def test_modal_dynamics_matches_closed_form_in_linear_regime():
    # a = b = 1 (no coupling): each mode obeys c'' + V lam c' + C lam c = 0
    mat = MaterialLaw(a=scalar_fn("constant"), b=scalar_fn("constant"),
                      C=1.0, V=1.0)
    errs = []
    for steps in (50, 100):
        cfg = _strong_config(
            material=mat, T=0.5,
            u0=lambda x: 0.05 + 0.02 * np.cos(np.pi * x)
            + 0.01 * np.cos(2 * np.pi * x),
            strong=StrongSettings(n_modes=3, delta=0.1, nu=1e-4, steps=steps,
                                  varpi0="slaved"))
        traj, _ = run_strong(cfg)
        basis = traj.extras["basis"]
        c_num = traj.final.u_modal
        err = 0.0
        c0 = traj.snapshots[0].u_modal
        for k in range(4):
            lam = basis.eigenvalues[k]
            c_exact, _ = modal_exact_solution(lam, 1.0, 1.0, c0[k], 0.0, 0.5)
            err = max(err, abs(c_num[k] - c_exact))
        errs.append(err)
    assert errs[0] <= 5e-4
    assert errs[0] / errs[1] >= 3.0     # second-order stage


def test_mean_momentum_identity_zero_forcing():
    cfg = _strong_config()
    traj, _ = run_strong(cfg)
    for t, res, scale in traj.extras["mean_identity"]:
        assert res <= 1e-9 * scale


def test_coherence_invariant_along_the_run():
    cfg = _strong_config()
    traj, _ = run_strong(cfg)
    ops = traj.ops
    reg = traj.extras["reg_W"]
    for s in traj.snapshots:
        r = (ops.stiff_matvec(s.chi) / ops.w + reg.value(s.chi)
             + s.chi - s.omega)
        assert np.sqrt(np.dot(ops.w, r * r)) <= 1e-9


def test_strong_mode_gate_rejects_robin_data():
    cfg = _strong_config(material=strong_material(gamma1=0.5))
    with pytest.raises(ValueError):
        run_strong(cfg)
    cfg2 = _strong_config(material=strong_material(C=1.0, V=2.0))
    with pytest.raises(ValueError):
        run_strong(cfg2)
    from damage_sim.forcing import BoundaryForcing, ConstantFactor
    cfg3 = _strong_config(boundary=BoundaryForcing(factor=ConstantFactor(0.2)))
    with pytest.raises(ValueError):
        run_strong(cfg3)


def test_delta_ladder_final_states_cauchy():
    finals = []
    for n in (1, 2, 3):
        p = RegParams.from_schedule(n)
        cfg = _strong_config(
            strong=StrongSettings(n_modes=6, delta=p.delta, nu=p.nu,
                                  steps=50, varpi0="slaved"))
        traj, _ = run_strong(cfg)
        s = traj.final
        finals.append(np.concatenate([s.u, s.v, s.chi]))
    d1 = np.linalg.norm(finals[1] - finals[0])
    d2 = np.linalg.norm(finals[2] - finals[1])
    assert d2 < d1


def test_nu_vanishing_monitor_decreases_along_schedule():
    vals = []
    for n in (1, 2, 3):
        p = RegParams.from_schedule(n)
        cfg = _strong_config(
            strong=StrongSettings(n_modes=6, delta=p.delta, nu=p.nu,
                                  steps=50, varpi0="slaved"))
        _, mon = run_strong(cfg)
        vals.append(max(mon.nu_omega_t_sq))
    assert vals[0] > vals[1] > vals[2]


def test_modal_truncation_convergence():
    finals = []
    for n_modes in (8, 16, 32):
        cfg = _strong_config(
            N=81,
            u0=lambda x: 0.1 * np.exp(-((x - 0.4) / 0.2) ** 2),
            strong=StrongSettings(n_modes=n_modes, delta=0.05, nu=1e-6,
                                  steps=50, varpi0="slaved"))
        traj, _ = run_strong(cfg)
        finals.append(traj.final.u)
    d1 = np.linalg.norm(finals[1] - finals[0])
    d2 = np.linalg.norm(finals[2] - finals[1])
    assert d2 < d1


def test_horizon_detection_is_reported_not_raised():
    cfg = _strong_config(
        strong=StrongSettings(n_modes=6, delta=0.05, nu=1e-6, steps=20,
                              varpi0="slaved", psi_max=1e-12))
    traj, mon = run_strong(cfg)
    assert mon.horizon_hit
    assert mon.horizon_time is not None
    assert len(traj) >= 1
    assert mon.to_dict()["verdict"] == "horizon"


def test_blowup_monitor_reports_exploratory_formula():
    cfg = _strong_config()
    _, mon = run_strong(cfg)
    assert mon.growth_beta == pytest.approx(16.0)   # 4*rho + 12 with rho = 1
    assert mon.horizon_formula is not None
