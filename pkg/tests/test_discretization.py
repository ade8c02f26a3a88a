import numpy as np
import pytest
import sympy as sp

from damage_sim.discretization import (
    assemble_operators,
    banded_quadform,
    banded_to_dense,
    build_mesh,
    neumann_eigenbasis,
    weighted_stiffness_banded,
)


def test_build_mesh_examples():
    mesh = build_mesh(3, 1.0)
    assert np.allclose(mesh.nodes, [0.0, 0.5, 1.0])
    assert mesh.h == 0.5
    assert build_mesh(101, 2.0).h == pytest.approx(0.02)
    with pytest.raises(ValueError):
        build_mesh(2, 1.0)
    with pytest.raises(ValueError):
        build_mesh(5, -1.0)


def test_stiffness_matches_symbolic_integration_on_3_nodes():
    # P1 hat functions on {0, 1/2, 1}: S_ij = int phi_i' phi_j'
    x = sp.symbols("x")
    h = sp.Rational(1, 2)
    phis = [
        sp.Piecewise(((h - x) / h, x <= h), (0, True)),
        sp.Piecewise((x / h, x <= h), ((1 - x) / h, True)),
        sp.Piecewise((0, x <= h), ((x - h) / h, True)),
    ]
    S_sym = np.array([[float(sp.integrate(sp.diff(pi, x) * sp.diff(pj, x), (x, 0, 1)))
                       for pj in phis] for pi in phis])
    mesh = build_mesh(3, 1.0)
    ops = assemble_operators(mesh)
    assert np.allclose(banded_to_dense(ops.S), S_sym, atol=1e-12)
    # interior row is (-2, 4, -2)
    assert np.allclose(banded_to_dense(ops.S)[1], [-2.0, 4.0, -2.0])


def test_mass_matches_symbolic_integration_on_3_nodes():
    x = sp.symbols("x")
    h = sp.Rational(1, 2)
    phis = [
        sp.Piecewise(((h - x) / h, x <= h), (0, True)),
        sp.Piecewise((x / h, x <= h), ((1 - x) / h, True)),
        sp.Piecewise((0, x <= h), ((x - h) / h, True)),
    ]
    M_sym = np.array([[float(sp.integrate(pi * pj, (x, 0, 1)))
                       for pj in phis] for pi in phis])
    ops = assemble_operators(build_mesh(3, 1.0))
    assert np.allclose(banded_to_dense(ops.M), M_sym, atol=1e-14)


def test_neumann_kernel_and_mass_conservation():
    for N, L in ((3, 1.0), (17, 2.5), (101, 0.7)):
        ops = assemble_operators(build_mesh(N, L))
        ones = np.ones(N)
        assert np.max(np.abs(ops.stiff_matvec(ones))) == 0.0
        assert banded_quadform(ops.M, ones) == pytest.approx(L, rel=1e-13)
        assert np.sum(ops.w) == pytest.approx(L, rel=1e-13)


def test_stiffness_positive_semidefinite_random_vectors():
    ops = assemble_operators(build_mesh(31, 1.3))
    rng = np.random.default_rng(11)
    for _ in range(1000):
        xi = rng.standard_normal(31)
        q = banded_quadform(ops.S, xi)
        assert q >= -1e-10
    const = np.full(31, 0.37)
    assert abs(banded_quadform(ops.S, const)) <= 1e-10


def test_quadform_equals_exact_derivative_integral():
    # <S xi, xi> = int |xi'|^2 for piecewise-linear xi
    mesh = build_mesh(9, 2.0)
    ops = assemble_operators(mesh)
    rng = np.random.default_rng(3)
    xi = rng.standard_normal(9)
    exact = float(np.sum(np.diff(xi) ** 2 / mesh.h))
    assert banded_quadform(ops.S, xi) == pytest.approx(exact, rel=1e-12)


def test_weighted_stiffness_consistent_with_elastic_load():
    # 1/2 u^T S_a u must equal sum_i a_i * load_i exactly
    mesh = build_mesh(13, 1.0)
    ops = assemble_operators(mesh)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(13)
    a = rng.uniform(0.1, 2.0, 13)
    Sa = weighted_stiffness_banded(mesh, a, scale=1.7)
    lhs = 0.5 * banded_quadform(Sa, u)
    rhs = float(np.dot(a, ops.elastic_load(u, 1.7)))
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_eigenvalues_against_neumann_cosines():
    mesh = build_mesh(401, 1.0)
    basis = neumann_eigenbasis(mesh, 1.0, 3)
    assert basis.eigenvalues[0] == 0.0
    for k in range(1, 4):
        exact = (k * np.pi) ** 2
        assert abs(basis.eigenvalues[k] - exact) / exact <= 1e-3


def test_eigenvalues_scale_with_V():
    mesh = build_mesh(201, 1.0)
    b1 = neumann_eigenbasis(mesh, 1.0, 3)
    b4 = neumann_eigenbasis(mesh, 4.0, 3)
    assert np.allclose(b4.eigenvalues[1:], 4.0 * b1.eigenvalues[1:], rtol=1e-12)


def test_first_eigenvector_matches_sampled_cosine():
    mesh = build_mesh(401, 1.0)
    ops = assemble_operators(mesh)
    basis = neumann_eigenbasis(mesh, 1.0, 1)
    ref = np.sqrt(2.0) * np.cos(np.pi * mesh.nodes)
    dist = np.sqrt(banded_quadform(ops.M, basis.vectors[:, 1] - ref))
    assert dist <= 1e-2


def test_eigenbasis_orthonormal_and_zero_mean():
    mesh = build_mesh(101, 1.0)
    ops = assemble_operators(mesh)
    basis = neumann_eigenbasis(mesh, 2.0, 5)
    Y = basis.vectors
    G = Y.T @ np.column_stack([ops.mass_matvec(Y[:, j]) for j in range(6)])
    assert np.allclose(G, np.eye(6), atol=1e-9)
    ones = np.ones(101)
    for k in range(1, 6):
        assert abs(banded_quadform(ops.M, ones, Y[:, k])) <= 1e-10


def test_eigenvalue_convergence_rate_under_h_refinement():
    exact = np.array([(k * np.pi) ** 2 for k in range(1, 6)])
    e_coarse = np.abs(neumann_eigenbasis(build_mesh(201, 1.0), 1.0, 5)
                      .eigenvalues[1:] - exact) / exact
    e_fine = np.abs(neumann_eigenbasis(build_mesh(401, 1.0), 1.0, 5)
                    .eigenvalues[1:] - exact) / exact
    assert np.all(e_coarse / e_fine >= 3.5)


def test_mode_count_precondition():
    mesh = build_mesh(11, 1.0)
    with pytest.raises(ValueError):
        neumann_eigenbasis(mesh, 1.0, 10)


def test_lumped_mass_flag():
    ops = assemble_operators(build_mesh(7, 1.0), lumped_mass=True)
    assert ops.lumped
    dense = banded_to_dense(ops.M)
    assert np.allclose(dense, np.diag(ops.w))


def test_eigenbasis_csv_export(tmp_path):
    mesh = build_mesh(21, 1.0)
    basis = neumann_eigenbasis(mesh, 1.0, 2)
    path = tmp_path / "eig.csv"
    basis.to_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data.shape[0] == 21
    assert set(data.dtype.names) == {"x", "mode_0", "mode_1", "mode_2"}
