"""Uniform 1D meshes, P1 finite-element operators, and the Neumann eigenbasis.

Discrete conventions used throughout the package (they are chosen so that
the time-discrete energy-dissipation inequality telescopes exactly):

  * mass matrix M: consistent P1 by default (tridiagonal h/6 (1,4,1)),
    lumped by flag; the lumped weights w_i = h (h/2 at the ends) double as
    nodal quadrature weights;
  * stiffness matrix S: tridiagonal (-1, 2, -1)/h with Neumann ends, so
    xi^T S xi = int |xi'|^2 for P1 fields and S 1 = 0;
  * weighted stiffness S_c for int c(x) u' v': elementwise coefficient equal
    to the mean of the nodal coefficients, which makes
    1/2 u^T S_c u == sum_i c_i load_i with the trapezoid elastic load;
  * discrete negative Laplacian: Delta_h z = -W_L^{-1} S z; the discrete
    H^2 and H^3 norms are
        ||z||_{H2}^2 = ||z||_M^2 + |z|_S^2 + ||Delta_h z||_{W_L}^2,
        ||z||_{H3}^2 = ||z||_{H2}^2 + |Delta_h z|_S^2.

The eigenbasis solves the generalized symmetric problem V S y = lambda M y:
the 1D Neumann form of the vector eigenproblem used for the spectral
discretization of the momentum balance.  The first eigenpair is the exact
constant with lambda_0 = 0; all later modes have zero M-mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh, solveh_banded

__all__ = [
    "Mesh1D",
    "Operators",
    "EigenBasis",
    "build_mesh",
    "assemble_operators",
    "weighted_stiffness_banded",
    "neumann_eigenbasis",
    "EigenSolveError",
]


class EigenSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mesh1D:
    N: int
    L: float
    h: float
    nodes: np.ndarray

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("mesh needs at least 3 nodes")
        if self.L <= 0:
            raise ValueError("domain length must be positive")


def build_mesh(N: int, L: float) -> Mesh1D:
    if N < 3:
        raise ValueError("mesh needs at least 3 nodes")
    if L <= 0:
        raise ValueError("domain length must be positive")
    nodes = np.linspace(0.0, float(L), int(N))
    return Mesh1D(N=int(N), L=float(L), h=float(L) / (int(N) - 1), nodes=nodes)


# Banded symmetric storage: row 0 holds the superdiagonal (padded on the
# left), row 1 the diagonal -- the layout of scipy.linalg.solveh_banded.

def banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    up, diag = ab[0], ab[1]
    y = diag * x
    y[:-1] += up[1:] * x[1:]
    y[1:] += up[1:] * x[:-1]
    return y


def banded_quadform(ab: np.ndarray, x: np.ndarray, y: Optional[np.ndarray] = None) -> float:
    y = x if y is None else y
    return float(np.dot(x, banded_matvec(ab, y)))


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    dense = np.diag(ab[1])
    dense += np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)
    return dense


@dataclass(frozen=True)
class Operators:
    """P1 mass/stiffness operators on a uniform mesh (banded symmetric)."""

    mesh: Mesh1D
    M: np.ndarray            # (2, N) banded mass matrix (consistent or lumped)
    S: np.ndarray            # (2, N) banded stiffness matrix
    w: np.ndarray            # lumped nodal quadrature weights
    lumped: bool

    def mass_matvec(self, x):
        return banded_matvec(self.M, x)

    def stiff_matvec(self, x):
        return banded_matvec(self.S, x)

    def l2_norm(self, z) -> float:
        return float(np.sqrt(max(banded_quadform(self.M, z), 0.0)))

    def l2_norm_lumped(self, z) -> float:
        return float(np.sqrt(np.dot(self.w, z * z)))

    def lp_norm_lumped(self, z, p: float) -> float:
        return float(np.dot(self.w, np.abs(z) ** p) ** (1.0 / p))

    def h1_semi(self, z) -> float:
        return float(np.sqrt(max(banded_quadform(self.S, z), 0.0)))

    def laplacian_h(self, z) -> np.ndarray:
        return -banded_matvec(self.S, z) / self.w

    def h2_norm(self, z) -> float:
        lap = self.laplacian_h(z)
        return float(np.sqrt(self.l2_norm(z) ** 2 + self.h1_semi(z) ** 2
                             + np.dot(self.w, lap * lap)))

    def h3_norm(self, z) -> float:
        lap = self.laplacian_h(z)
        return float(np.sqrt(self.h2_norm(z) ** 2 + self.h1_semi(lap) ** 2))

    def strain(self, u) -> np.ndarray:
        """Elementwise strain of a P1 field ((N-1,) array)."""
        return np.diff(u) / self.mesh.h

    def elastic_load(self, u, modulus: float) -> np.ndarray:
        """Nodal load l_i with sum_i a(chi_i) l_i = int a(chi) modulus/2 |u'|^2.

        l_i = modulus/2 * sum over elements at node i of (h/2) strain^2.
        """
        e = 0.5 * modulus * self.strain(u) ** 2 * (0.5 * self.mesh.h)
        load = np.zeros(self.mesh.N)
        load[:-1] += e
        load[1:] += e
        return load

    def element_mean(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        return 0.5 * (c[:-1] + c[1:])


def assemble_operators(mesh: Mesh1D, lumped_mass: bool = False) -> Operators:
    N, h = mesh.N, mesh.h
    w = np.full(N, h)
    w[0] = w[-1] = 0.5 * h

    if lumped_mass:
        M = np.zeros((2, N))
        M[1] = w
    else:
        M = np.zeros((2, N))
        M[1] = 2.0 * h / 3.0
        M[1, 0] = M[1, -1] = h / 3.0
        M[0, 1:] = h / 6.0

    S = np.zeros((2, N))
    S[1] = 2.0 / h
    S[1, 0] = S[1, -1] = 1.0 / h
    S[0, 1:] = -1.0 / h
    return Operators(mesh=mesh, M=M, S=S, w=w, lumped=lumped_mass)


def weighted_stiffness_banded(mesh: Mesh1D, coeff_nodal, scale: float = 1.0) -> np.ndarray:
    """Banded stiffness for int c(x) u' v' with elementwise c = nodal mean."""
    ce = scale * 0.5 * (np.asarray(coeff_nodal, dtype=float)[:-1]
                        + np.asarray(coeff_nodal, dtype=float)[1:])
    N, h = mesh.N, mesh.h
    ab = np.zeros((2, N))
    ab[1, :-1] += ce / h
    ab[1, 1:] += ce / h
    ab[0, 1:] = -ce / h
    return ab


@dataclass(frozen=True)
class EigenBasis:
    """First n+1 eigenpairs of V S y = lambda M y, M-orthonormal columns."""

    mesh: Mesh1D
    n: int
    eigenvalues: np.ndarray       # (n+1,), lambda_0 = 0
    vectors: np.ndarray           # (N, n+1), first column constant

    @property
    def n_modes(self) -> int:
        return self.n

    def project(self, ops: Operators, field) -> np.ndarray:
        """M-orthogonal projection coefficients of a nodal field."""
        return self.vectors.T @ ops.mass_matvec(np.asarray(field, dtype=float))

    def synthesize(self, coeffs) -> np.ndarray:
        return self.vectors @ np.asarray(coeffs, dtype=float)

    def to_csv(self, path) -> None:
        header = ",".join(["x"] + [f"mode_{k}" for k in range(self.n + 1)])
        data = np.column_stack([self.mesh.nodes, self.vectors])
        rows = [",".join(f"{v:.17g}" for v in row) for row in data]
        with open(path, "w") as fh:
            fh.write(header + "\n" + "\n".join(rows) + "\n")


def neumann_eigenbasis(mesh: Mesh1D, V: float, n: int,
                       ops: Optional[Operators] = None,
                       tol_eig: float = 1e-9) -> EigenBasis:
    """Lowest n+1 Neumann eigenpairs of the operator -d/dx (V d/dx).

    The basis spans {1, y_1, ..., y_n}; modes k >= 1 have zero M-mean and
    residuals ||V S y - lambda M y|| (in the M^{-1} dual norm) below tol_eig.
    """
    if V <= 0:
        raise ValueError("V must be positive")
    if n < 0 or n >= mesh.N - 1:
        raise ValueError("mode count must satisfy 0 <= n < N-1")
    ops = ops if ops is not None else assemble_operators(mesh)
    A = V * banded_to_dense(ops.S)
    B = banded_to_dense(ops.M)
    vals, vecs = eigh(A, B, subset_by_index=[0, n])

    ones = np.ones(mesh.N)
    mass_tot = banded_quadform(ops.M, ones)
    vecs[:, 0] = ones / np.sqrt(mass_tot)
    vals[0] = 0.0

    for k in range(1, n + 1):
        yk = vecs[:, k]
        mean = banded_quadform(ops.M, ones, yk) / mass_tot
        yk = yk - mean
        nrm = np.sqrt(banded_quadform(ops.M, yk))
        yk /= nrm
        anchor = yk[0] if abs(yk[0]) > 1e-8 else yk[int(np.argmax(np.abs(yk)))]
        if anchor < 0:
            yk = -yk
        vecs[:, k] = yk

    # residual in the M^{-1} dual norm, relative to the eigenvalue scale
    Mb = ops.M if not ops.lumped else None
    for k in range(n + 1):
        r = V * banded_matvec(ops.S, vecs[:, k]) - vals[k] * banded_matvec(ops.M, vecs[:, k])
        if ops.lumped:
            rn = float(np.sqrt(np.dot(r, r / ops.w)))
        else:
            rn = float(np.sqrt(np.dot(r, solveh_banded(Mb, r))))
        if rn > tol_eig * (1.0 + abs(vals[k])):
            raise EigenSolveError(
                f"eigenpair {k} residual {rn:.3e} exceeds tol {tol_eig:.3e}")

    return EigenBasis(mesh=mesh, n=n, eigenvalues=vals, vectors=vecs)
