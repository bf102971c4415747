"""P1 finite elements for -Δu = f with homogeneous Dirichlet conditions.

All vectors exchanged with the rest of the package are full nodal vectors
(boundary nodes included, boundary entries zero).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import StructuredTriMesh

CG_RTOL = 1e-12


class SolverConvergenceError(RuntimeError):
    """Raised when conjugate gradients misses its residual tolerance."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


@dataclass(frozen=True, eq=False)
class P1Space:
    """Continuous piecewise-linear Lagrange space on a triangle mesh."""

    mesh: StructuredTriMesh
    interior_nodes: np.ndarray = field(repr=False)

    @classmethod
    def from_mesh(cls, mesh):
        interior = np.flatnonzero(~mesh.boundary_mask)
        interior.setflags(write=False)
        return cls(mesh, interior)

    @property
    def dof_count(self):
        return self.mesh.n_nodes

    @property
    def n_interior(self):
        return self.interior_nodes.size

    @property
    def interior_index_map(self):
        """Dict mapping interior node index to its reduced (interior) index."""
        return {int(k): r for r, k in enumerate(self.interior_nodes)}


def _element_data(mesh):
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    area = mesh.signed_areas()
    # gradient of barycentric coordinate k is the rotated opposite edge / (2|T|)
    opp = np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)  # p_{k+1} - p_{k-1}
    grads = np.stack([opp[..., 1], -opp[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    return area, grads


def _scatter(mesh, local, interior=None):
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    if interior is not None:
        mat = mat[interior][:, interior]
    return mat


def assemble_stiffness(space, interior_only=True):
    """Exact P1 stiffness matrix, restricted to interior nodes by default."""
    area, grads = _element_data(space.mesh)
    local = area[:, None, None] * np.einsum("tkd,tld->tkl", grads, grads)
    return _scatter(space.mesh, local, space.interior_nodes if interior_only else None)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(space):
    """Consistent P1 mass matrix over all nodes."""
    area = space.mesh.signed_areas()
    local = area[:, None, None] * _MASS_REF[None]
    return _scatter(space.mesh, local)


def conjugate_gradient(A, b, rtol=CG_RTOL, maxiter=None):
    """Jacobi-preconditioned CG, run independently on every column of ``b``.

    Returns ``(x, iterations)``. Raises SolverConvergenceError naming the
    first unconverged column.
    """
    b = np.asarray(b, dtype=float)
    squeeze = b.ndim == 1
    B = b[:, None] if squeeze else b
    n, m = B.shape
    maxiter = 10 * n if maxiter is None else maxiter
    inv_diag = 1.0 / A.diagonal()

    X = np.zeros_like(B)
    R = B.copy()
    bnorm = np.linalg.norm(B, axis=0)
    target = rtol * bnorm
    active = bnorm > 0
    Z = inv_diag[:, None] * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    it = 0
    while it < maxiter:
        rnorm = np.linalg.norm(R, axis=0)
        active &= rnorm > target
        if not active.any():
            break
        cols = np.flatnonzero(active)
        Pa = P[:, cols]
        AP = A @ Pa
        curv = np.einsum("ij,ij->j", Pa, AP)
        alpha = rz[cols] / curv
        X[:, cols] += alpha * Pa
        R[:, cols] -= alpha * AP
        Zc = inv_diag[:, None] * R[:, cols]
        rz_new = np.einsum("ij,ij->j", R[:, cols], Zc)
        P[:, cols] = Zc + (rz_new / rz[cols]) * Pa
        rz[cols] = rz_new
        it += 1
    else:
        rnorm = np.linalg.norm(R, axis=0)
        bad = np.flatnonzero(rnorm > target)
        if bad.size:
            raise SolverConvergenceError(
                f"CG did not reach rtol={rtol:g} in {maxiter} iterations "
                f"(column {int(bad[0])}, relative residual {rnorm[bad[0]] / bnorm[bad[0]]:.3e})",
                column=int(bad[0]))
    return (X[:, 0] if squeeze else X), it


class PoissonSolver:
    """Reusable assembled operators for repeated solves on one space."""

    def __init__(self, space):
        self.space = space
        self.stiffness = assemble_stiffness(space)
        self.mass = assemble_mass(space)

    def load(self, forcing_nodal):
        """Interior load vector ``(M f)`` restricted to interior nodes."""
        return (self.mass @ forcing_nodal)[self.space.interior_nodes]

    def solve(self, forcing_nodal):
        f = np.asarray(forcing_nodal, dtype=float)
        if f.shape[0] != self.space.dof_count:
            raise ValueError(f"forcing has {f.shape[0]} rows, expected {self.space.dof_count}")
        u_int, _ = conjugate_gradient(self.stiffness, self.load(f))
        u = np.zeros_like(f)
        u[self.space.interior_nodes] = u_int
        return u


def solve_poisson(space, forcing_nodal):
    """Solve -Δu = f, u = 0 on the boundary, for nodal forcing values.

    ``forcing_nodal`` may be a single vector of length ``N_h`` or an
    ``(N_h, m)`` array of independent right-hand sides.
    """
    return PoissonSolver(space).solve(forcing_nodal)
