"""Structured Q4 plane-stress finite elements.

Numbering follows the classic 88-line convention: nodes are numbered column by
column starting at the top-left corner (``node = ix * (nely + 1) + iy`` with
``iy`` counted downwards), elements likewise (``e = ex * nely + ey``), and each
node carries dofs ``2 * node`` (x) and ``2 * node + 1`` (y, positive upwards).
Element dofs are ordered bottom-left, bottom-right, top-right, top-left.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from sksparse.cholmod import analyze as _cholmod_analyze
except ImportError:  # pragma: no cover - optional accelerator
    _cholmod_analyze = None

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    pass


def unit_element_stiffness(poisson: float = 0.3) -> np.ndarray:
    """8x8 stiffness of a unit square, unit-thickness, E = 1 plane-stress element."""
    nu = float(poisson)
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return k[idx] / (1 - nu**2)


@dataclass(frozen=True)
class StructuredGrid:
    nelx: int
    nely: int
    elem_size: float = 1.0

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ValueError("grid needs at least one element in each direction")
        if not self.elem_size > 0:
            raise ValueError("elem_size must be positive")

    @property
    def ne(self) -> int:
        return self.nelx * self.nely

    @property
    def nnodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def ndof(self) -> int:
        return 2 * self.nnodes

    def node(self, ix, iy):
        """Node id at column ``ix`` (from the left) and row ``iy`` (from the top)."""
        return np.asarray(ix) * (self.nely + 1) + np.asarray(iy)

    def edof(self) -> np.ndarray:
        """(NE, 8) element-to-dof table."""
        ex, ey = np.meshgrid(np.arange(self.nelx), np.arange(self.nely), indexing="ij")
        ex, ey = ex.ravel(), ey.ravel()
        nodes = np.stack([
            self.node(ex, ey + 1), self.node(ex + 1, ey + 1),
            self.node(ex + 1, ey), self.node(ex, ey),
        ], axis=1)
        return np.repeat(2 * nodes, 2, axis=1) + np.tile([0, 1], 4)

    def centers(self) -> np.ndarray:
        """(NE, 2) element centers, x to the right and y downwards from the top-left corner."""
        ex, ey = np.meshgrid(np.arange(self.nelx), np.arange(self.nely), indexing="ij")
        return (np.stack([ex.ravel(), ey.ravel()], axis=1) + 0.5) * self.elem_size

    def to_image(self, field) -> np.ndarray:
        """Reshape an element field to (nely, nelx) with row 0 at the top."""
        return np.asarray(field).reshape(self.nelx, self.nely).T


@dataclass
class BoundaryConditions:
    fixed_dofs: np.ndarray
    point_loads: list[tuple[int, float]]

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=int))
        if self.fixed_dofs.size == 0:
            raise ValueError("at least one dof must be fixed")
        loaded = {d for d, _ in self.point_loads}
        if loaded & set(self.fixed_dofs.tolist()):
            raise ValueError("a loaded dof is also fixed")

    def force(self, ndof: int) -> np.ndarray:
        f = np.zeros(ndof)
        for dof, mag in self.point_loads:
            f[dof] += mag
        return f


def assemble(grid: StructuredGrid, moduli, k0) -> sp.csc_matrix:
    """Global stiffness ``sum_e E_e * k0`` scattered onto the grid dofs."""
    moduli = np.asarray(moduli, dtype=float)
    if moduli.shape != (grid.ne,):
        raise ValueError(f"expected {grid.ne} element moduli, got shape {moduli.shape}")
    if np.any(moduli <= 0):
        raise ValueError("element moduli must be positive")
    edof = grid.edof()
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    vals = (moduli[:, None] * np.asarray(k0).ravel()[None, :]).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(grid.ndof, grid.ndof)).tocsc()


def compliance(u, f) -> float:
    return float(np.dot(f, u))


def element_energies(u, grid: StructuredGrid, k0) -> np.ndarray:
    """q_e = u_e^T k0 u_e for every element."""
    ue = np.asarray(u)[grid.edof()]
    return np.einsum("ij,jk,ik->i", ue, k0, ue)


def solve(k, f, fixed_dofs) -> np.ndarray:
    """Solve ``K u = f`` with homogeneous Dirichlet conditions on ``fixed_dofs``.

    Convenience wrapper; the optimization loop uses :class:`FEModel` which keeps
    the sparsity analysis between solves.
    """
    k = sp.csc_matrix(k)
    free = np.setdiff1d(np.arange(k.shape[0]), fixed_dofs)
    u = np.zeros(k.shape[0])
    kf = k[free][:, free]
    ff = np.asarray(f, dtype=float)[free]
    if not np.any(ff):
        return u
    uf, solver = _factor_and_solve(kf, ff)
    u[free] = _refine(kf, uf, ff, solver)
    return u


def _factor_and_solve(kf, ff, symbolic=None):
    """Factor ``kf`` and solve; returns the solution and a reusable solve callable.

    With CHOLMOD the callable is the factor object, whose symbolic analysis can
    be handed back in as ``symbolic`` for a matrix with the same pattern.
    """
    try:
        if _cholmod_analyze is not None:
            factor = symbolic if symbolic is not None else _cholmod_analyze(kf)
            factor.cholesky_inplace(kf)
            return factor(ff), factor
        lu = spla.splu(kf, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        return lu.solve(ff), lu.solve
    except Exception as exc:  # cholmod raises its own error types
        raise SolverError(f"factorization failed on {kf.shape[0]} free dofs: {exc}") from exc


def _residual_bound(kf, uf, fnorm):
    """Acceptable ``||K u - f||``: the relative bound, or the float64 rounding floor
    when a floating island of stiff material makes that bound unrepresentable."""
    floor = 64 * np.finfo(float).eps * np.linalg.norm(abs(kf) @ np.abs(uf))
    return max(RESIDUAL_TOL * fnorm, floor)


def _refine(kf, uf, ff, solver, max_steps=3):
    fnorm = np.linalg.norm(ff)
    for _ in range(max_steps + 1):
        r = ff - kf @ uf
        rnorm = np.linalg.norm(r)
        if not np.isfinite(rnorm):
            break
        if rnorm <= _residual_bound(kf, uf, fnorm):
            if rnorm > RESIDUAL_TOL * fnorm:
                log.debug("residual %.3e at the rounding floor", rnorm / fnorm)
            return uf
        uf = uf + solver(r)
    raise SolverError(f"relative residual {rnorm / fnorm:.3e} exceeds {RESIDUAL_TOL:g} (near-singular stiffness?)")


@dataclass
class FEModel:
    """A grid with its boundary conditions and a reusable assembly pattern.

    Assembly writes straight into the data array of the reduced (free-dof)
    stiffness, whose sparsity pattern and fill-reducing ordering are computed
    once.
    """

    grid: StructuredGrid
    bc: BoundaryConditions
    poisson: float = 0.3
    k0: np.ndarray = field(init=False, repr=False)
    force: np.ndarray = field(init=False, repr=False)
    free: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.k0 = unit_element_stiffness(self.poisson)
        self.force = self.bc.force(self.grid.ndof)
        self.free = np.setdiff1d(np.arange(self.grid.ndof), self.bc.fixed_dofs)
        self._edof = self.grid.edof()

        ndof = self.grid.ndof
        reduced = -np.ones(ndof, dtype=np.int64)
        reduced[self.free] = np.arange(self.free.size)
        rows = reduced[np.repeat(self._edof, 8, axis=1)].ravel()
        cols = reduced[np.tile(self._edof, (1, 8))].ravel()
        keep = (rows >= 0) & (cols >= 0)
        nf = self.free.size
        # unique (row, col) pairs in CSC order, plus a map from each kept entry
        key = cols[keep].astype(np.int64) * nf + rows[keep]
        uniq, self._slot = np.unique(key, return_inverse=True)
        self._keep = keep
        self._kvals = np.tile(self.k0.ravel(), self.grid.ne)[keep]
        self._elem_of_entry = np.repeat(np.arange(self.grid.ne), 64)[keep]
        urow = (uniq % nf).astype(np.int32)
        ucol = (uniq // nf).astype(np.int64)
        indptr = np.searchsorted(ucol, np.arange(nf + 1)).astype(np.int32)
        self._pattern = (urow, indptr, nf, uniq.size)
        self._symbolic = None

    def reduced_stiffness(self, moduli) -> sp.csc_matrix:
        moduli = np.asarray(moduli, dtype=float)
        if moduli.shape != (self.grid.ne,):
            raise ValueError(f"expected {self.grid.ne} element moduli, got shape {moduli.shape}")
        if np.any(moduli <= 0):
            raise ValueError("element moduli must be positive")
        urow, indptr, nf, nnz = self._pattern
        data = np.bincount(self._slot, weights=self._kvals * moduli[self._elem_of_entry], minlength=nnz)
        return sp.csc_matrix((data, urow, indptr), shape=(nf, nf))

    def stiffness(self, moduli) -> sp.csc_matrix:
        return assemble(self.grid, moduli, self.k0)

    def solve(self, moduli) -> np.ndarray:
        u = np.zeros(self.grid.ndof)
        ff = self.force[self.free]
        if not np.any(ff):
            return u
        kf = self.reduced_stiffness(moduli)
        uf, solver = _factor_and_solve(kf, ff, self._symbolic)
        if _cholmod_analyze is not None:
            self._symbolic = solver
        u[self.free] = _refine(kf, uf, ff, solver)
        return u

    def element_energies(self, u) -> np.ndarray:
        ue = u[self._edof]
        return np.einsum("ij,jk,ik->i", ue, self.k0, ue)
