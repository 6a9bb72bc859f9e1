"""Regularization: neighborhood sensitivity filter, Helmholtz density filter,
tanh projection and its continuation schedule."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .fem import StructuredGrid

FILTER_KINDS = ("sensitivity", "pde")


@dataclass(frozen=True)
class FilterConfig:
    """``radius`` is R for the sensitivity filter and R_min for the PDE filter,
    both in length units."""

    kind: str
    radius: float

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"filter kind must be one of {FILTER_KINDS}, got {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("filter radius must be positive")


@dataclass(frozen=True)
class ProjectionConfig:
    beta_initial: float = 2.0
    doubling_period: int = 50
    beta_max: float = 64.0

    def __post_init__(self):
        if not self.beta_initial > 0:
            raise ValueError("beta_initial must be positive")
        if self.doubling_period < 1:
            raise ValueError("doubling_period must be >= 1")
        if self.beta_max < self.beta_initial:
            raise ValueError("beta_max must be >= beta_initial")


def neighborhood_matrix(grid: StructuredGrid, radius: float) -> sp.csr_matrix:
    """Row-normalized 0/1 matrix averaging over elements whose centers lie within ``radius``."""
    centers = grid.centers()
    tree = cKDTree(centers)
    # small slack so that e.g. R = sqrt(2) r_e reliably catches the diagonal
    pairs = tree.query_pairs(radius * (1 + 1e-12) + 1e-14 * grid.elem_size, output_type="ndarray")
    ne = grid.ne
    rows = np.concatenate([np.arange(ne), pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([np.arange(ne), pairs[:, 1], pairs[:, 0]])
    h = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(ne, ne))
    counts = np.asarray(h.sum(axis=1)).ravel()
    return sp.diags(1.0 / counts) @ h


def sensitivity_filter(field, grid: StructuredGrid, radius: float, matrix=None):
    """Unweighted neighborhood mean of an element field (or of each column)."""
    h = neighborhood_matrix(grid, radius) if matrix is None else matrix
    return h @ np.asarray(field, dtype=float)


class HelmholtzFilter:
    """Cell-centered discretization of ``-R^2 lap(u) + u = gamma`` with Neumann walls.

    ``A = R^2 K_L + M`` where ``K_L`` is the two-point flux Laplacian between
    edge-sharing elements and ``M = r_e^2 I`` the lumped cell mass. Boundary
    faces carry no flux, which is the homogeneous Neumann condition.
    """

    def __init__(self, grid: StructuredGrid, r_min: float):
        if not r_min > 0:
            raise ValueError("r_min must be positive")
        self.grid = grid
        self.r_min = float(r_min)
        nelx, nely = grid.nelx, grid.nely
        idx = np.arange(grid.ne).reshape(nelx, nely)
        a = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
        b = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
        ne = grid.ne
        # square cells: face length / center distance = 1
        adj = sp.csr_matrix((np.ones(a.size), (a, b)), shape=(ne, ne))
        adj = adj + adj.T
        self.laplacian = (sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj).tocsc()
        self.mass = grid.elem_size**2
        self.operator = (self.r_min**2 * self.laplacian + self.mass * sp.identity(ne, format="csc")).tocsc()
        try:
            self._lu = spla.splu(self.operator)
        except RuntimeError as exc:
            raise ValueError(f"Helmholtz operator factorization failed: {exc}") from exc

    def _check(self, field):
        field = np.asarray(field, dtype=float)
        if field.shape[0] != self.grid.ne:
            raise ValueError(f"field has {field.shape[0]} rows, grid has {self.grid.ne} elements")
        return field

    def apply(self, field):
        """Filtered field ``A^-1 M field``; columns are filtered independently."""
        field = self._check(field)
        return self._lu.solve(self.mass * field)

    def chain(self, sensitivity):
        """Pull d(.)/d(filtered) back to d(.)/d(raw): ``M A^-1 s``."""
        sensitivity = self._check(sensitivity)
        return self.mass * self._lu.solve(sensitivity)


def helmholtz_build(grid: StructuredGrid, r_min: float) -> HelmholtzFilter:
    return HelmholtzFilter(grid, r_min)


def helmholtz_apply(op: HelmholtzFilter, field):
    return op.apply(field)


def helmholtz_chain(op: HelmholtzFilter, sensitivity):
    return op.chain(sensitivity)


def projection(field, beta: float):
    t = np.tanh(beta / 2)
    # rounding in t + tanh(...) can leave values a few ulps outside [0, 1]
    return np.clip((t + np.tanh(beta * (np.asarray(field) - 0.5))) / (2 * t), 0.0, 1.0)


def projection_derivative(field, beta: float):
    t = np.tanh(beta / 2)
    return beta * (1 - np.tanh(beta * (np.asarray(field) - 0.5)) ** 2) / (2 * t)


def continuation_step(config: ProjectionConfig, iteration: int) -> float:
    """Sharpness for a 1-based iteration: doubles every ``doubling_period`` iterations, capped."""
    if iteration < 1:
        raise ValueError("iteration is 1-based")
    beta = config.beta_initial * 2.0 ** ((iteration - 1) // config.doubling_period)
    return float(min(beta, config.beta_max))
