"""Benchmark problems, the design-to-compliance evaluation chain, and the
optimization loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import filtering
from .fem import BoundaryConditions, FEModel, SolverError, StructuredGrid
from .filtering import FilterConfig, HelmholtzFilter, ProjectionConfig
from .interpolation import (
    MaterialSet,
    SchemeKind,
    modulus,
    modulus_gradient,
    volume_fractions,
    volume_fractions_vjp,
)
from .mma import MMAError, MmaParams, mma_init, mma_step

log = logging.getLogger(__name__)

GEOMETRIES = ("cantilever", "mbb_half", "cantilever_mid")


@dataclass(frozen=True)
class ProblemSpec:
    """Rectangular design domain with one of the supported support/load layouts.

    ``cantilever_mid`` (load at the middle of the right edge) is symmetric about
    the horizontal center line and exists for testing.
    """

    geometry: str = "cantilever"
    nelx: int = 200
    nely: int = 100
    width: float = 2.0
    height: float = 1.0
    load: float = 0.1
    poisson: float = 0.3

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if self.nelx < 1 or self.nely < 1:
            raise ValueError("nelx and nely must be >= 1")
        if not math.isclose(self.width / self.nelx, self.height / self.nely, rel_tol=1e-9):
            raise ValueError("elements must be square: width/nelx != height/nely")
        if self.geometry == "cantilever_mid" and self.nely % 2:
            raise ValueError("cantilever_mid needs an even nely to load the middle node")

    @property
    def elem_size(self) -> float:
        return self.width / self.nelx


def build_problem(spec: ProblemSpec) -> FEModel:
    grid = StructuredGrid(spec.nelx, spec.nely, spec.elem_size)
    left = grid.node(0, np.arange(spec.nely + 1))
    if spec.geometry in ("cantilever", "cantilever_mid"):
        fixed = np.concatenate([2 * left, 2 * left + 1])
        row = spec.nely if spec.geometry == "cantilever" else spec.nely // 2
        loaded = grid.node(spec.nelx, row)
    else:
        support = grid.node(spec.nelx, spec.nely)
        fixed = np.concatenate([2 * left, [2 * support + 1]])
        loaded = grid.node(0, 0)
    bc = BoundaryConditions(fixed, [(int(2 * loaded + 1), -spec.load)])
    return FEModel(grid, bc, spec.poisson)


@dataclass
class OptimizationConfig:
    materials: MaterialSet
    volfrac: tuple[float, ...]
    filter: FilterConfig
    scheme: SchemeKind = SchemeKind.PNORM
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    max_iters: int = 200
    tol_change: float = 0.01
    tol_constraint: float = 1e-4
    initial: float = 0.5
    mma: MmaParams = field(default_factory=MmaParams)

    def __post_init__(self):
        self.scheme = SchemeKind.parse(self.scheme)
        self.volfrac = tuple(float(v) for v in self.volfrac)
        if len(self.volfrac) != self.materials.nm:
            raise ValueError(f"{len(self.volfrac)} volume fractions for {self.materials.nm} materials")
        if any(not 0 < v <= 1 for v in self.volfrac):
            raise ValueError("volume fractions must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 <= self.initial <= 1:
            raise ValueError("initial design value must lie in [0, 1]")

    @property
    def uses_projection(self) -> bool:
        return self.filter.kind == "pde"


@dataclass
class DesignField:
    raw: np.ndarray
    filtered: np.ndarray
    physical: np.ndarray


@dataclass
class Evaluation:
    compliance: float
    volumes: np.ndarray
    dc: np.ndarray
    dv: np.ndarray
    design: DesignField
    moduli: np.ndarray
    beta: float | None


@dataclass
class IterationRecord:
    iteration: int
    compliance: float
    volumes: tuple[float, ...]
    grayness: tuple[float, ...]
    change: float
    beta: float | None


@dataclass
class OptimizationHistory:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, record: IterationRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration index must increase")
        self.records.append(record)

    @property
    def compliance(self) -> np.ndarray:
        return np.array([r.compliance for r in self.records])

    @property
    def volumes(self) -> np.ndarray:
        return np.array([r.volumes for r in self.records])


class OptimizationError(RuntimeError):
    """Raised when the solver or optimizer fails; keeps the last good state."""

    def __init__(self, iteration, design, history, cause):
        super().__init__(f"optimization failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.design = design
        self.history = history
        self.cause = cause


def grayness(design: DesignField | np.ndarray, scheme=SchemeKind.PNORM) -> np.ndarray:
    """Per-material mean of 4 f (1 - f) over the material fractions f of the physical field."""
    phys = design.physical if isinstance(design, DesignField) else np.asarray(design)
    frac = volume_fractions(phys, scheme)
    return np.mean(4 * frac * (1 - frac), axis=0)


class Evaluator:
    """Forward chain and exact reverse-mode sensitivities for one problem.

    With the sensitivity filter the raw variables are the physical densities
    and the neighborhood mean is applied to the compliance gradient. With the
    PDE filter the chain is raw -> Helmholtz -> projection -> physical.
    """

    def __init__(self, model: FEModel, cfg: OptimizationConfig):
        self.model = model
        self.cfg = cfg
        grid = model.grid
        if cfg.filter.kind == "sensitivity":
            self.sens_matrix = filtering.neighborhood_matrix(grid, cfg.filter.radius)
            self.helmholtz = None
        else:
            self.sens_matrix = None
            self.helmholtz = HelmholtzFilter(grid, cfg.filter.radius)

    @property
    def shape(self):
        return (self.model.grid.ne, self.cfg.materials.nm)

    def design(self, raw, beta=None) -> DesignField:
        raw = np.asarray(raw, dtype=float).reshape(self.shape)
        if self.helmholtz is None:
            return DesignField(raw, raw, raw)
        filtered = np.clip(self.helmholtz.apply(raw), 0.0, 1.0)
        return DesignField(raw, filtered, filtering.projection(filtered, beta))

    def evaluate(self, raw, beta=None, filter_sensitivities=True) -> Evaluation:
        if self.helmholtz is not None and beta is None:
            raise ValueError("the PDE filter chain needs a projection sharpness beta")
        cfg = self.cfg
        mats, scheme = cfg.materials, cfg.scheme
        design = self.design(raw, beta)
        phys = design.physical
        ne, nm = phys.shape

        e_mod = modulus(phys, mats, scheme)
        u = self.model.solve(e_mod)
        c = float(self.model.force @ u)
        q = self.model.element_energies(u)
        dc = -modulus_gradient(phys, mats, scheme) * q[:, None]

        volumes = np.mean(volume_fractions(phys, scheme), axis=0)
        dv = np.empty((nm, ne, nm))
        for i in range(nm):
            cot = np.zeros((ne, nm))
            cot[:, i] = 1.0 / ne
            dv[i] = volume_fractions_vjp(phys, scheme, cot)

        if self.helmholtz is not None:
            dproj = filtering.projection_derivative(design.filtered, beta)
            dc = self.helmholtz.chain(dc * dproj)
            for i in range(nm):
                dv[i] = self.helmholtz.chain(dv[i] * dproj)
        elif filter_sensitivities:
            dc = self.sens_matrix @ dc
        return Evaluation(c, volumes, dc, dv, design, e_mod, beta)


def run_optimization(spec: ProblemSpec, cfg: OptimizationConfig, callback=None):
    """Minimize compliance under one volume constraint per material.

    Returns the final :class:`DesignField` and the :class:`OptimizationHistory`.
    Each history row describes the design evaluated at that iteration; its
    ``change`` is the largest variable update that produced it (nan on the
    first row). ``callback(record, evaluation)`` is invoked after every
    evaluation.
    """
    model = build_problem(spec)
    evaluator = Evaluator(model, cfg)
    v0 = np.asarray(cfg.volfrac)
    x = np.full(evaluator.shape[0] * evaluator.shape[1], cfg.initial)
    state = mma_init(x, 0.0, 1.0, cfg.mma)
    history = OptimizationHistory()
    change = math.nan
    last = None

    for it in range(1, cfg.max_iters + 1):
        beta = filtering.continuation_step(cfg.projection, it) if cfg.uses_projection else None
        try:
            ev = evaluator.evaluate(x, beta)
        except SolverError as exc:
            design = last.design if last is not None else evaluator.design(x, beta)
            raise OptimizationError(it, design, history, exc) from exc
        last = ev
        gray = grayness(ev.design, cfg.scheme)
        record = IterationRecord(it, ev.compliance, tuple(ev.volumes), tuple(gray), change, beta)
        history.append(record)
        if callback is not None:
            callback(record, ev)
        log.debug("it %d c %.6g V %s change %.4f", it, ev.compliance, np.round(ev.volumes, 4), change)

        g = ev.volumes / v0 - 1.0
        feasible = np.all(ev.volumes <= v0 + cfg.tol_constraint)
        schedule_done = not cfg.uses_projection or beta >= cfg.projection.beta_max
        if it > 1 and change < cfg.tol_change and feasible and schedule_done:
            break
        if it == cfg.max_iters:
            break
        dg = ev.dv.reshape(len(v0), -1) / v0[:, None]
        try:
            x_new = mma_step(state, x, ev.compliance, ev.dc.ravel(), g, dg)
        except MMAError as exc:
            raise OptimizationError(it, ev.design, history, exc) from exc
        change = float(np.max(np.abs(x_new - x)))
        x = x_new

    return last.design, history
