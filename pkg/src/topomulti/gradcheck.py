"""Finite-difference verification of the full sensitivity chain on small meshes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .filtering import FilterConfig
from .interpolation import MaterialSet, SchemeKind
from .problem import Evaluator, OptimizationConfig, ProblemSpec, build_problem

TOLERANCE = 1e-4


@dataclass
class GradcheckResult:
    scheme: str
    filter: str
    nm: int
    compliance_error: float
    volume_error: float
    filtered_error: float

    @property
    def worst(self) -> float:
        return max(self.compliance_error, self.volume_error, self.filtered_error)

    @property
    def passed(self) -> bool:
        return self.worst < TOLERANCE


def relative_error(approx, reference, floor=1e-3) -> float:
    """Largest componentwise error relative to ``|reference|``, never below
    ``floor`` times its largest entry (so near-zero components are judged on
    the scale of the whole gradient)."""
    approx, reference = np.ravel(approx), np.ravel(reference)
    scale = np.maximum(np.abs(reference), floor * np.max(np.abs(reference)))
    return float(np.max(np.abs(approx - reference) / scale))


def central_difference(func, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    grads = []
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        grads.append((np.asarray(func(xp)) - np.asarray(func(xm))) / (2 * h))
    return np.stack(grads, axis=-1)


def check_chain(scheme, filter_kind, nm=2, seed=0, nelx=6, nely=3, beta=4.0, h=1e-6) -> GradcheckResult:
    """Compare the analytic gradients of compliance and volumes with central differences."""
    scheme = SchemeKind.parse(scheme)
    rng = np.random.default_rng(seed)
    spec = ProblemSpec("cantilever", nelx, nely, width=float(nelx), height=float(nely), load=1.0)
    moduli = tuple(float(v) for v in np.arange(1, nm + 1) * 1.5)
    radius = 1.5 if filter_kind == "sensitivity" else 1.0
    cfg = OptimizationConfig(
        materials=MaterialSet(moduli, norm_p=6.0, penal_n=3.0),
        volfrac=(0.5 / nm,) * nm,
        filter=FilterConfig(filter_kind, radius),
        scheme=scheme,
    )
    ev = Evaluator(build_problem(spec), cfg)
    beta = beta if filter_kind == "pde" else None
    x = rng.uniform(0.2, 0.8, size=ev.shape[0] * nm)

    exact = ev.evaluate(x, beta, filter_sensitivities=False)
    fd_c = central_difference(lambda y: ev.evaluate(y, beta).compliance, x, h)
    fd_v = central_difference(lambda y: ev.evaluate(y, beta).volumes, x, h)
    c_err = relative_error(exact.dc.ravel(), fd_c)
    v_err = max(relative_error(exact.dv[i].ravel(), fd_v[i]) for i in range(nm))

    filtered_err = 0.0
    if filter_kind == "sensitivity":
        # the reported gradient is the neighborhood mean of the true one
        filtered = ev.evaluate(x, beta).dc
        expected = ev.sens_matrix @ fd_c.reshape(ev.shape)
        filtered_err = relative_error(filtered, expected)
    return GradcheckResult(scheme.value, filter_kind, nm, c_err, v_err, filtered_err)


def run_all(seed=0, materials=(2, 3)) -> list[GradcheckResult]:
    results = []
    for scheme, kind, nm in itertools.product(SchemeKind, ("sensitivity", "pde"), materials):
        results.append(check_chain(scheme, kind, nm=nm, seed=seed))
    return results
