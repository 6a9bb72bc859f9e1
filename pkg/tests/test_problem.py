import math

import numpy as np
import pytest

from topomulti import gradcheck
from topomulti.fem import SolverError
from topomulti.filtering import FilterConfig, ProjectionConfig
from topomulti.interpolation import MaterialSet, SchemeKind, modulus
from topomulti.problem import (
    DesignField,
    Evaluator,
    OptimizationConfig,
    OptimizationError,
    ProblemSpec,
    build_problem,
    grayness,
    run_optimization,
)


def small_config(nm=2, kind="sensitivity", scheme="pnorm_mapping", max_iters=25, elem_size=1.0, **kw):
    """Filter radii are given in element widths, as in the shipped configurations."""
    moduli = {1: (1.0,), 2: (1.0, 5.0), 3: (1.0, 2.0, 5.0)}[nm]
    radius = (1.5 if kind == "sensitivity" else 4 / (2 * math.sqrt(3))) * elem_size
    return OptimizationConfig(
        materials=MaterialSet(moduli),
        volfrac=(0.5 / nm,) * nm,
        filter=FilterConfig(kind, radius),
        scheme=scheme,
        max_iters=max_iters,
        projection=ProjectionConfig(beta_initial=2, doubling_period=5, beta_max=8),
        **kw,
    )


class TestProblemSpec:
    def test_defaults(self):
        spec = ProblemSpec()
        assert (spec.nelx, spec.nely, spec.width, spec.height, spec.load) == (200, 100, 2.0, 1.0, 0.1)
        assert spec.elem_size == pytest.approx(0.01)

    def test_rejects_non_square_elements(self):
        with pytest.raises(ValueError, match="square"):
            ProblemSpec(nelx=10, nely=10, width=2, height=1)

    def test_rejects_unknown_geometry(self):
        with pytest.raises(ValueError):
            ProblemSpec("bridge")


class TestBuildProblem:
    def test_cantilever_supports_and_load(self):
        model = build_problem(ProblemSpec("cantilever"))
        grid = model.grid
        assert model.bc.fixed_dofs.size == 202
        assert len(model.bc.point_loads) == 1
        dof, mag = model.bc.point_loads[0]
        assert dof == 2 * grid.node(200, 100) + 1 and mag == -0.1
        assert dof not in model.bc.fixed_dofs

    def test_mbb_supports_and_load(self):
        model = build_problem(ProblemSpec("mbb_half"))
        grid = model.grid
        fixed = model.bc.fixed_dofs
        x_fixed = fixed[fixed % 2 == 0]
        y_fixed = fixed[fixed % 2 == 1]
        assert x_fixed.size == 101 and y_fixed.size == 1
        np.testing.assert_array_equal(np.sort(x_fixed // 2), grid.node(0, np.arange(101)))
        assert y_fixed[0] == 2 * grid.node(200, 100) + 1
        dof, mag = model.bc.point_loads[0]
        assert dof == 2 * grid.node(0, 0) + 1 and mag == -0.1
        assert dof not in fixed

    def test_mid_load_variant(self):
        model = build_problem(ProblemSpec("cantilever_mid", 8, 4, 2, 1))
        assert model.bc.point_loads[0][0] == 2 * model.grid.node(8, 2) + 1


class TestEvaluate:
    def test_uniform_volume(self):
        spec = ProblemSpec("cantilever", 6, 3, 6, 3)
        ev = Evaluator(build_problem(spec), small_config(nm=2))
        out = ev.evaluate(np.full(36, 0.25))
        np.testing.assert_allclose(out.volumes, 0.25, rtol=1e-15)

    def test_uniform_design_modulus_matches_single_element(self):
        spec = ProblemSpec("cantilever", 6, 3, 6, 3)
        cfg = small_config(nm=3)
        ev = Evaluator(build_problem(spec), cfg)
        out = ev.evaluate(np.full(18 * 3, 0.5))
        expected = modulus([0.5, 0.5, 0.5], cfg.materials, "pnorm")
        np.testing.assert_allclose(out.moduli, expected, rtol=1e-14)
        assert expected == pytest.approx(0.0641500, abs=5e-8)

    def test_sensitivity_mode_uses_raw_as_physical(self):
        spec = ProblemSpec("cantilever", 6, 3, 6, 3)
        ev = Evaluator(build_problem(spec), small_config())
        raw = np.random.default_rng(0).random(36)
        d = ev.design(raw)
        assert np.array_equal(d.physical, raw.reshape(18, 2)) and np.array_equal(d.filtered, d.physical)

    def test_pde_mode_needs_beta(self):
        spec = ProblemSpec("cantilever", 6, 3, 6, 3)
        ev = Evaluator(build_problem(spec), small_config(kind="pde"))
        with pytest.raises(ValueError):
            ev.evaluate(np.full(36, 0.5))
        d = ev.design(np.full(36, 0.5), 4.0)
        for f in (d.raw, d.filtered, d.physical):
            assert f.shape == (18, 2) and f.min() >= 0 and f.max() <= 1

    def test_compliance_is_work_of_load(self):
        spec = ProblemSpec("mbb_half", 8, 4, 2, 1)
        model = build_problem(spec)
        ev = Evaluator(model, small_config())
        out = ev.evaluate(np.full(64, 0.4))
        u = model.solve(out.moduli)
        assert out.compliance == pytest.approx(float(model.force @ u), rel=1e-14)
        assert out.compliance == pytest.approx(float(np.sum(out.moduli * model.element_energies(u))), rel=1e-8)


class TestGradients:
    @pytest.mark.parametrize("scheme", list(SchemeKind))
    @pytest.mark.parametrize("kind", ["sensitivity", "pde"])
    @pytest.mark.parametrize("nm", [2, 3])
    def test_full_chain_against_fd(self, scheme, kind, nm):
        r = gradcheck.check_chain(scheme, kind, nm=nm, seed=nm)
        assert r.compliance_error < 1e-4
        assert r.volume_error < 1e-4
        assert r.filtered_error < 1e-4

    def test_relative_error_floor(self):
        assert gradcheck.relative_error([1.0, 1e-9], [1.0, 0.0]) == pytest.approx(1e-6)
        assert gradcheck.relative_error([1.1], [1.0]) == pytest.approx(0.1)


class TestGrayness:
    def test_discrete(self):
        assert np.all(grayness(np.array([[0.0, 1.0], [1.0, 0.0]])) == 0)

    def test_half(self):
        np.testing.assert_allclose(grayness(np.full((10, 3), 0.5)), 1.0)

    def test_mixed(self):
        field = np.zeros((8, 1))
        field[:4] = 0.25
        assert grayness(field)[0] == pytest.approx(0.375)

    def test_accepts_design_field(self):
        f = np.full((4, 2), 0.5)
        assert np.allclose(grayness(DesignField(f, f, f)), 1.0)


class TestRunOptimization:
    def test_history_and_constraints(self):
        spec = ProblemSpec("cantilever", 30, 15, 2, 1)
        cfg = small_config(nm=2, max_iters=60, elem_size=spec.elem_size)
        design, history = run_optimization(spec, cfg)
        assert [r.iteration for r in history] == list(range(1, len(history) + 1))
        assert math.isnan(history[0].change)
        last = history[-1]
        assert np.all(np.asarray(last.volumes) <= np.asarray(cfg.volfrac) + cfg.tol_constraint)
        assert history.compliance[-1] < history.compliance[0]
        assert design.physical.shape == (450, 2)
        if len(history) < cfg.max_iters:
            assert last.change < cfg.tol_change

    def test_deterministic(self):
        spec = ProblemSpec("mbb_half", 20, 10, 2, 1)
        cfg = small_config(nm=3, kind="pde", max_iters=12, elem_size=spec.elem_size)
        d1, h1 = run_optimization(spec, cfg)
        d2, h2 = run_optimization(spec, cfg)
        assert h1.records == h2.records
        assert np.array_equal(d1.physical, d2.physical)

    def test_beta_schedule_recorded(self):
        spec = ProblemSpec("cantilever", 12, 6, 2, 1)
        _, history = run_optimization(spec, small_config(kind="pde", max_iters=12, elem_size=spec.elem_size))
        assert [r.beta for r in history][:11] == [2.0] * 5 + [4.0] * 5 + [8.0]

    @pytest.mark.parametrize("kind", ["sensitivity", "pde"])
    def test_mirror_symmetric_problem_gives_symmetric_design(self, kind):
        spec = ProblemSpec("cantilever_mid", 24, 12, 2, 1)
        design, _ = run_optimization(spec, small_config(nm=2, kind=kind, max_iters=30, elem_size=spec.elem_size))
        for i in range(2):
            img = design.physical[:, i].reshape(24, 12).T
            np.testing.assert_allclose(img, img[::-1], atol=1e-6)

    def test_callback_sees_every_record(self):
        seen = []
        spec = ProblemSpec("cantilever", 10, 5, 2, 1)
        _, history = run_optimization(spec, small_config(max_iters=5, elem_size=spec.elem_size), callback=lambda r, ev: seen.append(r))
        assert seen == history.records

    def test_solver_failure_reports_iteration_and_last_design(self, monkeypatch):
        from topomulti import fem

        calls = {"n": 0}
        original = fem.FEModel.solve

        def flaky(self, moduli):
            calls["n"] += 1
            if calls["n"] == 4:
                raise SolverError("injected")
            return original(self, moduli)

        monkeypatch.setattr(fem.FEModel, "solve", flaky)
        spec = ProblemSpec("cantilever", 10, 5, 2, 1)
        with pytest.raises(OptimizationError) as info:
            run_optimization(spec, small_config(max_iters=10, elem_size=spec.elem_size))
        err = info.value
        assert err.iteration == 4 and len(err.history) == 3
        assert isinstance(err.cause, SolverError)
        assert err.design.physical.shape == (50, 2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_config(nm=2).__class__(MaterialSet((1.0, 5.0)), (0.25,), FilterConfig("sensitivity", 1.5))
        with pytest.raises(ValueError):
            OptimizationConfig(MaterialSet((1.0,)), (1.5,), FilterConfig("sensitivity", 1.5))
