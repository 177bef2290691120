import math

import numpy as np
import pytest

from tmfa.circuit import with_modulation
from tmfa.hbsolver import SolverError, sparams
from tmfa.optimizer import (IL_GUARD_DB, ModulationBounds, SimplexConfig, chebyshev_reflection,
                            equiripple_metrics, modulation_metrics, nelder_mead,
                            optimize_modulation, tune_equiripple)
from tmfa.synth import FilterSpec, ripple_from_return_loss

F0 = 2.4e9


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


class TestNelderMead:
    def test_quadratic(self):
        rep = nelder_mead(lambda x: (x[0] - 3.0) ** 2, [0.0])
        assert rep.x[0] == pytest.approx(3.0, abs=1e-6)
        assert rep.converged

    @pytest.mark.parametrize("x0", [(-1.2, 1.0), (0.0, 0.0), (2.0, 2.0), (-2.0, 3.0)])
    def test_rosenbrock(self, x0):
        rep = nelder_mead(rosenbrock, x0, SimplexConfig(max_iter=500))
        assert rep.fun <= 1e-6
        assert rep.nit <= 500

    def test_plateau(self):
        rep = nelder_mead(lambda x: 1.0, [0.3, -0.2])
        assert rep.converged
        assert rep.fun == 1.0

    def test_non_finite_points_rejected(self):
        def f(x):
            if x[0] < 0.5:
                return math.nan
            if x[0] > 4.0:
                raise SolverError("boom")
            return (x[0] - 1.0) ** 2
        rep = nelder_mead(f, [2.0])
        assert rep.x[0] == pytest.approx(1.0, abs=1e-4)

    def test_non_finite_start(self):
        with pytest.raises(ValueError, match="starting point"):
            nelder_mead(lambda x: math.inf, [0.0])

    def test_trace_monotone(self):
        rep = nelder_mead(rosenbrock, [-1.2, 1.0])
        vals = [v for _, v in rep.trace]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == rep.fun

    def test_deterministic(self):
        a = nelder_mead(rosenbrock, [-1.2, 1.0])
        b = nelder_mead(rosenbrock, [-1.2, 1.0])
        assert a.nfev == b.nfev
        for (xa, va), (xb, vb) in zip(a.trace, b.trace):
            assert va == vb
            np.testing.assert_array_equal(xa, xb)

    def test_iteration_cap(self):
        rep = nelder_mead(rosenbrock, [-1.2, 1.0], SimplexConfig(max_iter=5))
        assert rep.nit == 5 and not rep.converged

    @pytest.mark.parametrize("kwargs", [dict(alpha=0.5), dict(gamma=0.9), dict(rho=1.0),
                                        dict(sigma=0.0), dict(max_iter=0)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            SimplexConfig(**kwargs)


class TestTuner:
    def test_chebyshev_reflection_profile(self, spec):
        lo, hi = spec.band_edges
        peak = 10 ** (-spec.rl / 20)
        assert chebyshev_reflection(lo, spec) == pytest.approx(peak, rel=1e-9)
        assert chebyshev_reflection(hi, spec) == pytest.approx(peak, rel=1e-9)
        # odd order: reflection zero at the centre
        assert chebyshev_reflection(spec.f0, spec) == pytest.approx(0.0, abs=1e-12)
        eps2 = 10 ** (ripple_from_return_loss(spec.rl) / 10) - 1
        assert peak ** 2 == pytest.approx(eps2 / (1 + eps2), rel=1e-12)

    def test_tuned_meets_target(self, tuned, spec):
        m = equiripple_metrics(tuned, spec)
        assert m["min_rl_db"] >= 13.0
        assert m["reflection_zeros"] == 3

    def test_lossless_meets_target(self, lossless_tuned, spec):
        m = equiripple_metrics(lossless_tuned, spec)
        assert m["min_rl_db"] >= 13.0
        assert m["reflection_zeros"] == 3

    def test_idempotent(self, tuned, spec):
        again = tune_equiripple(tuned, spec)
        np.testing.assert_allclose(again.C0, tuned.C0, rtol=1e-6)
        np.testing.assert_allclose(again.cc, tuned.cc, rtol=1e-6)
        assert again.ce_in == pytest.approx(tuned.ce_in, rel=1e-6)

    def test_antenna_loaded(self, model):
        assert model.tuning["rl_loaded_db"] >= 11.0
        assert model.tuning["zeros_loaded"] == 3

    def test_unreachable_target_warns(self, tuned, caplog):
        spec = FilterSpec(rl=30.0)
        out = tune_equiripple(tuned, spec, config=SimplexConfig(step=0.02, max_iter=20))
        assert out is not None
        assert "target missed" in caplog.text

    def test_rejects_modulated(self, tuned, spec):
        with pytest.raises(ValueError, match="static"):
            tune_equiripple(with_modulation(tuned, 75e6, 0.05, 0.3), spec)


class TestModulationSearch:
    def test_reaches_twenty_db(self, optimum):
        assert optimum.isolation_db >= 20.0
        assert optimum.il_mod_db - optimum.il_static_db <= IL_GUARD_DB + 1e-9

    def test_reported_point_reproduces(self, model, optimum):
        fm, dm, dphi = optimum.x
        iso, il = modulation_metrics(model.ladder, F0, fm, dm, dphi, optimum.il_static_db)
        assert iso == optimum.isolation_db
        assert il == optimum.il_mod_db

    def test_penalty_by_construction(self, optimum):
        excess = optimum.il_mod_db - optimum.il_static_db - IL_GUARD_DB
        assert optimum.il_penalty_db == max(0.0, excess)
        assert optimum.il_mod_db - optimum.il_static_db <= 1.0 + optimum.il_penalty_db

    def test_trace_monotone(self, optimum):
        vals = [v for _, v in optimum.trace]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_sign_flip(self, model, optimum):
        fm, dm, dphi = optimum.x
        a = sparams(with_modulation(model.ladder, fm, dm, dphi), F0)
        b = sparams(with_modulation(model.ladder.mirrored(), fm, dm, -dphi), F0)
        assert b.s12_db == pytest.approx(a.s21_db, abs=1e-8)
        assert b.s21_db == pytest.approx(a.s12_db, abs=1e-8)

    def test_zero_phase_is_reciprocal(self, model):
        bounds = ModulationBounds(delta_phi=(0.0, 0.0))
        rep = optimize_modulation(model, F0, bounds, seeds=((75e6, 0.09, 0.0),), grid=(3, 3, 1),
                                  n_starts=2)
        assert abs(rep.isolation_db) <= 0.01
        assert rep.x[2] == 0.0

    def test_zero_depth_baseline(self, model):
        iso, _ = modulation_metrics(model.ladder, F0, 75e6, 0.0, 1.0, 0.0)
        assert iso == pytest.approx(0.0, abs=1e-10)

    def test_deterministic_small_grid(self, model):
        kw = dict(grid=(2, 2, 3), n_starts=1, config=SimplexConfig(step=0.5, max_iter=30))
        a = optimize_modulation(model, F0, **kw)
        b = optimize_modulation(model, F0, **kw)
        assert a.to_text() == b.to_text()
        assert [v for _, v in a.trace] == [v for _, v in b.trace]

    def test_report_text(self, optimum):
        text = optimum.to_text()
        for key in ("objective", "fm_hz", "delta_m", "delta_phi_deg", "isolation_db"):
            assert key in text
