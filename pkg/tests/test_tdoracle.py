import math

import numpy as np
import pytest

from tmfa.circuit import ImpedanceTable, with_load, with_modulation
from tmfa.hbsolver import sparams
from tmfa.tdoracle import (CommensurabilityError, IntegrationError, NodalNetwork, NotSettledError,
                           OracleError, common_period, default_dt, extract_steady, integrate,
                           integrate_network, ladder_network, oracle_sparams, project)

from conftest import DESIGN_POINT


def single_node(c, g, inductance=None):
    return NodalNetwork(1, lambda t: np.full(np.shape(t) + (1, 1), c), np.array([[g]]),
                        ((0, inductance),) if inductance else (), time_invariant=True)


class TestIntegrator:
    def test_rc_discharge(self):
        c, g, v0 = 1e-9, 1e-3, 1.0
        net = single_node(c, g)
        tau = c / g
        traj = integrate_network(net, 5 * tau, tau / 1000, x0=[c * v0], record_every=10)
        exact = v0 * np.exp(-traj.t / tau)
        np.testing.assert_allclose(traj.v[:, 0], exact, atol=1e-8)

    def test_lc_energy_conserved(self):
        c, ind = 1e-12, 4.4e-9
        period = 2 * math.pi * math.sqrt(ind * c)
        net = single_node(c, 0.0, ind)
        x0 = [c * 1.0, 0.0]
        traj = integrate_network(net, 1e4 * period, period / 400, x0=x0, record_every=400)
        e = traj.stored_energy()
        assert abs(e[-1] - e[0]) / e[0] < 1e-6
        assert np.max(np.abs(e - e[0])) / e[0] < 1e-6

    def test_non_finite_state_raises(self):
        net = single_node(1e-9, -1.0)
        with np.errstate(all="ignore"), pytest.raises(IntegrationError) as err:
            integrate_network(net, 2e-6, 1e-11, x0=[1e-9], record_every=1000)
        assert err.value.time > 0

    def test_step_bound_enforced(self, tuned):
        with pytest.raises(ValueError, match="dt"):
            integrate(tuned, 2.4e9, 1e-9, dt=1 / (100 * 2.4e9))


class TestProjection:
    def test_orthogonal_tones(self):
        f0, fm = 2.4e9, 75e6
        period = common_period(f0, fm)
        t = np.arange(6400) * period / 6400
        amps = {-1: 0.3 - 0.1j, 0: 1.0 + 0.5j, 2: -0.2j}
        sig = sum((a * np.exp(2j * math.pi * (f0 + k * fm) * t)).real for k, a in amps.items())
        got = project(t, sig, [f0 + k * fm for k in range(-2, 3)])
        want = [amps.get(k, 0) for k in range(-2, 3)]
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_common_period(self):
        assert common_period(2.4e9, 75e6) == pytest.approx(1 / 75e6)
        assert common_period(2.38e9, 2.38e9 / 31) == pytest.approx(31 / 2.38e9)
        assert common_period(1e9, 0.0) == 1e-9

    def test_incommensurate(self):
        with pytest.raises(CommensurabilityError, match="commensurate"):
            common_period(2.4e9, 2.4e9 / math.pi)

    def test_default_dt_divides_period(self):
        period = common_period(2.4e9, 75e6)
        n = period / default_dt(2.4e9, 75e6)
        assert n == pytest.approx(round(n), abs=1e-9)
        assert default_dt(2.4e9, 75e6) <= 1 / (200 * 2.4e9)


class TestLadderOracle:
    def test_static_matches_hb(self, tuned):
        for f in (2.37e9, 2.4e9, 2.43e9):
            o = oracle_sparams(tuned, f)
            r = sparams(tuned, f)
            assert o.s21_db == pytest.approx(r.s21_db, abs=0.01)
            assert o.s12_db == pytest.approx(r.s12_db, abs=0.01)

    def test_modulated_matches_hb(self, tuned):
        lad = with_modulation(tuned, *DESIGN_POINT)
        o = oracle_sparams(lad, 2.4e9)
        r = sparams(lad, 2.4e9)
        assert o.s21_db == pytest.approx(r.s21_db, abs=0.05)
        assert o.s12_db == pytest.approx(r.s12_db, abs=0.05)
        # sidebands agree too
        for k in (-1, 1):
            assert abs(o.forward.s_through[o.forward.k == k][0]) == pytest.approx(
                abs(r.at("s21", k)), abs=1e-4)

    def test_phase_sign_swaps(self, tuned):
        fm, dm, dphi = DESIGN_POINT
        a = oracle_sparams(with_modulation(tuned, fm, dm, dphi), 2.4e9)
        b = oracle_sparams(with_modulation(tuned, fm, dm, -dphi), 2.4e9)
        assert a.s21_db == pytest.approx(b.s12_db, abs=1e-3)
        assert a.s12_db == pytest.approx(b.s21_db, abs=1e-3)

    def test_step_halving(self, tuned):
        lad = with_modulation(tuned, *DESIGN_POINT)
        dt = default_dt(2.4e9, 75e6)
        a = extract_steady(lad, 2.4e9, 1, dt=dt)
        b = extract_steady(lad, 2.4e9, 1, dt=dt / 2)
        da = 20 * math.log10(abs(a.fundamental))
        db = 20 * math.log10(abs(b.fundamental))
        assert abs(da - db) <= 0.005

    def test_static_power_balance(self, tuned):
        p = extract_steady(tuned, 2.4e9).power
        assert p["pump"] == 0.0
        assert abs(p["source"] - p["dissipated"]) / p["source"] < 1e-6

    def test_modulated_power_balance(self, tuned):
        p = extract_steady(with_modulation(tuned, *DESIGN_POINT), 2.41e9).power
        assert p["pump"] != 0.0
        assert abs(p["source"] + p["pump"] - p["dissipated"]) / p["source"] < 1e-5

    def test_bounded_at_design_point(self, tuned):
        lad = with_modulation(tuned, *DESIGN_POINT)
        traj = integrate(lad, 2.4e9, 100 / 75e6, record_every=64)
        assert np.all(np.isfinite(traj.x))
        assert np.max(np.abs(traj.v)) < 10.0

    def test_not_settled(self, tuned):
        with pytest.raises(NotSettledError) as err:
            extract_steady(tuned, 2.4e9, settle_periods=1)
        assert err.value.metric > 1e-6

    def test_rejects_reactive_termination(self, tuned):
        with pytest.raises(OracleError, match="resistive"):
            ladder_network(with_load(tuned, 50 + 10j), 2.4e9)
        table = ImpedanceTable.from_arrays([1e9, 3e9], [50, 50])
        with pytest.raises(OracleError, match="frequency dependent"):
            ladder_network(with_load(tuned, table), 2.4e9)

    def test_incommensurate_ladder(self, tuned):
        lad = with_modulation(tuned, 2.4e9 / math.e, *DESIGN_POINT[1:])
        with pytest.raises(CommensurabilityError):
            oracle_sparams(lad, 2.4e9)
