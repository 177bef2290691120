import math
from dataclasses import replace

import numpy as np
import pytest

from tmfa.circuit import with_load
from tmfa.optimizer import tune_equiripple
from tmfa.synth import chebyshev_prototype, realize_ladder
from tmfa.system import (ModelError, Modulation, boresight_sweep, directivity_db, pattern_cuts,
                         peak_band, reference_gain, rx_gain, tx_gain)

from conftest import DESIGN_POINT

F0 = 2.4e9


class TestNormalization:
    def test_reference_zero_at_f0(self, model):
        assert reference_gain(model, F0) == pytest.approx(0.0, abs=1e-12)

    def test_reference_below_zero_off_boresight(self, model):
        assert reference_gain(model, F0, 90.0, 180.0) < -10.0

    def test_lossless_filter_transparent(self, model):
        spec = model.spec
        lad = realize_ladder(chebyshev_prototype(spec), spec, q_u=math.inf)
        lossless = replace(model, ladder=tune_equiripple(with_load(lad, model.table), spec))
        assert tx_gain(lossless, F0) == pytest.approx(0.0, abs=0.05)

    def test_load_is_antenna(self, model):
        assert model.ladder.z_load(F0) == pytest.approx(50.0, abs=0.05)
        assert model.tuning["rl_loaded_db"] >= 11.0


class TestStaticGain:
    def test_peak_drop(self, model):
        assert tx_gain(model, F0) == pytest.approx(-3.0, abs=1.0)

    @pytest.mark.parametrize("f", [0.9 * F0, 1.1 * F0])
    def test_out_of_band(self, model, f):
        assert tx_gain(model, f) <= tx_gain(model, F0) - 11.0

    @pytest.mark.parametrize("f, theta, phi", [(F0, 90, 0), (2.37e9, 60, 40), (2.43e9, 120, 200)])
    def test_rx_equals_tx(self, model, f, theta, phi):
        assert rx_gain(model, f, theta, phi) == pytest.approx(tx_gain(model, f, theta, phi),
                                                              abs=1e-10)

    def test_outside_table(self, model):
        with pytest.raises(ModelError, match="outside"):
            tx_gain(model, 5e9)


class TestModulatedGain:
    def test_optimized_isolation(self, model, optimum_modulation):
        tx = tx_gain(model, F0, modulation=optimum_modulation)
        rx = rx_gain(model, F0, modulation=optimum_modulation)
        assert rx <= tx - 20.0

    def test_isolation_angle_independent(self, model):
        mod = Modulation(*DESIGN_POINT)
        angles = [(90, 0), (30, 10), (150, 250), (90, 180)]
        iso = [tx_gain(model, F0, t, p, mod) - rx_gain(model, F0, t, p, mod) for t, p in angles]
        np.testing.assert_allclose(iso, iso[0], atol=1e-9)

    def test_sweep_report(self, model):
        mod = Modulation(*DESIGN_POINT)
        f = np.array([2.38e9, 2.4e9, 2.42e9])
        rep = boresight_sweep(model, f, mod)
        np.testing.assert_array_equal(rep.isolation_db, rep.mod_tx - rep.mod_rx)
        np.testing.assert_allclose(rep.static_tx, rep.static_rx, atol=1e-10)
        assert rep.ref_db[1] == pytest.approx(0.0, abs=1e-12)
        assert rep.mod_tx[1] == pytest.approx(tx_gain(model, F0, modulation=mod), abs=1e-12)
        assert len(list(rep.rows())) == 3

    def test_sweep_without_modulation_repeats_static(self, model):
        rep = boresight_sweep(model, [F0])
        assert rep.mod_tx[0] == rep.static_tx[0]


@pytest.fixture(scope="module")
def cuts(model, optimum_modulation):
    return pattern_cuts(model, F0, optimum_modulation)


class TestCuts:
    def test_samples(self, cuts):
        for c in cuts.values():
            assert c.angle_deg.size == 360
            np.testing.assert_array_equal(c.angle_deg, np.arange(360.0))

    def test_endfire_peak(self, cuts):
        assert int(np.argmax(cuts["H"].tx_db)) == 0
        assert int(np.argmax(cuts["E"].tx_db)) == 90

    def test_rx_is_tx_minus_isolation(self, model, cuts, optimum_modulation):
        iso = (tx_gain(model, F0, modulation=optimum_modulation)
               - rx_gain(model, F0, modulation=optimum_modulation))
        for c in cuts.values():
            ok = np.isfinite(c.tx_db)
            np.testing.assert_allclose(c.tx_db[ok] - c.rx_db[ok], iso, atol=1e-9)

    def test_shape_matches_directivity(self, model, cuts):
        d = directivity_db(model.geom, F0, 90.0, np.arange(360.0))
        shape = cuts["H"].ref_db - cuts["H"].ref_db[0]
        np.testing.assert_allclose(shape, d - d[0], atol=1e-9)


class TestPeakBand:
    def test_triangle(self):
        f = np.linspace(0, 10, 11)
        curve = -np.abs(f - 5.0)
        peak, fp, lo, hi, fbw = peak_band(f, curve, 3.0, 5.0)
        assert (peak, fp, lo, hi) == (0.0, 5.0, 2.0, 8.0)
        assert fbw == pytest.approx(6 / 5)

    def test_band_reaching_edge(self):
        f = np.linspace(0, 4, 5)
        _, _, lo, hi, fbw = peak_band(f, np.zeros(5), 3.0)
        assert (lo, hi, fbw) == (0.0, 4.0, 2.0)
