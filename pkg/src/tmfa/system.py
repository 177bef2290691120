"""Filter plus Yagi: the nonreciprocal filtering antenna.

The device gain factors into the filter's directional transducer gain and
the radiator's directivity. Transmission drives the filter from port 1 into
the antenna impedance; reception is the reverse solve with the antenna as
the source-side termination. All curves are normalized so the reference
antenna (the same Yagi fed directly from 50 ohm) reads 0 dB at boresight
and f0.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import antenna
from .circuit import ImpedanceTable, ModulatedLadder, ModulationSpec, with_load, with_modulation
from .hbsolver import DEFAULT_K_MAX, sparams
from .optimizer import equiripple_metrics, tune_equiripple
from .synth import DEFAULT_Q_U, FilterSpec, chebyshev_prototype, realize_ladder

log = logging.getLogger(__name__)

TABLE_SPAN = (1.2e9, 3.6e9)
TABLE_STEP = 10e6


class ModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class Modulation:
    """Progressive modulation (fm in Hz, delta_phi in radians)."""

    fm: float
    delta_m: float
    delta_phi: float

    @classmethod
    def degrees(cls, fm: float, delta_m: float, delta_phi_deg: float) -> "Modulation":
        return cls(fm, delta_m, math.radians(delta_phi_deg))


@functools.lru_cache(maxsize=8)
def _cached_table(geom: antenna.YagiGeometry, freqs: tuple) -> antenna.AntennaImpedance:
    return antenna.impedance_table(geom, freqs)


@functools.lru_cache(maxsize=4096)
def _boresight_linear(geom: antenna.YagiGeometry, f: float) -> float:
    return float(antenna.directivity(geom, f, *antenna.BORESIGHT))


@functools.lru_cache(maxsize=256)
def _solution(geom: antenna.YagiGeometry, f: float):
    sol = antenna.solve_currents(geom, f)
    return sol, antenna.radiated_power(geom, sol)


def directivity_db(geom: antenna.YagiGeometry, f: float, theta_deg, phi_deg) -> np.ndarray:
    """Directivity in dBi at angles given in degrees."""
    sol, prad = _solution(geom, float(f))
    th, ph = np.radians(theta_deg), np.radians(phi_deg)
    u = antenna.ETA0 / (8 * math.pi ** 2) * np.abs(antenna.array_factor(geom, sol, th, ph)) ** 2
    with np.errstate(divide="ignore"):
        return 10 * np.log10(4 * math.pi * u / prad)


def antenna_table(geom: antenna.YagiGeometry, span=TABLE_SPAN, step=TABLE_STEP):
    n = int(round((span[1] - span[0]) / step)) + 1
    freqs = tuple(float(f) for f in np.linspace(span[0], span[1], n))
    return _cached_table(geom, freqs)


def reference_transducer_db(table: ImpedanceTable, f, z0: float = 50.0) -> np.ndarray:
    """Mismatch gain of the bare antenna fed from a real ``z0`` source."""
    z = np.asarray(table(np.asarray(f, dtype=float)))
    gamma = (z - z0) / (z + z0)
    return 10 * np.log10(1 - np.abs(gamma) ** 2)


@dataclass(frozen=True)
class FilteringAntennaModel:
    ladder: ModulatedLadder
    geom: antenna.YagiGeometry
    reference_gain_dbi: float
    spec: FilterSpec
    table: ImpedanceTable
    k_max: int = DEFAULT_K_MAX
    tuning: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.reference_gain_dbi):
            raise ModelError("reference gain must be finite")

    def covers(self, f) -> bool:
        f = np.atleast_1d(f)
        return bool(np.all((f >= self.table.f_min) & (f <= self.table.f_max)))

    def state(self, modulation: Modulation | ModulationSpec | None) -> ModulatedLadder:
        if modulation is None:
            return self.ladder
        if isinstance(modulation, ModulationSpec):
            return replace(self.ladder, modulation=modulation)
        return with_modulation(self.ladder, modulation.fm, modulation.delta_m,
                               modulation.delta_phi)


def build_model(spec: FilterSpec = FilterSpec(), geom: antenna.YagiGeometry | None = None,
                q_u: float = DEFAULT_Q_U, c_res: float = 0.86e-12,
                k_max: int = DEFAULT_K_MAX) -> FilteringAntennaModel:
    """Synthesize, tune at 50 ohm, bind the antenna load and retune.

    The reference gain is the bare antenna's boresight directivity at f0
    including its 50 ohm mismatch, so the reference curve reads 0 dB there.
    """
    geom = geom or antenna.default_geometry(spec.f0)
    table = antenna_table(geom)
    ladder = realize_ladder(chebyshev_prototype(spec), spec, c_res=c_res, q_u=q_u)
    ladder = tune_equiripple(ladder, spec)
    m50 = equiripple_metrics(ladder, spec)
    loaded = tune_equiripple(with_load(ladder, table), spec)
    mload = equiripple_metrics(loaded, spec)
    ref = float(10 * math.log10(_boresight_linear(geom, spec.f0))
                + reference_transducer_db(table, spec.f0, spec.z0))
    return FilteringAntennaModel(loaded, geom, ref, spec, table, k_max,
                                 tuning={"rl_50ohm_db": m50["min_rl_db"],
                                         "rl_loaded_db": mload["min_rl_db"],
                                         "zeros_loaded": mload["reflection_zeros"]})


def _filter_db(model: FilteringAntennaModel, f: float, modulation, direction: str) -> float:
    if not model.covers(f):
        raise ModelError(f"{f:.6g} Hz lies outside the antenna table "
                           f"[{model.table.f_min:.6g}, {model.table.f_max:.6g}] Hz")
    r = sparams(model.state(modulation), f, model.k_max)
    return r.s21_db if direction == "tx" else r.s12_db


def tx_gain(model: FilteringAntennaModel, f: float, theta_deg=90.0, phi_deg=0.0,
            modulation=None):
    """Normalized transmit gain (dB): filter S21 into the antenna plus directivity."""
    return (_filter_db(model, f, modulation, "tx")
            + directivity_db(model.geom, f, theta_deg, phi_deg) - model.reference_gain_dbi)


def rx_gain(model: FilteringAntennaModel, f: float, theta_deg=90.0, phi_deg=0.0,
            modulation=None):
    """Normalized receive gain (dB): antenna directivity plus reverse filter S12."""
    return (_filter_db(model, f, modulation, "rx")
            + directivity_db(model.geom, f, theta_deg, phi_deg) - model.reference_gain_dbi)


def reference_gain(model: FilteringAntennaModel, f, theta_deg=90.0, phi_deg=0.0):
    return (reference_transducer_db(model.table, f, model.spec.z0)
            + directivity_db(model.geom, f, theta_deg, phi_deg) - model.reference_gain_dbi)


@dataclass
class DirectionalGainReport:
    freqs: np.ndarray
    ref_db: np.ndarray
    static_tx: np.ndarray
    static_rx: np.ndarray
    mod_tx: np.ndarray
    mod_rx: np.ndarray
    cuts: dict | None = None

    @property
    def isolation_db(self) -> np.ndarray:
        return self.mod_tx - self.mod_rx

    def rows(self):
        for i, f in enumerate(self.freqs):
            yield (f, self.ref_db[i], self.static_tx[i], self.mod_tx[i], self.mod_rx[i],
                   self.isolation_db[i])


def boresight_sweep(model: FilteringAntennaModel, f_grid, modulation=None) -> DirectionalGainReport:
    """Reference, static and modulated boresight curves over ``f_grid``.

    Without a modulation the modulated columns repeat the static state.
    """
    freqs = np.asarray(f_grid, dtype=float)
    d = np.array([10 * math.log10(_boresight_linear(model.geom, float(f))) for f in freqs])
    ref = reference_transducer_db(model.table, freqs, model.spec.z0) + d - model.reference_gain_dbi
    cols = {}
    for name, mod in (("static", None), ("mod", modulation)):
        tx, rx = [], []
        for f in freqs:
            r = sparams(model.state(mod), float(f), model.k_max)
            tx.append(r.s21_db)
            rx.append(r.s12_db)
        cols[name] = (np.array(tx) + d - model.reference_gain_dbi,
                      np.array(rx) + d - model.reference_gain_dbi)
    return DirectionalGainReport(freqs, ref, cols["static"][0], cols["static"][1],
                                 cols["mod"][0], cols["mod"][1])


@dataclass(frozen=True)
class PatternCut:
    plane: str
    angle_deg: np.ndarray
    tx_db: np.ndarray
    rx_db: np.ndarray
    ref_db: np.ndarray


def pattern_cuts(model: FilteringAntennaModel, f0: float | None = None, modulation=None,
                 step_deg: float = 1.0) -> dict[str, PatternCut]:
    """Normalized E- and H-plane TX/RX cuts at ``f0`` (360 samples at 1 deg)."""
    f0 = model.spec.f0 if f0 is None else f0
    r = sparams(model.state(modulation), f0, model.k_max)
    ref_t = float(reference_transducer_db(model.table, f0, model.spec.z0))
    out = {}
    for plane in ("E", "H"):
        ang, d = antenna.plane_cut(model.geom, f0, plane, step_deg)
        base = d - model.reference_gain_dbi
        out[plane] = PatternCut(plane, ang, base + r.s21_db, base + r.s12_db, base + ref_t)
    return out


# -- curve metrics ----------------------------------------------------------

def peak_band(freqs, curve, drop_db: float = 3.0, f0: float | None = None):
    """Peak value and the contiguous band around the peak within ``drop_db`` of it.

    Returns (peak_db, f_peak, f_lo, f_hi, fractional_bandwidth) with edges
    found by linear interpolation.
    """
    freqs = np.asarray(freqs, dtype=float)
    curve = np.asarray(curve, dtype=float)
    i = int(np.argmax(curve))
    peak = curve[i]
    level = peak - drop_db
    lo = i
    while lo > 0 and curve[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < curve.size - 1 and curve[hi + 1] >= level:
        hi += 1

    def cross(a, b):
        t = (level - curve[a]) / (curve[b] - curve[a])
        return freqs[a] + t * (freqs[b] - freqs[a])

    f_lo = cross(lo - 1, lo) if lo > 0 else freqs[0]
    f_hi = cross(hi, hi + 1) if hi < curve.size - 1 else freqs[-1]
    centre = f0 if f0 is not None else 0.5 * (f_lo + f_hi)
    return float(peak), float(freqs[i]), float(f_lo), float(f_hi), float((f_hi - f_lo) / centre)
