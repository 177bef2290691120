"""Data model of the time-modulated resonator ladder.

The ladder is ``order`` shunt resonators (L, C0, G to ground) joined by series
coupling capacitors, with series external capacitors to a source node and a
load node::

    Zs --[Ce_in]-- n1 --[Cc0]-- n2 --[Cc1]-- n3 --[Ce_out]-- ZL
                   |            |            |
                  LCG          LCG          LCG

Node numbering used by the solvers: 0 is the source node, 1..order are the
resonators and ``order + 1`` is the load node.

Each resonator capacitance follows ``C(t) = C0 * (1 + delta_m * cos(2*pi*fm*t + phi_i))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np


class CircuitError(ValueError):
    """Invalid element value or modulation setting."""


@dataclass(frozen=True)
class ImpedanceTable:
    """Complex impedance sampled on a frequency grid.

    Values between samples are interpolated linearly (real and imaginary
    parts separately). Outside the grid the end samples are held. Negative
    frequencies return the conjugate, as for any real network.
    """

    freqs: tuple[float, ...]
    values: tuple[complex, ...]

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.ndim != 1 or f.size == 0 or f.size != len(self.values):
            raise CircuitError("impedance table needs matching, non-empty freqs/values")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise CircuitError("impedance table frequencies must be strictly increasing")

    @classmethod
    def from_arrays(cls, freqs, values) -> "ImpedanceTable":
        return cls(tuple(float(x) for x in np.asarray(freqs, dtype=float)),
                   tuple(complex(z) for z in np.asarray(values, dtype=complex)))

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        fa = np.abs(f)
        grid = np.asarray(self.freqs)
        z = np.asarray(self.values)
        val = np.interp(fa, grid, z.real) + 1j * np.interp(fa, grid, z.imag)
        val = np.where(f < 0, np.conj(val), val)
        return val if val.ndim else complex(val)

    @property
    def f_min(self) -> float:
        return self.freqs[0]

    @property
    def f_max(self) -> float:
        return self.freqs[-1]


Impedance = Union[complex, float, ImpedanceTable]


def impedance_at(z: Impedance, f):
    """Evaluate a constant or tabulated impedance at frequency ``f`` (Hz)."""
    if isinstance(z, ImpedanceTable):
        return z(f)
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return complex(z)
    return np.full(f.shape, complex(z))


@dataclass(frozen=True)
class CapacitorWaveform:
    c0: float
    delta_m: float
    phase: float

    def __post_init__(self):
        if self.c0 <= 0:
            raise CircuitError(f"c0 must be positive, got {self.c0!r}")
        if not 0 <= self.delta_m < 1:
            raise CircuitError(f"delta_m must lie in [0, 1), got {self.delta_m!r}")


def capacitance_at(wf: CapacitorWaveform, fm: float, t):
    """Instantaneous capacitance ``c0 * (1 + delta_m * cos(2*pi*fm*t + phase))``."""
    return wf.c0 * (1.0 + wf.delta_m * np.cos(2.0 * np.pi * fm * np.asarray(t) + wf.phase))


@dataclass(frozen=True)
class ModulationSpec:
    """Single-tone modulation shared by all resonators.

    ``phases`` are the per-resonator phases in radians. ``delta_phi`` is kept
    when the phases were generated by the progressive law
    ``phi_i = (i - 1) * delta_phi``; it is ``None`` for arbitrary phases.
    """

    fm: float = 0.0
    delta_m: float = 0.0
    phases: tuple[float, ...] = ()
    delta_phi: float | None = None

    def __post_init__(self):
        if self.fm < 0 or not math.isfinite(self.fm):
            raise CircuitError(f"fm must be finite and >= 0, got {self.fm!r}")
        if not 0 <= self.delta_m < 1:
            raise CircuitError(f"delta_m must lie in [0, 1), got {self.delta_m!r}")
        if self.delta_m > 0 and self.fm == 0:
            raise CircuitError("a modulated ladder (delta_m > 0) needs fm > 0")

    @classmethod
    def progressive(cls, fm: float, delta_m: float, delta_phi: float, n: int) -> "ModulationSpec":
        phases = tuple(i * delta_phi for i in range(n))
        return cls(fm=float(fm), delta_m=float(delta_m), phases=phases, delta_phi=float(delta_phi))

    @classmethod
    def static(cls, n: int) -> "ModulationSpec":
        return cls(fm=0.0, delta_m=0.0, phases=(0.0,) * n, delta_phi=0.0)

    @property
    def is_static(self) -> bool:
        return self.delta_m == 0.0


@dataclass(frozen=True)
class ModulatedLadder:
    L: tuple[float, ...]
    C0: tuple[float, ...]
    G: tuple[float, ...]
    cc: tuple[float, ...]
    ce_in: float
    ce_out: float
    z_source: Impedance = 50.0
    z_load: Impedance = 50.0
    modulation: ModulationSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = len(self.L)
        if n < 1:
            raise CircuitError("ladder needs at least one resonator")
        if len(self.C0) != n or len(self.G) != n:
            raise CircuitError("L, C0 and G must have one entry per resonator")
        if len(self.cc) != n - 1:
            raise CircuitError(f"expected {n - 1} coupling capacitors, got {len(self.cc)}")
        for name, vals in (("L", self.L), ("C0", self.C0), ("cc", self.cc),
                           ("ce_in", (self.ce_in,)), ("ce_out", (self.ce_out,))):
            for v in vals:
                if not (v > 0 and math.isfinite(v)):
                    raise CircuitError(f"{name} values must be positive and finite, got {v!r}")
        for g in self.G:
            if not (g >= 0 and math.isfinite(g)):
                raise CircuitError(f"G values must be >= 0, got {g!r}")
        for name, z in (("source", self.z_source), ("load", self.z_load)):
            if not isinstance(z, ImpedanceTable) and complex(z).real <= 0:
                raise CircuitError(f"{name} impedance needs a positive real part, got {z!r}")
        if self.modulation is None:
            object.__setattr__(self, "modulation", ModulationSpec.static(n))
        elif len(self.modulation.phases) != n:
            raise CircuitError(
                f"modulation has {len(self.modulation.phases)} phases for {n} resonators")

    @property
    def order(self) -> int:
        return len(self.L)

    @property
    def n_nodes(self) -> int:
        return self.order + 2

    def waveforms(self) -> list[CapacitorWaveform]:
        m = self.modulation
        return [CapacitorWaveform(c, m.delta_m, p) for c, p in zip(self.C0, m.phases)]

    def node_capacitance(self) -> np.ndarray:
        """Static total capacitance seen at each resonator node (couplings shorted to ground)."""
        tot = np.array(self.C0, dtype=float)
        cc = np.array(self.cc, dtype=float)
        tot[:-1] += cc
        tot[1:] += cc
        tot[0] += self.ce_in
        tot[-1] += self.ce_out
        return tot

    def mirrored(self) -> "ModulatedLadder":
        """Port-swapped ladder; resonator order and phases are reversed."""
        m = self.modulation
        mod = replace(m, phases=tuple(reversed(m.phases)),
                      delta_phi=None if m.delta_phi is None else -m.delta_phi)
        return ModulatedLadder(
            L=self.L[::-1], C0=self.C0[::-1], G=self.G[::-1], cc=self.cc[::-1],
            ce_in=self.ce_out, ce_out=self.ce_in,
            z_source=self.z_load, z_load=self.z_source, modulation=mod)

    def is_mirror_symmetric(self, rtol: float = 1e-12) -> bool:
        def close(a, b):
            a, b = np.asarray(a, float), np.asarray(b, float)
            return np.allclose(a, b, rtol=rtol, atol=0.0)

        same_ports = (not isinstance(self.z_source, ImpedanceTable)
                      and not isinstance(self.z_load, ImpedanceTable)
                      and complex(self.z_source) == complex(self.z_load))
        return (same_ports and close(self.L, self.L[::-1]) and close(self.C0, self.C0[::-1])
                and close(self.G, self.G[::-1]) and close(self.cc, self.cc[::-1])
                and close([self.ce_in], [self.ce_out]))

    def with_elements(self, **changes) -> "ModulatedLadder":
        return replace(self, **changes)

    def to_record(self) -> dict:
        """Plain-dict form with SI units; tabulated loads are written as sample lists."""

        def z_rec(z):
            if isinstance(z, ImpedanceTable):
                return {"table": {"f_hz": [float(f) for f in z.freqs],
                                  "re_ohm": [float(v.real) for v in z.values],
                                  "im_ohm": [float(v.imag) for v in z.values]}}
            z = complex(z)
            return {"re_ohm": float(z.real), "im_ohm": float(z.imag)}

        def floats(xs):
            return [float(x) for x in xs]

        m = self.modulation
        return {
            "L_h": floats(self.L),
            "C0_f": floats(self.C0),
            "G_s": floats(self.G),
            "cc_f": floats(self.cc),
            "ce_in_f": float(self.ce_in),
            "ce_out_f": float(self.ce_out),
            "z_source": z_rec(self.z_source),
            "z_load": z_rec(self.z_load),
            "modulation": {
                "fm_hz": float(m.fm),
                "delta_m": float(m.delta_m),
                "phases_deg": [math.degrees(p) for p in m.phases],
                "delta_phi_deg": None if m.delta_phi is None else math.degrees(m.delta_phi),
            },
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ModulatedLadder":
        def z_from(r):
            if "table" in r:
                t = r["table"]
                return ImpedanceTable.from_arrays(
                    t["f_hz"], np.asarray(t["re_ohm"]) + 1j * np.asarray(t["im_ohm"]))
            return complex(r["re_ohm"], r["im_ohm"])

        m = rec["modulation"]
        dphi = m.get("delta_phi_deg")
        mod = ModulationSpec(fm=float(m["fm_hz"]), delta_m=float(m["delta_m"]),
                             phases=tuple(math.radians(p) for p in m["phases_deg"]),
                             delta_phi=None if dphi is None else math.radians(dphi))
        return cls(L=tuple(rec["L_h"]), C0=tuple(rec["C0_f"]), G=tuple(rec["G_s"]),
                   cc=tuple(rec["cc_f"]), ce_in=float(rec["ce_in_f"]),
                   ce_out=float(rec["ce_out_f"]), z_source=z_from(rec["z_source"]),
                   z_load=z_from(rec["z_load"]), modulation=mod)


def with_modulation(ladder: ModulatedLadder, fm: float, delta_m: float,
                    delta_phi: float) -> ModulatedLadder:
    """Copy of ``ladder`` with progressive phases ``phi_i = (i - 1) * delta_phi`` (radians)."""
    if delta_m >= 1:
        raise CircuitError(f"delta_m must be < 1, got {delta_m!r}")
    mod = ModulationSpec.progressive(fm, delta_m, delta_phi, ladder.order)
    return replace(ladder, modulation=mod)


def with_phases(ladder: ModulatedLadder, fm: float, delta_m: float,
                phases: Sequence[float]) -> ModulatedLadder:
    """Copy of ``ladder`` with arbitrary per-resonator phases (radians)."""
    mod = ModulationSpec(fm=float(fm), delta_m=float(delta_m),
                         phases=tuple(float(p) for p in phases))
    return replace(ladder, modulation=mod)


def with_load(ladder: ModulatedLadder, z_load: Impedance) -> ModulatedLadder:
    return replace(ladder, z_load=z_load)
