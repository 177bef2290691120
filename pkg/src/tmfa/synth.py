"""Chebyshev prototype and lumped coupled-resonator ladder synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import ModulatedLadder, ModulationSpec


# Unloaded Q of every resonator; calibrated so the antenna-loaded static
# insertion loss at f0 sits near 3 dB (see scripts/calibrate_qu.py).
DEFAULT_Q_U = 144.0


class SynthesisError(ValueError):
    """A filter target or element value outside the supported range."""


@dataclass(frozen=True)
class FilterSpec:
    f0: float = 2.4e9
    fbw: float = 0.04
    rl: float = 13.0
    order: int = 3
    z0: float = 50.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise SynthesisError(f"f0 must be > 0 Hz, got {self.f0!r}")
        if not 0 < self.fbw < 0.2:
            raise SynthesisError(f"fbw must satisfy 0 < fbw < 0.2, got {self.fbw!r}")
        if not self.rl > 3:
            raise SynthesisError(f"rl must be > 3 dB, got {self.rl!r}")
        if int(self.order) != self.order or self.order < 2:
            raise SynthesisError(f"order must be an integer >= 2, got {self.order!r}")
        if self.order > 9:
            raise SynthesisError(f"order must be <= 9, got {self.order!r}")
        if not self.z0 > 0:
            raise SynthesisError(f"z0 must be > 0 ohm, got {self.z0!r}")

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f0

    @property
    def band_edges(self) -> tuple[float, float]:
        """Ripple band edges, geometrically centred on f0 with width fbw*f0."""
        lo = self.f0 * (math.sqrt(1.0 + self.fbw ** 2 / 4.0) - self.fbw / 2.0)
        return lo, lo + self.fbw * self.f0


@dataclass(frozen=True)
class PrototypeValues:
    g: tuple[float, ...]
    ripple_db: float
    k: tuple[float, ...]
    qe_in: float
    qe_out: float


def ripple_from_return_loss(rl: float) -> float:
    return -10.0 * math.log10(1.0 - 10.0 ** (-rl / 10.0))


def chebyshev_g_values(order: int, ripple_db: float) -> list[float]:
    """Lowpass Chebyshev element values g0..g(n+1) from the closed-form recursion."""
    n = order
    beta = math.log(1.0 / math.tanh(ripple_db / (40.0 / math.log(10.0))))
    gamma = math.sinh(beta / (2 * n))
    a = [math.sin((2 * k - 1) * math.pi / (2 * n)) for k in range(1, n + 1)]
    b = [gamma ** 2 + math.sin(k * math.pi / n) ** 2 for k in range(1, n + 1)]
    g = [1.0, 2.0 * a[0] / gamma]
    for k in range(2, n + 1):
        g.append(4.0 * a[k - 2] * a[k - 1] / (b[k - 2] * g[k - 1]))
    g.append(1.0 if n % 2 else 1.0 / math.tanh(beta / 4.0) ** 2)
    return g


def chebyshev_prototype(spec: FilterSpec) -> PrototypeValues:
    """Prototype g-values, coupling coefficients and external Q for ``spec``."""
    if spec.order < 2:
        raise SynthesisError(f"order must be >= 2, got {spec.order}")
    if spec.rl <= 3:
        raise SynthesisError(f"rl must be > 3 dB, got {spec.rl}")
    ripple = ripple_from_return_loss(spec.rl)
    g = chebyshev_g_values(spec.order, ripple)
    n = spec.order
    k = tuple(spec.fbw / math.sqrt(g[i] * g[i + 1]) for i in range(1, n))
    return PrototypeValues(
        g=tuple(g),
        ripple_db=ripple,
        k=k,
        qe_in=g[0] * g[1] / spec.fbw,
        qe_out=g[n] * g[n + 1] / spec.fbw,
    )


def realize_ladder(proto: PrototypeValues, spec: FilterSpec, c_res: float = 0.86e-12,
                   q_u: float = DEFAULT_Q_U) -> ModulatedLadder:
    """Closed-form capacitively coupled ladder for ``proto``.

    Every node carries a total capacitance ``c_res``; the coupling and external
    capacitors are taken out of the shunt (varactor) capacitance so each
    isolated node still resonates at f0. The narrowband formulas are only a
    starting point for :func:`tmfa.optimizer.tune_equiripple`.
    """
    if not c_res > 0:
        raise SynthesisError(f"c_res must be > 0, got {c_res!r}")
    if not q_u > 0:
        raise SynthesisError(f"q_u must be > 0 or inf, got {q_u!r}")
    n = spec.order
    if len(proto.g) != n + 2:
        raise SynthesisError("prototype order does not match the filter spec")
    w0 = spec.omega0
    cc = np.array([ki * c_res for ki in proto.k])
    ce_in = math.sqrt(c_res / (w0 * spec.z0 * proto.qe_in))
    ce_out = math.sqrt(c_res / (w0 * spec.z0 * proto.qe_out))
    for name, ce in (("input", ce_in), ("output", ce_out)):
        if ce > c_res:
            raise SynthesisError(
                f"{name} external capacitor {ce:.3e} F exceeds c_res {c_res:.3e} F; "
                "target outside narrowband validity")
    shunt = np.full(n, c_res)
    shunt[:-1] -= cc
    shunt[1:] -= cc
    shunt[0] -= ce_in
    shunt[-1] -= ce_out
    if np.any(shunt <= 0):
        bad = int(np.argmin(shunt))
        raise SynthesisError(
            f"resonator {bad + 1} shunt capacitance {shunt[bad]:.3e} F is not positive "
            "after absorbing the coupling capacitors")
    inductance = 1.0 / (w0 ** 2 * c_res)
    g_loss = 0.0 if math.isinf(q_u) else w0 * c_res / q_u
    return ModulatedLadder(
        L=(inductance,) * n,
        C0=tuple(float(c) for c in shunt),
        G=(g_loss,) * n,
        cc=tuple(float(c) for c in cc),
        ce_in=ce_in,
        ce_out=ce_out,
        z_source=spec.z0,
        z_load=spec.z0,
        modulation=ModulationSpec.static(n),
    )
