"""Thin-wire Yagi-Uda model by the induced-EMF method.

Elements are parallel z-directed wires centred on z = 0 and placed along the
x axis, so endfire (toward the directors) is theta = 90 deg, phi = 0. Each
wire carries the sinusoidal current ``I_m sin(k (h - |z|))``; impedances are
referred to the base (feed) current ``I_m sin(k h)``.

The z-field of such a wire at radial distance d is::

    E_z = -j eta I_m / (4 pi) * [e^{-jkR1}/R1 + e^{-jkR2}/R2 - 2 cos(kh) e^{-jkr0}/r0]

and the induced-EMF impedance follows by weighting E_z with the current of
the receiving wire.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .circuit import ImpedanceTable

C0 = 299_792_458.0
ETA0 = 376.730313668
QUAD_RTOL = 1e-9


class AntennaError(ValueError):
    pass


class QuadratureError(AntennaError):
    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class WireElement:
    half_length: float
    radius: float
    position: float


@dataclass(frozen=True)
class YagiGeometry:
    elements: tuple[WireElement, ...]
    driven: int

    def __post_init__(self):
        if len(self.elements) < 1:
            raise AntennaError("geometry needs at least one element")
        if not 0 <= self.driven < len(self.elements):
            raise AntennaError(f"driven index {self.driven} out of range")
        for e in self.elements:
            if not (e.half_length > 0 and e.radius > 0):
                raise AntennaError("element half-length and radius must be positive")
            if not e.radius < e.half_length / 20:
                raise AntennaError(
                    f"radius {e.radius:g} m too thick for half-length {e.half_length:g} m")
        pos = [e.position for e in self.elements]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise AntennaError("element positions must be strictly increasing "
                               "(duplicate or reordered elements)")

    @classmethod
    def dipole(cls, half_length: float, radius: float) -> "YagiGeometry":
        return cls((WireElement(half_length, radius, 0.0),), 0)

    def mirrored(self) -> "YagiGeometry":
        els = tuple(WireElement(e.half_length, e.radius, -e.position)
                    for e in reversed(self.elements))
        return YagiGeometry(els, len(self.elements) - 1 - self.driven)


# Total lengths and spacings in wavelengths at the design frequency; produced
# by scripts/calibrate_yagi.py (Re Z_in ~ 50 ohm, X_in ~ 0, endfire peak).
DEFAULT_LENGTHS_WL = (0.50418375, 0.46383359, 0.34, 0.34)
DEFAULT_SPACINGS_WL = (0.20, 0.25, 0.25)
DEFAULT_RADIUS_WL = 1e-3


def default_geometry(f0: float = 2.4e9, lengths_wl=DEFAULT_LENGTHS_WL,
                     spacings_wl=DEFAULT_SPACINGS_WL,
                     radius_wl: float = DEFAULT_RADIUS_WL) -> YagiGeometry:
    """Reflector, driven dipole and two directors scaled to ``f0``."""
    lam = C0 / f0
    pos = np.concatenate([[0.0], np.cumsum(spacings_wl)]) * lam
    els = tuple(WireElement(0.5 * l * lam, radius_wl * lam, float(x))
                for l, x in zip(lengths_wl, pos))
    return YagiGeometry(els, driven=1)


# -- impedances -------------------------------------------------------------

def _integrate(fun, a, b, points=None):
    re, err_re, *_ = quad(lambda z: fun(z).real, a, b, points=points, limit=400,
                          epsabs=0.0, epsrel=QUAD_RTOL, full_output=1)
    im, err_im, *_ = quad(lambda z: fun(z).imag, a, b, points=points, limit=400,
                          epsabs=0.0, epsrel=QUAD_RTOL, full_output=1)
    val = complex(re, im)
    err = math.hypot(err_re, err_im)
    if not err <= 1e-6 * max(abs(val), 1e-12):
        raise QuadratureError(f"induced-EMF quadrature did not converge (error {err:.3e})", err)
    return val


@functools.lru_cache(maxsize=65536)
def _emf_max(h_src: float, h_rx: float, d: float, f: float) -> complex:
    """Induced-EMF impedance referred to current maxima (field of ``h_src`` on ``h_rx``)."""
    k = 2 * math.pi * f / C0
    ckh = math.cos(k * h_src)

    def integrand(z):
        r1 = math.sqrt(d * d + (z - h_src) ** 2)
        r2 = math.sqrt(d * d + (z + h_src) ** 2)
        r0 = math.sqrt(d * d + z * z)
        e = (np.exp(-1j * k * r1) / r1 + np.exp(-1j * k * r2) / r2
             - 2 * ckh * np.exp(-1j * k * r0) / r0)
        return e * math.sin(k * (h_rx - z))

    pts = [h_src] if 0 < h_src < h_rx else None
    # integrand is even in z, so integrate one half and double
    return 1j * ETA0 / (4 * math.pi) * 2 * _integrate(integrand, 0.0, h_rx, pts)


def _to_base(z_max: complex, h1: float, h2: float, f: float) -> complex:
    k = 2 * math.pi * f / C0
    s = math.sin(k * h1) * math.sin(k * h2)
    if abs(s) < 1e-6:
        raise AntennaError("element length is a multiple of a wavelength; base current vanishes")
    return z_max / s


def self_impedance(half_length: float, radius: float, f: float) -> complex:
    """Driving-point impedance of a centre-fed thin dipole (induced-EMF, base current)."""
    if not radius < half_length / 20:
        raise AntennaError(f"thin-wire model needs radius < half_length/20 "
                           f"(radius={radius:g}, half_length={half_length:g})")
    return _to_base(_emf_max(half_length, half_length, radius, f), half_length, half_length, f)


def mutual_impedance_directed(h_src: float, h_rx: float, spacing: float, f: float) -> complex:
    """Mutual impedance computed with ``h_src`` as field source; reciprocity check only."""
    return _to_base(_emf_max(h_src, h_rx, spacing, f), h_src, h_rx, f)


def mutual_impedance(elem_a: WireElement, elem_b: WireElement, spacing: float,
                     f: float) -> complex:
    """Mutual impedance of two parallel side-by-side wires.

    The integral is always evaluated with the shorter wire as field source,
    which makes the result exactly symmetric in its arguments.
    """
    if not spacing > max(elem_a.radius, elem_b.radius):
        raise AntennaError("spacing must exceed both wire radii")
    h1, h2 = sorted((elem_a.half_length, elem_b.half_length))
    return mutual_impedance_directed(h1, h2, spacing, f)


def impedance_matrix(geom: YagiGeometry, f: float) -> np.ndarray:
    n = len(geom.elements)
    z = np.empty((n, n), dtype=complex)
    for i, a in enumerate(geom.elements):
        z[i, i] = self_impedance(a.half_length, a.radius, f)
        for j in range(i + 1, n):
            b = geom.elements[j]
            z[i, j] = z[j, i] = mutual_impedance(a, b, abs(b.position - a.position), f)
    return z


@dataclass(frozen=True)
class CurrentSolution:
    f: float
    currents: np.ndarray
    z_in: complex
    z_matrix: np.ndarray


def solve_currents(geom: YagiGeometry, f: float) -> CurrentSolution:
    """Base currents for 1 V at the driven element with the parasitics shorted."""
    z = impedance_matrix(geom, f)
    v = np.zeros(len(geom.elements), dtype=complex)
    v[geom.driven] = 1.0
    if np.linalg.cond(z) > 1e12:
        raise AntennaError(f"impedance matrix is singular at {f:.6g} Hz (degenerate geometry)")
    i = np.linalg.solve(z, v)
    return CurrentSolution(f, i, complex(1.0 / i[geom.driven]), z)


class AntennaImpedance(ImpedanceTable):
    """Driving-point impedance of a geometry on a frequency grid."""


def impedance_table(geom: YagiGeometry, f_grid) -> AntennaImpedance:
    freqs = np.atleast_1d(np.asarray(f_grid, dtype=float))
    z = [solve_currents(geom, float(f)).z_in for f in freqs]
    return AntennaImpedance.from_arrays(freqs, z)


# -- far field --------------------------------------------------------------

def array_factor(geom: YagiGeometry, sol: CurrentSolution, theta, phi):
    """Complex far-field pattern function F(theta, phi) (radians, broadcastable).

    The radiation intensity is ``eta / (8 pi^2) * |F|^2`` per unit drive.
    """
    k = 2 * math.pi * sol.f / C0
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    st = np.sin(theta)
    ct = np.cos(theta)
    safe = np.abs(st) > 1e-12
    st_safe = np.where(safe, st, 1.0)
    out = np.zeros(theta.shape, dtype=complex)
    for cur, el in zip(sol.currents, geom.elements):
        kh = k * el.half_length
        im = cur / math.sin(kh)
        elem = np.where(safe, (np.cos(kh * ct) - math.cos(kh)) / st_safe, 0.0)
        out = out + im * elem * np.exp(1j * k * el.position * st * np.cos(phi))
    return out


def radiated_power(geom: YagiGeometry, sol: CurrentSolution, n_theta: int = 96,
                   n_phi: int = 192) -> float:
    """Total radiated power by Gauss-Legendre in cos(theta) and a periodic rule in phi."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = np.arange(n_phi) * (2 * math.pi / n_phi)
    t, p = np.meshgrid(theta, phi, indexing="ij")
    u = ETA0 / (8 * math.pi ** 2) * np.abs(array_factor(geom, sol, t, p)) ** 2
    return float(np.sum(u * w[:, None]) * (2 * math.pi / n_phi))


def directivity(geom: YagiGeometry, f: float, theta, phi, sol: CurrentSolution | None = None):
    """Directivity (linear) at the given angles (radians)."""
    sol = sol or solve_currents(geom, f)
    u = ETA0 / (8 * math.pi ** 2) * np.abs(array_factor(geom, sol, theta, phi)) ** 2
    return 4 * math.pi * u / radiated_power(geom, sol)


BORESIGHT = (math.pi / 2, 0.0)


def boresight_directivity_db(geom: YagiGeometry, f: float) -> float:
    return float(10 * np.log10(directivity(geom, f, *BORESIGHT)))


@dataclass(frozen=True)
class RadiationPattern:
    f: float
    theta_deg: np.ndarray
    phi_deg: np.ndarray
    d_dbi: np.ndarray
    peak_theta_deg: float
    peak_phi_deg: float
    peak_dbi: float
    front_to_back_db: float
    normalization: float
    radiated_power_w: float

    def at(self, theta_deg: float, phi_deg: float) -> float:
        i = int(np.argmin(np.abs(self.theta_deg - theta_deg)))
        j = int(np.argmin(np.abs(self.phi_deg - (phi_deg % 360.0))))
        return float(self.d_dbi[i, j])


def pattern(geom: YagiGeometry, f: float, step_deg: float = 1.0) -> RadiationPattern:
    """Directivity on a regular theta/phi grid with theta in [0, 180] and phi in [0, 360)."""
    sol = solve_currents(geom, f)
    nt = int(round(180 / step_deg)) + 1
    npf = int(round(360 / step_deg))
    th = np.linspace(0.0, 180.0, nt)
    ph = np.arange(npf) * step_deg
    t, p = np.meshgrid(np.radians(th), np.radians(ph), indexing="ij")
    prad = radiated_power(geom, sol)
    u = ETA0 / (8 * math.pi ** 2) * np.abs(array_factor(geom, sol, t, p)) ** 2
    d = 4 * math.pi * u / prad
    with np.errstate(divide="ignore"):
        d_db = 10 * np.log10(d)
    i, j = np.unravel_index(int(np.argmax(d)), d.shape)
    # trapezoid in theta (sin weight), periodic rectangle rule in phi
    wt = np.full(nt, math.radians(step_deg))
    wt[0] = wt[-1] = 0.5 * math.radians(step_deg)
    norm = float(np.sum(d * (np.sin(np.radians(th)) * wt)[:, None]) * math.radians(step_deg)
                 / (4 * math.pi))
    front = directivity(geom, f, math.pi / 2, 0.0, sol)
    back = directivity(geom, f, math.pi / 2, math.pi, sol)
    return RadiationPattern(
        f=f, theta_deg=th, phi_deg=ph, d_dbi=d_db,
        peak_theta_deg=float(th[i]), peak_phi_deg=float(ph[j]), peak_dbi=float(d_db[i, j]),
        front_to_back_db=float(10 * np.log10(front / back)),
        normalization=norm, radiated_power_w=prad)


def plane_cut(geom: YagiGeometry, f: float, plane: str, step_deg: float = 1.0):
    """Directivity (dBi) around a full circle in the E-plane (x-z) or H-plane (x-y).

    The cut angle is measured from the +z axis toward +x in the E-plane and
    from +x toward +y in the H-plane, so endfire sits at 90 deg and 0 deg.
    """
    ang = np.arange(int(round(360 / step_deg))) * step_deg
    a = np.radians(ang)
    if plane.upper() == "E":
        theta = np.arccos(np.cos(a))
        phi = np.where(np.sin(a) >= 0, 0.0, math.pi)
    elif plane.upper() == "H":
        theta = np.full_like(a, math.pi / 2)
        phi = a
    else:
        raise ValueError(f"plane must be 'E' or 'H', got {plane!r}")
    with np.errstate(divide="ignore"):
        return ang, 10 * np.log10(directivity(geom, f, theta, phi))
