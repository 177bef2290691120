"""Harmonic-balance solver for the linear time-periodic ladder.

A drive at angular frequency w produces node voltages at the sidebands
``w_k = w + k*wm`` for ``k = -k_max..k_max``. Every time-invariant element
stamps its admittance at ``w_k`` on the diagonal harmonic block. A modulated
capacitor ``C(t) = C0 + c1 e^{j wm t} + conj(c1) e^{-j wm t}`` with
``c1 = C0*delta_m/2*e^{j phi}`` carries the harmonic-k current::

    I_k = j w_k (C0 V_k + c1 V_{k-1} + conj(c1) V_{k+1})

so it only couples neighbouring harmonics of its own node.

Scattering quantities use power waves referenced to the (possibly complex,
frequency dependent) port terminations::

    a = (V + Z I) / (2 sqrt(Re Z)),   b = (V - conj(Z) I) / (2 sqrt(Re Z))

with I flowing into the network. Port 1 is the source side, port 2 the load.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .circuit import ModulatedLadder, impedance_at

PIVOT_FLOOR = 1e-300
RESIDUAL_TOL = 1e-10
DEFAULT_K_MAX = 5


class SolverError(RuntimeError):
    """Assembly or linear-solve failure at a particular frequency."""

    def __init__(self, message: str, frequency: float | None = None):
        super().__init__(message)
        self.frequency = frequency


class HarmonicCollisionError(SolverError):
    """A sideband lands on DC, where the inductor admittance is singular."""


class SingularMatrixError(SolverError):
    def __init__(self, frequency: float | None, pivot_index: int, pivot: float):
        where = "" if frequency is None else f" at f={frequency:.9g} Hz"
        super().__init__(f"near-singular pivot |{pivot:.3e}| at index {pivot_index}{where}",
                         frequency)
        self.pivot_index = pivot_index


# -- dense LU ---------------------------------------------------------------

def lu_factor(a, frequency: float | None = None):
    """Row-pivoted LU of a square complex matrix.

    The pivot is the largest-magnitude entry of the column; ties go to the
    lowest row index. Returns the packed factors and the row permutation.
    """
    lu = np.array(a, dtype=complex)
    n = lu.shape[0]
    if lu.ndim != 2 or lu.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {lu.shape}")
    perm = np.arange(n)
    for k in range(n):
        col = np.abs(lu[k:, k])
        p = int(np.argmax(col))
        if not col[p] >= PIVOT_FLOOR:
            raise SingularMatrixError(frequency, k, float(col[p]))
        p += k
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_solve(lu, perm, b):
    y = solve_triangular(lu, np.asarray(b, dtype=complex)[perm], lower=True,
                         unit_diagonal=True, check_finite=False)
    return solve_triangular(lu, y, lower=False, check_finite=False)


def solve_dense(a, b, frequency: float | None = None):
    """Solve ``a x = b`` (``b`` may hold several columns).

    One step of iterative refinement is applied when the relative residual
    exceeds ``RESIDUAL_TOL``; a residual that is still too large raises.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    lu, perm = lu_factor(a, frequency)
    x = lu_solve(lu, perm, b)
    scale = np.max(np.abs(b)) or 1.0
    r = b - a @ x
    if np.max(np.abs(r)) / scale > RESIDUAL_TOL:
        x = x + lu_solve(lu, perm, r)
        r = b - a @ x
        res = np.max(np.abs(r)) / scale
        if not res <= RESIDUAL_TOL:
            raise SolverError(f"relative residual {res:.3e} above {RESIDUAL_TOL:g}", frequency)
    return x


# -- assembly ---------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicBasis:
    k_max: int
    f: float
    fm: float

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 0:
            raise ValueError(f"k_max must be a non-negative integer, got {self.k_max!r}")
        if not self.f > 0:
            raise SolverError(f"drive frequency must be > 0, got {self.f!r}", self.f)
        w = self.omegas
        bad = np.abs(w) < 2 * math.pi * self.f * 1e-9
        if np.any(bad):
            k = int(self.indices[np.argmax(bad)])
            raise HarmonicCollisionError(
                f"harmonic k={k} of f={self.f:.9g} Hz with fm={self.fm:.9g} Hz falls on DC; "
                "shift the sweep point", self.f)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @property
    def size(self) -> int:
        return 2 * self.k_max + 1

    @property
    def freqs(self) -> np.ndarray:
        return self.f + self.indices * self.fm

    @property
    def omegas(self) -> np.ndarray:
        return 2 * math.pi * self.freqs


@dataclass
class HBSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    basis: HarmonicBasis
    n_nodes: int
    drive_amplitude: float = 1.0

    def index(self, node: int, k: int) -> int:
        return node * self.basis.size + (k + self.basis.k_max)


def assemble(ladder: ModulatedLadder, basis: HarmonicBasis, driven_port: int | None = None,
             drive_amplitude: float = 1.0) -> HBSystem:
    """Block nodal-admittance system; ``driven_port=None`` builds both drive columns."""
    nk = basis.size
    n_nodes = ladder.n_nodes
    dim = n_nodes * nk
    w = basis.omegas
    fk = basis.freqs
    a = np.zeros((dim, dim), dtype=complex)
    diag = np.arange(nk)

    def stamp(n1, n2, y):
        i1 = n1 * nk + diag
        a[i1, i1] += y
        if n2 is not None:
            i2 = n2 * nk + diag
            a[i2, i2] += y
            a[i1, i2] -= y
            a[i2, i1] -= y

    zs = impedance_at(ladder.z_source, fk)
    zl = impedance_at(ladder.z_load, fk)
    if np.any(np.real(zs) <= 0) or np.any(np.real(zl) <= 0):
        raise SolverError("port termination with non-positive real part", basis.f)
    last = n_nodes - 1
    stamp(0, None, 1.0 / zs)
    stamp(last, None, 1.0 / zl)
    stamp(0, 1, 1j * w * ladder.ce_in)
    stamp(ladder.order, last, 1j * w * ladder.ce_out)
    for i, c in enumerate(ladder.cc):
        stamp(i + 1, i + 2, 1j * w * c)

    mod = ladder.modulation
    for i in range(ladder.order):
        node = i + 1
        stamp(node, None, ladder.G[i] + 1.0 / (1j * w * ladder.L[i]) + 1j * w * ladder.C0[i])
        if mod.delta_m:
            c1 = 0.5 * ladder.C0[i] * mod.delta_m * np.exp(1j * mod.phases[i])
            rows = node * nk + diag
            # row k couples to V_{k-1} through c1 and to V_{k+1} through conj(c1)
            a[rows[1:], rows[:-1]] += 1j * w[1:] * c1
            a[rows[:-1], rows[1:]] += 1j * w[:-1] * np.conj(c1)

    ports = (1, 2) if driven_port is None else (driven_port,)
    rhs = np.zeros((dim, len(ports)), dtype=complex)
    for col, p in enumerate(ports):
        if p == 1:
            rhs[basis.k_max, col] = drive_amplitude / zs[basis.k_max]
        elif p == 2:
            rhs[last * nk + basis.k_max, col] = drive_amplitude / zl[basis.k_max]
        else:
            raise ValueError(f"driven_port must be 1 or 2, got {p!r}")
    return HBSystem(a, rhs, basis, n_nodes, drive_amplitude)


# -- scattering -------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicResponse:
    """Scattering data per harmonic index ``k`` at one drive frequency.

    ``s21[k]`` is the power wave leaving port 2 at ``f + k*fm`` per unit
    incident wave at port 1 (fundamental); ``s12`` is the reverse direction.
    """

    f: float
    fm: float
    k: np.ndarray
    s11: np.ndarray
    s21: np.ndarray
    s12: np.ndarray
    s22: np.ndarray

    @property
    def k0(self) -> int:
        return int(np.flatnonzero(self.k == 0)[0])

    def at(self, which: str, k: int = 0) -> complex:
        return complex(getattr(self, which)[int(np.flatnonzero(self.k == k)[0])])

    @staticmethod
    def _db(x) -> float:
        mag = abs(x)
        return 20.0 * math.log10(mag) if mag > 0 else -math.inf

    @property
    def s11_db(self) -> float:
        return self._db(self.s11[self.k0])

    @property
    def s21_db(self) -> float:
        return self._db(self.s21[self.k0])

    @property
    def s12_db(self) -> float:
        return self._db(self.s12[self.k0])

    @property
    def s22_db(self) -> float:
        return self._db(self.s22[self.k0])

    @property
    def isolation_db(self) -> float:
        return self.s21_db - self.s12_db

    def harmonic_db(self, which: str = "s21") -> np.ndarray:
        mag = np.abs(getattr(self, which))
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(mag)


def _power_waves(v, current, z):
    r = np.real(z)
    sq = np.sqrt(r)
    return (v + z * current) / (2 * sq), (v - np.conj(z) * current) / (2 * sq)


def sparams(ladder: ModulatedLadder, f: float, k_max: int = DEFAULT_K_MAX) -> HarmonicResponse:
    """Both drive directions at one frequency, sharing one factorisation."""
    basis = HarmonicBasis(k_max, f, ladder.modulation.fm)
    system = assemble(ladder, basis, driven_port=None)
    x = solve_dense(system.matrix, system.rhs, frequency=f)
    nk = basis.size
    last = system.n_nodes - 1
    fk = basis.freqs
    zs = impedance_at(ladder.z_source, fk)
    zl = impedance_at(ladder.z_load, fk)
    e = np.zeros(nk)
    e[basis.k_max] = system.drive_amplitude
    out = {}
    for col, p in enumerate((1, 2)):
        v1 = x[0:nk, col]
        v2 = x[last * nk:(last + 1) * nk, col]
        e1 = e if p == 1 else 0.0
        e2 = e if p == 2 else 0.0
        _, b1 = _power_waves(v1, (e1 - v1) / zs, zs)
        _, b2 = _power_waves(v2, (e2 - v2) / zl, zl)
        z_in = zs[basis.k_max] if p == 1 else zl[basis.k_max]
        a_in = system.drive_amplitude / (2 * math.sqrt(z_in.real))
        out[p] = (b1 / a_in, b2 / a_in)
    return HarmonicResponse(
        f=float(f), fm=float(ladder.modulation.fm), k=basis.indices,
        s11=out[1][0], s21=out[1][1], s12=out[2][0], s22=out[2][1])


@dataclass
class SweepResult:
    freqs: np.ndarray
    responses: list
    errors: list = field(default_factory=list)

    def __len__(self):
        return len(self.responses)

    def __iter__(self):
        return iter(self.responses)

    def __getitem__(self, i):
        return self.responses[i]

    def column(self, name: str) -> np.ndarray:
        """Fundamental quantity per grid point (``nan`` where the point failed)."""
        return np.array([getattr(r, name) if r is not None else np.nan
                         for r in self.responses], dtype=float)


def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get("TMFA_THREADS")
    n = requested if requested is not None else 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def sweep(ladder: ModulatedLadder, f_grid, k_max: int = DEFAULT_K_MAX,
          workers: int | None = None) -> SweepResult:
    """Independent :func:`sparams` solves over ``f_grid``, returned in grid order.

    A failing point is recorded in ``errors`` as ``(f, message)`` and leaves
    ``None`` in ``responses``; the remaining points are still solved.
    """
    freqs = np.asarray(f_grid, dtype=float).ravel()

    def one(f):
        try:
            return sparams(ladder, float(f), k_max), None
        except SolverError as exc:
            return None, (float(f), str(exc))

    n = thread_count(workers)
    if n > 1 and freqs.size > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(one, freqs))
    else:
        results = [one(f) for f in freqs]
    return SweepResult(freqs, [r for r, _ in results], [e for _, e in results if e])


# -- static cascade ---------------------------------------------------------

def static_sparams(ladder: ModulatedLadder, freqs) -> dict[str, np.ndarray]:
    """Fundamental S-parameters of the time-averaged ladder by ABCD cascade.

    Modulation is ignored. This path is vectorised over frequency and serves
    the equi-ripple tuner and as an independent check on :func:`assemble`.
    """
    f = np.asarray(freqs, dtype=float)
    w = 2 * np.pi * f
    one = np.ones_like(w, dtype=complex)
    zero = np.zeros_like(w, dtype=complex)

    def series(z):
        return np.array([[one, z], [zero, one]])

    def shunt(y):
        return np.array([[one, zero], [y, one]])

    def cascade(m1, m2):
        return np.einsum("ijf,jkf->ikf", m1, m2)

    abcd = series(1.0 / (1j * w * ladder.ce_in))
    for i in range(ladder.order):
        y = ladder.G[i] + 1.0 / (1j * w * ladder.L[i]) + 1j * w * ladder.C0[i]
        abcd = cascade(abcd, shunt(y))
        if i < ladder.order - 1:
            abcd = cascade(abcd, series(1.0 / (1j * w * ladder.cc[i])))
    abcd = cascade(abcd, series(1.0 / (1j * w * ladder.ce_out)))
    A, B, C, D = abcd[0, 0], abcd[0, 1], abcd[1, 0], abcd[1, 1]
    zs = impedance_at(ladder.z_source, f)
    zl = impedance_at(ladder.z_load, f)
    rs, rl = np.real(zs), np.real(zl)
    den = A * zl + B + zs * (C * zl + D)
    s21 = 2 * np.sqrt(rs * rl) / den
    s12 = s21 * (A * D - B * C)
    zin = (A * zl + B) / (C * zl + D)
    zout = (D * zs + B) / (C * zs + A)
    s11 = (zin - np.conj(zs)) / (zin + zs)
    s22 = (zout - np.conj(zl)) / (zout + zl)
    return {"f": f, "s11": s11, "s21": s21, "s12": s12, "s22": s22}
