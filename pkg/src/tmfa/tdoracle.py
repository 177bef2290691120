"""Time-domain reference solver for the modulated ladder.

The network is integrated with fixed-step RK4 on nodal charges and inductor
currents. Capacitances enter only through ``v = C(t)^-1 q``, so ``i = dq/dt``
holds exactly for the time-varying capacitors. Because the equations are
linear, one RK4 step is an affine map ``x -> M_n x + u_n``; for periodic
networks the maps of one common period are built once and reused, which
keeps hundreds of settling periods cheap. Steady-state amplitudes come from
orthogonal projection over an integer number of common periods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np

from .circuit import ImpedanceTable, ModulatedLadder

SETTLE_PERIODS = 200
WINDOW_PERIODS = 8
STEPS_PER_CYCLE = 200
SETTLE_TOL = 1e-6
MAX_DENOMINATOR = 64


class OracleError(RuntimeError):
    pass


class IntegrationError(OracleError):
    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class NotSettledError(OracleError):
    def __init__(self, message: str, metric: float):
        super().__init__(message)
        self.metric = metric


class CommensurabilityError(ValueError):
    pass


def common_period(f: float, fm: float, max_denominator: int = MAX_DENOMINATOR) -> float:
    """Shortest T with f*T and fm*T both integers; ``1/f`` when fm is 0."""
    if not f > 0:
        raise CommensurabilityError(f"drive frequency must be > 0, got {f!r}")
    if fm == 0:
        return 1.0 / f
    ratio = Fraction(f / fm).limit_denominator(max_denominator)
    if abs(float(ratio) * fm - f) > 1e-12 * f:
        raise CommensurabilityError(
            f"f/fm = {f / fm:.12g} is not a ratio of integers with denominator "
            f"<= {max_denominator}; choose commensurate frequencies")
    return ratio.denominator / fm


# -- generic linear nodal network ------------------------------------------

@dataclass
class NodalNetwork:
    """Linear network with node-to-node capacitances, conductances and grounded inductors.

    ``capacitance(t)`` returns the nodal capacitance matrix for an array of
    times (shape ``t.shape + (n, n)``); ``injection(t)`` the independent
    current injected into each node. ``period`` (seconds) marks the network
    as periodic so step maps can be reused; ``None`` with no injection and a
    constant capacitance means time-invariant.
    """

    n_nodes: int
    capacitance: Callable[[np.ndarray], np.ndarray]
    conductance: np.ndarray
    inductors: tuple = ()
    injection: Callable[[np.ndarray], np.ndarray] | None = None
    dcapacitance: Callable[[np.ndarray], np.ndarray] | None = None
    period: float | None = None
    time_invariant: bool = False
    drive: dict | None = None
    ports: dict | None = None

    @property
    def size(self) -> int:
        return self.n_nodes + len(self.inductors)

    def _incidence(self):
        b = np.zeros((self.n_nodes, len(self.inductors)))
        linv = np.zeros(len(self.inductors))
        for j, (node, ind) in enumerate(self.inductors):
            b[node, j] = 1.0
            linv[j] = 1.0 / ind
        return b, linv

    def system_matrix(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = np.linalg.inv(self.capacitance(t))
        n, m = self.n_nodes, len(self.inductors)
        b, linv = self._incidence()
        a = np.zeros(t.shape + (n + m, n + m))
        a[..., :n, :n] = -np.einsum("ij,...jk->...ik", self.conductance, s)
        a[..., :n, n:] = -b
        a[..., n:, :n] = np.einsum("i,ji,...jk->...ik", linv, b, s)
        return a

    def forcing(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros(t.shape + (self.size,))
        if self.injection is not None:
            out[..., :self.n_nodes] = self.injection(t)
        return out

    def voltages(self, t, x) -> np.ndarray:
        s = np.linalg.inv(self.capacitance(np.atleast_1d(np.asarray(t, dtype=float))))
        return np.einsum("...ij,...j->...i", s, np.asarray(x)[..., :self.n_nodes])

    def stored_energy(self, t, x) -> np.ndarray:
        x = np.asarray(x)
        q = x[..., :self.n_nodes]
        v = self.voltages(t, x)
        il = x[..., self.n_nodes:]
        ind = np.array([l for _, l in self.inductors])
        return 0.5 * np.sum(q * v, axis=-1) + 0.5 * np.sum(ind * il * il, axis=-1)


def rk4_maps(net: NodalNetwork, t0: float, dt: float, n: int):
    """Affine maps (M, u) of ``n`` consecutive RK4 steps starting at ``t0``."""
    t = t0 + dt * np.arange(n)
    a1 = net.system_matrix(t)
    a2 = net.system_matrix(t + 0.5 * dt)
    a4 = net.system_matrix(t + dt)
    b1, b2, b4 = net.forcing(t), net.forcing(t + 0.5 * dt), net.forcing(t + dt)
    eye = np.eye(net.size)
    h = dt

    def mm(x, y):
        return np.einsum("...ij,...jk->...ik", x, y)

    def mv(x, y):
        return np.einsum("...ij,...j->...i", x, y)

    # k_i = K_i x + c_i
    k1, c1 = a1, b1
    k2 = mm(a2, eye + 0.5 * h * k1)
    c2 = mv(a2, 0.5 * h * c1) + b2
    k3 = mm(a2, eye + 0.5 * h * k2)
    c3 = mv(a2, 0.5 * h * c2) + b2
    k4 = mm(a4, eye + h * k3)
    c4 = mv(a4, h * c3) + b4
    m = eye + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    u = h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
    return m, u


class _MapCache:
    """Step maps for a network, reused across periods when the network is periodic."""

    CHUNK = 4096

    def __init__(self, net: NodalNetwork, dt: float):
        self.net = net
        self.dt = dt
        self.steps = None
        if net.time_invariant:
            self.steps = 1
        elif net.period is not None:
            p = net.period / dt
            if abs(p - round(p)) < 1e-9 * p:
                self.steps = int(round(p))
        self._maps = None
        if self.steps is not None:
            self._maps = self._build(0, self.steps)

    def _build(self, start: int, n: int):
        ms, us = [], []
        for s in range(0, n, self.CHUNK):
            k = min(self.CHUNK, n - s)
            m, u = rk4_maps(self.net, (start + s) * self.dt, self.dt, k)
            ms.append(m)
            us.append(u)
        return np.concatenate(ms), np.concatenate(us)

    def maps(self, start: int, n: int):
        if self._maps is None:
            return self._build(start, n)
        idx = (start + np.arange(n)) % self.steps
        return self._maps[0][idx], self._maps[1][idx]

    def compose(self, start: int, n: int):
        """Single affine map equivalent to ``n`` steps from step ``start``."""
        if self.net.time_invariant:
            m, u = self._maps[0][0], self._maps[1][0]
            # powers of an affine map via the augmented matrix
            aug = np.eye(m.shape[0] + 1)
            aug[:-1, :-1] = m
            aug[:-1, -1] = u
            p = np.linalg.matrix_power(aug, n)
            return p[:-1, :-1], p[:-1, -1]
        m_all, u_all = self.maps(start, n)
        mc = np.eye(m_all.shape[1])
        uc = np.zeros(m_all.shape[1])
        for m, u in zip(m_all, u_all):
            mc = m @ mc
            uc = m @ uc + u
        return mc, uc

    def prefix(self, start: int, n: int):
        """Maps from step ``start`` to each of the following ``n`` steps (inclusive of 0)."""
        m_all, u_all = self.maps(start, n)
        size = m_all.shape[1]
        pm = np.empty((n + 1, size, size))
        pu = np.empty((n + 1, size))
        pm[0] = np.eye(size)
        pu[0] = 0.0
        for i in range(n):
            pm[i + 1] = m_all[i] @ pm[i]
            pu[i + 1] = m_all[i] @ pu[i] + u_all[i]
        return pm, pu


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    network: NodalNetwork
    dt: float

    @property
    def v(self) -> np.ndarray:
        return self.network.voltages(self.t, self.x)

    def stored_energy(self) -> np.ndarray:
        return self.network.stored_energy(self.t, self.x)

    def dissipated_energy(self) -> np.ndarray:
        """Cumulative energy dissipated in the conductances (trapezoid over records)."""
        v = self.v
        p = np.einsum("...i,ij,...j->...", v, self.network.conductance, v)
        out = np.zeros_like(p)
        out[1:] = np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(self.t))
        return out


def integrate_network(net: NodalNetwork, duration: float, dt: float, x0=None,
                      t0: float = 0.0, record_every: int = 1) -> Trajectory:
    """Fixed-step RK4 from ``t0`` for ``duration`` seconds, recording every ``record_every`` steps."""
    if not dt > 0 or not duration >= 0:
        raise ValueError("dt must be > 0 and duration >= 0")
    n_steps = int(round(duration / dt))
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    x = np.zeros(net.size) if x0 is None else np.asarray(x0, dtype=float).copy()
    cache = _MapCache(net, dt)
    start = int(round(t0 / dt))
    ts, xs = [t0], [x.copy()]
    step = 0
    while step < n_steps:
        k = min(record_every, n_steps - step)
        m, u = cache.compose(start + step, k)
        x = m @ x + u
        step += k
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"state became non-finite at t = {t0 + step * dt:.6e} s",
                                   t0 + step * dt)
        ts.append(t0 + step * dt)
        xs.append(x.copy())
    return Trajectory(np.array(ts), np.array(xs), net, dt)


# -- ladder as a nodal network ----------------------------------------------

def _resistance(z, name: str) -> float:
    if isinstance(z, ImpedanceTable):
        raise OracleError(f"{name} is frequency dependent; the time-domain oracle "
                          "supports resistive terminations only")
    z = complex(z)
    if abs(z.imag) > 1e-12 * abs(z.real):
        raise OracleError(f"{name} = {z} is reactive; the time-domain oracle "
                          "supports resistive terminations only")
    return z.real


def ladder_network(ladder: ModulatedLadder, f: float, driven_port: int = 1,
                   amplitude: float = 1.0) -> NodalNetwork:
    """Nodal network of ``ladder`` with a Thevenin cosine source E*cos(2 pi f t) at a port.

    The source is converted to a Norton injection at the driven terminal node.
    """
    if driven_port not in (1, 2):
        raise ValueError("driven_port must be 1 or 2")
    rs = _resistance(ladder.z_source, "source impedance")
    rl = _resistance(ladder.z_load, "load impedance")
    n = ladder.order
    nn = n + 2
    mod = ladder.modulation
    wm = 2 * math.pi * mod.fm
    c0 = np.asarray(ladder.C0)
    phases = np.asarray(mod.phases)
    dm = mod.delta_m

    base = np.zeros((nn, nn))

    def couple(i, j, c):
        base[i, i] += c
        base[j, j] += c
        base[i, j] -= c
        base[j, i] -= c

    couple(0, 1, ladder.ce_in)
    for i, c in enumerate(ladder.cc):
        couple(i + 1, i + 2, c)
    couple(n, n + 1, ladder.ce_out)
    ground = np.arange(1, n + 1)

    def capacitance(t):
        cm = np.broadcast_to(base, t.shape + base.shape).copy()
        cg = c0 * (1 + dm * np.cos(wm * t[..., None] + phases))
        cm[..., ground, ground] += cg
        return cm

    def dcapacitance(t):
        out = np.zeros(t.shape + base.shape)
        out[..., ground, ground] = -c0 * dm * wm * np.sin(wm * t[..., None] + phases)
        return out

    g = np.zeros((nn, nn))
    g[0, 0] = 1 / rs
    g[nn - 1, nn - 1] = 1 / rl
    g[ground, ground] = np.asarray(ladder.G)
    node = 0 if driven_port == 1 else nn - 1
    r = rs if driven_port == 1 else rl
    w = 2 * math.pi * f

    def injection(t):
        out = np.zeros(t.shape + (nn,))
        out[..., node] = amplitude * np.cos(w * t) / r
        return out

    period = common_period(f, mod.fm) if dm > 0 else 1.0 / f
    return NodalNetwork(nn, capacitance, g, tuple((i + 1, l) for i, l in enumerate(ladder.L)),
                        injection, dcapacitance, period,
                        drive=dict(node=node, resistance=r, amplitude=amplitude, omega=w),
                        ports=dict(rs=rs, rl=rl))


def default_dt(f: float, fm: float, steps_per_cycle: int = STEPS_PER_CYCLE) -> float:
    """Largest step that divides the common period with ``steps_per_cycle`` steps per fastest cycle."""
    period = common_period(f, fm)
    n = math.ceil(steps_per_cycle * max(f, fm) * period - 1e-9)
    return period / n


def integrate(ladder: ModulatedLadder, f: float, duration: float, dt: float | None = None,
              driven_port: int = 1, amplitude: float = 1.0, x0=None,
              record_every: int = 1) -> Trajectory:
    """RK4 trajectory of ``ladder`` driven at ``f`` from port ``driven_port``."""
    fm = ladder.modulation.fm if not ladder.modulation.is_static else 0.0
    dt = dt or default_dt(f, fm)
    if dt > 1.0 / (200.0 * max(f, fm)) * (1 + 1e-12):
        raise ValueError(f"dt = {dt:.3e} s exceeds 1/(200*max(f, fm))")
    net = ladder_network(ladder, f, driven_port, amplitude)
    return integrate_network(net, duration, dt, x0, record_every=record_every)


# -- steady state -----------------------------------------------------------

def project(t: np.ndarray, signal: np.ndarray, freqs) -> np.ndarray:
    """Complex amplitudes ``A_k`` of ``signal = Re sum A_k e^{j 2 pi f_k t}``.

    ``t`` must sample an integer number of common periods uniformly, with the
    final endpoint excluded.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    e = np.exp(-2j * math.pi * freqs[:, None] * t[None, :])
    return 2.0 / t.size * (e @ signal)


@dataclass
class SteadyStateExtract:
    f: float
    fm: float
    k: np.ndarray
    b_far: np.ndarray
    b_near: np.ndarray
    s_through: np.ndarray
    s_reflect: np.ndarray
    settling: float
    power: dict = field(default_factory=dict)

    @property
    def fundamental(self) -> complex:
        return complex(self.s_through[self.k == 0][0])


def extract_steady(ladder: ModulatedLadder, f: float, driven_port: int = 1,
                   k_range: int = 2, dt: float | None = None,
                   settle_periods: int = SETTLE_PERIODS, window_periods: int = WINDOW_PERIODS,
                   settle_tol: float = SETTLE_TOL) -> SteadyStateExtract:
    """Integrate to steady state and project terminal waves onto f + k*fm.

    The state is advanced ``settle_periods`` common periods by the period
    map, then two windows of ``window_periods`` are stepped and projected.
    The settling metric is the relative change of the far-port fundamental
    between the two windows.
    """
    static = ladder.modulation.is_static
    fm = 0.0 if static else ladder.modulation.fm
    period = common_period(f, fm)
    dt = dt or default_dt(f, fm)
    steps = period / dt
    if abs(steps - round(steps)) > 1e-9 * steps:
        raise CommensurabilityError("dt must divide the common period")
    steps = int(round(steps))
    net = ladder_network(ladder, f, driven_port, 1.0)
    cache = _MapCache(net, dt)
    phi, c = cache.compose(0, steps)
    x = np.zeros(net.size)
    for p in range(settle_periods):
        x = phi @ x + c
        if not np.all(np.isfinite(x)):
            raise IntegrationError("state became non-finite while settling "
                                   "(parametric instability)", (p + 1) * period)
    pm, pu = cache.prefix(0, steps)
    pm, pu = pm[:-1], pu[:-1]
    n_nodes = net.n_nodes
    ks = np.arange(-k_range, k_range + 1)
    freqs = f + ks * fm
    windows = []
    for w in range(2):
        ts, vs, xs_all = [], [], []
        for p in range(window_periods):
            xs = np.einsum("nij,j->ni", pm, x) + pu
            t = (settle_periods + w * window_periods + p) * period + dt * np.arange(steps)
            ts.append(t)
            xs_all.append(xs)
            x = phi @ x + c
        t = np.concatenate(ts)
        xs = np.concatenate(xs_all)
        if not np.all(np.isfinite(xs)):
            raise IntegrationError("state became non-finite in the extraction window", t[-1])
        v = net.voltages(t, xs)
        windows.append((t, xs, v))
    far = n_nodes - 1 if driven_port == 1 else 0
    near = 0 if driven_port == 1 else n_nodes - 1
    r_far = net.ports["rl"] if driven_port == 1 else net.ports["rs"]
    r_near = net.drive["resistance"]
    amps = []
    for t, _, v in windows:
        amps.append((project(t, v[:, far], freqs), project(t, v[:, near], freqs)))
    i0 = int(np.where(ks == 0)[0][0])
    a_prev, a_last = amps[0][0][i0], amps[1][0][i0]
    metric = abs(a_last - a_prev) / max(abs(a_last), 1e-300)
    if metric > settle_tol:
        raise NotSettledError(f"steady state not reached (metric {metric:.3e} > "
                              f"{settle_tol:.1e}); increase settle_periods", metric)
    v_far, v_near = amps[1]
    a_in = 1.0 / (2 * math.sqrt(r_near))
    # resistive terminations: b = V / sqrt(R) at the passive port; at the driven
    # port b = (V - R I) / (2 sqrt R) with I = (E - V)/R flowing into the network
    b_far = v_far / math.sqrt(r_far)
    e_k = (ks == 0).astype(float)
    b_near = (v_near - (e_k - v_near)) / (2 * math.sqrt(r_near))
    t, xs, v = windows[1]
    power = power_balance(net, t, xs, v)
    return SteadyStateExtract(f=f, fm=fm, k=ks, b_far=b_far, b_near=b_near,
                              s_through=b_far / a_in, s_reflect=b_near / a_in,
                              settling=float(metric), power=power)


def power_balance(net: NodalNetwork, t: np.ndarray, xs: np.ndarray, v: np.ndarray) -> dict:
    """Period-averaged source, dissipated and pump power over whole common periods.

    The pump power is the work done by the modulation on the capacitors,
    ``-1/2 v^T dC/dt v``; in steady state source + pump = dissipated.
    """
    d = net.drive
    e = d["amplitude"] * np.cos(d["omega"] * t)
    i_s = (e - v[:, d["node"]]) / d["resistance"]
    p_src = float(np.mean(e * i_s))
    g = net.conductance.copy()
    g[d["node"], d["node"]] = 0.0
    p_diss = float(np.mean(np.einsum("ni,ij,nj->n", v, g, v) + i_s ** 2 * d["resistance"]))
    p_pump = 0.0
    if net.dcapacitance is not None:
        p_pump = float(np.mean(-0.5 * np.einsum("ni,nij,nj->n", v, net.dcapacitance(t), v)))
    return {"source": p_src, "dissipated": p_diss, "pump": p_pump}


@dataclass(frozen=True)
class OracleResult:
    f: float
    fm: float
    s21_db: float
    s12_db: float
    forward: SteadyStateExtract
    reverse: SteadyStateExtract

    @property
    def isolation_db(self) -> float:
        return self.s21_db - self.s12_db


def oracle_sparams(ladder: ModulatedLadder, f: float, fm: float | None = None,
                   **kwargs) -> OracleResult:
    """Fundamental |S21| and |S12| (dB) from two time-domain runs.

    ``fm`` overrides the ladder's modulation frequency when given.
    """
    if fm is not None and not ladder.modulation.is_static:
        ladder = replace(ladder, modulation=replace(ladder.modulation, fm=fm))
    fwd = extract_steady(ladder, f, 1, **kwargs)
    rev = extract_steady(ladder, f, 2, **kwargs)

    def db(s):
        return float(20 * np.log10(abs(s)))

    return OracleResult(f=f, fm=fwd.fm, s21_db=db(fwd.fundamental),
                        s12_db=db(rev.fundamental), forward=fwd, reverse=rev)
