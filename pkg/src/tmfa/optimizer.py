"""Derivative-free tuning: Nelder-Mead core, equi-ripple tuner, modulation search."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .circuit import ModulatedLadder, with_modulation
from .hbsolver import DEFAULT_K_MAX, SolverError, sparams, static_sparams, thread_count
from .synth import FilterSpec, ripple_from_return_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimplexConfig:
    step: float | tuple[float, ...] = 0.05
    alpha: float = 1.0
    gamma: float = 2.0
    rho: float = 0.5
    sigma: float = 0.5
    max_iter: int = 2000
    ftol: float = 1e-12
    xtol: float = 1e-9

    def __post_init__(self):
        if not (self.alpha >= 1 and self.gamma > self.alpha and 0 < self.rho < 1
                and 0 < self.sigma < 1):
            raise ValueError("simplex coefficients must satisfy gamma > alpha >= 1 > rho > 0 "
                             "and 0 < sigma < 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class OptimizationReport:
    x: np.ndarray
    fun: float
    trace: list = field(default_factory=list)
    nit: int = 0
    nfev: int = 0
    converged: bool = False
    params: dict = field(default_factory=dict)
    isolation_db: float = math.nan
    il_penalty_db: float = math.nan
    il_static_db: float = math.nan
    il_mod_db: float = math.nan

    def to_text(self) -> str:
        lines = [f"objective = {self.fun:.12g}",
                 f"iterations = {self.nit}",
                 f"evaluations = {self.nfev}",
                 f"converged = {str(self.converged).lower()}"]
        for k, v in self.params.items():
            lines.append(f"{k} = {v:.12g}")
        for name in ("isolation_db", "il_static_db", "il_mod_db", "il_penalty_db"):
            lines.append(f"{name} = {getattr(self, name):.12g}")
        return "\n".join(lines) + "\n"


def nelder_mead(objective: Callable[[np.ndarray], float], x0,
                config: SimplexConfig = SimplexConfig()) -> OptimizationReport:
    """Minimise ``objective`` from ``x0``.

    Non-finite objective values count as +inf, so such points are never
    accepted. Stops when both the objective spread and the simplex diameter
    fall below the configured tolerances, or after ``max_iter`` iterations.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        try:
            v = float(objective(x))
        except (SolverError, FloatingPointError, ZeroDivisionError, OverflowError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    steps = np.broadcast_to(np.asarray(config.step, dtype=float), (n,))
    simplex = np.empty((n + 1, n))
    simplex[0] = x0
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] + (steps[i] * v[i] if v[i] != 0 else steps[i])
        simplex[i + 1] = v
    fvals = np.array([f(v) for v in simplex])
    if not math.isfinite(fvals[0]):
        raise ValueError("objective is not finite at the starting point")

    trace = []
    converged = False
    nit = 0
    while nit < config.max_iter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        trace.append((simplex[0].copy(), float(fvals[0])))
        fspread = fvals[-1] - fvals[0]
        xspread = np.max(np.abs(simplex[1:] - simplex[0]))
        if fspread <= config.ftol and xspread <= config.xtol:
            converged = True
            break
        nit += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + config.alpha * (centroid - worst)
        fr = f(xr)
        if fr < fvals[0]:
            xe = centroid + config.gamma * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + config.rho * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + config.rho * (worst - centroid)
            fc = f(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        best = simplex[0]
        for i in range(1, n + 1):
            simplex[i] = best + config.sigma * (simplex[i] - best)
            fvals[i] = f(simplex[i])
    order = np.argsort(fvals, kind="stable")
    simplex, fvals = simplex[order], fvals[order]
    if not trace or trace[-1][1] != fvals[0]:
        trace.append((simplex[0].copy(), float(fvals[0])))
    return OptimizationReport(x=simplex[0].copy(), fun=float(fvals[0]), trace=trace,
                              nit=nit, nfev=nfev, converged=converged)


# -- equi-ripple tuner ------------------------------------------------------

REFLECTION_FLOOR_DB = -30.0
RL_MARGIN_DB = 0.1
HINGE_WEIGHT = 1000.0


def chebyshev_reflection(f, spec: FilterSpec):
    """Ideal equi-ripple |S11| of the bandpass target at ``f``."""
    eps2 = 10.0 ** (ripple_from_return_loss(spec.rl) / 10.0) - 1.0
    f = np.asarray(f, dtype=float)
    x = (f / spec.f0 - spec.f0 / f) / spec.fbw
    ax = np.abs(x)
    t = np.where(ax <= 1, np.cos(spec.order * np.arccos(np.clip(x, -1, 1))),
                 np.cosh(spec.order * np.arccosh(np.maximum(ax, 1.0))))
    t2 = eps2 * t * t
    return np.sqrt(t2 / (1.0 + t2))


def _to_db(x):
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(x))


def equiripple_metrics(ladder: ModulatedLadder, spec: FilterSpec, points: int = 2001) -> dict:
    """Return loss, reflection-zero count and 10-dB bandwidth of the static ladder.

    Reflection zeros are the local minima of |S11| inside the ripple band.
    """
    lo, hi = spec.band_edges
    f = np.linspace(lo, hi, points)
    s11 = _to_db(static_sparams(ladder, f)["s11"])
    interior = s11[1:-1]
    minima = int(np.sum((interior < s11[:-2]) & (interior < s11[2:])))
    span = 3.0 * spec.fbw * spec.f0
    fw = np.linspace(spec.f0 - span, spec.f0 + span, 4 * points)
    s11w = _to_db(static_sparams(ladder, fw)["s11"])
    below = s11w < -10.0
    centre = int(np.argmin(np.abs(fw - spec.f0)))
    if below[centre]:
        i = centre
        while i > 0 and below[i - 1]:
            i -= 1
        j = centre
        while j < below.size - 1 and below[j + 1]:
            j += 1
        fbw10 = (fw[j] - fw[i]) / spec.f0
    else:
        fbw10 = 0.0
    return {"min_rl_db": float(-np.max(s11)), "reflection_zeros": minima, "fbw10": float(fbw10)}


def _tuning_groups(ladder: ModulatedLadder):
    """Index groups of the tunable vector [C0..., cc..., ce_in, ce_out] sharing one knob."""
    n = ladder.order
    names = [("C0", i) for i in range(n)] + [("cc", i) for i in range(n - 1)] \
        + [("ce_in", 0), ("ce_out", 0)]
    if not ladder.is_mirror_symmetric():
        return names, [[i] for i in range(len(names))]
    groups = []
    seen = set()
    for i, (kind, j) in enumerate(names):
        if i in seen:
            continue
        if kind == "C0":
            mate = names.index(("C0", n - 1 - j))
        elif kind == "cc":
            mate = names.index(("cc", n - 2 - j))
        else:
            mate = names.index(("ce_out", 0)) if kind == "ce_in" else i
        g = sorted({i, mate})
        seen.update(g)
        groups.append(g)
    return names, groups


def _apply(ladder: ModulatedLadder, names, groups, u) -> ModulatedLadder:
    scale = np.ones(len(names))
    for g, ui in zip(groups, u):
        scale[g] = math.exp(ui)
    n = ladder.order
    c0 = tuple(float(c * scale[i]) for i, c in enumerate(ladder.C0))
    cc = tuple(float(c * scale[n + i]) for i, c in enumerate(ladder.cc))
    return replace(ladder, C0=c0, cc=cc, ce_in=float(ladder.ce_in * scale[-2]),
                   ce_out=float(ladder.ce_out * scale[-1]))


def tune_equiripple(ladder: ModulatedLadder, spec: FilterSpec, points: int = 161,
                    config: SimplexConfig | None = None, max_restarts: int = 8,
                    min_gain: float = 1e-3) -> ModulatedLadder:
    """Adjust shunt, coupling and external capacitors toward the equi-ripple target.

    The objective is the mean squared dB deviation of |S11| from the ideal
    Chebyshev profile over f0*(1 +- 0.6*fbw), both clipped at -30 dB, plus a
    hinge on in-band samples that rise above -(rl + 0.1 dB). Mirror
    pairs share a knob when the ladder is symmetric. Restarts continue while
    they lower the objective by more than ``min_gain`` (relative); a ladder
    that cannot be improved that much is returned unchanged.
    """
    if not ladder.modulation.is_static:
        raise ValueError("tune_equiripple expects a static ladder")
    config = config or SimplexConfig(step=0.02, max_iter=1500, ftol=1e-10, xtol=1e-7)
    half = 0.6 * spec.fbw
    f = np.linspace(spec.f0 * (1 - half), spec.f0 * (1 + half), points)
    target = np.maximum(_to_db(chebyshev_reflection(f, spec)), REFLECTION_FLOOR_DB)
    lo, hi = spec.band_edges
    inband = (f >= lo) & (f <= hi)
    names, groups = _tuning_groups(ladder)

    def objective(u):
        trial = _apply(ladder, names, groups, u)
        s11 = np.maximum(_to_db(static_sparams(trial, f)["s11"]), REFLECTION_FLOOR_DB)
        excess = np.maximum(0.0, s11[inband] + spec.rl + RL_MARGIN_DB)
        return float(np.mean((s11 - target) ** 2) + HINGE_WEIGHT * np.mean(excess ** 2))

    u = np.zeros(len(groups))
    best = objective(u)
    for _ in range(max_restarts):
        rep = nelder_mead(objective, u, config)
        if rep.fun < best * (1.0 - min_gain):
            u, best = rep.x, rep.fun
        else:
            break
    tuned = _apply(ladder, names, groups, u) if np.any(u) else ladder
    m = equiripple_metrics(tuned, spec)
    if m["min_rl_db"] < spec.rl or m["reflection_zeros"] != spec.order:
        log.warning("equi-ripple target missed: best in-band RL %.3f dB, %d reflection zeros",
                    m["min_rl_db"], m["reflection_zeros"])
    return tuned


# -- modulation search ------------------------------------------------------

@dataclass(frozen=True)
class ModulationBounds:
    fm: tuple[float, float] = (10e6, 200e6)
    delta_m: tuple[float, float] = (0.01, 0.3)
    delta_phi: tuple[float, float] = (0.0, math.pi)

    def as_array(self) -> np.ndarray:
        return np.array([self.fm, self.delta_m, self.delta_phi], dtype=float)


DESIGN_START = (75e6, 0.09, math.radians(56.0))
IL_GUARD_DB = 1.0
# Isolation credited to the objective saturates at the 20 dB goal plus 5 dB
# margin. Without a cap the search chases an exact S12 null (hundreds of dB
# set by rounding) and pays for it with insertion loss beyond the guard.
ISOLATION_CAP_DB = 25.0
MAX_RESTARTS = 4


def _squash(u, lo, hi):
    return lo + (hi - lo) / (1.0 + np.exp(-u))


def _unsquash(x, lo, hi):
    p = np.clip((x - lo) / (hi - lo), 1e-9, 1 - 1e-9)
    return np.log(p / (1.0 - p))


def modulation_metrics(ladder: ModulatedLadder, f0: float, fm: float, delta_m: float,
                       delta_phi: float, il_static_db: float,
                       k_max: int = DEFAULT_K_MAX) -> tuple[float, float]:
    """(isolation_db, modulated insertion loss in dB) at ``f0``."""
    r = sparams(with_modulation(ladder, fm, delta_m, delta_phi), f0, k_max)
    return r.isolation_db, -r.s21_db


def optimize_modulation(model, f0: float, bounds: ModulationBounds = ModulationBounds(),
                        weight: float = 10.0, seeds: Sequence[Sequence[float]] = (DESIGN_START,),
                        grid: tuple[int, int, int] = (8, 8, 12), n_starts: int = 6,
                        rng_seed: int | None = None, k_max: int = DEFAULT_K_MAX,
                        config: SimplexConfig | None = None,
                        workers: int | None = None,
                        iso_cap: float = ISOLATION_CAP_DB) -> OptimizationReport:
    """Search (fm, delta_m, delta_phi) maximising isolation at ``f0``.

    Minimises ``-min(isolation_db, iso_cap) + weight * max(0, il_mod - il_static - 1 dB)``.
    A coarse lattice over the bounds seeds a simplex search run in squashed
    coordinates; the best ``n_starts`` distinct seeds (configured seeds first)
    are refined and the best result is reported. ``rng_seed`` adds one random
    start drawn inside the bounds.
    """
    ladder = getattr(model, "ladder", model)
    static = replace(ladder, modulation=type(ladder.modulation).static(ladder.order))
    il_static = -sparams(static, f0, k_max).s21_db
    b = bounds.as_array()
    lo, hi = b[:, 0], b[:, 1]
    free = hi > lo
    config = config or SimplexConfig(step=0.5, max_iter=400, ftol=1e-9, xtol=1e-7)

    def evaluate(x):
        x = np.clip(x, lo, hi)
        iso, il = modulation_metrics(ladder, f0, x[0], x[1], x[2], il_static, k_max)
        pen = max(0.0, il - il_static - IL_GUARD_DB)
        return -min(iso, iso_cap) + weight * pen, iso, il, pen

    def objective_x(x):
        try:
            return evaluate(x)[0]
        except SolverError:
            return math.inf

    def to_x(u):
        x = lo.copy()
        x[free] = _squash(np.asarray(u), lo[free], hi[free])
        return x

    lattice = []
    axes = [np.linspace(lo[i], hi[i], grid[i] + 2)[1:-1] if free[i] else np.array([lo[i]])
            for i in range(3)]
    for a in axes[0]:
        for m in axes[1]:
            for p in axes[2]:
                lattice.append(np.array([a, m, p]))
    n = thread_count(workers)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            scores = list(pool.map(objective_x, lattice))
    else:
        scores = [objective_x(x) for x in lattice]
    order = np.argsort(np.asarray(scores), kind="stable")

    starts = [np.clip(np.asarray(s, dtype=float), lo, hi) for s in seeds]
    if rng_seed is not None:
        rng = np.random.default_rng(rng_seed)
        starts.append(lo + (hi - lo) * rng.uniform(0.05, 0.95, size=3))
    for i in order:
        if len(starts) >= n_starts + len(seeds) + (rng_seed is not None):
            break
        starts.append(lattice[i])

    best = None
    for s in starts:
        if not math.isfinite(objective_x(s)):
            continue
        u0 = _unsquash(s[free], lo[free], hi[free])
        rep = nelder_mead(lambda u: objective_x(to_x(u)), u0, config)
        # restart from the converged vertex; a fresh simplex escapes the
        # flat region where the isolation credit is saturated
        for _ in range(MAX_RESTARTS):
            again = nelder_mead(lambda u: objective_x(to_x(u)), rep.x, config)
            if not again.fun < rep.fun - 1e-9:
                break
            again.trace = rep.trace + again.trace
            again.nit += rep.nit
            again.nfev += rep.nfev
            rep = again
        if best is None or rep.fun < best.fun:
            best = rep
    if best is None:
        raise SolverError("no finite starting point for the modulation search", f0)

    x = to_x(best.x)
    obj, iso, il, pen = evaluate(x)
    best.x = x
    best.fun = obj
    best.trace = [(to_x(u), v) for u, v in best.trace]
    best.params = {"fm_hz": float(x[0]), "delta_m": float(x[1]),
                   "delta_phi_deg": math.degrees(float(x[2]))}
    best.isolation_db = iso
    best.il_static_db = il_static
    best.il_mod_db = il
    best.il_penalty_db = pen
    return best
