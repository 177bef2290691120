"""Run configuration: YAML document with nested blocks, validated up front.

Frequencies accept SI suffixes (``"2.4G"``, ``"75M"``, ``"10k"``); angles
are given in degrees. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields

import yaml

from .antenna import (DEFAULT_LENGTHS_WL, DEFAULT_RADIUS_WL, DEFAULT_SPACINGS_WL, AntennaError,
                      default_geometry)
from .optimizer import ISOLATION_CAP_DB, ModulationBounds
from .synth import DEFAULT_Q_U, FilterSpec, SynthesisError
from .tdoracle import CommensurabilityError, common_period


class ConfigError(ValueError):
    pass


_SI = {"": 1.0, "k": 1e3, "K": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
       "m": 1e-3, "u": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15}
_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([kKMGTmunpf]?)\s*(?:Hz|F|H)?\s*$")


def parse_si(value, name: str = "value") -> float:
    """Number or string with an optional SI prefix, e.g. ``"2.4G"`` or ``"0.86p"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _NUM.match(value)
        if m:
            return float(m.group(1)) * _SI[m.group(2)]
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
    raise ConfigError(f"{name}: cannot parse {value!r} as a number")


def _block(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = cls.convert(f.name, data[f.name], f"{path}.{f.name}")
    return cls(**kwargs)


class _Block:
    NUMERIC: tuple = ()
    INTEGER: tuple = ()

    @classmethod
    def convert(cls, name, value, path):
        if name in cls.INTEGER:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            return value
        if name in cls.NUMERIC:
            return parse_si(value, path)
        return value


@dataclass(frozen=True)
class FilterBlock(_Block):
    f0: float = 2.4e9
    fbw: float = 0.04
    rl: float = 13.0
    order: int = 3
    z0: float = 50.0
    c_res: float = 0.86e-12
    q_u: float = DEFAULT_Q_U
    NUMERIC = ("f0", "fbw", "rl", "z0", "c_res", "q_u")
    INTEGER = ("order",)

    def spec(self) -> FilterSpec:
        return FilterSpec(self.f0, self.fbw, self.rl, self.order, self.z0)


@dataclass(frozen=True)
class ModulationBlock(_Block):
    fm: float = 75e6
    delta_m: float = 0.09
    delta_phi_deg: float = 56.0
    NUMERIC = ("fm", "delta_m", "delta_phi_deg")


@dataclass(frozen=True)
class AntennaBlock(_Block):
    f0: float = 2.4e9
    lengths_wl: tuple = DEFAULT_LENGTHS_WL
    spacings_wl: tuple = DEFAULT_SPACINGS_WL
    radius_wl: float = DEFAULT_RADIUS_WL
    NUMERIC = ("f0", "radius_wl")

    @classmethod
    def convert(cls, name, value, path):
        if name in ("lengths_wl", "spacings_wl"):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path}: expected a list")
            return tuple(parse_si(v, path) for v in value)
        return super().convert(name, value, path)

    def geometry(self):
        return default_geometry(self.f0, self.lengths_wl, self.spacings_wl, self.radius_wl)


@dataclass(frozen=True)
class SweepBlock(_Block):
    f_start: float = 2.3e9
    f_stop: float = 2.5e9
    points: int = 201
    harmonics: bool = False
    NUMERIC = ("f_start", "f_stop")
    INTEGER = ("points",)


@dataclass(frozen=True)
class SolverBlock(_Block):
    k_max: int = 5
    INTEGER = ("k_max",)


DEFAULT_ORACLE_POINTS = ((2.36e9, 32), (2.38e9, 31), (2.40e9, 32), (2.42e9, 33), (2.44e9, 32))


@dataclass(frozen=True)
class OracleBlock(_Block):
    """Each point is ``[f, f/fm]``; the static check runs at the filter f0."""

    points: tuple = DEFAULT_ORACLE_POINTS
    steps_per_cycle: int = 200
    settle_periods: int = 200
    window_periods: int = 8
    tolerance_db: float = 0.05
    NUMERIC = ("tolerance_db",)
    INTEGER = ("steps_per_cycle", "settle_periods", "window_periods")

    @classmethod
    def convert(cls, name, value, path):
        if name == "points":
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path}: expected a list of [f, ratio] pairs")
            out = []
            for i, p in enumerate(value):
                if not isinstance(p, (list, tuple)) or len(p) != 2:
                    raise ConfigError(f"{path}[{i}]: expected [f, ratio]")
                out.append((parse_si(p[0], path), parse_si(p[1], path)))
            return tuple(out)
        return super().convert(name, value, path)


@dataclass(frozen=True)
class OptimizerBlock(_Block):
    fm_bounds: tuple = (10e6, 200e6)
    delta_m_bounds: tuple = (0.01, 0.3)
    delta_phi_deg_bounds: tuple = (0.0, 180.0)
    weight: float = 10.0
    iso_cap_db: float = ISOLATION_CAP_DB
    seeds: tuple = ((75e6, 0.09, 56.0),)
    grid: tuple = (8, 8, 12)
    n_starts: int = 6
    NUMERIC = ("weight", "iso_cap_db")
    INTEGER = ("n_starts",)

    @classmethod
    def convert(cls, name, value, path):
        if name.endswith("_bounds") or name == "grid":
            if not isinstance(value, (list, tuple)) or len(value) != (2 if name != "grid" else 3):
                raise ConfigError(f"{path}: wrong length or type")
            vals = tuple(parse_si(v, path) for v in value)
            if name == "grid":
                if any(v != int(v) or v < 1 for v in vals):
                    raise ConfigError(f"{path}: grid counts must be positive integers")
                return tuple(int(v) for v in vals)
            return vals
        if name == "seeds":
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path}: expected a list of [fm, delta_m, delta_phi_deg]")
            out = []
            for s in value:
                if not isinstance(s, (list, tuple)) or len(s) != 3:
                    raise ConfigError(f"{path}: each seed needs 3 values")
                out.append(tuple(parse_si(v, path) for v in s))
            return tuple(out)
        return super().convert(name, value, path)

    def bounds(self) -> ModulationBounds:
        return ModulationBounds(self.fm_bounds, self.delta_m_bounds,
                                tuple(math.radians(v) for v in self.delta_phi_deg_bounds))


@dataclass(frozen=True)
class OutputBlock(_Block):
    dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    filter: FilterBlock = field(default_factory=FilterBlock)
    modulation: ModulationBlock = field(default_factory=ModulationBlock)
    antenna: AntennaBlock = field(default_factory=AntennaBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    oracle: OracleBlock = field(default_factory=OracleBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    BLOCKS = {"filter": FilterBlock, "modulation": ModulationBlock, "antenna": AntennaBlock,
              "sweep": SweepBlock, "solver": SolverBlock, "oracle": OracleBlock,
              "optimizer": OptimizerBlock, "output": OutputBlock}

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
        unknown = sorted(set(data) - set(cls.BLOCKS))
        if unknown:
            raise ConfigError(f"unknown block(s) {', '.join(unknown)}")
        cfg = cls(**{k: _block(b, data.get(k), k) for k, b in cls.BLOCKS.items()})
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls.from_dict({})
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, tuple):
                return [clean(x) for x in v]
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v
        return {k: {kk: clean(vv) for kk, vv in asdict(getattr(self, k)).items()}
                for k in self.BLOCKS}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def validate(self) -> None:
        """Check every downstream precondition; raises ConfigError."""
        try:
            spec = self.filter.spec()
        except SynthesisError as exc:
            raise ConfigError(f"filter: {exc}") from exc
        if not self.filter.c_res > 0 or not self.filter.q_u > 0:
            raise ConfigError("filter: c_res and q_u must be positive")
        m = self.modulation
        if not 0 <= m.delta_m < 1:
            raise ConfigError(f"modulation.delta_m must satisfy 0 <= delta_m < 1, got {m.delta_m}")
        if not m.fm > 0:
            raise ConfigError(f"modulation.fm must be > 0, got {m.fm}")
        try:
            self.antenna.geometry()
        except AntennaError as exc:
            raise ConfigError(f"antenna: {exc}") from exc
        if len(self.antenna.lengths_wl) != len(self.antenna.spacings_wl) + 1:
            raise ConfigError("antenna: need one more length than spacings")
        s = self.sweep
        if not (0 < s.f_start <= s.f_stop) or s.points < 1:
            raise ConfigError("sweep: need 0 < f_start <= f_stop and points >= 1")
        if s.points > 1 and s.f_start == s.f_stop:
            raise ConfigError("sweep: f_start == f_stop requires points = 1")
        if not isinstance(s.harmonics, bool):
            raise ConfigError("sweep.harmonics must be true or false")
        if self.solver.k_max < 1:
            raise ConfigError("solver.k_max must be >= 1")
        o = self.oracle
        if o.steps_per_cycle < 200:
            raise ConfigError("oracle.steps_per_cycle must be >= 200")
        if o.settle_periods < 1 or o.window_periods < 1 or not o.tolerance_db > 0:
            raise ConfigError("oracle: periods must be >= 1 and tolerance_db > 0")
        for f, ratio in o.points:
            if not (f > 0 and ratio > 0):
                raise ConfigError("oracle.points: f and ratio must be positive")
            try:
                common_period(f, f / ratio)
            except CommensurabilityError as exc:
                raise ConfigError(f"oracle.points: {exc}") from exc
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(f"oracle.points: ratio {ratio} must be an integer "
                                  "(incommensurate request)")
        p = self.optimizer
        for name in ("fm_bounds", "delta_m_bounds", "delta_phi_deg_bounds"):
            lo, hi = getattr(p, name)
            if lo > hi:
                raise ConfigError(f"optimizer.{name}: lower bound exceeds upper bound")
        if not (p.fm_bounds[0] > 0 and 0 <= p.delta_m_bounds[0] and p.delta_m_bounds[1] < 1):
            raise ConfigError("optimizer bounds must keep fm > 0 and 0 <= delta_m < 1")
        if p.n_starts < 1 or not p.weight >= 0 or not p.iso_cap_db > 0:
            raise ConfigError("optimizer: n_starts >= 1, weight >= 0, iso_cap_db > 0 required")

    def with_modulation(self, fm: float, delta_m: float, delta_phi_deg: float) -> "RunConfig":
        from dataclasses import replace
        return replace(self, modulation=ModulationBlock(fm, delta_m, delta_phi_deg))
