"""``tmfa`` command line.

Exit codes: 0 success, 2 invalid configuration, 3 tuner missed the return
loss target, 4 solver failure, 5 modulation search failed (< 10 dB), 6 the
time-domain oracle disagrees with harmonic balance.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np
import yaml

from . import __version__, antenna
from .antenna import AntennaError
from .circuit import CircuitError, with_modulation
from .config import ConfigError, RunConfig
from .hbsolver import SolverError, sparams, sweep
from .optimizer import equiripple_metrics, optimize_modulation, tune_equiripple
from .synth import SynthesisError, chebyshev_prototype, realize_ladder
from .system import (Modulation, ModelError, boresight_sweep, build_model, pattern_cuts,
                     peak_band)
from .tdoracle import CommensurabilityError, OracleError, default_dt, oracle_sparams

EXIT_CONFIG, EXIT_TUNER, EXIT_SOLVER, EXIT_OPTIMIZE, EXIT_ORACLE = 2, 3, 4, 5, 6
MIN_ISOLATION_DB = 10.0


class CommandError(Exception):
    def __init__(self, code: int, message: str, frequency: float | None = None):
        super().__init__(message)
        self.code = code
        self.frequency = frequency


class Outputs:
    """Collects output files and writes them only when the command succeeds.

    Each file goes to a temporary name in the output directory and is then
    renamed into place, so a failure never leaves partial files behind.
    """

    def __init__(self, directory: str, header: str):
        self.directory = directory
        self.header = header
        self.files: dict[str, str] = {}

    def add(self, name: str, body: str, comment: str = "#"):
        head = "".join(f"{comment} {line}\n" if line else f"{comment}\n"
                       for line in self.header.splitlines())
        self.files[name] = head + body

    def add_csv(self, name: str, columns, rows):
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        self.add(name, "\n".join(lines) + "\n")

    def commit(self) -> list[str]:
        os.makedirs(self.directory, exist_ok=True)
        staged = []
        try:
            for name, text in self.files.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.directory)
                with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
                staged.append((tmp, os.path.join(self.directory, name)))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, final in staged:
            os.replace(tmp, final)
        return [final for _, final in staged]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(round(v, 12)) if v != 0 else "0.0"


def _header(cfg: RunConfig, command: str) -> str:
    return f"tmfa {__version__} {command}\nresolved config:\n" + cfg.dump().rstrip("\n")


def _spec_ladder(cfg: RunConfig):
    spec = cfg.filter.spec()
    ladder = realize_ladder(chebyshev_prototype(spec), spec, cfg.filter.c_res, cfg.filter.q_u)
    return spec, tune_equiripple(ladder, spec)


def _modulation(cfg: RunConfig) -> Modulation:
    m = cfg.modulation
    return Modulation.degrees(m.fm, m.delta_m, m.delta_phi_deg)


def _grid(cfg: RunConfig) -> np.ndarray:
    s = cfg.sweep
    return np.linspace(s.f_start, s.f_stop, s.points)


# -- commands ---------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args, out: Outputs) -> int:
    spec, ladder = _spec_ladder(cfg)
    m = equiripple_metrics(ladder, spec)
    out.add("ladder.yaml", yaml.safe_dump(ladder.to_record(), sort_keys=False))
    summary = (f"resonators = {ladder.order}\n"
               f"min_in_band_rl_db = {m['min_rl_db']:.6f}\n"
               f"reflection_zeros = {m['reflection_zeros']}\n"
               f"fbw10 = {m['fbw10']:.6f}\n")
    out.add("synth_summary.txt", summary)
    if m["min_rl_db"] < spec.rl or m["reflection_zeros"] != spec.order:
        raise CommandError(EXIT_TUNER, f"tuner reached RL {m['min_rl_db']:.3f} dB with "
                                       f"{m['reflection_zeros']} reflection zeros "
                                       f"(target {spec.rl} dB, {spec.order})")
    return 0


def _sweep_rows(cfg, ladder, freqs):
    res = sweep(ladder, freqs, cfg.solver.k_max)
    if res.errors:
        f, msg = res.errors[0]
        raise CommandError(EXIT_SOLVER, msg, f)
    k = cfg.solver.k_max
    cols = ["f_hz", "s11_db", "s21_db", "s12_db", "iso_db"]
    if cfg.sweep.harmonics:
        cols += [f"s21_k{j:+d}_db" for j in range(-k, k + 1)]
        cols += [f"s12_k{j:+d}_db" for j in range(-k, k + 1)]
    rows = []
    for r in res.responses:
        row = [r.f, r.s11_db, r.s21_db, r.s12_db, r.isolation_db]
        if cfg.sweep.harmonics:
            row += list(r.harmonic_db("s21")) + list(r.harmonic_db("s12"))
        rows.append(row)
    return cols, rows


def cmd_sweep(cfg: RunConfig, args, out: Outputs) -> int:
    _, ladder = _spec_ladder(cfg)
    freqs = _grid(cfg)
    states = []
    if args.state in (None, "static"):
        states.append(("sweep_static.csv", ladder))
    if args.state in (None, "modulated"):
        m = cfg.modulation
        states.append(("sweep_modulated.csv",
                       with_modulation(ladder, m.fm, m.delta_m, math.radians(m.delta_phi_deg))))
    for name, lad in states:
        cols, rows = _sweep_rows(cfg, lad, freqs)
        out.add_csv(name, cols, rows)
    return 0


def _model(cfg: RunConfig):
    return build_model(cfg.filter.spec(), cfg.antenna.geometry(), cfg.filter.q_u,
                       cfg.filter.c_res, cfg.solver.k_max)


def cmd_pattern(cfg: RunConfig, args, out: Outputs) -> int:
    model = _model(cfg)
    mod = None if args.state == "static" else _modulation(cfg)
    cuts = pattern_cuts(model, cfg.filter.f0, mod)
    for plane, cut in cuts.items():
        out.add_csv(f"cut_{plane}.csv", ["angle_deg", "tx_db", "rx_db"],
                    zip(cut.angle_deg, cut.tx_db, cut.rx_db))
    pat = antenna.pattern(model.geom, cfg.filter.f0)
    t, p = np.meshgrid(pat.theta_deg, pat.phi_deg, indexing="ij")
    out.add_csv("pattern.csv", ["theta_deg", "phi_deg", "d_dbi"],
                zip(t.ravel(), p.ravel(), pat.d_dbi.ravel()))
    freqs = _grid(cfg)
    z = model.table(freqs)
    out.add_csv("impedance.csv", ["f_hz", "re_z_ohm", "im_z_ohm"],
                zip(freqs, np.real(z), np.imag(z)))
    return 0


def cmd_boresight(cfg: RunConfig, args, out: Outputs) -> int:
    model = _model(cfg)
    mod = None if args.state == "static" else _modulation(cfg)
    rep = boresight_sweep(model, _grid(cfg), mod)
    out.add_csv("boresight.csv", ["f_hz", "ref_db", "static_tx", "mod_tx", "mod_rx", "iso"],
                rep.rows())
    return 0


def cmd_optimize(cfg: RunConfig, args, out: Outputs) -> int:
    model = _model(cfg)
    o = cfg.optimizer
    seeds = tuple((s[0], s[1], math.radians(s[2])) for s in o.seeds)
    rep = optimize_modulation(model, cfg.filter.f0, o.bounds(), weight=o.weight, seeds=seeds,
                              grid=o.grid, n_starts=o.n_starts, rng_seed=args.seed,
                              k_max=cfg.solver.k_max, iso_cap=o.iso_cap_db)
    out.add("optimize_report.txt", rep.to_text())
    out.add_csv("optimize_trace.csv", ["iteration", "fm_hz", "delta_m", "delta_phi_deg",
                                       "objective"],
                ((i, x[0], x[1], math.degrees(x[2]), v) for i, (x, v) in enumerate(rep.trace)))
    p = rep.params
    tuned = cfg.with_modulation(p["fm_hz"], p["delta_m"], p["delta_phi_deg"])
    out.add("optimized_config.yaml", tuned.dump())
    if not rep.isolation_db >= MIN_ISOLATION_DB:
        raise CommandError(EXIT_OPTIMIZE, f"best isolation {rep.isolation_db:.3f} dB is below "
                                          f"{MIN_ISOLATION_DB} dB")
    return 0


def cmd_oracle_check(cfg: RunConfig, args, out: Outputs) -> int:
    _, ladder = _spec_ladder(cfg)
    o = cfg.oracle
    m = cfg.modulation
    kw = dict(settle_periods=o.settle_periods, window_periods=o.window_periods)
    jobs = [(cfg.filter.f0, 0.0, ladder)]
    for f, ratio in o.points:
        fm = f / round(ratio)
        jobs.append((f, fm, with_modulation(ladder, fm, m.delta_m, math.radians(m.delta_phi_deg))))
    rows, worst = [], 0.0
    for f, fm, lad in jobs:
        dt = default_dt(f, fm, o.steps_per_cycle)
        hb = sparams(lad, f, cfg.solver.k_max)
        td = oracle_sparams(lad, f, dt=dt, **kw)
        d21, d12 = td.s21_db - hb.s21_db, td.s12_db - hb.s12_db
        worst = max(worst, abs(d21), abs(d12))
        rows.append((f, fm, hb.s21_db, hb.s12_db, td.s21_db, td.s12_db, d21, d12))
    out.add_csv("oracle_check.csv", ["f_hz", "fm_hz", "hb_s21_db", "hb_s12_db", "td_s21_db",
                                     "td_s12_db", "delta_s21_db", "delta_s12_db"], rows)
    if worst > o.tolerance_db:
        raise CommandError(EXIT_ORACLE, f"oracle disagreement {worst:.4f} dB exceeds "
                                        f"{o.tolerance_db} dB")
    return 0


COMMANDS = {"synth": cmd_synth, "sweep": cmd_sweep, "pattern": cmd_pattern,
            "boresight": cmd_boresight, "optimize": cmd_optimize,
            "oracle-check": cmd_oracle_check}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    state = common.add_mutually_exclusive_group()
    state.add_argument("--modulated", dest="state", action="store_const", const="modulated",
                       help="modulated state only")
    state.add_argument("--static", dest="state", action="store_const", const="static",
                       help="static state only")
    common.add_argument("--seed", type=int, default=None,
                        help="add one random start to the modulation search")
    parser = argparse.ArgumentParser(prog="tmfa", description="Time-modulated filtering antenna "
                                     "design and analysis.")
    parser.add_argument("--version", action="version", version=f"tmfa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"synth": "synthesize and tune the ladder", "sweep": "S-parameter sweep",
             "pattern": "radiation pattern cuts", "boresight": "boresight gain versus frequency",
             "optimize": "search modulation parameters",
             "oracle-check": "compare harmonic balance with the time-domain oracle"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _error_line(code: int, kind: str, message: str, frequency=None) -> str:
    rec = {"error": kind, "exit_code": code, "message": message}
    if frequency is not None:
        rec["frequency_hz"] = frequency
    return json.dumps(rec, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        print(_error_line(EXIT_CONFIG, "config", str(exc)), file=sys.stderr)
        return EXIT_CONFIG
    out = Outputs(args.out or cfg.output.dir, _header(cfg, args.command))
    try:
        code = COMMANDS[args.command](cfg, args, out)
        out.commit()
        return code
    except CommandError as exc:
        # a complete report still helps diagnose a tuner, search or oracle miss
        if exc.code in (EXIT_TUNER, EXIT_OPTIMIZE, EXIT_ORACLE):
            out.commit()
        print(_error_line(exc.code, args.command, str(exc), exc.frequency), file=sys.stderr)
        return exc.code
    except (ConfigError, SynthesisError, CircuitError, CommensurabilityError) as exc:
        print(_error_line(EXIT_CONFIG, type(exc).__name__, str(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, OracleError, ModelError, AntennaError) as exc:
        print(_error_line(EXIT_SOLVER, type(exc).__name__, str(exc),
                          getattr(exc, "frequency", None)), file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
