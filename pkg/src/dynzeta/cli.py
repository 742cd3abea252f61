"""Command-line front end.

Every subcommand reads one YAML run configuration::

    dynzeta <subcommand> CONFIG [--out-dir DIR] [--workers N]

The configuration holds a ``system`` block (core-model schema) and optional
command blocks.  Outputs are CSV (17 significant digits) and JSON (sorted
keys, ``schema_version``); without an output directory they are printed to
standard output.  A one-line summary is always printed last.

Exit status: 0 on success, 1 on configuration or validation errors, 2 on
numerical failures.
"""

from __future__ import annotations

import io
import json
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import click
import numpy as np
import yaml

from . import __version__
from .bowen import SingletonOracle, TableOracle, build_Ak, build_Ik, build_Qk, kind_tuples
from .determinant import (DeterminantHandle, LatticeClosedForm, TraceSeries, find_resonances)
from .entire import argument_principle_count, growth_order_fit
from .errors import ConfigError, DynzetaError, ValidationError
from .frames import FrameConfig, assemble_operator, convergence_sweep, decay_profile, galerkin_det
from .model import FlowSystem, system_from_dict, validate_system
from .orbits import enumerate_fixed_words, group_into_orbits, orbit_data
from .single_orbit import OrbitSpectrum, single_orbit_resonances

SCHEMA_VERSION = "1"

_BLOCKS = {
    "system": None,
    "orbits": {"m"},
    "traces": {"m", "z", "max_words"},
    "det": {"M", "re", "im"},
    "resonances": {"r", "M", "grid"},
    "single_orbit": {"t0", "lambdas", "mus", "q_minus", "zetas", "r"},
    "bowen": {"oracle", "strict"},
    "frames": {"L", "epsilon", "delta", "eta", "varpi", "boxes", "z", "sweep", "method",
               "decay_L", "decay_z"},
    "count": {"radii", "M", "method"},
    "growth": {"radii", "M", "method", "nodes"},
    "output": {"dir"},
}


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    system: FlowSystem | None
    blocks: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def block(self, name) -> dict:
        return dict(self.blocks.get(name) or {})


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "load_config", str(path))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}", "load_config", str(path))
    return parse_config(raw or {})


def parse_config(raw) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping", "parse_config", type(raw).__name__)
    unknown = sorted(set(raw) - set(_BLOCKS))
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}", "parse_config", unknown)
    blocks = {}
    for name, allowed in _BLOCKS.items():
        if name == "system" or name not in raw:
            continue
        blk = raw[name] or {}
        if not isinstance(blk, dict):
            raise ConfigError(f"block {name!r} must be a mapping", "parse_config", name)
        bad = sorted(set(blk) - allowed)
        if bad:
            raise ConfigError(f"unknown keys {bad} in block {name!r}", "parse_config", bad)
        blocks[name] = blk
    system = system_from_dict(raw["system"]) if raw.get("system") is not None else None
    return RunConfig(system, blocks, raw)


def _complex(v, what):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"{what} must be a number or [re, im]", "parse_config", v)
        return complex(float(v[0]), float(v[1]))
    try:
        return complex(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number or [re, im]", "parse_config", v) from None


def _positive(v, what, integer=False):
    try:
        x = int(v) if integer else float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number", "parse_config", v) from None
    if integer and x != float(v):
        raise ConfigError(f"{what} must be an integer", "parse_config", v)
    if not x > 0:
        raise ConfigError(f"{what} must be positive", "parse_config", v)
    return x


def _need_system(cfg: RunConfig) -> FlowSystem:
    if cfg.system is None:
        raise ConfigError("config has no system block", "parse_config", None)
    return cfg.system


def _grid(spec, what):
    if not isinstance(spec, (list, tuple)) or len(spec) != 3:
        raise ConfigError(f"{what} must be [start, stop, count]", "parse_config", spec)
    n = _positive(spec[2], f"{what} count", integer=True)
    return np.linspace(float(spec[0]), float(spec[1]), n)


# ---------------------------------------------------------------- formatting

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return buf.getvalue()


def json_text(obj) -> str:
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _det_handle(sys: FlowSystem, blk: dict):
    method = blk.get("method", "auto")
    if method not in ("auto", "closed-form", "cycle"):
        raise ConfigError("method must be auto, closed-form or cycle", "parse_config", method)
    if method == "closed-form" or (method == "auto" and sys.is_transition_independent()):
        return LatticeClosedForm.from_system(sys).handle(1e-14), "closed-form"
    M = _positive(blk.get("M", 20), "M", integer=True)
    return DeterminantHandle(TraceSeries(sys, M), M), f"cycle(M={M})"


# ---------------------------------------------------------------- subcommands

def cmd_validate(cfg: RunConfig, workers: int):
    rep = validate_system(_need_system(cfg))
    rows = [("violation", v) for v in rep.violations] + [("warning", w) for w in rep.warnings]
    out = {"csv": csv_text(["kind", "message"], rows)}
    if rep.violations:
        raise _Fail(1, rep.summary(), out)
    return out, rep.summary()


def cmd_orbits(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    mmax = _positive(cfg.block("orbits").get("m", 3), "orbits.m", integer=True)
    rows = []
    for m in range(1, mmax + 1):
        for w in group_into_orbits(enumerate_fixed_words(sys.graph, m)):
            rec = orbit_data(sys, w)
            rows.append((str(w), m, w.minimal_period, rec.T, rec.T_primitive, rec.det_factor,
                         rec.lift_trace.real, rec.lift_trace.imag))
    header = ["word", "m", "m_sharp", "T", "T_sharp", "det_factor", "lift_trace_re",
              "lift_trace_im"]
    return {"csv": csv_text(header, rows)}, f"{len(rows)} orbit classes up to length {mmax}"


def cmd_traces(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("traces")
    ms = blk.get("m", [1])
    ms = [ms] if not isinstance(ms, list) else ms
    ms = [_positive(m, "traces.m", integer=True) for m in ms]
    z = _complex(blk.get("z", 0), "traces.z")
    series = TraceSeries(sys, max(ms), int(blk.get("max_words", 1 << 26)))
    rows = []
    for m in ms:
        v = complex(series.s(m, np.array([z]))[0])
        rows.append((m, v.real, v.imag))
    return {"csv": csv_text(["m", "re", "im"], rows)}, f"{len(rows)} traces at z={z}"


def cmd_det(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("det")
    M = _positive(blk.get("M", 25), "det.M", integer=True)
    res = _grid(blk.get("re", [1, 4, 4]), "det.re")
    ims = _grid(blk.get("im", [-3, 3, 7]), "det.im")
    h = DeterminantHandle(TraceSeries(sys, M), M)
    zs = [complex(x, y) for y in ims for x in res]
    ests = _map(workers, h.estimate, zs)
    rows = [(z.real, z.imag, e.value.real, e.value.imag, e.error) for z, e in zip(zs, ests)]
    worst = max(e.error for e in ests)
    return ({"csv": csv_text(["re_z", "im_z", "re_d", "im_d", "tail_estimate"], rows)},
            f"{len(rows)} determinant values, max tail estimate {worst:.3g}")


def cmd_resonances(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("resonances")
    M = _positive(blk.get("M", 25), "resonances.M", integer=True)
    r = _positive(blk.get("r", 0.5), "resonances.r")
    grid = _positive(blk.get("grid", 40), "resonances.grid", integer=True)
    h = DeterminantHandle(TraceSeries(sys, M), M)
    rs = find_resonances(h, r, grid=grid, M=M)
    rows = [(q.z.real, q.z.imag, q.multiplicity, q.residual) for q in rs.zeros]
    return ({"csv": csv_text(["re", "im", "multiplicity", "residual"], rows)},
            f"{len(rows)} zeros ({rs.count} with multiplicity) in |z| <= {rs.radius:g}")


def cmd_single_orbit(cfg: RunConfig, workers: int):
    blk = cfg.block("single_orbit")
    for key in ("t0", "lambdas", "zetas"):
        if key not in blk:
            raise ConfigError(f"single_orbit block lacks {key!r}", "parse_config", key)
    spec = OrbitSpectrum(
        float(blk["t0"]),
        tuple(_complex(v, "lambdas") for v in blk["lambdas"]),
        tuple(_complex(v, "mus") for v in blk.get("mus", [])),
        int(blk.get("q_minus", 0)),
        tuple(_complex(v, "zetas") for v in blk["zetas"]),
    )
    r = _positive(blk.get("r", 5), "single_orbit.r")
    rs = single_orbit_resonances(spec, r)
    rows = [(q.z.real, q.z.imag, q.multiplicity) for q in rs.zeros]
    return ({"csv": csv_text(["re", "im", "multiplicity"], rows)},
            f"{len(rows)} lattice resonances ({rs.count} with multiplicity) in |z| <= {r:g}")


def cmd_bowen(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("bowen")
    table = blk.get("oracle", "singleton")
    if table == "singleton":
        oracle = SingletonOracle()
    elif isinstance(table, list):
        entries = []
        for item in table:
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise ConfigError("oracle entries are [subset, symbol] pairs", "parse_config",
                                  item)
            entries.append(([str(a) for a in item[0]], str(item[1])))
        oracle = TableOracle(entries)
    else:
        raise ConfigError("oracle must be 'singleton' or a list of pairs", "parse_config",
                          table)
    strict = bool(blk.get("strict", False))
    symbols = list(sys.graph.symbols)
    ks = kind_tuples(symbols, oracle)
    graphs = []
    for k in ks:
        Ik = build_Ik(build_Qk(symbols, k), oracle, symbols)
        ak = build_Ak(Ik, sys.graph, k, strict)
        graphs.append({"k": list(k), "vertices": len(Ik), "edges": ak.n_edges,
                       "has_cycle": bool(ak.has_cycle())})
    # odd-length tuples multiply, even-length ones divide
    out = {"N": [list(k) for k in ks], "graphs": graphs,
           "plan": {"numerator": [list(k) for k in ks if len(k) % 2],
                    "denominator": [list(k) for k in ks if not len(k) % 2]},
           "strict": strict}
    return {"json": json_text(out)}, f"{len(ks)} kind tuples, " \
        f"{sum(g['edges'] for g in graphs)} edges in total"


def cmd_frame_det(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("frames")
    fc = FrameConfig(
        L=int(blk.get("L", 8)),
        delta=float(blk.get("delta", 0.7)),
        eta=None if blk.get("eta") is None else float(blk["eta"]),
        boxes=blk.get("boxes"),
        epsilon=float(blk.get("epsilon", 0.25)),
        varpi=float(blk.get("varpi", 1.0)),
    )
    zs = [_complex(v, "frames.z") for v in blk.get("z", [3])]
    method = blk.get("method", "auto")
    sweep = blk.get("sweep")
    rows = []
    if sweep:
        reps = _map(workers, lambda z: convergence_sweep(sys, z, sweep, fc, method=method), zs)
        for rep in reps:
            rows.append((rep.z.real, rep.z.imag, rep.L, rep.value.real, rep.value.imag,
                         rep.increments[-1] if rep.increments else float("nan")))
    else:
        vals = _map(workers, lambda z: galerkin_det(sys, z, config=fc, method=method), zs)
        rows = [(z.real, z.imag, fc.L, v.real, v.imag, float("nan")) for z, v in zip(zs, vals)]
    dL = int(blk.get("decay_L", min(fc.L, 8)))
    dz = _complex(blk.get("decay_z", zs[0]), "frames.decay_z")
    gm = assemble_operator(sys, dz, config=fc.with_L(dL))
    fit = decay_profile(gm)
    out = {"csv": csv_text(["re_z", "im_z", "L", "re_d", "im_d", "last_increment"], rows),
           "json": json_text({"decay": fit.to_dict(), "L": dL, "z": [dz.real, dz.imag],
                              "epsilon": gm.weight.epsilon, "warnings": gm.warnings})}
    return out, (f"{len(rows)} Galerkin determinants; decay slope {fit.slope:.4g}, "
                 f"R^2 {fit.r2:.4f}")


def cmd_count(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("count")
    radii = [_positive(r, "count.radii") for r in blk.get("radii", [5, 10, 15, 20, 25, 30])]
    h, label = _det_handle(sys, blk)
    reps = _map(workers, lambda r: argument_principle_count(h, r), radii)
    rows = [(rep.radius, rep.count, rep.residual) for rep in reps]
    return ({"csv": csv_text(["r", "N", "residual"], rows)},
            f"{len(rows)} zero counts via {label}")


def cmd_growth(cfg: RunConfig, workers: int):
    sys = _need_system(cfg)
    blk = cfg.block("growth")
    radii = [_positive(r, "growth.radii") for r in blk.get("radii", [10, 15, 20, 25, 30])]
    h, label = _det_handle(sys, blk)
    fit = growth_order_fit(h, radii, nodes=int(blk.get("nodes", 1024)))
    return ({"json": json_text({"fit": fit.to_dict(), "determinant": label})},
            f"growth exponent {fit.alpha:.4f} via {label}")


COMMANDS = {
    "validate": (cmd_validate, "CSV: kind,message (violations then warnings)."),
    "orbits": (cmd_orbits, "CSV: word,m,m_sharp,T,T_sharp,det_factor,lift_trace_re,"
                           "lift_trace_im; one row per orbit class up to length orbits.m."),
    "traces": (cmd_traces, "CSV: m,re,im of the trace sum s_m(z) at traces.z."),
    "det": (cmd_det, "CSV: re_z,im_z,re_d,im_d,tail_estimate over the det.re x det.im grid."),
    "resonances": (cmd_resonances, "CSV: re,im,multiplicity,residual for zeros in "
                                   "|z| <= resonances.r."),
    "single-orbit": (cmd_single_orbit, "CSV: re,im,multiplicity of lattice resonances."),
    "bowen": (cmd_bowen, "JSON: kind tuples, A_k vertex/edge counts, assembly plan."),
    "frame-det": (cmd_frame_det, "CSV: re_z,im_z,L,re_d,im_d,last_increment; JSON: singular "
                                 "value decay fit."),
    "count": (cmd_count, "CSV: r,N,residual from the argument principle."),
    "growth": (cmd_growth, "JSON: growth-order fit of log max |d| on |z| = r."),
}


class _Fail(Exception):
    def __init__(self, code, message, outputs=None):
        self.code, self.message, self.outputs = code, message, outputs or {}
        super().__init__(message)


def _map(workers, fn, items):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _emit(name, outputs, out_dir):
    for kind in ("csv", "json"):
        if kind not in outputs:
            continue
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, f"{name}.{kind}"), "w", encoding="utf-8",
                      newline="\n") as fh:
                fh.write(outputs[kind])
        else:
            click.echo(outputs[kind], nl=False)


def run(subcommand: str, config, out_dir=None, workers=None) -> int:
    """Run one subcommand; returns the exit status."""
    workers = workers or os.cpu_count() or 1
    fn = COMMANDS[subcommand][0]
    try:
        cfg = config if isinstance(config, RunConfig) else load_config(config)
        out_dir = out_dir or cfg.block("output").get("dir")
        outputs, summary = fn(cfg, workers)
    except _Fail as f:
        _emit(subcommand, f.outputs, out_dir)
        click.echo(f.message)
        return f.code
    except (ConfigError, ValidationError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except DynzetaError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        click.echo(f"error: [{subcommand}] numerical failure: {exc}", err=True)
        return 2
    _emit(subcommand, outputs, out_dir)
    click.echo(summary)
    return 0


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="dynzeta")
def cli():
    """Dynamical determinants and resonances of symbolic suspension flows."""


def _make(name, doc):
    @click.argument("config", type=click.Path(dir_okay=False))
    @click.option("--out-dir", "-o", type=click.Path(file_okay=False), default=None,
                  help="Write <subcommand>.csv/.json here instead of standard output.")
    @click.option("--workers", "-j", type=click.IntRange(min=1), default=None,
                  help="Worker threads for independent evaluations (default: all cores).")
    def command(config, out_dir, workers):
        raise SystemExit(run(name, config, out_dir, workers))

    command.__doc__ = doc
    cli.command(name=name, help=doc)(command)


for _name, (_fn, _doc) in COMMANDS.items():
    _make(_name, _doc)


def main(argv=None):
    try:
        rv = cli.main(args=argv, prog_name="dynzeta", standalone_mode=False)
    except click.exceptions.Abort:
        _sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        _sys.exit(1)
    _sys.exit(rv or 0)


if __name__ == "__main__":
    main()
