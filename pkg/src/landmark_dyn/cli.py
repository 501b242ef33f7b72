"""Command-line entry point: ``landmark-dyn <command> ...`` or ``landmark-dyn run config.toml``.

Every command is a function of a validated parameter dict. Flags and TOML
configs are two front ends to the same schema, so a config run and the
equivalent flag run produce identical reports.

Exit status: 0 success, 2 inconclusive verdict, 1 error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import completeness as cmp
from . import dynamics as dyn
from . import geometry as geo
from . import stochastic as sto
from . import twobody as tb
from ._toml import TOMLDecodeError, loads as toml_loads
from .kernels import KernelError, KernelSpec, make_kernel, parse_kernel_spec

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
FORMATS = ("csv", "json", "svg")


class ConfigError(ValueError):
    """Invalid configuration or command-line parameters."""


# ------------------------------------------------------------ parameter schemas

_REQ = object()

# name -> (kind, default); kinds: float, int, bool, str, path, vec, pair, choice:<a|b>
SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "classify": {"a": ("float", 1.0)},
    "shoot": {
        "init": ("path", _REQ),
        "t_end": ("float", _REQ),
        "rtol": ("float", 1e-9),
        "atol": ("float", 1e-12),
        "eps_coll": ("float", 1e-6),
        "r_esc": ("float", 1e6),
    },
    "twobody": {
        "u": ("vec", _REQ),
        "Q": ("vec", _REQ),
        "P": ("vec", _REQ),
        "v": ("vec", None),
        "mode": ("choice:forecast|simulate", "forecast"),
        "t_end": ("float", None),
        "eps_coll": ("float", 1e-6),
    },
    "sde": {
        "d": ("int", 2),
        "r0": ("float", 0.1),
        "dt": ("float", 1e-4),
        "horizon": ("float", 5.0),
        "paths": ("int", 10000),
        "eps_hit": ("float", sto.DEFAULT_EPS_HIT),
        "ce": ("bool", False),
        "ce_a": ("float", None),
        "sensitivity": ("bool", False),
    },
    "length": {
        "curve": ("path", _REQ),
        "pair": ("pair", None),
        "escape": ("int", None),
    },
    "figure1": {
        "r_max": ("float", 4.0),
        "samples": ("int", 401),
    },
    "repro-collision": {
        "b": ("float", 1.0),
        "T": ("float", 1.0),
        "eps_coll": ("float", 1e-6),
        "samples": ("int", 201),
    },
}

# commands whose kernel is fixed by the preset
PRESETS = ("figure1", "repro-collision")


def _coerce(cmd, key, kind, value, base: Path | None):
    where = f"{cmd}.{key}"
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind == "path":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a file path string")
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise ConfigError(f"{where}: file not found: {path}")
        return str(path)
    if kind == "vec":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{where}: expected a nonempty list of numbers")
        return [_coerce(cmd, key, "float", v, base) for v in value]
    if kind == "pair":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{where}: expected two landmark indices")
        return [_coerce(cmd, key, "int", v, base) for v in value]
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split("|")
        if value not in options:
            raise ConfigError(f"{where}: expected one of {options}, got {value!r}")
        return value
    raise AssertionError(kind)


def normalize_params(cmd: str, raw: dict, base: Path | None = None) -> dict:
    """Apply defaults, reject unknown keys and check types and preconditions."""
    schema = SCHEMAS[cmd]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"[{cmd}]: unknown key(s) {unknown}; allowed: {sorted(schema)}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw and raw[key] is not None:
            out[key] = _coerce(cmd, key, kind, raw[key], base)
        elif default is _REQ:
            raise ConfigError(f"[{cmd}]: missing required key {key!r}")
        else:
            out[key] = default
    _check_preconditions(cmd, out)
    return out


def _positive(cmd, p, *keys):
    for k in keys:
        if p[k] is not None and not p[k] > 0:
            raise ConfigError(f"{cmd}.{k}: must be positive, got {p[k]}")


def _check_preconditions(cmd, p):
    if cmd == "classify":
        _positive(cmd, p, "a")
    elif cmd == "shoot":
        _positive(cmd, p, "t_end", "rtol", "atol", "eps_coll", "r_esc")
    elif cmd == "twobody":
        d = len(p["u"])
        for k in ("Q", "P", "v"):
            if p[k] is not None and len(p[k]) != d:
                raise ConfigError(f"twobody.{k}: length {len(p[k])} differs from len(u)={d}")
        if p["mode"] == "simulate" and p["t_end"] is None:
            raise ConfigError("twobody: mode 'simulate' needs t_end")
        _positive(cmd, p, "t_end", "eps_coll")
    elif cmd == "sde":
        _positive(cmd, p, "d", "r0", "dt", "horizon", "paths", "eps_hit", "ce_a")
        if p["dt"] > p["horizon"] / 100.0 * (1 + 1e-12):
            raise ConfigError("sde.dt: must be at most horizon/100")
    elif cmd == "length":
        if p["pair"] is not None and (p["pair"][0] == p["pair"][1] or min(p["pair"]) < 1):
            raise ConfigError("length.pair: two distinct 1-based landmark indices required")
        if p["escape"] is not None and p["escape"] < 1:
            raise ConfigError("length.escape: 1-based landmark index required")
    elif cmd == "figure1":
        _positive(cmd, p, "r_max")
        if p["samples"] < 2:
            raise ConfigError("figure1.samples: need at least 2")
    elif cmd == "repro-collision":
        _positive(cmd, p, "b", "T", "eps_coll")
        if p["samples"] < 2:
            raise ConfigError("repro-collision.samples: need at least 2")


@dataclass
class Job:
    command: str
    params: dict
    kernel: KernelSpec | None
    seed: int = 0
    out_dir: str | None = None
    formats: tuple[str, ...] = FORMATS

    def canonical(self) -> dict:
        return {
            "command": self.command,
            "kernel": None if self.kernel is None else self.kernel.to_mapping(),
            "params": self.params,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        body = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


def parse_config(text: str, base: Path | None = None) -> Job:
    """Parse a TOML experiment config strictly.

    Top-level keys: ``command``, ``seed``, ``kernel`` (table), ``output``
    (table with ``dir`` and ``formats``) and one table named after the command.
    """
    if not text.strip():
        raise ConfigError("empty config")
    try:
        data = toml_loads(text)
    except TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    if "command" not in data:
        raise ConfigError("config needs a top-level 'command' key")
    cmd = data["command"]
    if cmd not in SCHEMAS:
        raise ConfigError(f"command: unknown command {cmd!r}; expected one of {sorted(SCHEMAS)}")
    allowed = {"command", "seed", "kernel", "output", cmd}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}; allowed for {cmd!r}: {sorted(allowed)}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: expected a nonnegative integer, got {seed!r}")
    table = data.get(cmd, {})
    if not isinstance(table, dict):
        raise ConfigError(f"[{cmd}] must be a table")
    params = normalize_params(cmd, table, base)
    kernel = None
    if cmd in PRESETS:
        if "kernel" in data:
            raise ConfigError(f"[kernel]: not allowed for preset {cmd!r} (its kernels are fixed)")
    else:
        if "kernel" not in data or not isinstance(data["kernel"], dict):
            raise ConfigError("config needs a [kernel] table")
        try:
            kernel = KernelSpec.from_mapping(data["kernel"])
        except KernelError as exc:
            raise ConfigError(f"[kernel]: {exc}") from None
    out = data.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("[output] must be a table")
    bad = sorted(set(out) - {"dir", "formats"})
    if bad:
        raise ConfigError(f"[output]: unknown key(s) {bad}; allowed: ['dir', 'formats']")
    out_dir = out.get("dir")
    if out_dir is not None:
        if not isinstance(out_dir, str):
            raise ConfigError("output.dir: expected a string")
        if base is not None and not Path(out_dir).is_absolute():
            out_dir = str(base / out_dir)
    formats = out.get("formats", list(FORMATS))
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        raise ConfigError(f"output.formats: expected a subset of {list(FORMATS)}, got {formats!r}")
    return Job(cmd, params, kernel, seed, out_dir, tuple(formats))


# ------------------------------------------------------------ output helpers

def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    return repr(float(x))


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_num(v) for v in row) + "\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def svg_text(series: list[tuple[str, np.ndarray, np.ndarray]], title: str,
             xlabel: str, ylabel: str) -> str:
    """Plain SVG 1.1 line plot: one polyline per (label, x, y) series."""
    w, h, ml, mr, mt, mb = 640, 420, 70, 150, 40, 50
    xs = np.concatenate([s[1] for s in series])
    ys = np.concatenate([s[2] for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(min(ys.min(), 0.0)), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    sx = lambda x: ml + (x - x0) / (x1 - x0) * (w - ml - mr)
    sy = lambda y: h - mb - (y - y0) / (y1 - y0) * (h - mt - mb)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
        f'<line x1="{ml}" y1="{h - mb}" x2="{w - mr}" y2="{h - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{h - mb}" stroke="black"/>',
    ]
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{h - mb + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{yv:.3g}</text>')
    out.append(f'<text x="{(ml + w - mr) / 2:.1f}" y="{h - 12}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{(mt + h - mb) / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12" transform="rotate(-90 16 {(mt + h - mb) / 2:.1f})">{ylabel}</text>')
    for k, (label, x, y) in enumerate(series):
        col = colors[k % len(colors)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.6" points="{pts}"/>')
        ly = mt + 16 + 18 * k
        out.append(f'<line x1="{w - mr + 10}" y1="{ly}" x2="{w - mr + 34}" y2="{ly}" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{w - mr + 40}" y="{ly + 4}" font-family="sans-serif" '
                   f'font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


@dataclass
class Outcome:
    result: dict
    status: int = EXIT_OK
    artifacts: dict[str, str] = field(default_factory=dict)  # file name -> text


# ------------------------------------------------------------ commands

def _kernel(job: Job):
    return make_kernel(job.kernel)


def cmd_classify(job: Job) -> Outcome:
    kernel = _kernel(job)
    rep = cmp.classify_geodesic(kernel, a=job.params["a"])
    res = rep.to_json()
    res["kernel"] = kernel.name
    status = EXIT_INCONCLUSIVE if rep.geodesic == cmp.INCONCLUSIVE else EXIT_OK
    return Outcome(res, status)


def _trajectory_rows(tr: dyn.Trajectory, kernel):
    n, d = tr.x.shape[1], tr.x.shape[2]
    header = (["t"] + [f"x_{i}_{k}" for i in range(1, n + 1) for k in range(1, d + 1)]
              + [f"p_{i}_{k}" for i in range(1, n + 1) for k in range(1, d + 1)] + ["H"]
              + [f"P_{k}" for k in range(1, d + 1)]
              + [f"L_{k}_{l}" for k in range(1, d + 1) for l in range(k + 1, d + 1)])
    rows = []
    for t, x, p in zip(tr.times, tr.x, tr.p):
        c = dyn.conserved(dyn.PhasePoint(x, p), kernel)
        rows.append([t, *x.ravel(), *p.ravel(), c.H, *c.P, *c.L])
    return header, rows


def cmd_shoot(job: Job) -> Outcome:
    kernel = _kernel(job)
    p = job.params
    with open(p["init"], encoding="utf-8") as fh:
        try:
            s0 = dyn.PhasePoint.from_json(json.load(fh))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"init file {p['init']}: {exc}") from None
    opts = dyn.IntOpts(rtol=p["rtol"], atol=p["atol"], eps_coll=p["eps_coll"], r_esc=p["r_esc"])
    tr = dyn.integrate(s0, kernel, p["t_end"], opts)
    header, rows = _trajectory_rows(tr, kernel)
    res = {
        "kernel": kernel.name,
        "n": s0.n,
        "d": s0.d,
        "termination": tr.termination.to_json(),
        "conserved_drift": tr.conserved_drift,
        "t_final": float(tr.times[-1]),
        "steps": len(tr.times) - 1,
        "final": dyn.PhasePoint(tr.x[-1], tr.p[-1]).to_json(),
    }
    return Outcome(res, EXIT_OK, {"trajectory.csv": csv_text(header, rows)})


def cmd_twobody(job: Job) -> Outcome:
    kernel = _kernel(job)
    p = job.params
    state = tb.TwoBodyState(p["u"], p["Q"], P=p["P"], v=p["v"])
    if state.r <= 0:
        raise ConfigError("twobody.u: landmarks must be distinct (u != 0)")
    if p["mode"] == "forecast":
        fc = tb.breakdown_forecast(state, kernel)
        status = EXIT_INCONCLUSIVE if fc.verdict == tb.INCONCLUSIVE else EXIT_OK
        return Outcome(fc.to_json(), status)
    tr = tb.simulate_twobody(state, kernel, p["t_end"], dyn.IntOpts(eps_coll=p["eps_coll"]))
    D, omega = tb.invariants_2b(state, kernel)
    res = {"D": D, "omega": omega, **tr.to_json()}
    d = state.d
    header = (["t"] + [f"u_{k}" for k in range(1, d + 1)] + [f"Q_{k}" for k in range(1, d + 1)]
              + [f"v_{k}" for k in range(1, d + 1)] + ["r"])
    rows = [[t, *u, *q, *v, float(np.linalg.norm(u))] for t, u, q, v in zip(tr.times, tr.u, tr.Q, tr.v)]
    return Outcome(res, EXIT_OK, {"twobody.csv": csv_text(header, rows)})


def cmd_sde(job: Job) -> Outcome:
    kernel = _kernel(job)
    p = job.params
    levels = [p["eps_hit"]]
    if p["sensitivity"]:
        levels = sorted(set(levels) | set(sto.SENSITIVITY_EPS), reverse=True)
    ests = sto.simulate_hits(kernel, p["d"], p["r0"], p["dt"], p["horizon"], p["paths"],
                             job.seed, levels)
    by_eps = {e.eps_hit: e for e in ests}
    res = {"kernel": kernel.name, "d": p["d"], "estimate": by_eps[p["eps_hit"]].to_json()}
    if p["sensitivity"]:
        res["sensitivity"] = [e.to_json() for e in ests]
    status = EXIT_OK
    if p["ce"]:
        rep = sto.ce_classify(kernel, p["d"], p["ce_a"])
        res["ce"] = rep.to_json()
        if rep.conclusion == sto.INCONCLUSIVE:
            status = EXIT_INCONCLUSIVE
    return Outcome(res, status)


def cmd_length(job: Job) -> Outcome:
    kernel = _kernel(job)
    p = job.params
    curve = geo.SampledCurve.from_csv(p["curve"])
    res = {"kernel": kernel.name, "n": curve.n, "d": curve.d, "samples": len(curve.times),
           "length": geo.curve_length(curve, kernel)}
    if p["pair"] is not None:
        i, j = p["pair"]
        if max(i, j) > curve.n:
            raise ConfigError(f"length.pair: curve has only {curve.n} landmarks")
        res["collision_bound"] = {"pair": [i, j],
                                  "value": geo.collision_bound(curve, i - 1, j - 1, kernel)}
    if p["escape"] is not None:
        i = p["escape"]
        if i > curve.n:
            raise ConfigError(f"length.escape: curve has only {curve.n} landmarks")
        res["escape_bound"] = {"index": i, "value": geo.escape_bound(curve, i - 1, kernel)}
    return Outcome(res)


def cmd_figure1(job: Job) -> Outcome:
    p = job.params
    r = np.linspace(0.0, p["r_max"], p["samples"])
    lap = make_kernel("laplacian")
    c1 = make_kernel("c1_bessel")
    k_lap = np.asarray(lap.eval(r), dtype=float)
    k_c1 = np.asarray(c1.eval(r), dtype=float)
    verdicts = {k.name: cmp.classify_geodesic(k).geodesic for k in (lap, c1)}
    res = {"r_max": p["r_max"], "samples": p["samples"], "geodesic": verdicts,
           "K0": {"laplacian": lap.k0, "c1_bessel": c1.k0}}
    arts = {
        "figure1.csv": csv_text(["r", "laplacian", "c1_bessel"], zip(r, k_lap, k_c1)),
        "figure1.svg": svg_text([("exp(-r)", r, k_lap), ("2(1+r)exp(-r)", r, k_c1)],
                                "Radial kernels", "r", "K(r)"),
    }
    return Outcome(res, EXIT_OK, arts)


def cmd_repro_collision(job: Job) -> Outcome:
    p = job.params
    b, T = p["b"], p["T"]
    lap = make_kernel("laplacian")
    s0 = tb.laplacian_exact(b, T, 0.0)
    opts = dyn.IntOpts(rtol=1e-12, atol=1e-14, eps_coll=p["eps_coll"])
    tr = dyn.integrate(s0, lap, 2.0 * T, opts)
    t_coll = tr.termination.t_event
    # the closed form reaches separation eps_coll when 2 log cosh(b (T - t)) = eps_coll
    t_expected = T - math.acosh(math.exp(p["eps_coll"] / 2.0)) / b
    a0 = 2.0 * float(s0.x[0, 0])
    t_quad = tb.collision_time(lap, a0, b * b)
    ts = np.linspace(0.0, min(t_coll or T, T) * (1 - 1e-9), p["samples"])
    rows, err = [], 0.0
    for t in ts:
        num = tr.at(t)
        ex = tb.laplacian_exact(b, T, t)
        err = max(err, float(np.max(np.abs(num.x - ex.x))))
        rows.append([t, num.x[0, 0], ex.x[0, 0], num.p[0, 0], ex.p[0, 0]])
    res = {
        "b": b,
        "T": T,
        "eps_coll": p["eps_coll"],
        "termination": tr.termination.to_json(),
        "t_collision": t_coll,
        "t_expected_at_threshold": t_expected,
        "t_collision_quadrature": t_quad,
        "max_position_error": err,
        "conserved_drift": tr.conserved_drift,
    }
    tt = np.array([r[0] for r in rows])
    arts = {
        "collision.csv": csv_text(["t", "x1_numeric", "x1_exact", "p1_numeric", "p1_exact"], rows),
        "collision.svg": svg_text([("x1 numeric", tt, np.array([r[1] for r in rows])),
                                   ("x1 exact", tt, np.array([r[2] for r in rows]))],
                                  "Head-on collision, Laplacian kernel", "t", "x1(t)"),
    }
    return Outcome(res, EXIT_OK, arts)


COMMANDS = {
    "classify": cmd_classify,
    "shoot": cmd_shoot,
    "twobody": cmd_twobody,
    "sde": cmd_sde,
    "length": cmd_length,
    "figure1": cmd_figure1,
    "repro-collision": cmd_repro_collision,
}


def execute(job: Job, stdout=None) -> tuple[int, Outcome]:
    """Run a job, write its artifacts and print the JSON report."""
    stdout = stdout or sys.stdout
    outcome = COMMANDS[job.command](job)
    report = {
        "command": job.command,
        "config": job.canonical(),
        "config_hash": job.config_hash(),
        "version": __version__,
        "result": outcome.result,
    }
    text = json_text(report)
    if job.out_dir is not None:
        out = Path(job.out_dir)
        if "json" in job.formats:
            write_atomic(out / "report.json", text)
        for name, body in outcome.artifacts.items():
            if name.rsplit(".", 1)[1] in job.formats:
                write_atomic(out / name, body)
    stdout.write(text)
    return outcome.status, outcome


# ------------------------------------------------------------ argparse front end

def _add_kernel(p):
    p.add_argument("--kernel", required=True, metavar="SPEC",
                   help="kernel spec, e.g. laplacian, log_modified:c=1.5, power_gap:D=1,gamma=2")


def _add_output(p):
    p.add_argument("--out-dir", metavar="DIR", help="write artifacts into DIR")
    p.add_argument("--formats", default="csv,json,svg", metavar="LIST",
                   help="comma-separated subset of csv,json,svg to write (default: all)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="landmark-dyn",
        description="Geodesic and stochastic dynamics of landmarks under radial kernels.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("classify", help="geodesic completeness verdict for a kernel")
    _add_kernel(p)
    p.add_argument("--a", type=float, default=1.0, help="upper limit of the criterion integral (default 1.0)")
    p.add_argument("--json", action="store_true", help="accepted for compatibility; the report is always JSON")
    _add_output(p)

    p = sub.add_parser("shoot", help="integrate Hamilton's equations from an initial state")
    _add_kernel(p)
    p.add_argument("--init", required=True, metavar="FILE", help="JSON file {n, d, x, p}")
    p.add_argument("--t-end", type=float, required=True, help="final time")
    p.add_argument("--out", metavar="CSV", help="write the trajectory CSV to this path")
    p.add_argument("--rtol", type=float, default=1e-9, help="relative tolerance (default 1e-9)")
    p.add_argument("--atol", type=float, default=1e-12, help="absolute tolerance (default 1e-12)")
    p.add_argument("--eps-coll", type=float, default=1e-6, help="collision threshold (default 1e-6)")
    p.add_argument("--r-esc", type=float, default=1e6, help="escape radius (default 1e6)")
    _add_output(p)

    p = sub.add_parser("twobody", help="two-landmark forecast or reduced simulation")
    _add_kernel(p)
    p.add_argument("--u", type=float, nargs="+", required=True, help="relative position x1 - x2")
    p.add_argument("--Q", type=float, nargs="+", required=True, help="relative momentum (p1 - p2)/2")
    p.add_argument("--P", type=float, nargs="+", required=True, help="total momentum p1 + p2")
    p.add_argument("--v", type=float, nargs="+", help="center of mass (default 0)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--forecast", action="store_true", help="breakdown forecast (default)")
    mode.add_argument("--simulate", action="store_true", help="integrate the reduced system")
    p.add_argument("--t-end", type=float, help="final time for --simulate")
    p.add_argument("--eps-coll", type=float, default=1e-6, help="collision threshold (default 1e-6)")
    _add_output(p)

    p = sub.add_parser("sde", help="Monte-Carlo hitting probability of the radial SDE")
    _add_kernel(p)
    p.add_argument("--d", type=int, default=2, help="ambient dimension (default 2)")
    p.add_argument("--r0", type=float, default=0.1, help="initial separation (default 0.1)")
    p.add_argument("--dt", type=float, default=1e-4, help="time step (default 1e-4)")
    p.add_argument("--horizon", type=float, default=5.0, help="time horizon (default 5)")
    p.add_argument("--paths", type=int, default=10000, help="number of paths (default 10000)")
    p.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    p.add_argument("--eps-hit", type=float, default=sto.DEFAULT_EPS_HIT,
                   help="absorption threshold (default 1e-4)")
    p.add_argument("--ce", action="store_true", help="also evaluate the three integral conditions")
    p.add_argument("--ce-a", type=float, help="upper limit for --ce (default 0.4 for log_modified, else 1)")
    p.add_argument("--sensitivity", action="store_true",
                   help="also report eps_hit in {1e-3, 1e-4, 1e-5} from the same paths")
    _add_output(p)

    p = sub.add_parser("length", help="curve length and its lower bounds")
    _add_kernel(p)
    p.add_argument("--curve", required=True, metavar="CSV", help="CSV with columns t, x_<i>_<k>")
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"), help="collision bound for landmarks I, J (1-based)")
    p.add_argument("--escape", type=int, metavar="I", help="escape bound for landmark I (1-based)")
    _add_output(p)

    p = sub.add_parser("figure1", help="kernel profiles exp(-r) and 2(1+r)exp(-r)")
    p.add_argument("--r-max", type=float, default=4.0, help="right end of the r range (default 4)")
    p.add_argument("--samples", type=int, default=401, help="number of r samples (default 401)")
    _add_output(p)

    p = sub.add_parser("repro-collision", help="head-on Laplacian collision against the closed form")
    p.add_argument("--b", type=float, default=1.0, help="energy parameter b, E = b^2 (default 1)")
    p.add_argument("--T", type=float, default=1.0, help="collision time of the closed form (default 1)")
    p.add_argument("--eps-coll", type=float, default=1e-6, help="collision threshold (default 1e-6)")
    p.add_argument("--samples", type=int, default=201, help="comparison samples (default 201)")
    _add_output(p)

    p = sub.add_parser("run", help="run an experiment described by a TOML config")
    p.add_argument("config", metavar="CONFIG", help="path to a TOML config file")
    return ap


def _job_from_args(ns) -> Job:
    cmd = ns.command
    formats = tuple(f.strip() for f in ns.formats.split(",") if f.strip())
    if any(f not in FORMATS for f in formats):
        raise ConfigError(f"--formats: expected a subset of {list(FORMATS)}")
    kernel = parse_kernel_spec(ns.kernel) if cmd not in PRESETS else None
    seed = 0
    if cmd == "classify":
        raw = {"a": ns.a}
    elif cmd == "shoot":
        raw = {"init": ns.init, "t_end": ns.t_end, "rtol": ns.rtol, "atol": ns.atol,
               "eps_coll": ns.eps_coll, "r_esc": ns.r_esc}
    elif cmd == "twobody":
        raw = {"u": ns.u, "Q": ns.Q, "P": ns.P, "v": ns.v,
               "mode": "simulate" if ns.simulate else "forecast", "t_end": ns.t_end,
               "eps_coll": ns.eps_coll}
    elif cmd == "sde":
        raw = {"d": ns.d, "r0": ns.r0, "dt": ns.dt, "horizon": ns.horizon, "paths": ns.paths,
               "eps_hit": ns.eps_hit, "ce": ns.ce, "ce_a": ns.ce_a, "sensitivity": ns.sensitivity}
        seed = ns.seed
        if seed < 0:
            raise ConfigError("--seed: must be nonnegative")
    elif cmd == "length":
        raw = {"curve": ns.curve, "pair": ns.pair, "escape": ns.escape}
    elif cmd == "figure1":
        raw = {"r_max": ns.r_max, "samples": ns.samples}
    else:
        raw = {"b": ns.b, "T": ns.T, "eps_coll": ns.eps_coll, "samples": ns.samples}
    params = normalize_params(cmd, raw)
    return Job(cmd, params, kernel, seed, ns.out_dir, formats)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "run":
            path = Path(ns.config)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            job = parse_config(path.read_text(encoding="utf-8"), base=path.parent)
        else:
            job = _job_from_args(ns)
        status, outcome = execute(job)
        if ns.command == "shoot" and ns.out:
            write_atomic(Path(ns.out), outcome.artifacts["trajectory.csv"])
        return status
    except (ConfigError, KernelError, ValueError, cmp.QuadratureError, sto.SimulationError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
