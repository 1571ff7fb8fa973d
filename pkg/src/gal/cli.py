"""Command-line entry point, JSON configuration parsing, CSV/JSON result
persistence, and self-contained SVG plots.

The config document is a single JSON object; unknown keys are a hard
error so typos cannot silently disable settings. All randomness flows
from the single ``seed.master_seed`` in the config (overridable with
``--seed``), and rerunning a sweep with an identical config produces a
byte-identical CSV. Exit codes are stable: 0 success, 2 configuration
error, 3 data/convergence error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import (
    BoundInputs,
    anti_concentration_const,
    final_dist_bound,
    main_bound_cnp,
    main_tail_threshold,
    wlt_subgaussian_bound,
)
from .errors import (
    ConfigError,
    DataError,
    GalError,
    InputError,
    OutputError,
)
from .experiments import (
    CellResult,
    ExperimentGrid,
    RateFit,
    calibrate_constant,
    calibrate_final_dist_constant,
    _max_bound_at_unit_c,
    _wl_bound_inputs,
    fit_rate,
    run_max_sweep,
    run_wl_sweep,
)
from .hermite_ou import (
    MultiIndex,
    boni_inequality_check,
    estimate_velocity_field,
    hermite_orthogonality_check,
)
from .sampling import (
    CovarianceSpec,
    PointCloud,
    SeedSpec,
    SummandModel,
    ou_interpolate,
    sample_gaussian,
)
from .transport import SinkhornConfig, sinkhorn_wl

COMMANDS = (
    "wl-sweep",
    "max-sweep",
    "bounds-eval",
    "ou-diagnostics",
    "hermite-check",
    "calibrate",
)

CSV_COLUMNS = (
    "axis_name",
    "axis_value",
    "distance",
    "distance_stderr",
    "distance_raw",
    "theory_bound",
    "sweeps_used",
    "converged",
    "seed",
    "config_hash",
    "wall_time_ms",
)


@dataclass(frozen=True)
class ResultRow:
    """Flat CSV record: one grid cell plus run metadata.

    wall_time_ms is pinned to 0 in persisted results so that reruns are
    byte-identical; measured timings go to the per-cell log lines.
    """

    axis_name: str
    axis_value: float
    distance: float
    distance_stderr: float
    distance_raw: float
    theory_bound: float
    sweeps_used: int
    converged: bool
    seed: int
    config_hash: str
    wall_time_ms: int = 0


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for one CLI invocation."""

    command: str
    output_dir: str
    emit_plots: bool
    seed: SeedSpec
    grid: ExperimentGrid | None
    bound_inputs: BoundInputs | None
    extra_bounds: dict
    abs_const_C: float | None
    metric: str
    ou: dict
    hermite: dict
    normalized: dict  # defaults-applied document, the hashing/sidecar source

    @property
    def config_hash(self) -> str:
        return config_digest(self.normalized)


def config_digest(document: dict) -> str:
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


# -- schema helpers ----------------------------------------------------------


def _expect(obj: dict, path: str, known: dict) -> dict:
    """Apply defaults from ``known`` (name -> default or REQUIRED) and
    reject unknown keys with their full path."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    unknown = set(obj) - set(known)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key {sorted(unknown)[0]!r}")
    out = {}
    for key, default in known.items():
        if key in obj:
            out[key] = obj[key]
        elif default is _REQUIRED:
            raise ConfigError(f"{path or 'config'}: required key {key!r} missing")
        else:
            out[key] = default
    return out


_REQUIRED = object()


def _num(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}")
    return float(value)


def _parse_seed(obj: dict, path: str) -> SeedSpec:
    vals = _expect(obj, path, {"master_seed": 0, "stream_id": 0})
    for k in ("master_seed", "stream_id"):
        if isinstance(vals[k], bool) or not isinstance(vals[k], int):
            raise ConfigError(f"{path}.{k}: expected an integer")
    return SeedSpec(vals["master_seed"], vals["stream_id"])


def _parse_model(obj: dict, path: str) -> SummandModel:
    vals = _expect(
        obj, path, {"kind": "centered_bernoulli", "scale": None, "n": 100, "p": 5}
    )
    scale = None if vals["scale"] is None else _num(vals["scale"], f"{path}.scale", 0)
    return SummandModel(vals["kind"], int(vals["n"]), int(vals["p"]), scale)


def _parse_sinkhorn(obj: dict, path: str) -> SinkhornConfig:
    vals = _expect(
        obj,
        path,
        {
            "blur": 0.01,
            "scaling": 0.99,
            "max_sweeps": 100,
            "tolerance": 1e-6,
            "debias": True,
            "dtype": "float32",
        },
    )
    return SinkhornConfig(
        blur=_num(vals["blur"], f"{path}.blur", 0.0),
        scaling=_num(vals["scaling"], f"{path}.scaling"),
        max_sweeps=int(vals["max_sweeps"]),
        tolerance=_num(vals["tolerance"], f"{path}.tolerance"),
        debias=bool(vals["debias"]),
        dtype=vals["dtype"],
    )


def _parse_grid(obj: dict, path: str, seed: SeedSpec, command: str) -> ExperimentGrid:
    default_m = 20000 if command == "max-sweep" else 2000
    vals = _expect(
        obj,
        path,
        {
            "sweep_axis": _REQUIRED,
            "axis_values": _REQUIRED,
            "fixed": _REQUIRED,
            "m": default_m,
            "trials": 5,
            "model": {},
            "sinkhorn": {},
            "pairing": "auto",
            "workers": 1,
        },
    )
    if not isinstance(vals["axis_values"], list):
        raise ConfigError(f"{path}.axis_values: expected a list")
    fixed = _expect(vals["fixed"], f"{path}.fixed", {"n": None, "p": None, "L": None})
    fixed = {k: float(v) for k, v in fixed.items() if v is not None}
    return ExperimentGrid(
        sweep_axis=vals["sweep_axis"],
        axis_values=tuple(float(v) for v in vals["axis_values"]),
        fixed=fixed,
        m=int(vals["m"]),
        trials=int(vals["trials"]),
        model=_parse_model(vals["model"], f"{path}.model"),
        sinkhorn=_parse_sinkhorn(vals["sinkhorn"], f"{path}.sinkhorn"),
        seed=seed,
        pairing=vals["pairing"],
        workers=int(vals["workers"]),
    )


def _parse_bound_inputs(obj: dict, path: str) -> tuple[BoundInputs, dict]:
    vals = _expect(
        obj,
        path,
        {
            "n": _REQUIRED,
            "p": _REQUIRED,
            "L": 2.0,
            "nu0": 1.0,
            "sigma_norm": 1.0,
            "abs_const_C": 1.0,
            "t": 1.0,
            "sigma_upper": None,
            "sigma_lower": None,
            "lambda_min": None,
        },
    )
    inputs = BoundInputs(
        n=int(vals["n"]),
        p=int(vals["p"]),
        L=_num(vals["L"], f"{path}.L"),
        nu0=_num(vals["nu0"], f"{path}.nu0"),
        sigma_norm=_num(vals["sigma_norm"], f"{path}.sigma_norm"),
        abs_const_C=_num(vals["abs_const_C"], f"{path}.abs_const_C"),
    )
    extra = {k: vals[k] for k in ("t", "sigma_upper", "sigma_lower", "lambda_min")}
    return inputs, extra


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config document, applying defaults.

    Raises ConfigError with a line/column for syntax errors and with the
    offending key path for schema violations.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    top = _expect(
        raw,
        "",
        {
            "command": _REQUIRED,
            "output_dir": "gal-out",
            "emit_plots": True,
            "seed": {},
            "grid": None,
            "bound_inputs": None,
            "abs_const_C": None,
            "metric": "wl",
            "ou": {},
            "hermite": {},
        },
    )
    command = top["command"]
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}")
    if top["metric"] not in ("wl", "max"):
        raise ConfigError("metric: must be 'wl' or 'max'")
    seed = _parse_seed(top["seed"], "seed")

    grid = None
    if command in ("wl-sweep", "max-sweep", "calibrate"):
        if top["grid"] is None:
            raise ConfigError(f"grid: required for command {command!r}")
        grid = _parse_grid(top["grid"], "grid", seed, command)
    bound_inputs, extra_bounds = None, {}
    if command == "bounds-eval":
        if top["bound_inputs"] is None:
            raise ConfigError("bound_inputs: required for command 'bounds-eval'")
        bound_inputs, extra_bounds = _parse_bound_inputs(top["bound_inputs"], "bound_inputs")

    ou = _expect(
        top["ou"],
        "ou",
        {
            "m": 20000,
            "p": 1,
            "t": 0.7,
            "bandwidth": None,
            "t_grid": [0.0, 0.25, 0.5, 1.0, 2.0, "inf"],
            "wl_m": 512,
            "wl_trials": 4,
        },
    )
    hermite = _expect(
        top["hermite"],
        "hermite",
        {"max_order": 4, "p": 2, "quad_nodes": 13, "boni_sets": 3, "boni_m": 200000,
         "q_values": [2.0, 3.0, 4.0]},
    )

    abs_c = top["abs_const_C"]
    if abs_c is not None:
        abs_c = _num(abs_c, "abs_const_C", 0.0)

    normalized = {
        "command": command,
        "output_dir": top["output_dir"],
        "emit_plots": bool(top["emit_plots"]),
        "seed": {"master_seed": seed.master_seed, "stream_id": seed.stream_id},
        "metric": top["metric"],
        "abs_const_C": abs_c,
    }
    if grid is not None:
        normalized["grid"] = {
            "sweep_axis": grid.sweep_axis,
            "axis_values": list(grid.axis_values),
            "fixed": {k: grid.fixed[k] for k in sorted(grid.fixed)},
            "m": grid.m,
            "trials": grid.trials,
            "model": {
                "kind": grid.model.kind,
                "scale": grid.model.scale,
                "n": grid.model.n,
                "p": grid.model.p,
            },
            "sinkhorn": {
                "blur": grid.sinkhorn.blur,
                "scaling": grid.sinkhorn.scaling,
                "max_sweeps": grid.sinkhorn.max_sweeps,
                "tolerance": grid.sinkhorn.tolerance,
                "debias": grid.sinkhorn.debias,
                "dtype": grid.sinkhorn.dtype,
            },
            "pairing": grid.pairing,
            "workers": grid.workers,
        }
    if bound_inputs is not None:
        normalized["bound_inputs"] = {
            "n": bound_inputs.n,
            "p": bound_inputs.p,
            "L": bound_inputs.L,
            "nu0": bound_inputs.nu0,
            "sigma_norm": bound_inputs.sigma_norm,
            "abs_const_C": bound_inputs.abs_const_C,
            **extra_bounds,
        }
    if command == "ou-diagnostics":
        normalized["ou"] = ou
    if command == "hermite-check":
        normalized["hermite"] = hermite

    return RunConfig(
        command=command,
        output_dir=top["output_dir"],
        emit_plots=bool(top["emit_plots"]),
        seed=seed,
        grid=grid,
        bound_inputs=bound_inputs,
        extra_bounds=extra_bounds,
        abs_const_C=abs_c,
        metric=top["metric"],
        ou=ou,
        hermite=hermite,
        normalized=normalized,
    )


# -- persistence -------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_results(rows: list[ResultRow], path: str | Path, config: dict) -> None:
    """Write the results CSV (fixed column order, 17-significant-digit
    floats, LF endings) plus a JSON sidecar with the full config."""
    if not rows:
        raise InputError("no result rows to write")
    path = Path(path)
    lines = [",".join(CSV_COLUMNS)]
    ordered = sorted(rows, key=lambda r: r.axis_value)
    for row in ordered:
        lines.append(",".join(_fmt(getattr(row, col)) for col in CSV_COLUMNS))
    _atomic_write(path, "\n".join(lines) + "\n")
    sidecar = path.with_suffix(".config.json")
    _atomic_write(sidecar, json.dumps(config, sort_keys=True, indent=2) + "\n")


def read_results(path: str | Path) -> list[dict]:
    """Parse a results CSV back into dicts with exact float round-trip."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        rec = dict(zip(header, ln.split(",")))
        for key in ("axis_value", "distance", "distance_stderr", "distance_raw", "theory_bound"):
            rec[key] = float(rec[key])
        rec["sweeps_used"] = int(rec["sweeps_used"])
        rec["wall_time_ms"] = int(rec["wall_time_ms"])
        rec["seed"] = int(rec["seed"])
        rec["converged"] = rec["converged"] == "true"
        out.append(rec)
    return out


# -- SVG plotting ------------------------------------------------------------

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 60


def _log_ticks(lo: float, hi: float) -> list[float]:
    lo_e = math.ceil(math.log10(lo) - 1e-9)
    hi_e = math.floor(math.log10(hi) + 1e-9)
    ticks = [10.0**e for e in range(lo_e, hi_e + 1)]
    if len(ticks) < 2:
        ticks = sorted(set(ticks) | {lo, hi})
    return ticks


def emit_plot(rows: list[ResultRow], fit: RateFit, path: str | Path) -> None:
    """Self-contained SVG log-log scatter of distance vs axis value with the
    fitted power law overlaid and the slope annotated."""
    if len(rows) < 3:
        raise InputError("plotting needs at least 3 rows")
    rows = sorted(rows, key=lambda r: r.axis_value)
    xs = np.array([r.axis_value for r in rows])
    ys = np.array([r.distance for r in rows])
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DataError("log-log plot needs positive values")
    if fit.regressor.startswith("log log"):
        fitted = np.exp(fit.intercept + fit.slope * np.log(np.log(xs)))
    else:
        fitted = np.exp(fit.intercept + fit.slope * np.log(xs))

    lx, ly = np.log10(xs), np.log10(np.concatenate([ys, fitted]))
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    padx = 0.05 * (x1 - x0)
    pady = 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def sx(v: float) -> float:
        return _ML + (math.log10(v) - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(v: float) -> float:
        return _H - _MB - (math.log10(v) - y0) / (y1 - y0) * (_H - _MT - _MB)

    axis_label = f"{rows[0].axis_name} (log scale)"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_H-_MB}" x2="{_W-_MR}" y2="{_H-_MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H-_MB}" stroke="black"/>',
    ]
    for t in _log_ticks(10**x0, 10**x1):
        px = sx(t)
        parts.append(
            f'<line x1="{px:.2f}" y1="{_H-_MB}" x2="{px:.2f}" y2="{_H-_MB+5}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{_H-_MB+20}" text-anchor="middle">{t:.3g}</text>'
        )
    for t in _log_ticks(10**y0, 10**y1):
        py = sy(t)
        parts.append(
            f'<line x1="{_ML-5}" y1="{py:.2f}" x2="{_ML}" y2="{py:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML-8}" y="{py+4:.2f}" text-anchor="end">{t:.3g}</text>'
        )
    pts = " ".join(f"{sx(x):.3f},{sy(f):.3f}" for x, f in zip(xs, fitted))
    parts.append(
        f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="1.5"/>'
    )
    for x, y in zip(xs, ys):
        parts.append(
            f'<circle cx="{sx(x):.3f}" cy="{sy(y):.3f}" r="4" fill="#1f77b4"/>'
        )
    parts.append(
        f'<text x="{_W//2}" y="{_H-15}" text-anchor="middle">{axis_label}</text>'
    )
    parts.append(
        f'<text x="18" y="{_H//2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_H//2})">distance (log scale)</text>'
    )
    parts.append(
        f'<text x="{_W-_MR-8}" y="{_MT+8}" text-anchor="end">'
        f"slope = {fit.slope:.3f} (R&#178; = {fit.r2:.3f})</text>"
    )
    parts.append("</svg>")
    _atomic_write(Path(path), "\n".join(parts) + "\n")


# -- command implementations -------------------------------------------------


def _rows_from_cells(
    cells: list[CellResult], axis: str, cfg: RunConfig
) -> list[ResultRow]:
    digest = cfg.config_hash
    return [
        ResultRow(
            axis_name=axis,
            axis_value=c.axis_value,
            distance=c.distance,
            distance_stderr=c.distance_stderr,
            distance_raw=c.distance_raw,
            theory_bound=c.theory_bound,
            sweeps_used=c.sweeps_used,
            converged=c.converged,
            seed=cfg.seed.master_seed,
            config_hash=digest,
            wall_time_ms=0,
        )
        for c in cells
    ]


def _cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    grid = cfg.grid
    if cfg.command == "wl-sweep":
        cells = run_wl_sweep(grid, cfg.abs_const_C)
    else:
        cells = run_max_sweep(grid, cfg.abs_const_C)
    rows = _rows_from_cells(cells, grid.sweep_axis, cfg)
    fits = {}
    primary = fit_rate(cells, f"log {grid.sweep_axis}")
    fits[primary.regressor] = primary
    if cfg.command == "max-sweep" and grid.sweep_axis == "p":
        alt = fit_rate(cells, "log log p")
        fits[alt.regressor] = alt
    write_results(rows, out / "results.csv", cfg.normalized)
    if cfg.emit_plots:
        emit_plot(rows, primary, out / f"{cfg.command}.svg")
    summary = {
        "command": cfg.command,
        "config_hash": cfg.config_hash,
        "fits": {
            name: {"slope": f.slope, "intercept": f.intercept, "r2": f.r2}
            for name, f in fits.items()
        },
        "cells": [dataclasses.asdict(c) for c in cells],
    }
    _atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name, f in fits.items():
        print(f"{cfg.command} {name}: slope={f.slope:.4f} r2={f.r2:.4f}")
    return summary


def _cmd_calibrate(cfg: RunConfig, out: Path) -> dict:
    grid = cfg.grid
    if cfg.metric == "wl":
        cells = run_wl_sweep(grid, abs_const_C=1.0)
        needed = [
            calibrate_constant(c, _wl_bound_inputs(grid, c.axis_value, 1.0))
            for c in cells
        ]
    else:
        cells = run_max_sweep(grid, abs_const_C=1.0)
        needed = [
            calibrate_final_dist_constant(c.distance, _max_bound_at_unit_c(grid, c.axis_value))
            for c in cells
        ]
    idx = int(np.argmax(needed))
    result = {
        "metric": cfg.metric,
        "abs_const_C": needed[idx],
        "pilot_axis_value": cells[idx].axis_value,
        "per_cell_constants": needed,
        "config_hash": cfg.config_hash,
    }
    _atomic_write(out / "calibration.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(f"calibrate [{cfg.metric}]: abs_const_C={needed[idx]:.6g} "
          f"(pilot {grid.sweep_axis}={cells[idx].axis_value:g})")
    return result


def _cmd_bounds(cfg: RunConfig, out: Path) -> dict:
    bi = cfg.bound_inputs
    t = float(cfg.extra_bounds.get("t") or 1.0)
    values = {
        "main_bound_cnp": main_bound_cnp(bi),
        "main_tail_threshold_t0": main_tail_threshold(bi, 0.0),
        "main_tail_threshold": main_tail_threshold(bi, t),
        "t": t,
        "wlt_subgaussian_bound": wlt_subgaussian_bound(bi) if bi.L >= 2 else None,
    }
    s_up = cfg.extra_bounds.get("sigma_upper")
    s_lo = cfg.extra_bounds.get("sigma_lower")
    l_min = cfg.extra_bounds.get("lambda_min")
    if s_lo is not None:
        values["anti_concentration_const"] = anti_concentration_const(bi.p, float(s_lo))
    if s_up is not None and s_lo is not None and l_min is not None:
        bound, shift = final_dist_bound(
            bi.n, bi.p, bi.nu0, float(s_up), float(s_lo), float(l_min), bi.abs_const_C
        )
        values["final_dist_bound"] = bound
        values["final_dist_shift"] = shift
    result = {"inputs": cfg.normalized["bound_inputs"], "bounds": values}
    _atomic_write(out / "bounds.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    for name, val in values.items():
        if isinstance(val, float):
            print(f"{name} = {val:.10g}")
    return result


def _cmd_ou(cfg: RunConfig, out: Path) -> dict:
    ou = cfg.ou
    m, p = int(ou["m"]), int(ou["p"])
    t = float(ou["t"])
    seed = cfg.seed
    cov = CovarianceSpec.identity(p)
    xi = sample_gaussian(cov, m, seed.child(100))
    gamma = sample_gaussian(cov, m, seed.child(101))
    bw = ou["bandwidth"]
    est = estimate_velocity_field(xi, gamma, t, None if bw is None else float(bw))
    a = math.exp(-t)
    c = a / math.sqrt(1 - a * a)
    target = -a * (xi.points - c * gamma.points)
    field_ms = float((est.values**2).sum(axis=1).mean())
    target_ms = float((target**2).sum(axis=1).mean())

    t_grid = [math.inf if v == "inf" else float(v) for v in ou["t_grid"]]
    wl_m, wl_trials = int(ou["wl_m"]), int(ou["wl_trials"])
    scfg = SinkhornConfig(debias=True)
    curve = []
    for ti in t_grid:
        ws = []
        for trial in range(wl_trials):
            xi_s = sample_gaussian(cov, wl_m, seed.child(200, trial, 0))
            ga_s = sample_gaussian(cov, wl_m, seed.child(200, trial, 1))
            x_t = ou_interpolate(xi_s, ga_s, ti)
            ws.append(sinkhorn_wl(x_t, ga_s, scfg).wl)
        arr = np.array(ws)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        curve.append({"t": "inf" if math.isinf(ti) else ti,
                      "w": float(arr.mean()), "stderr": se})
    # velocity-integral diagnostic: sum ||field||_2-mean * dt vs measured drop
    finite = [pt for pt in curve if pt["t"] != "inf"]
    integral = 0.0
    for left, right in zip(finite, finite[1:]):
        t_mid = 0.5 * (float(left["t"]) + float(right["t"]))
        if t_mid <= 0:
            t_mid = max(float(right["t"]) / 2, 1e-3)
        est_mid = estimate_velocity_field(
            sample_gaussian(cov, wl_m, seed.child(300, 0)),
            sample_gaussian(cov, wl_m, seed.child(300, 1)),
            t_mid,
        )
        speed = float(np.linalg.norm(est_mid.values, axis=1).mean())
        integral += speed * (float(right["t"]) - float(left["t"]))
    drop = finite[0]["w"] - finite[-1]["w"] if finite else 0.0
    result = {
        "stationary_field": {
            "t": t,
            "m": m,
            "p": p,
            "bandwidth": est.bandwidth,
            "field_mean_square": field_ms,
            "target_mean_square": target_ms,
            "ratio": field_ms / target_ms if target_ms > 0 else 0.0,
        },
        "w_curve": curve,
        "velocity_integral_diagnostic": {
            "integral_upper": integral,
            "measured_drop": drop,
        },
    }
    _atomic_write(out / "ou_diagnostics.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(f"ou-diagnostics: field/target mean-square ratio = "
          f"{result['stationary_field']['ratio']:.4f}")
    return result


def _cmd_hermite(cfg: RunConfig, out: Path) -> dict:
    hc = cfg.hermite
    max_order, p = int(hc["max_order"]), int(hc["p"])
    nodes = int(hc["quad_nodes"])
    rng_seed = cfg.seed

    def indices():
        if p == 1:
            return [MultiIndex((k,)) for k in range(max_order + 1)]
        out_idx = []

        def rec(prefix):
            if len(prefix) == p:
                if sum(prefix) <= max_order:
                    out_idx.append(MultiIndex(tuple(prefix)))
                return
            for k in range(max_order + 1 - sum(prefix)):
                rec(prefix + [k])

        rec([])
        return out_idx

    idx = indices()
    worst = 0.0
    for a in idx:
        for b in idx:
            val = hermite_orthogonality_check(a, b, nodes)
            expected = float(a.factorial) if a == b else 0.0
            scale = max(1.0, float(a.factorial))
            worst = max(worst, abs(val - expected) / scale)

    rng = rng_seed.generator()
    boni = []
    for k in range(int(hc["boni_sets"])):
        orders = [MultiIndex(tuple(v)) for v in rng.integers(0, 3, size=(3, p))]
        coeffs = {a: rng.standard_normal(p) for a in orders}
        for q in hc["q_values"]:
            chk = boni_inequality_check(coeffs, float(q), int(hc["boni_m"]), rng_seed.child(400, k))
            boni.append(
                {
                    "set": k,
                    "q": float(q),
                    "lhs": chk.lhs,
                    "rhs": chk.rhs,
                    "rel_stderr": chk.lhs_rel_stderr,
                    "holds": chk.lhs <= chk.rhs * (1 + 5 * chk.lhs_rel_stderr),
                }
            )
    result = {
        "orthogonality_worst_rel_error": worst,
        "orders_checked": len(idx),
        "series_checks": boni,
        "all_hold": all(b["holds"] for b in boni),
    }
    _atomic_write(out / "hermite_check.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(f"hermite-check: worst orthogonality error {worst:.2e}; "
          f"series inequality holds: {result['all_hold']}")
    return result


def run(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    if cfg.command in ("wl-sweep", "max-sweep"):
        return _cmd_sweep(cfg, out)
    if cfg.command == "calibrate":
        return _cmd_calibrate(cfg, out)
    if cfg.command == "bounds-eval":
        return _cmd_bounds(cfg, out)
    if cfg.command == "ou-diagnostics":
        return _cmd_ou(cfg, out)
    return _cmd_hermite(cfg, out)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gal",
        description="Gaussian-approximation lab: transport distances, "
        "rate bounds, and Monte-Carlo rate experiments.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--output-dir", default=None, help="override output_dir")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--no-plots", action="store_true", help="disable SVG output")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config(text)
        if cfg.command != args.command:
            raise ConfigError(
                f"config command {cfg.command!r} does not match CLI command {args.command!r}"
            )
        if args.output_dir is not None:
            cfg = _override(cfg, output_dir=args.output_dir)
        if args.seed is not None:
            cfg = _override(cfg, master_seed=args.seed)
        if args.no_plots:
            cfg = _override(cfg, emit_plots=False)
        run(cfg)
    except GalError as exc:
        print(f"gal: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gal: io error: {exc}", file=sys.stderr)
        return 4
    return 0


def _override(
    cfg: RunConfig,
    output_dir: str | None = None,
    master_seed: int | None = None,
    emit_plots: bool | None = None,
) -> RunConfig:
    normalized = dict(cfg.normalized)
    updates: dict = {"normalized": normalized}
    if output_dir is not None:
        updates["output_dir"] = output_dir
        normalized["output_dir"] = output_dir
    if emit_plots is not None:
        updates["emit_plots"] = emit_plots
        normalized["emit_plots"] = emit_plots
    if master_seed is not None:
        seed = SeedSpec(master_seed, cfg.seed.stream_id)
        updates["seed"] = seed
        normalized["seed"] = {"master_seed": seed.master_seed, "stream_id": seed.stream_id}
        if cfg.grid is not None:
            updates["grid"] = dataclasses.replace(cfg.grid, seed=seed)
    return dataclasses.replace(cfg, **updates)


if __name__ == "__main__":
    raise SystemExit(main())
