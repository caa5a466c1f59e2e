"""
Trace files, experiment config files and run summaries.

Trace CSV columns::

    t, f_gap, cons_x, cons_z, sum_z, sum_v, max_opt_err, max_field_norm

Floats are written with ``repr`` so every value round-trips exactly and the
output does not depend on the locale.
"""

import configparser
import csv
import json
import math
from pathlib import Path

import numpy as np

from .central import FlowTrace
from .dhiso import DistTrace
from .experiments import ConfigError, ExperimentConfig

TRACE_COLUMNS = ("t", "f_gap", "cons_x", "cons_z", "sum_z", "sum_v", "max_opt_err",
                 "max_field_norm")
MAX_ROWS = 10_000


class TraceIOError(OSError):
    pass


def trace_columns(trace):
    """Map a FlowTrace, DistTrace or column dict onto the trace file columns."""
    if isinstance(trace, DistTrace):
        return {
            "t": trace.t, "f_gap": trace.f_gap, "cons_x": trace.cons_x,
            "cons_z": trace.cons_z, "sum_z": trace.sum_z, "sum_v": trace.sum_v,
            "max_opt_err": trace.max_opt_err, "max_field_norm": trace.max_field_norm,
        }
    if isinstance(trace, FlowTrace):
        # a centralized run is one agent in trivial agreement with z = sum g
        zeros = np.zeros_like(trace.t)
        err = np.linalg.norm(trace.x - trace.x_star, axis=1)
        return {
            "t": trace.t, "f_gap": trace.f_gap, "cons_x": zeros, "cons_z": zeros,
            "sum_z": trace.grad_norm, "sum_v": zeros, "max_opt_err": err,
            "max_field_norm": trace.field_norm,
        }
    missing = set(TRACE_COLUMNS) - set(trace)
    if missing:
        raise ValueError(f"trace is missing columns {sorted(missing)}")
    return {k: np.asarray(trace[k], dtype=float) for k in TRACE_COLUMNS}


def decimate_index(n, max_rows=MAX_ROWS):
    """Evenly strided row indices, always keeping the first and last row."""
    if n <= max_rows:
        return np.arange(n)
    stride = math.ceil((n - 1) / (max_rows - 1))
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def write_trace(trace, path, max_rows=MAX_ROWS):
    cols = trace_columns(trace)
    n = len(cols["t"])
    idx = decimate_index(n, max_rows)
    data = np.column_stack([np.asarray(cols[c], dtype=float)[idx] for c in TRACE_COLUMNS]) \
        if n else np.empty((0, len(TRACE_COLUMNS)))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in data:
                w.writerow([repr(float(v)) for v in row])
    except OSError as e:
        raise TraceIOError(f"cannot write trace file {path}: {e}") from e


def read_trace(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = [[float(v) for v in rec] for rec in reader]
    except OSError as e:
        raise TraceIOError(f"cannot read trace file {path}: {e}") from e
    if header != TRACE_COLUMNS:
        raise ValueError(f"{path}: unexpected header {header}")
    arr = np.array(rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))
    return {c: arr[:, k] for k, c in enumerate(TRACE_COLUMNS)}


# config files ---------------------------------------------------------------

_TYPES = {
    "seed": int, "n_agents": int, "p": int, "samples": int, "dim": int, "record_every": int,
    "coef_low": float, "coef_high": float, "quartic_radius": float, "regularization": float,
    "separation": float, "step": float, "horizon": float, "stop_gap": float,
    "epsilon": float, "oracle_tol": float,
}
_BOOLS = ("wide_coef_range", "variants")
_SECTIONS = {
    "experiment": ("name", "kind", "seed", "out"),
    "graph": ("name", "nodes", "edges"),
    "cost": ("family", "n_agents", "coef_low", "coef_high", "wide_coef_range",
             "quartic_radius", "p", "samples", "regularization", "separation", "dim"),
    "solver": ("x0", "step_policy", "step", "grid", "gains", "horizon", "stop_gap", "epsilon",
               "variants", "oracle_tol", "record_every"),
}


def parse_edges(text):
    """``"1-2, 1-3, 2-3"`` -> ``[(1, 2), (1, 3), (2, 3)]``."""
    edges = []
    for tok in text.replace("\n", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            i, j = tok.split("-")
            edges.append((int(i), int(j)))
        except ValueError:
            raise ConfigError(f"bad edge {tok!r}; expected i-j") from None
    return edges


def parse_grid(text):
    """``"1e-4:10:40"`` (geometric lo:hi:count) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return np.geomspace(float(lo), float(hi), int(n))
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise ConfigError(f"bad stepsize grid {text!r}") from None


def _number_or_list(text):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    vals = [float(p) for p in parts]
    return vals[0] if len(vals) == 1 else vals


def load_config(path):
    """Read an INI-style experiment config into an ExperimentConfig."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e

    kw = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                _apply(kw, section, key, raw, cp)
            except ValueError as e:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {e}") from e
    cfg = ExperimentConfig(**kw)
    return cfg.validate()


def _apply(kw, section, key, raw, cp):
    if section == "graph":
        if key == "name":
            kw["graph"] = raw.strip()
        elif key == "edges":
            nodes = cp.getint("graph", "nodes", fallback=None)
            edges = parse_edges(raw)
            if nodes is None:
                nodes = max(max(e) for e in edges)
            kw["graph"] = (nodes, edges)
        return
    if section == "cost" and key == "family":
        kw["cost"] = raw.strip()
        return
    if key in _TYPES:
        kw[key] = _TYPES[key](raw)
    elif key in _BOOLS:
        kw[key] = raw.strip().lower() in ("1", "true", "yes", "on")
    elif key == "grid":
        kw["grid"] = parse_grid(raw)
    elif key == "gains":
        raw = raw.strip()
        kw["gains"] = raw if raw in ("unit", "normalized") else float(raw)
    elif key == "x0":
        raw = raw.strip()
        kw["x0"] = raw if raw == "gaussian" else _number_or_list(raw)
    else:
        kw[key] = raw.strip()


# reports ----------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def report_dict(report):
    return _jsonable({
        "name": report.config.name,
        "seed": report.config.seed,
        "passed": report.passed,
        "steps": report.steps,
        "gains": report.gains,
        "iterations_to_gap": {n: {f"{g:g}": k for g, k in v.items()}
                              for n, v in report.iterations.items()},
        "time_to_gap": {n: {f"{g:g}": k for g, k in v.items()} for n, v in report.times.items()},
        "assertions": [
            {"name": a.name, "lhs": a.lhs_label, "lhs_value": a.lhs, "relation": a.relation,
             "rhs": a.rhs_label, "rhs_value": a.rhs, "passed": a.passed}
            for a in report.assertions],
        "info": report.info,
    })


def trace_filename(name):
    safe = "".join(ch if ch.isalnum() else "_" for ch in name.lower()).strip("_")
    while "__" in safe:
        safe = safe.replace("__", "_")
    return f"trace_{safe}.csv"


def write_report(report, out_dir, plot=True):
    """Write one CSV per trace, ``summary.json``, ``summary.txt`` and ``f_gap.svg``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise TraceIOError(f"cannot create output directory {out}: {e}") from e
    files = []
    for name, tr in report.traces.items():
        p = out / trace_filename(name)
        write_trace(tr, p)
        files.append(p)
    summary = out / "summary.json"
    summary.write_text(json.dumps(report_dict(report), indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text("\n".join(report.summary_lines()) + "\n")
    files += [summary, out / "summary.txt"]
    if plot and report.traces:
        from .plotting import emit_plot
        svg = out / "f_gap.svg"
        emit_plot(report.traces, svg, title=report.config.name)
        files.append(svg)
    return files
