"""File formats: labelled TSV matrices, chain dumps, tables and envelope reports."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import CountMatrix

REPORT_FORMAT = "nmfsfs-envelope/1"


class InputError(ValueError):
    """Unreadable or malformed input file."""


def fmt(x):
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return repr(x)
    return format(x, ".17g")


def atomic_write(path, text):
    path = Path(path)
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


def _data_lines(text):
    """(line number, fields) for non-blank lines not starting with '#'."""
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        yield no, line.rstrip("\r").split("\t")


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def parse_matrix(text, source="<string>", nonnegative=True):
    """Parse a labelled TSV matrix.

    First row: a corner cell then column labels. Every other row: a row
    label then one number per column. Errors name the 1-based line and
    column of the offending cell.
    """
    lines = list(_data_lines(text))
    if not lines:
        raise InputError(f"{source}: empty matrix file")
    head_no, header = lines[0]
    cols = header[1:]
    if not cols:
        raise InputError(f"{source}: line {head_no}: header has no column labels")
    rows, values = [], []
    for no, fields in lines[1:]:
        if len(fields) != len(header):
            raise InputError(
                f"{source}: line {no}: expected {len(header)} fields, found {len(fields)}")
        rows.append(fields[0])
        vals = []
        for c, cell in enumerate(fields[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{source}: line {no}, column {c}: cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise InputError(f"{source}: line {no}, column {c}: non-finite value {cell!r}")
            if nonnegative and v < 0:
                raise InputError(f"{source}: line {no}, column {c}: negative value {cell!r}")
            vals.append(v)
        values.append(vals)
    if not rows:
        raise InputError(f"{source}: matrix has no data rows")
    return CountMatrix(np.array(values), rows, cols)


def read_matrix(path, nonnegative=True):
    return parse_matrix(_read_text(path), source=str(path), nonnegative=nonnegative)


def format_matrix(values, row_labels, col_labels, corner=""):
    values = np.asarray(values)
    out = ["\t".join([corner, *map(str, col_labels)])]
    for label, row in zip(row_labels, values):
        out.append("\t".join([str(label), *(fmt(v) for v in row)]))
    return "\n".join(out) + "\n"


def write_matrix(path, values, row_labels, col_labels, corner=""):
    atomic_write(path, format_matrix(values, row_labels, col_labels, corner))


def component_labels(N):
    return [f"S{n + 1}" for n in range(N)]


# ---------------------------------------------------------------------------
# tables

def config_comment(config):
    return "# config: " + json.dumps(config, sort_keys=True, default=_json_default) + "\n"


def format_table(rows, columns, config=None):
    out = [config_comment(config)] if config is not None else []
    out.append("\t".join(columns) + "\n")
    for r in rows:
        out.append("\t".join(_cell(r[c]) for c in columns) + "\n")
    return "".join(out)


def _cell(v):
    if isinstance(v, (float, np.floating, int, np.integer)) and not isinstance(v, bool):
        return fmt(v)
    return str(v)


def write_table(path, rows, columns, config=None):
    atomic_write(path, format_table(rows, columns, config))


def read_table(path):
    """Read a table written by :func:`write_table`.

    Returns ``(config, columns, rows)``; numeric cells become floats.
    """
    text = _read_text(path)
    config = None
    for line in text.splitlines():
        if line.startswith("# config: "):
            config = json.loads(line[len("# config: "):])
            break
    lines = list(_data_lines(text))
    if not lines:
        raise InputError(f"{path}: empty table")
    columns = lines[0][1]
    rows = []
    for no, fields in lines[1:]:
        if len(fields) != len(columns):
            raise InputError(f"{path}: line {no}: expected {len(columns)} fields, found {len(fields)}")
        row = {}
        for c, v in zip(columns, fields):
            try:
                row[c] = float(v)
            except ValueError:
                row[c] = v
        rows.append(row)
    return config, columns, rows


# ---------------------------------------------------------------------------
# chain dumps: one retained sample per line, P then E flattened row-major

def chain_columns(K, N, G):
    cols = ["sample_index", "iteration"]
    # 1-based, like the component numbers in other outputs
    cols += [f"P[{k + 1},{n + 1}]" for k in range(K) for n in range(N)]
    cols += [f"E[{n + 1},{g + 1}]" for n in range(N) for g in range(G)]
    return cols


def format_chain(samples_P, samples_E, iterations, config=None):
    S, K, N = samples_P.shape
    G = samples_E.shape[2]
    out = [config_comment(config)] if config is not None else []
    out.append(f"# shape: K={K} N={N} G={G}\n")
    out.append("\t".join(chain_columns(K, N, G)) + "\n")
    for s in range(S):
        cells = [str(s), str(int(iterations[s]))]
        cells += [fmt(v) for v in samples_P[s].ravel()]
        cells += [fmt(v) for v in samples_E[s].ravel()]
        out.append("\t".join(cells) + "\n")
    return "".join(out)


def write_chain(path, chain, config=None):
    atomic_write(path, format_chain(chain.samples_P, chain.samples_E, chain.sample_iterations, config))


def read_chain(path):
    """Returns ``(samples_P, samples_E, iterations)``."""
    text = _read_text(path)
    shape = None
    for line in text.splitlines():
        if line.startswith("# shape:"):
            try:
                shape = {k: int(v) for k, v in (f.split("=") for f in line[len("# shape:"):].split())}
            except ValueError:
                raise InputError(f"{path}: malformed shape line {line!r}") from None
            break
    if shape is None:
        raise InputError(f"{path}: missing '# shape:' line")
    K, N, G = shape["K"], shape["N"], shape["G"]
    lines = list(_data_lines(text))
    expected = 2 + K * N + N * G
    Ps, Es, its = [], [], []
    for no, fields in lines[1:]:
        if len(fields) != expected:
            raise InputError(f"{path}: line {no}: expected {expected} fields, found {len(fields)}")
        try:
            vals = np.array([float(v) for v in fields[2:]])
            its.append(int(fields[1]))
        except ValueError:
            raise InputError(f"{path}: line {no}: non-numeric field") from None
        Ps.append(vals[:K * N].reshape(K, N))
        Es.append(vals[K * N:].reshape(N, G))
    if not Ps:
        raise InputError(f"{path}: no samples")
    return np.array(Ps), np.array(Es), np.array(its)


# ---------------------------------------------------------------------------
# envelope reports (JSON)

@dataclass
class EnvelopeReport:
    config: dict
    iterations: int
    converged: bool
    avg_size_P: float
    avg_size_E: float
    P_min: np.ndarray
    P_max: np.ndarray
    E_min: np.ndarray
    E_max: np.ndarray
    P_ref: np.ndarray
    E_ref: np.ndarray
    row_labels: list
    col_labels: list
    component_labels: list
    warnings: list = field(default_factory=list)

    @property
    def rank(self):
        return self.P_ref.shape[1]

    @classmethod
    def from_run(cls, F0, chain, env, config, row_labels, col_labels, warnings=()):
        N = F0.rank
        return cls(dict(config), chain.iterations, chain.converged, env.avg_size_P, env.avg_size_E,
                   env.P_min, env.P_max, env.E_min, env.E_max, np.asarray(F0.P), np.asarray(F0.E),
                   list(row_labels), list(col_labels), component_labels(N), list(warnings))

    def to_dict(self):
        c = self.config
        return {
            "format": REPORT_FORMAT,
            "rank": self.rank,
            "beta": c.get("beta"),
            "epsilon": c.get("epsilon"),
            "check_every": c.get("check_every"),
            "seed": c.get("seed"),
            "config": c,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "avg_size_P": float(self.avg_size_P),
            "avg_size_E": float(self.avg_size_E),
            "row_labels": self.row_labels,
            "col_labels": self.col_labels,
            "component_labels": self.component_labels,
            "reference": {"P": _lists(self.P_ref), "E": _lists(self.E_ref)},
            "envelope": {"P_min": _lists(self.P_min), "P_max": _lists(self.P_max),
                         "E_min": _lists(self.E_min), "E_max": _lists(self.E_max)},
            "warnings": self.warnings,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=1, default=_json_default) + "\n"

    @classmethod
    def loads(cls, text, source="<string>"):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{source}: invalid JSON: {exc}") from exc
        if d.get("format") != REPORT_FORMAT:
            raise InputError(f"{source}: not an envelope report (format {d.get('format')!r})")
        env, ref = d["envelope"], d["reference"]
        return cls(d["config"], d["iterations"], d["converged"], d["avg_size_P"], d["avg_size_E"],
                   np.array(env["P_min"]), np.array(env["P_max"]),
                   np.array(env["E_min"]), np.array(env["E_max"]),
                   np.array(ref["P"]), np.array(ref["E"]),
                   d["row_labels"], d["col_labels"], d["component_labels"], d.get("warnings", []))


def write_report(path, report):
    atomic_write(path, report.dumps())


def read_report(path):
    return EnvelopeReport.loads(_read_text(path), source=str(path))


def _lists(a):
    return np.asarray(a, dtype=float).tolist()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
