"""Plain-text config parsing and CSV interchange.

Every CSV starts with ``#``-prefixed ``key=value`` metadata lines (tool
version, seed, config hash, then command-specific entries) followed by a
header row. Process labels in files are 1-based.
"""
from __future__ import annotations

import csv
import hashlib
import math
from pathlib import Path

import numpy as np

from . import __version__
from .core import BinnedCounts, EventSequence, ModelParams, param_names
from .exceptions import DataFormatError

TOOL = "hawkes-agg"


# ---------------------------------------------------------------- config

def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; blank lines and ``#`` comments ignored; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def parse_vector(value: str) -> np.ndarray:
    """``"0.3, 0.3"`` or ``"0.3 0.3"``."""
    try:
        return np.array([float(v) for v in value.replace(",", " ").split()])
    except ValueError as exc:
        raise ValueError(f"cannot parse vector {value!r}") from exc


def parse_matrix(value: str) -> np.ndarray:
    """Rows separated by ``;``: ``"0.7 0.9; 0.6 1.0"``."""
    rows = [parse_vector(r) for r in value.split(";") if r.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise ValueError(f"cannot parse matrix {value!r}: ragged or empty rows")
    return np.vstack(rows)


def format_vector(v) -> str:
    return ", ".join(repr(float(x)) for x in np.ravel(v))


def format_matrix(m) -> str:
    return "; ".join(format_vector(r) for r in np.atleast_2d(m))


def params_from_config(cfg: dict) -> ModelParams:
    missing = [k for k in ("nu", "alpha", "beta") if k not in cfg]
    if missing:
        raise ValueError(f"config is missing parameter keys: {', '.join(missing)}")
    nu = parse_vector(cfg["nu"])
    alpha = parse_matrix(cfg["alpha"])
    beta = parse_matrix(cfg["beta"])
    return ModelParams(nu, alpha, beta)


def params_to_config(params: ModelParams) -> dict:
    return {"nu": format_vector(params.nu), "alpha": format_matrix(params.alpha),
            "beta": format_matrix(params.beta)}


def config_hash(cfg: dict) -> str:
    text = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_config(path, cfg: dict):
    lines = [f"# {TOOL} {__version__} resolved config"]
    lines += [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- csv

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path, columns, rows, meta: dict | None = None):
    """Metadata lines, header, rows; floats written with ``repr`` so they round-trip exactly."""
    meta = dict(meta or {})
    with open(path, "w", newline="") as fh:
        fh.write(f"# tool={TOOL} {__version__}\n")
        for key in ("seed", "config_hash"):
            fh.write(f"# {key}={meta.pop(key, 'none')}\n")
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path):
    """Return ``(meta, header, rows)`` with ``rows`` as ``(line_number, fields)`` pairs."""
    path = Path(path)
    meta, header, rows = {}, None, []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                if header is None and "=" in s:
                    k, v = s[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            fields = next(csv.reader([s]))
            if header is None:
                header = [f.strip() for f in fields]
            else:
                rows.append((lineno, [f.strip() for f in fields]))
    if header is None:
        raise DataFormatError(f"{path}: no header row")
    return meta, header, rows


def _float(value, path, lineno, what):
    try:
        x = float(value)
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: cannot parse {what} {value!r}") from None
    if not math.isfinite(x):
        raise DataFormatError(f"{path}:{lineno}: {what} is not finite")
    return x


def file_kind(path) -> str:
    """``events``, ``counts`` or ``params`` by header columns."""
    _, header, _ = read_csv(path)
    if header[:2] == ["time", "process"]:
        return "events"
    if header and header[0] == "bin_index":
        return "counts"
    if header[:2] == ["parameter", "value"]:
        return "params"
    raise DataFormatError(f"{path}: unrecognised header {header}")


# ---------------------------------------------------------------- events / counts

def write_events(path, events: EventSequence, meta: dict | None = None):
    times = np.concatenate(events.times) if events.counts.sum() else np.zeros(0)
    labels = np.concatenate([np.full(n, p + 1) for p, n in enumerate(events.counts)])
    order = np.lexsort((labels, times))
    meta = dict(meta or {})
    meta.setdefault("horizon", repr(events.horizon))
    meta.setdefault("processes", events.P)
    write_csv(path, ["time", "process"], zip(times[order], labels[order]), meta)


def read_events(path, horizon: float | None = None, P: int | None = None) -> EventSequence:
    meta, header, rows = read_csv(path)
    if header[:2] != ["time", "process"]:
        raise DataFormatError(f"{path}: expected columns time,process, got {header}")
    times, labels = [], []
    for lineno, f in rows:
        if len(f) < 2:
            raise DataFormatError(f"{path}:{lineno}: expected 2 fields, got {len(f)}")
        times.append(_float(f[0], path, lineno, "time"))
        try:
            lab = int(f[1])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: process label {f[1]!r} is not an integer") from None
        if lab < 1:
            raise DataFormatError(f"{path}:{lineno}: process labels are 1-based, got {lab}")
        labels.append(lab - 1)
    if horizon is None:
        if "horizon" not in meta:
            raise DataFormatError(f"{path}: no horizon in metadata; pass it explicitly")
        horizon = float(meta["horizon"])
    if P is None:
        P = int(meta.get("processes", max(labels, default=0) + 1))
    if labels and max(labels) >= P:
        raise DataFormatError(f"{path}: process label {max(labels) + 1} exceeds P={P}")
    try:
        return EventSequence.from_labels(times, labels, P, horizon)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def write_counts(path, binned: BinnedCounts, meta: dict | None = None):
    meta = dict(meta or {})
    meta.setdefault("delta", repr(binned.delta))
    columns = ["bin_index"] + [f"count_{p + 1}" for p in range(binned.P)]
    rows = ([j] + [int(c) for c in row] for j, row in enumerate(binned.counts))
    write_csv(path, columns, rows, meta)


def read_counts(path, delta: float | None = None) -> BinnedCounts:
    meta, header, rows = read_csv(path)
    if not header or header[0] != "bin_index" or len(header) < 2:
        raise DataFormatError(f"{path}: expected columns bin_index,count_1..count_P, got {header}")
    P = len(header) - 1
    counts = np.zeros((len(rows), P), dtype=np.int64)
    for j, (lineno, f) in enumerate(rows):
        if len(f) != P + 1:
            raise DataFormatError(f"{path}:{lineno}: expected {P + 1} fields, got {len(f)}")
        try:
            idx = int(f[0])
            vals = [int(v) for v in f[1:]]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: counts must be integers") from None
        if idx != j:
            raise DataFormatError(f"{path}:{lineno}: bin_index {idx} out of sequence (expected {j})")
        if min(vals) < 0:
            raise DataFormatError(f"{path}:{lineno}: negative count")
        counts[j] = vals
    if delta is None:
        if "delta" not in meta:
            raise DataFormatError(f"{path}: no delta in metadata; pass it explicitly")
        delta = float(meta["delta"])
    if not rows:
        raise DataFormatError(f"{path}: no count rows")
    return BinnedCounts(counts, delta)


# ---------------------------------------------------------------- estimates

def estimate_rows(params: ModelParams):
    """``parameter,value`` rows for nu, alpha, beta and gamma = alpha / beta."""
    P = params.P
    rows = list(zip(param_names(P), params.to_vector()))
    gamma = params.alpha / params.beta
    rows += [(f"gamma_{i + 1}_{j + 1}", gamma[i, j]) for i in range(P) for j in range(P)]
    return rows


def write_estimates(path, params: ModelParams, meta: dict | None = None):
    write_csv(path, ["parameter", "value"], estimate_rows(params), meta)


def read_params(path, check: bool = True) -> ModelParams:
    """Read a ``parameter,value`` file (gamma rows are ignored)."""
    _, header, rows = read_csv(path)
    if header[:2] != ["parameter", "value"]:
        raise DataFormatError(f"{path}: expected columns parameter,value, got {header}")
    values = {}
    for lineno, f in rows:
        if len(f) < 2:
            raise DataFormatError(f"{path}:{lineno}: expected 2 fields")
        values[f[0]] = _float(f[1], path, lineno, f[0])
    P = sum(1 for k in values if k.startswith("nu_"))
    names = param_names(P)
    missing = [n for n in names if n not in values]
    if P == 0 or missing:
        raise DataFormatError(f"{path}: missing parameters {missing or ['nu_1']}")
    try:
        return ModelParams.from_vector([values[n] for n in names], P, check=check)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- ingest

def ingest_events(path, time_col: str, label_col: str, delta: float | None = None,
                  labels=None, start: float | None = None, end: float | None = None,
                  exact: bool = False):
    """Load a raw event log.

    Labels map to processes in ``labels`` order when given, else in first-seen
    order. Times are shifted by the window start, which defaults to the first
    event time floored to a multiple of ``delta``. Returns
    ``(BinnedCounts or EventSequence, label list, start)``.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        for col in (time_col, label_col):
            if col not in header:
                raise DataFormatError(f"{path}: column {col!r} not in header {header}")
        ti, li = header.index(time_col), header.index(label_col)
        times, raw_labels, bad, first_bad = [], [], 0, None
        for lineno, f in enumerate(reader, 2):
            if not f or all(not x.strip() for x in f):
                continue
            try:
                t = float(f[ti])
                lab = f[li].strip()
                if not math.isfinite(t) or not lab:
                    raise ValueError
            except (ValueError, IndexError):
                bad += 1
                first_bad = first_bad or (lineno, ",".join(f))
                continue
            times.append(t)
            raw_labels.append(lab)
    if bad:
        raise DataFormatError(f"{path}: {bad} unparseable row(s); first at line {first_bad[0]}: {first_bad[1]!r}")
    if not times:
        raise DataFormatError(f"{path}: no events")

    if labels is None:
        labels = list(dict.fromkeys(raw_labels))
    else:
        labels = [str(x) for x in labels]
        unknown = sorted(set(raw_labels) - set(labels))
        if unknown:
            raise DataFormatError(f"{path}: unknown labels {unknown}")
    index = {lab: i for i, lab in enumerate(labels)}
    t = np.asarray(times)
    lab = np.array([index[x] for x in raw_labels], dtype=np.int64)
    P = len(labels)

    if exact and delta is None:
        origin = float(t.min()) if start is None else float(start)
        stop = float(np.nextafter(t.max() - origin, np.inf)) if end is None else float(end) - origin
        events = _exact(t - origin, lab, P, stop, path)
        return events, labels, origin
    if delta is None or not delta > 0:
        raise ValueError("delta must be positive")
    origin = math.floor(t.min() / delta) * delta if start is None else float(start)
    if end is None:
        K = int(math.floor((t.max() - origin) / delta)) + 1
    else:
        span = float(end) - origin
        K = int(round(span / delta))
        if K < 1 or abs(K * delta - span) > 1e-9 * max(1.0, abs(span)):
            raise ValueError(f"window length {span} is not a multiple of delta {delta}")
    rel = t - origin
    inside = (rel >= 0) & (rel < K * delta)
    if exact:
        return _exact(rel[inside], lab[inside], P, K * delta, path), labels, origin
    counts = np.zeros((K, P), dtype=np.int64)
    j = np.floor(rel[inside] / delta).astype(np.int64)
    np.add.at(counts, (np.minimum(j, K - 1), lab[inside]), 1)
    return BinnedCounts(counts, delta), labels, origin


def _exact(t, lab, P, horizon, path):
    try:
        return EventSequence.from_labels(t, lab, P, horizon)
    except ValueError as exc:
        raise DataFormatError(f"{path}: cannot load exact times ({exc}); bin them with delta instead") from exc
