"""Plain-text file formats.

All files are comma-separated with ``#``-prefixed ``key: value`` metadata
lines at the top. Floats are written with ``repr`` so that reading a file
back reproduces the values bit for bit.
"""

import csv
import hashlib
import json

import numpy as np

from . import __version__
from ._validation import DataError
from .geom import lonlat_to_xyz
from .pattern import MarkedPattern, map_pattern_to_sphere
from .summaries import SummaryCurve

__all__ = [
    "PATTERN_FORMATS",
    "config_hash",
    "provenance",
    "read_pattern",
    "write_pattern",
    "write_curve",
    "read_curve",
    "write_envelope",
    "read_table",
    "write_grid_field",
    "read_grid_field",
    "write_report",
]

PATTERN_FORMATS = ("lonlat", "xyz", "shape")
_NORM_TOL = 1e-6


def config_hash(config):
    """sha256 of the canonical JSON form of a config mapping."""
    blob = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def provenance(command, config, seed):
    return {
        "command": command,
        "config_sha256": config_hash(config),
        "seed": seed,
        "version": __version__,
    }


def _fmt(x):
    return repr(float(x))


def _write_meta(fh, meta):
    for key, value in meta.items():
        if isinstance(value, (list, tuple, dict)):
            value = json.dumps(value)
        text = str(value)
        if "\n" in text:
            raise ValueError(f"metadata value for {key!r} spans lines")
        fh.write(f"# {key}: {text}\n")


def _split(path):
    """Return (metadata dict, header, [(line_no, row)])."""
    meta, header, rows = {}, None, []
    with open(path, newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.rstrip("\r\n")
            if not text.strip():
                continue
            if text.startswith("#"):
                key, sep, value = text[1:].partition(":")
                if sep and header is None:
                    meta[key.strip()] = value.strip()
                continue
            row = next(csv.reader([text]))
            if header is None:
                header = [c.strip() for c in row]
            else:
                rows.append((line_no, [c.strip() for c in row]))
    if header is None:
        raise DataError(f"{path}: no header row")
    return meta, header, rows


def _floats(path, line_no, cells):
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise DataError(f"{path}, line {line_no}: cannot parse numbers from {cells}") from None


def read_pattern(path, fmt="xyz", shape=None, window=None, mark_set=None, jitter_duplicates=False):
    """Read a marked pattern.

    Formats: ``lonlat`` (``lon_deg,lat_deg,mark``, degrees), ``xyz``
    (``x,y,z,mark``, unit vectors within 1e-6) and ``shape`` (``x,y,z,mark``
    on ``shape``, mapped to the sphere).
    """
    if fmt not in PATTERN_FORMATS:
        raise ValueError(f"unknown pattern format {fmt!r}; choose from {PATTERN_FORMATS}")
    _, header, rows = _split(path)
    want = ["lon_deg", "lat_deg", "mark"] if fmt == "lonlat" else ["x", "y", "z", "mark"]
    if header != want:
        raise DataError(f"{path}: expected header {','.join(want)}, got {','.join(header)}")
    coords, marks = [], []
    for line_no, row in rows:
        if len(row) != len(want) or row[-1] == "":
            raise DataError(f"{path}, line {line_no}: expected {len(want)} fields, got {len(row)}")
        vals = _floats(path, line_no, row[:-1])
        if not np.all(np.isfinite(vals)):
            raise DataError(f"{path}, line {line_no}: non-finite coordinate")
        if fmt == "xyz":
            norm = float(np.linalg.norm(vals))
            if abs(norm - 1.0) > _NORM_TOL:
                raise DataError(f"{path}, line {line_no}: |x| = {norm!r} is not within 1e-6 of 1")
        elif fmt == "lonlat" and abs(vals[1]) > 90.0:
            raise DataError(f"{path}, line {line_no}: latitude {vals[1]} outside [-90, 90]")
        coords.append(vals)
        marks.append(row[-1])
    coords = np.array(coords, dtype=float).reshape(-1, 2 if fmt == "lonlat" else 3)
    if fmt == "lonlat":
        pts = lonlat_to_xyz(coords[:, 0], coords[:, 1])
    elif fmt == "xyz":
        pts = coords
    else:
        if shape is None:
            raise ValueError("shape format needs a shape")
        return map_pattern_to_sphere(coords, marks, shape, mark_set=mark_set, window=window)
    return MarkedPattern(pts, marks, mark_set=mark_set, window=window, jitter_duplicates=jitter_duplicates)


def write_pattern(path, pattern, meta=None, surface=False):
    """Write ``x,y,z,mark`` rows; ``surface=True`` writes the source surface
    coordinates of a mapped pattern instead of the sphere points."""
    pts = pattern.points
    if surface:
        if pattern.source_points is None:
            raise ValueError("pattern carries no surface coordinates")
        pts = pattern.source_points
    with open(path, "w", newline="") as fh:
        _write_meta(fh, dict(meta or {}, mark_set=list(pattern.mark_set), window=pattern.window.describe()))
        fh.write("x,y,z,mark\n")
        for p, m in zip(pts, pattern.marks):
            fh.write(f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(p[2])},{m}\n")


def write_curve(path, curve, meta=None):
    head = {
        "statistic": curve.statistic,
        "marks": list(curve.marks),
        "variant": curve.variant,
        "window": curve.window,
        "eroded": curve.eroded,
    }
    head.update({k: v for k, v in curve.meta.items()})
    head.update(meta or {})
    with open(path, "w", newline="") as fh:
        _write_meta(fh, head)
        fh.write("r,value,defined\n")
        for r, v, d in zip(curve.r, curve.values, curve.defined):
            fh.write(f"{_fmt(r)},{_fmt(v)},{int(d)}\n")


def read_curve(path):
    meta, header, rows = _split(path)
    if header != ["r", "value", "defined"]:
        raise DataError(f"{path}: not a curve file")
    data = np.array([_floats(path, n, row) for n, row in rows], dtype=float).reshape(-1, 3)
    known = {"statistic", "marks", "variant", "window", "eroded"}
    return SummaryCurve(
        meta.get("statistic", ""),
        tuple(json.loads(meta.get("marks", "[]"))),
        data[:, 0],
        data[:, 1],
        data[:, 2].astype(bool),
        variant=meta.get("variant", "isotropic"),
        window=meta.get("window", "full"),
        eroded=meta.get("eroded", "False") == "True",
        meta={k: v for k, v in meta.items() if k not in known},
    )


def write_envelope(path, name, env, meta=None):
    """Envelope table with columns ``r,obs,lo,hi,defined,exceed``."""
    head = {
        "statistic": name,
        "marks": list(env.observed.marks),
        "variant": env.observed.variant,
        "window": env.observed.window,
        "method": env.method,
        "nsim": env.nsim,
        "level": env.level,
        "k": env.k,
        "seed": env.seed,
    }
    head.update(meta or {})
    defined = env.observed.defined & env.lower.defined
    with open(path, "w", newline="") as fh:
        _write_meta(fh, head)
        fh.write("r,obs,lo,hi,defined,exceed\n")
        for row in zip(env.observed.r, env.observed.values, env.lower.values, env.upper.values, defined, env.exceed):
            fh.write(f"{_fmt(row[0])},{_fmt(row[1])},{_fmt(row[2])},{_fmt(row[3])},{int(row[4])},{int(row[5])}\n")


def read_table(path):
    """Generic reader: ``(metadata, {column: float array})``."""
    meta, header, rows = _split(path)
    data = np.array([_floats(path, n, row) for n, row in rows], dtype=float).reshape(-1, len(header))
    return meta, {h: data[:, k] for k, h in enumerate(header)}


def write_grid_field(path, nodes, fields, meta=None):
    """Grid ``x,y,z`` plus one value column per mark."""
    labels = list(fields)
    with open(path, "w", newline="") as fh:
        _write_meta(fh, meta or {})
        fh.write(",".join(["x", "y", "z"] + labels) + "\n")
        cols = [np.asarray(fields[m], dtype=float) for m in labels]
        for k, p in enumerate(nodes):
            cells = [_fmt(p[0]), _fmt(p[1]), _fmt(p[2])] + [_fmt(c[k]) for c in cols]
            fh.write(",".join(cells) + "\n")


def read_grid_field(path):
    """Inverse of :func:`write_grid_field`: ``(nodes, {mark: values}, meta)``."""
    meta, cols = read_table(path)
    keys = list(cols)
    if keys[:3] != ["x", "y", "z"]:
        raise DataError(f"{path}: grid field must start with x,y,z columns")
    nodes = np.column_stack([cols["x"], cols["y"], cols["z"]])
    return nodes, {k: cols[k] for k in keys[3:]}, meta


def write_report(path, report, meta=None):
    """Human-readable test summary with the metadata block on top."""
    env = next(iter(report.envelopes.values()))
    head = {
        "marks": list(report.marks),
        "method": env.method,
        "nsim": env.nsim,
        "level": env.level,
        "k": env.k,
        "seed": env.seed,
        "tags": report.tags,
        "caveat": report.caveat,
    }
    if report.caveat:
        head["caveat_region"] = list(report.caveat_region)
    head.update(meta or {})
    with open(path, "w") as fh:
        _write_meta(fh, head)
        fh.write(report.summary() + "\n")
