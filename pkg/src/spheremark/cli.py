"""Command-line entry point: ``spheremark {simulate,summarize,test,intensity}``.

Settings come from built-in defaults, then an optional config file
(``--config``, INI syntax, section ``[spheremark]``), then command-line flags.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DataError, EmptyWindowError, NumericalError
from .geom import CapComplement, Ellipsoid, FullSphere, LatitudeBandExclusion, Sphere, StarShape, lonlat_to_xyz
from .infer import TestConfig, run_independence_test
from .intensity import (
    AnalyticIntensity,
    ConstantIntensity,
    GridIntensity,
    homogeneous_estimate,
    kernel_estimate,
)
from .io import (
    provenance,
    read_grid_field,
    read_pattern,
    read_table,
    write_curve,
    write_envelope,
    write_grid_field,
    write_pattern,
    write_report,
)
from .sim import SCENARIOS, FieldExpression, sample_poisson, scenario
from .summaries import (
    DEFAULT_F_GRID,
    cross_summaries,
    default_radii,
    khat_inhom,
    khat_iso,
    p_transform,
)

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
STATISTICS = ("K", "P", "D", "F", "J")

DEFAULTS = {
    "input": None,
    "format": "xyz",
    "shape": "sphere",
    "window": "full",
    "marks": None,
    "variant": "inhom",
    "intensity": "kernel",
    "radii": None,
    "null": "rotation",
    "rotate": "first",
    "nsim": 199,
    "level": 0.95,
    "seed": 0,
    "out": ".",
    "statistics": "K,P,D,F,J",
    "grid_points": DEFAULT_F_GRID,
    "kernel_grid": 20_000,
    "scenario": None,
    "fields": None,
    "resolution": 5000,
    "write_field": False,
    "reestimate": False,
}
_INT_KEYS = {"nsim", "seed", "grid_points", "kernel_grid", "resolution"}
_FLOAT_KEYS = {"level"}
_BOOL_KEYS = {"write_field", "reestimate"}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# parsing of compact specs


def parse_shape(text):
    """``sphere`` | ``ellipsoid:a,b,c`` | ``star:path`` (table ``x,y,z,radius``)."""
    kind, _, arg = str(text).partition(":")
    if kind == "sphere" and not arg:
        return Sphere()
    if kind == "ellipsoid":
        try:
            a, b, c = (float(v) for v in arg.split(","))
        except ValueError:
            raise ConfigError(f"ellipsoid shape needs three semi-axes, got {arg!r}") from None
        return Ellipsoid(a, b, c)
    if kind == "star":
        _, cols = read_table(arg)
        if set(cols) != {"x", "y", "z", "radius"}:
            raise DataError(f"{arg}: star-shape table needs columns x,y,z,radius")
        dirs = np.column_stack([cols["x"], cols["y"], cols["z"]])
        return StarShape.from_table(dirs, cols["radius"], name=Path(arg).name)
    raise ConfigError(f"unknown shape {text!r}")


def parse_window(text):
    """``full`` | ``band:half_width_deg`` | ``capcomp:lon_deg,lat_deg,radius_deg``."""
    kind, _, arg = str(text).partition(":")
    try:
        if kind == "full" and not arg:
            return FullSphere()
        if kind == "band":
            return LatitudeBandExclusion(np.radians(float(arg)))
        if kind == "capcomp":
            lon, lat, rad = (float(v) for v in arg.split(","))
            return CapComplement(lonlat_to_xyz(lon, lat), np.radians(rad))
    except ValueError as exc:
        raise ConfigError(f"bad window spec {text!r}: {exc}") from None
    raise ConfigError(f"unknown window {text!r}")


def parse_radii(text, window):
    """Default grid, a count ``n``, ``start:stop:n`` or a comma list."""
    if text is None or text == "default":
        return default_radii(window)
    text = str(text)
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        if "," in text:
            return np.array([float(v) for v in text.split(",")])
        n = int(text)
    except ValueError:
        raise ConfigError(f"bad radius grid {text!r}") from None
    return default_radii(window, n)


def parse_marks(text, pattern):
    if text is None:
        if len(pattern.mark_set) < 2:
            raise DataError("pattern has fewer than two marks")
        return pattern.mark_set[0], pattern.mark_set[1]
    parts = [m.strip() for m in str(text).split(",")]
    if len(parts) != 2:
        raise ConfigError("marks must be two labels separated by a comma")
    pattern._check_labels(parts)
    return tuple(parts)


def build_models(spec, pattern, labels, kernel_grid, variant):
    """Intensity models per label from ``homogeneous`` | ``kernel[:h]`` |
    ``constant:v`` | ``file:path`` (grid field with one column per mark)."""
    if variant == "iso":
        return {m: homogeneous_estimate(pattern, m) for m in labels}
    kind, _, arg = str(spec).partition(":")
    if kind == "homogeneous":
        return {m: homogeneous_estimate(pattern, m) for m in labels}
    if kind == "kernel":
        h = float(arg) if arg else None
        return {m: kernel_estimate(pattern, m, h, kernel_grid) for m in labels}
    if kind == "constant":
        return {m: ConstantIntensity(float(arg)) for m in labels}
    if kind == "file":
        nodes, fields, _ = read_grid_field(arg)
        missing = [m for m in labels if m not in fields]
        if missing:
            raise DataError(f"{arg}: no intensity column for marks {missing}")
        return {m: GridIntensity(nodes, fields[m]) for m in labels}
    raise ConfigError(f"unknown intensity spec {spec!r}")


# --------------------------------------------------------------------------
# configuration


def load_config(path):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    if "spheremark" not in parser:
        raise ConfigError(f"{path}: missing [spheremark] section")
    out = {}
    for key, value in parser["spheremark"].items():
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}: unknown setting {key!r}")
        out[key] = value
    return out


def _coerce(cfg):
    for key in _INT_KEYS:
        if cfg[key] is not None:
            cfg[key] = int(cfg[key])
    for key in _FLOAT_KEYS:
        cfg[key] = float(cfg[key])
    for key in _BOOL_KEYS:
        if isinstance(cfg[key], str):
            cfg[key] = cfg[key].strip().lower() in ("1", "true", "yes", "on")
    return cfg


def resolve_config(args):
    """Defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    try:
        cfg = _coerce(cfg)
    except ValueError as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["nsim"] < 1:
        raise ConfigError("nsim must be positive")
    if not 0.0 < cfg["level"] < 1.0:
        raise ConfigError("level must lie in (0, 1)")
    if cfg["grid_points"] < 100 or cfg["kernel_grid"] < 100:
        raise ConfigError("grid sizes must be at least 100")
    if cfg["resolution"] < 500:
        raise ConfigError("field resolution must be at least 500")
    if cfg["format"] not in ("lonlat", "xyz", "shape"):
        raise ConfigError(f"unknown format {cfg['format']!r}")
    if cfg["variant"] not in ("iso", "inhom"):
        raise ConfigError("variant must be iso or inhom")
    if cfg["null"] not in ("rotation", "poisson"):
        raise ConfigError("null must be rotation or poisson")
    if cfg["rotate"] not in ("first", "second", "both"):
        raise ConfigError("rotate must be first, second or both")
    stats = [s.strip() for s in str(cfg["statistics"]).split(",") if s.strip()]
    bad = [s for s in stats if s not in STATISTICS]
    if bad or not stats:
        raise ConfigError(f"unknown statistics {bad}; choose from {list(STATISTICS)}")


def _header(command, cfg):
    # where results are written does not change them
    return provenance(command, {k: v for k, v in cfg.items() if k != "out"}, cfg["seed"])


def _load_pattern(cfg):
    if not cfg["input"]:
        raise ConfigError("an input pattern file is required (--input)")
    shape = parse_shape(cfg["shape"])
    window = parse_window(cfg["window"])
    if cfg["format"] == "shape":
        if not window.is_full:
            raise ConfigError("patterns read on a surface must cover the whole surface")
        return read_pattern(cfg["input"], "shape", shape=shape), window
    if not isinstance(shape, Sphere):
        raise ConfigError("a non-sphere shape requires --format shape")
    return read_pattern(cfg["input"], cfg["format"], window=window), window


def _outdir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg):
    """Simulate a preset scenario, or Poisson components from ``fields``
    (``label=expression;label=expression``) on the configured shape."""
    out = _outdir(cfg)
    head = _header("simulate", cfg)
    fld = None
    if cfg["scenario"]:
        if cfg["scenario"] not in SCENARIOS:
            raise ConfigError(f"unknown scenario {cfg['scenario']!r}; choose from {sorted(SCENARIOS)}")
        shape = None if cfg["shape"] == "sphere" else parse_shape(cfg["shape"])
        pattern, params, fld = scenario(
            cfg["scenario"], cfg["seed"], shape=shape, resolution=cfg["resolution"], return_field=True
        )
    elif cfg["fields"]:
        models = {}
        for item in str(cfg["fields"]).split(";"):
            label, sep, expr = item.partition("=")
            if not sep or not label.strip():
                raise ConfigError(f"bad field {item!r}; expected label=expression")
            try:
                f = FieldExpression(expr.strip())
            except SyntaxError as exc:
                raise ConfigError(f"bad expression {expr!r}: {exc.msg}") from None
            models[label.strip()] = AnalyticIntensity(f, expr.strip())
        shape = parse_shape(cfg["shape"])
        pattern = sample_poisson(shape, models, cfg["seed"], window=parse_window(cfg["window"]))
        params = {"kind": "poisson", "shape": shape.describe(),
                  **{f"intensity:{k}": v.name for k, v in models.items()}}
    else:
        raise ConfigError("simulate needs --scenario or --fields")
    files = ["pattern.csv"]
    write_pattern(out / "pattern.csv", pattern, head)
    if pattern.source_points is not None:
        write_pattern(out / "surface.csv", pattern, dict(head, shape=params["shape"]), surface=True)
        files.append("surface.csv")
    if fld is not None and cfg["write_field"]:
        surf, u1, u2 = fld
        labels = pattern.mark_set
        write_grid_field(out / "field.csv", surf, {labels[0]: u1, labels[1]: u2}, dict(head, content="gaussian field on surface nodes"))
        files.append("field.csv")
    manifest = {
        "provenance": head,
        "scenario": cfg["scenario"],
        "parameters": params,
        "seed": cfg["seed"],
        "counts": {m: int(np.sum(pattern.marks == m)) for m in pattern.mark_set},
        "files": files,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files + ["manifest.json"]


def cmd_summarize(cfg):
    pattern, window = _load_pattern(cfg)
    i, j = parse_marks(cfg["marks"], pattern)
    r = parse_radii(cfg["radii"], window)
    models = build_models(cfg["intensity"], pattern, (i, j), cfg["kernel_grid"], cfg["variant"])
    stats = [s.strip() for s in cfg["statistics"].split(",") if s.strip()]
    out = _outdir(cfg)
    head = _header("summarize", cfg)
    curves = {}
    if {"D", "F", "J"} & set(stats):
        cs = cross_summaries(pattern, i, j, models, r=r, grid_points=cfg["grid_points"])
        curves.update({"K": cs["K"], "P": cs["P"], "D": cs[f"D:{i}:{j}"], "F": cs[f"F:{j}"], "J": cs[f"J:{i}:{j}"]})
    else:
        constant = all(isinstance(m, ConstantIntensity) for m in models.values())
        k = (khat_iso if constant else khat_inhom)(pattern, i, j, r, models[i], models[j])
        curves.update({"K": k, "P": p_transform(k)})
    files = []
    for s in stats:
        name = f"{s}_{j}.csv" if s == "F" else f"{s}_{i}_{j}.csv"
        write_curve(out / name, curves[s], head)
        files.append(name)
    return files


def cmd_test(cfg):
    pattern, window = _load_pattern(cfg)
    i, j = parse_marks(cfg["marks"], pattern)
    if cfg["null"] == "rotation" and not window.is_full:
        raise ConfigError(
            "the rotation null requires a pattern observed over the whole sphere; use --null poisson"
        )
    r = parse_radii(cfg["radii"], window)
    models = build_models(cfg["intensity"], pattern, (i, j), cfg["kernel_grid"], cfg["variant"])
    config = TestConfig(
        intensity="provided",
        models=models,
        null=cfg["null"],
        rotate=cfg["rotate"],
        nsim=cfg["nsim"],
        level=cfg["level"],
        radii=r,
        grid_points=cfg["grid_points"],
        seed=cfg["seed"],
        reestimate=cfg["reestimate"],
    )
    if cfg["reestimate"]:
        kind, _, arg = str(cfg["intensity"]).partition(":")
        config.intensity = "homogeneous" if cfg["variant"] == "iso" else kind
        config.bandwidth = float(arg) if kind == "kernel" and arg else None
        config.kernel_grid = cfg["kernel_grid"]
        if config.intensity not in ("homogeneous", "kernel"):
            raise ConfigError("re-estimation needs a homogeneous or kernel intensity")
    report = run_independence_test(pattern, i, j, config)
    out = _outdir(cfg)
    head = _header("test", cfg)
    extra = dict(head, window=window.describe(), eroded=not window.is_full)
    if report.caveat:
        extra["caveat_region"] = list(report.caveat_region)
    files = []
    for name, env in report.envelopes.items():
        fname = "envelope_" + name.replace(",", "_") + ".csv"
        write_envelope(out / fname, name, env, extra)
        files.append(fname)
    write_report(out / "report.txt", report, head)
    return files + ["report.txt"]


def cmd_intensity(cfg):
    pattern, _ = _load_pattern(cfg)
    labels = pattern.mark_set if cfg["marks"] is None else pattern._check_labels(cfg["marks"].split(","))
    kind, _, arg = str(cfg["intensity"]).partition(":")
    if kind != "kernel":
        raise ConfigError("the intensity command fits kernel fields (--intensity kernel[:h])")
    h = float(arg) if arg else None
    fields, nodes = {}, None
    for m in labels:
        model = kernel_estimate(pattern, m, h, cfg["kernel_grid"])
        nodes = model.nodes
        fields[m] = model.values
    out = _outdir(cfg)
    write_grid_field(out / "intensity.csv", nodes, fields, _header("intensity", cfg))
    return ["intensity.csv"]


COMMANDS = {
    "simulate": cmd_simulate,
    "summarize": cmd_summarize,
    "test": cmd_test,
    "intensity": cmd_intensity,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="spheremark", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [spheremark] section")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--shape", help="sphere | ellipsoid:a,b,c | star:table.csv")
    common.add_argument("--window", help="full | band:deg | capcomp:lon,lat,deg")
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="pattern file")
    data.add_argument("--format", choices=["lonlat", "xyz", "shape"])
    data.add_argument("--marks", help="mark pair i,j")
    data.add_argument("--variant", choices=["iso", "inhom"])
    data.add_argument("--intensity", help="homogeneous | kernel[:h] | constant:v | file:path")
    data.add_argument("--kernel-grid", dest="kernel_grid", type=int)
    data.add_argument("--radii", help="n | start:stop:n | r1,r2,...")
    data.add_argument("--grid-points", dest="grid_points", type=int, help="F grid size")

    p = sub.add_parser("simulate", parents=[common], help="simulate a scenario")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--fields", help="Poisson intensities 'label=expr;label=expr' in x1,x2,x3")
    p.add_argument("--resolution", type=int, help="Gaussian field grid size")
    p.add_argument("--write-field", dest="write_field", action="store_const", const=True)

    p = sub.add_parser("summarize", parents=[common, data], help="estimate summary curves")
    p.add_argument("--statistics", help="comma list from K,P,D,F,J")

    p = sub.add_parser("test", parents=[common, data], help="envelope test of independence")
    p.add_argument("--null", choices=["rotation", "poisson"])
    p.add_argument("--rotate", choices=["first", "second", "both"])
    p.add_argument("--nsim", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--reestimate", action="store_const", const=True)

    sub.add_parser("intensity", parents=[common, data], help="fit and dump kernel intensity fields")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        files = COMMANDS[args.command](cfg)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, EmptyWindowError, ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in files:
        print(Path(cfg["out"]) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
