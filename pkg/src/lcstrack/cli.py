"""Batch front-end: field -> flow map -> SVD -> seeds -> curves -> reports.

Configuration is UTF-8 ``key = value`` text with ``[section]`` headers.
Every run writes the fully resolved settings to ``effective_config.ini`` in
the output directory; re-running from that file reproduces the outputs
byte for byte.  Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import flow_map, lcs_tracking, ns_solver, seeding, shrinkline, \
    svd_analysis, velocity
from .errors import BlowUpError, ConfigError, DomainError, GridFileError, \
    IntegrationError, LcsError

_SAFETY_CELLS = 2   # seed-grid margin from non-periodic data boundaries


# ---------------------------------------------------------------------------
# configuration file handling

class _Item:
    __slots__ = ("value", "line")

    def __init__(self, value, line=None):
        self.value = value
        self.line = line

    def where(self, name, section, key):
        loc = f"{name}:{self.line}" if self.line else name
        return f"{loc}: [{section}] {key}"


def parse_config_text(text: str, name: str = "<config>") -> dict:
    """Parse sectioned key = value text, remembering line numbers."""
    items: dict[tuple, _Item] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if "=" not in line:
            raise ConfigError(f"{name}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        items[(section, key.strip().lower())] = _Item(value.strip(), lineno)
    return items


@dataclass
class PipelineConfig:
    source: str = "builtin:duffing"
    t1: float = 0.0
    t2: float = 2.5
    t: float = 0.0
    x_min: float = -3.0
    x_max: float = 3.0
    y_min: float = -3.0
    y_max: float = 3.0
    nx: int = 300
    ny: int = 300
    df_method: str = "aux"
    rho: float | None = None          # None = 1e-2 * grid spacing
    tol: float = 1e-8
    radius: float = 0.5
    segment_length: float = 0.1
    value_percentile: float | None = 90.0
    incompressible: bool = True
    delta_max: float | None = None    # None = grid spacing
    n_substeps: int = 20
    compare_step: float | None = None  # None = h/2
    compare_max_len: float = 8.0
    out_dir: str = "out"
    seed: int = 0
    threads: int = 0
    turbulence: ns_solver.TurbulenceConfig = dc_field(
        default_factory=ns_solver.TurbulenceConfig)


_SCHEMA = {
    ("field", "source"): ("source", str),
    ("window", "t1"): ("t1", float),
    ("window", "t2"): ("t2", float),
    ("window", "t"): ("t", float),
    ("grid", "x_min"): ("x_min", float),
    ("grid", "x_max"): ("x_max", float),
    ("grid", "y_min"): ("y_min", float),
    ("grid", "y_max"): ("y_max", float),
    ("grid", "nx"): ("nx", int),
    ("grid", "ny"): ("ny", int),
    ("method", "df"): ("df_method", str),
    ("method", "rho"): ("rho", "optfloat"),
    ("method", "tol"): ("tol", float),
    ("seeding", "radius"): ("radius", float),
    ("seeding", "segment_length"): ("segment_length", float),
    ("seeding", "value_percentile"): ("value_percentile", "optfloat"),
    ("seeding", "incompressible"): ("incompressible", bool),
    ("refine", "delta_max"): ("delta_max", "optfloat"),
    ("refine", "n_substeps"): ("n_substeps", int),
    ("compare", "step"): ("compare_step", "optfloat"),
    ("compare", "max_len"): ("compare_max_len", float),
    ("output", "directory"): ("out_dir", str),
    ("run", "seed"): ("seed", int),
    ("run", "threads"): ("threads", int),
}

_TURB_SCHEMA = {
    "n": ("n", int),
    "nu": ("nu", float),
    "dt": ("dt", "optfloat"),
    "cfl": ("cfl", float),
    "spin_up": ("spin_up", float),
    "window": ("window", float),
    "interval": ("interval", float),
    "band_lo": ("forcing_band", None),
    "band_hi": ("forcing_band", None),
    "amplitude": ("forcing_amplitude", float),
    "tau_f": ("tau_f", float),
    "ic_band_lo": ("ic_band", None),
    "ic_band_hi": ("ic_band", None),
    "ic_amplitude": ("ic_amplitude", float),
    "seed": ("seed", int),
    "out": ("out", str),
    "out_resolution": ("out_resolution", "optint"),
}


def _convert(raw: str, kind, where: str):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "optfloat":
            if raw.lower() in ("auto", "none"):
                return None
            return float(raw)
        if kind == "optint":
            if raw.lower() in ("auto", "none"):
                return None
            return int(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def build_config(items: dict, name: str = "<config>") -> PipelineConfig:
    cfg = PipelineConfig()
    turb_kwargs = {}
    band = dict(zip(("band_lo", "band_hi"), cfg.turbulence.forcing_band))
    ic_band = dict(zip(("ic_band_lo", "ic_band_hi"), cfg.turbulence.ic_band))
    for (section, key), item in items.items():
        where = item.where(name, section, key)
        if section == "turbulence":
            if key not in _TURB_SCHEMA:
                raise ConfigError(f"{where}: unknown key")
            attr, kind = _TURB_SCHEMA[key]
            if key in band:
                band[key] = _convert(item.value, float, where)
            elif key in ic_band:
                ic_band[key] = _convert(item.value, float, where)
            else:
                turb_kwargs[attr] = _convert(item.value, kind, where)
            continue
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"{where}: unknown key")
        attr, kind = _SCHEMA[(section, key)]
        setattr(cfg, attr, _convert(item.value, kind, where))
    turb_kwargs["forcing_band"] = (band["band_lo"], band["band_hi"])
    turb_kwargs["ic_band"] = (ic_band["ic_band_lo"], ic_band["ic_band_hi"])
    cfg.turbulence = ns_solver.TurbulenceConfig(**turb_kwargs)

    def fail(section, key, msg):
        item = items.get((section, key))
        where = item.where(name, section, key) if item \
            else f"{name}: [{section}] {key}"
        raise ConfigError(f"{where}: {msg}")

    if not cfg.t1 < cfg.t2:
        fail("window", "t1", f"t1 ({cfg.t1:g}) must be < t2 ({cfg.t2:g})")
    if not (cfg.t1 <= cfg.t <= cfg.t2):
        fail("window", "t", f"t ({cfg.t:g}) must lie in "
             f"[{cfg.t1:g}, {cfg.t2:g}]")
    if cfg.nx < 2 or cfg.ny < 2:
        fail("grid", "nx", "grid needs at least 2 nodes per axis")
    if not (cfg.x_min < cfg.x_max and cfg.y_min < cfg.y_max):
        fail("grid", "x_min", "degenerate grid bounds")
    if cfg.df_method not in ("aux", "main"):
        fail("method", "df", f"unknown method {cfg.df_method!r} "
             "(use 'aux' or 'main')")
    if cfg.tol <= 0:
        fail("method", "tol", "tolerance must be positive")
    if cfg.radius <= 0:
        fail("seeding", "radius", "radius must be positive")
    if cfg.segment_length <= 0:
        fail("seeding", "segment_length", "length must be positive")
    if cfg.n_substeps < 1:
        fail("refine", "n_substeps", "need at least one substep")
    return cfg


def load_config(path: str | None, overrides=()) -> PipelineConfig:
    items = {}
    name = path or "<defaults>"
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        items = parse_config_text(p.read_text(encoding="utf-8"), name)
    for ov in overrides:
        key, _, value = ov.partition("=")
        if "." not in key or not value:
            raise ConfigError(f"--set expects section.key=value, got {ov!r}")
        section, _, k = key.partition(".")
        items[(section.strip().lower(), k.strip().lower())] = \
            _Item(value.strip())
    return build_config(items, name)


# ---------------------------------------------------------------------------
# resolved pipeline pieces

def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def effective_config_text(cfg: PipelineConfig) -> str:
    tb = cfg.turbulence
    sections = [
        ("field", [("source", cfg.source)]),
        ("window", [("t1", cfg.t1), ("t2", cfg.t2), ("t", cfg.t)]),
        ("grid", [("x_min", cfg.x_min), ("x_max", cfg.x_max),
                  ("y_min", cfg.y_min), ("y_max", cfg.y_max),
                  ("nx", cfg.nx), ("ny", cfg.ny)]),
        ("method", [("df", cfg.df_method), ("rho", cfg.rho),
                    ("tol", cfg.tol)]),
        ("seeding", [("radius", cfg.radius),
                     ("segment_length", cfg.segment_length),
                     ("value_percentile", cfg.value_percentile),
                     ("incompressible", cfg.incompressible)]),
        ("refine", [("delta_max", cfg.delta_max),
                    ("n_substeps", cfg.n_substeps)]),
        ("compare", [("step", cfg.compare_step),
                     ("max_len", cfg.compare_max_len)]),
        ("turbulence", [("n", tb.n), ("nu", tb.nu), ("dt", tb.dt),
                        ("cfl", tb.cfl), ("spin_up", tb.spin_up),
                        ("window", tb.window), ("interval", tb.interval),
                        ("band_lo", tb.forcing_band[0]),
                        ("band_hi", tb.forcing_band[1]),
                        ("amplitude", tb.forcing_amplitude),
                        ("tau_f", tb.tau_f),
                        ("ic_band_lo", tb.ic_band[0]),
                        ("ic_band_hi", tb.ic_band[1]),
                        ("ic_amplitude", tb.ic_amplitude),
                        ("seed", tb.seed), ("out", tb.out),
                        ("out_resolution", tb.out_resolution)]),
        ("output", [("directory", cfg.out_dir)]),
        ("run", [("seed", cfg.seed), ("threads", cfg.threads)]),
    ]
    lines = []
    for header, pairs in sections:
        lines.append(f"[{header}]")
        for key, value in pairs:
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


class Pipeline:
    """Resolved field, grid and parameters for one run."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        if cfg.source.startswith("builtin:"):
            self.field = velocity.builtin_field(cfg.source.split(":", 1)[1])
        else:
            self.field = velocity.load_gridded_field(cfg.source)
        self._validate_window()
        self.spec = self._seed_grid()
        h = min(self.spec.hx, self.spec.hy)
        self.rho = cfg.rho if cfg.rho is not None else \
            flow_map.DEFAULT_RHO_FACTOR * h
        self.delta_max = cfg.delta_max if cfg.delta_max is not None else h
        self.compare_step = cfg.compare_step if cfg.compare_step is not None \
            else 0.5 * h
        self.refine = lcs_tracking.RefineParams(
            delta_max=self.delta_max, n_substeps=cfg.n_substeps)
        self.period = tuple(
            (self.field.bounds[2 * ax + 1] - self.field.bounds[2 * ax])
            if self.field.is_gridded and self.field.periodic[ax] else None
            for ax in (0, 1))

    def _validate_window(self):
        window = self.field.time_window
        if window is None:
            return
        lo, hi = window
        cfg = self.cfg
        eps = 1e-9 * (hi - lo)
        for label, value in (("t1", cfg.t1), ("t2", cfg.t2), ("t", cfg.t)):
            if value < lo - eps or value > hi + eps:
                raise ConfigError(
                    f"[window] {label}: {value:g} outside the data window "
                    f"[{lo:g}, {hi:g}] of {cfg.source}")

    def _seed_grid(self) -> flow_map.GridSpec:
        cfg = self.cfg
        x_min, x_max = cfg.x_min, cfg.x_max
        y_min, y_max = cfg.y_min, cfg.y_max
        if self.field.is_gridded:
            bx_min, bx_max, by_min, by_max = self.field.bounds
            nt, gny, gnx = self.field.u.shape
            mx = _SAFETY_CELLS * (bx_max - bx_min) / gnx
            my = _SAFETY_CELLS * (by_max - by_min) / gny
            if not self.field.periodic[0]:
                x_min = max(x_min, bx_min + mx)
                x_max = min(x_max, bx_max - mx)
            if not self.field.periodic[1]:
                y_min = max(y_min, by_min + my)
                y_max = min(y_max, by_max - my)
            if not (x_min < x_max and y_min < y_max):
                raise ConfigError("[grid] x_min: seed grid does not fit "
                                  "inside the field domain")
        return flow_map.GridSpec(x_min, x_max, y_min, y_max, cfg.nx, cfg.ny)

    def flow_and_svd(self):
        cfg = self.cfg
        if cfg.df_method == "aux":
            fmg = flow_map.deformation_gradient_aux(
                self.field, self.spec, cfg.t1, cfg.t2, tol=cfg.tol,
                rho=self.rho)
        else:
            fmg = flow_map.compute_flow_map_grid(
                self.field, self.spec, cfg.t1, cfg.t2, tol=cfg.tol)
            fmg = flow_map.deformation_gradient_main(fmg)
        svd = svd_analysis.analyze(fmg, incompressible=cfg.incompressible)
        return fmg, svd

    def seeds(self, svd):
        return seeding.select_seeds(
            svd, self.cfg.radius, incompressible=self.cfg.incompressible,
            value_percentile=self.cfg.value_percentile, period=self.period)


def _write_ftle_csv(svd, path):
    pts = svd.spec.points()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,ftle\n")
        for iy in range(svd.spec.ny):
            for ix in range(svd.spec.nx):
                val = svd.ftle_f[iy, ix]
                sval = repr(float(val)) if np.isfinite(val) else "nan"
                fh.write(f"{pts[iy, ix, 0]!r},{pts[iy, ix, 1]!r},{sval}\n")


def _prepare_out(pipe: Pipeline) -> Path:
    out = Path(pipe.cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.ini").write_text(
        effective_config_text(pipe.cfg), encoding="utf-8")
    return out


def cmd_ftle(cfg: PipelineConfig) -> int:
    pipe = Pipeline(cfg)
    out = _prepare_out(pipe)
    fmg, svd = pipe.flow_and_svd()
    flow_map.save_flow_map(fmg, out / "flowmap.bin")
    svd_analysis.save_svd_fields(svd, out / "svd.bin")
    _write_ftle_csv(svd, out / "ftle.csv")
    print(f"ftle: wrote {out / 'ftle.csv'}")
    return 0


def _seed_files(out, attracting, repelling):
    both = list(attracting) + list(repelling)
    (out / "seeds.txt").write_text(seeding.seeds_to_table(both),
                                   encoding="utf-8")
    (out / "seeds.json").write_text(seeding.seeds_to_json(both),
                                    encoding="utf-8")


def cmd_seeds(cfg: PipelineConfig) -> int:
    pipe = Pipeline(cfg)
    out = _prepare_out(pipe)
    _, svd = pipe.flow_and_svd()
    attracting, repelling = pipe.seeds(svd)
    _seed_files(out, attracting, repelling)
    print(f"seeds: kept {len(attracting)} attracting / "
          f"{len(repelling)} repelling -> {out / 'seeds.txt'}")
    return 0


def cmd_extract(cfg: PipelineConfig) -> int:
    pipe = Pipeline(cfg)
    out = _prepare_out(pipe)
    _, svd = pipe.flow_and_svd()
    attracting, repelling = pipe.seeds(svd)
    _seed_files(out, attracting, repelling)
    att_curves = lcs_tracking.extract_attracting_lcs(
        pipe.field, attracting, cfg.t1, cfg.t, pipe.refine, tol=cfg.tol,
        segment_length=cfg.segment_length)
    rep_curves = lcs_tracking.extract_repelling_lcs(
        pipe.field, repelling, cfg.t2, cfg.t, pipe.refine, tol=cfg.tol,
        segment_length=cfg.segment_length)
    lcs_tracking.save_curves_json(att_curves, out / "attracting_curves.json")
    lcs_tracking.save_curves_csv(att_curves, out / "attracting_curves.csv")
    lcs_tracking.save_curves_json(rep_curves, out / "repelling_curves.json")
    lcs_tracking.save_curves_csv(rep_curves, out / "repelling_curves.csv")
    print(f"extract: {len(att_curves)} attracting / {len(rep_curves)} "
          f"repelling curves at t={cfg.t:g} -> {out}")
    return 0


def cmd_compare(cfg: PipelineConfig) -> int:
    """Forward-advected shrink lines vs backward-advected stretch segments.

    For each matched seed the shrink line (xi1 integral curve at t1) is
    advected forward to t while the repelling segment comes backward from
    t2; the report carries the Hausdorff distance and forward-FTLE
    statistics over the remaining window [t, t2] sampled pointwise along
    both curves (omitted when t == t2).
    """
    pipe = Pipeline(cfg)
    out = _prepare_out(pipe)
    _, svd = pipe.flow_and_svd()
    attracting, repelling = pipe.seeds(svd)
    shrink = shrinkline.shrink_lines_through_seeds(
        svd, attracting, step=pipe.compare_step,
        max_len=cfg.compare_max_len)
    reports = []
    for seed_a, seed_r, line in zip(attracting, repelling, shrink):
        curve_f = lcs_tracking.advect_curve(
            pipe.field,
            lcs_tracking.MaterialCurve(points=line.points, time=cfg.t1,
                                       seed_id=seed_a.seed_id, kind="shrink"),
            cfg.t1, cfg.t, pipe.refine, tol=cfg.tol)
        curve_b = lcs_tracking.extract_repelling_lcs(
            pipe.field, [seed_r], cfg.t2, cfg.t, pipe.refine, tol=cfg.tol,
            segment_length=cfg.segment_length)[0]
        rec = {"seed_id": seed_a.seed_id,
               "hausdorff": shrinkline.hausdorff_distance(curve_f.points,
                                                          curve_b.points),
               "arc_length_shrink": float(curve_f.arc_length()),
               "arc_length_advected": float(curve_b.arc_length())}
        if cfg.t < cfg.t2 - 1e-12 * (cfg.t2 - cfg.t1):
            n_s = 101
            for label, pts in (("shrink", curve_f.points),
                               ("advected", curve_b.points)):
                samples = shrinkline.resample_arclength(pts, n_s)
                vals, _ = svd_analysis.ftle_at_points(
                    pipe.field, samples, cfg.t, cfg.t2, tol=cfg.tol,
                    rho=pipe.rho)
                good = vals[np.isfinite(vals)]
                rec[f"ftle_{label}"] = {
                    "min": float(np.min(good)) if good.size else None,
                    "median": float(np.median(good)) if good.size else None,
                    "max": float(np.max(good)) if good.size else None,
                }
        reports.append(rec)
    (out / "compare_report.json").write_text(
        json.dumps(reports, indent=1, sort_keys=True), encoding="utf-8")
    print(f"compare: {len(reports)} matched seeds -> "
          f"{out / 'compare_report.json'}")
    return 0


def cmd_turbulence(cfg: PipelineConfig) -> int:
    path = Path(cfg.turbulence.out)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    ns_solver.generate_turbulence(cfg.turbulence)
    print(f"turbulence: wrote {cfg.turbulence.out}")
    return 0


_COMMANDS = {
    "ftle": cmd_ftle,
    "seeds": cmd_seeds,
    "extract": cmd_extract,
    "compare": cmd_compare,
    "turbulence": cmd_turbulence,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcs",
        description="Attraction-based hyperbolic LCS extraction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="configuration file")
        p.add_argument("--set", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override one configuration value")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--threads", type=int,
                       help="cap worker threads (0 = all cores)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.out:
            cfg.out_dir = args.out
        if args.threads is not None:
            cfg.threads = args.threads
        if cfg.threads > 0:
            import numba
            numba.set_num_threads(cfg.threads)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, IntegrationError, BlowUpError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, GridFileError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except LcsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
