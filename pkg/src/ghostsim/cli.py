"""Batch front end: flat key=value configs, named scenarios, CSV/PGM export
and a deterministic run manifest.

Exit codes: 0 success, 2 config error, 3 sampling-validation failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    Grid1D,
    SetupGeometry,
    make_double_slit,
    make_pinhole,
    validate_sampling,
)
from .correlation import accumulate_mc, g2_analytic, siegert_normalize
from .experiment import (
    ImageTrace,
    default_image_window,
    defocus_sweep,
    eq3_residual,
    ghost_image_scan,
    magnification_scale,
    peak_position,
    pseudo_object_scan,
    solve_image_plane,
    solve_thin_lens,
    visibility,
    _trace_from_map,
)
from .optics import ArmPath
from .source import EnsembleConfig, aperture_indices, mode_decomposition

__all__ = ["main", "run_scenario", "export_trace", "export_image", "parse_config"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SAMPLING = 3
EXIT_IO = 4

_LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}

# key -> (kind, default); lengths in meters after parsing
CONFIG_SCHEMA: dict[str, tuple[str, object]] = {
    "a": ("length", 125e-3),
    "d_A": ("length", 88e-3),
    "d_B": ("length", 212e-3),
    "d_B_prime": ("length", 268.5e-3),
    "f": ("length", 85e-3),
    "wavelength": ("length", 633e-9),
    "source_diameter": ("length", 200e-6),
    "grid_n": ("int", 16384),
    "grid_dx": ("length", 2e-6),
    "seed": ("int", 20040720),
    "n_realizations": ("int", 10000),
    "engine": ("engine", "analytic"),
    "pinhole_diameter": ("length", 60e-6),
    "slit_width": ("length", 0.2e-3),
    "slit_separation": ("length", 1e-3),
    "scan_halfwidth": ("length", 6e-3),
    "defocus_source_diameter": ("length", 3e-3),
}

FIG3_SHIFTS_MM = (-2, 0, 2)
DEFOCUS_DELTAS_MM = tuple(range(-50, 51, 10))


class ConfigError(ValueError):
    pass


def _parse_length(text: str) -> float:
    s = text.strip()
    for unit in sorted(_LENGTH_UNITS, key=len, reverse=True):
        if s.endswith(unit):
            num = s[: -len(unit)].strip()
            if num:
                return float(num) * _LENGTH_UNITS[unit]
    return float(s)


def parse_config(path: str | Path) -> dict:
    """Read a flat key = value config; unknown keys and bad values are errors
    reported with their line number."""
    cfg = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        kind, _ = CONFIG_SCHEMA[key]
        try:
            if kind == "length":
                cfg[key] = _parse_length(value)
            elif kind == "int":
                cfg[key] = int(value)
            elif kind == "engine":
                if value not in ("mc", "analytic"):
                    raise ValueError("engine must be 'mc' or 'analytic'")
                cfg[key] = value
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: bad value for {key!r}: {exc}") from None
    return cfg


def _geometry(cfg: dict) -> SetupGeometry:
    return SetupGeometry(
        a=cfg["a"],
        d_a=cfg["d_A"],
        d_b=cfg["d_B"],
        d_b_prime=cfg["d_B_prime"],
        f=cfg["f"],
        wavelength=cfg["wavelength"],
        source_diameter=cfg["source_diameter"],
    )


def _grid(cfg: dict) -> Grid1D:
    return Grid1D(n=cfg["grid_n"], dx=cfg["grid_dx"])


def _apertures(cfg: dict) -> list[float]:
    return [
        cfg["source_diameter"],
        cfg["defocus_source_diameter"],
        cfg["pinhole_diameter"],
        cfg["slit_separation"] + cfg["slit_width"],
    ]


def _sampling_report(cfg: dict):
    geometry = _geometry(cfg)
    return validate_sampling(
        _grid(cfg), cfg["wavelength"], geometry.total_path, apertures=_apertures(cfg)
    )


def export_trace(trace: ImageTrace, path: str | Path) -> None:
    """CSV trace: header + one row per scan point, 17 significant digits, LF."""
    lines = ["x2_m,coincidence,singles1,singles2"]
    for i in range(len(trace.positions)):
        lines.append(
            f"{trace.positions[i]:.17g},{trace.coincidence[i]:.17g},"
            f"{trace.singles1[i]:.17g},{trace.singles2[i]:.17g}"
        )
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write trace {path}: {exc}") from exc


def import_trace(path: str | Path) -> ImageTrace:
    """Read a CSV written by export_trace (exact round trip)."""
    rows = Path(path).read_text().splitlines()
    if rows[0] != "x2_m,coincidence,singles1,singles2":
        raise ValueError(f"{path}: unexpected CSV header {rows[0]!r}")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]], dtype=float)
    if data.size == 0:
        data = data.reshape(0, 4)
    return ImageTrace(
        positions=data[:, 0],
        coincidence=data[:, 1],
        singles1=data[:, 2],
        singles2=data[:, 3],
        geometry=SetupGeometry.default(),
        object_name="imported",
        mode="raw",
        engine="analytic",
        n_realizations=0,
    )


def export_image(data, path: str | Path) -> tuple[float, float]:
    """Binary 16-bit PGM (P5), min -> 0 and max -> 65535; returns the scaling
    constants.  A constant field writes an all-zero image with a warning."""
    if hasattr(data, "g2_raw"):
        arr = data.g2 if data.g2 is not None else data.g2_raw
    else:
        arr = np.asarray(data, dtype=float)
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        warnings.warn(f"constant field: writing all-zero image to {path}")
        pixels = np.zeros(arr.shape, dtype=">u2")
    else:
        pixels = np.round((arr - lo) / (hi - lo) * 65535.0).astype(">u2")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(pixels.tobytes())
    except OSError as exc:
        raise OSError(f"failed to write image {path}: {exc}") from exc
    return lo, hi


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_manifest(path: Path, entries: dict) -> None:
    lines = [f"{k} = {_fmt(entries[k])}" for k in sorted(entries)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def _scenario_fig3(cfg, geometry, grid, econf, engine, workers, outdir):
    files, summary = [], {}
    peaks = {}
    for shift_mm in FIG3_SHIFTS_MM:
        obj = make_pinhole(grid, shift_mm * 1e-3, cfg["pinhole_diameter"])
        trace = ghost_image_scan(
            geometry,
            obj,
            econf,
            mode="raw",
            engine=engine,
            scan_halfwidth=cfg["scan_halfwidth"],
            workers=workers,
            object_name=f"pinhole@{shift_mm:+d}mm",
        )
        name = f"fig3_shift_{shift_mm:+d}mm.csv"
        export_trace(trace, outdir / name)
        files.append(name)
        peaks[shift_mm] = peak_position(trace)
        summary[f"summary.peak_mm.shift_{shift_mm:+d}mm"] = peaks[shift_mm] * 1e3
    if peaks[2] != peaks[-2]:
        summary["summary.magnification_measured"] = (peaks[-2] - peaks[2]) / 4e-3
    summary["summary.magnification_scale"] = magnification_scale(geometry)
    return files, summary


def _scenario_fig4(cfg, geometry, grid, econf, engine, workers, outdir):
    obj = make_double_slit(grid, cfg["slit_separation"], cfg["slit_width"])
    trace = ghost_image_scan(
        geometry,
        obj,
        econf,
        mode="raw",
        engine=engine,
        scan_halfwidth=cfg["scan_halfwidth"],
        workers=workers,
        object_name="double_slit",
    )
    export_trace(trace, outdir / "fig4_doubleslit.csv")
    lo, hi = export_image(trace.coincidence[None, :], outdir / "fig4_doubleslit.pgm")
    pos, coin = trace.positions, trace.coincidence
    pk_neg = pos[np.argmax(np.where(pos < 0, coin, -np.inf))]
    pk_pos = pos[np.argmax(np.where(pos > 0, coin, -np.inf))]
    vis = visibility(trace, default_image_window(geometry, obj))
    print(f"fig4-doubleslit: peak separation {(pk_pos - pk_neg) * 1e3:.3f} mm, "
          f"visibility {vis:.4f}")
    summary = {
        "summary.peak_separation_mm": (pk_pos - pk_neg) * 1e3,
        "summary.visibility": vis,
        "summary.visibility_ceiling_n2": 0.2,
        "summary.paper_measured_visibility": 0.12,  # reference metadata, not a target
        "summary.pgm_scale_min": lo,
        "summary.pgm_scale_max": hi,
    }
    return ["fig4_doubleslit.csv", "fig4_doubleslit.pgm"], summary


def _scenario_sigma(cfg, geometry, grid, econf, engine, workers, outdir):
    obj = make_pinhole(grid, 1e-3, cfg["pinhole_diameter"])
    trace = pseudo_object_scan(
        geometry,
        obj,
        econf,
        mode="raw",
        engine=engine,
        scan_halfwidth=cfg["scan_halfwidth"],
        workers=workers,
        object_name="pinhole@+1mm",
    )
    export_trace(trace, outdir / "sigma_plane.csv")
    vis = visibility(trace, default_image_window(geometry, obj, upright=True))
    summary = {
        "summary.peak_mm": peak_position(trace) * 1e3,
        "summary.visibility": vis,
    }
    return ["sigma_plane.csv"], summary


def _scenario_defocus(cfg, geometry, grid, econf, engine, workers, outdir):
    # wider effective source: the 200 um bench source has a multi-meter
    # two-photon depth of focus, far beyond a +-50 mm sweep
    geo = replace(
        solve_image_plane(geometry), source_diameter=cfg["defocus_source_diameter"]
    )
    econf = replace(econf, geometry=geo)
    obj = make_pinhole(grid, 0.0, cfg["pinhole_diameter"])
    deltas = [d * 1e-3 for d in DEFOCUS_DELTAS_MM]
    points = defocus_sweep(geo, obj, econf, deltas, engine=engine, workers=workers)
    name = "defocus.csv"
    lines = ["delta_m,visibility,peak_width_m"]
    for p in points:
        lines.append(f"{p.delta:.17g},{p.visibility:.17g},{p.peak_width:.17g}")
    with open(outdir / name, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    best = max(points, key=lambda p: p.visibility)
    summary = {
        "summary.argmax_delta_mm": best.delta * 1e3,
        "summary.visibility_max": best.visibility,
        "summary.visibility_min": min(p.visibility for p in points),
        "summary.d_B_prime_solved_m": geo.d_b_prime,
        "summary.defocus_source_diameter_m": geo.source_diameter,
    }
    return [name], summary


def _scenario_siegert(cfg, geometry, grid, econf, engine, workers, outdir):
    identity = ArmPath(())
    x_idx = aperture_indices(econf)
    if engine == "analytic":
        modes = mode_decomposition(econf, identity, identity)
        cmap = g2_analytic(modes, bucket=False, diagonal=True, x2_indices=x_idx)
        n_real = 0
    else:
        cmap = accumulate_mc(
            econf, identity, identity, bucket=False, diagonal=True,
            x2_indices=x_idx, workers=workers,
        )
        n_real = econf.n_realizations
    trace = _trace_from_map(siegert_normalize(cmap), geometry, "source", "raw", n_real)
    export_trace(trace, outdir / "siegert_baseline.csv")
    g2 = trace.coincidence
    summary = {
        "summary.mean_g2": float(g2.mean()),
        "summary.max_abs_dev_from_2": float(np.abs(g2 - 2).max()),
    }
    return ["siegert_baseline.csv"], summary


SCENARIOS = {
    "fig3-point": _scenario_fig3,
    "fig4-doubleslit": _scenario_fig4,
    "sigma-plane": _scenario_sigma,
    "defocus": _scenario_defocus,
    "siegert-baseline": _scenario_siegert,
}


class SamplingFailure(RuntimeError):
    pass


def run_scenario(
    name: str,
    config_path: str | Path,
    out_dir: str | Path,
    engine: str | None = None,
    seed: int | None = None,
    realizations: int | None = None,
    workers: int = 1,
) -> dict:
    """Run a named scenario; writes traces plus a deterministic manifest and
    returns the manifest entries."""
    if name not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {name!r}; valid scenarios: {', '.join(sorted(SCENARIOS))}"
        )
    cfg = parse_config(config_path)
    if engine is not None:
        cfg["engine"] = engine
    if seed is not None:
        cfg["seed"] = seed
    if realizations is not None:
        cfg["n_realizations"] = realizations

    report = _sampling_report(cfg)
    if not report.ok:
        raise SamplingFailure("; ".join(report.messages))

    try:
        geometry = _geometry(cfg)
        grid = _grid(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    econf = EnsembleConfig(
        n_realizations=cfg["n_realizations"], seed=cfg["seed"], geometry=geometry, grid=grid
    )

    outdir = Path(out_dir)
    t0 = time.time()
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        files, summary = SCENARIOS[name](
            cfg, geometry, grid, econf, cfg["engine"], workers, outdir
        )
    except OSError as exc:
        raise OSError(f"I/O failure in scenario output to {outdir}: {exc}") from exc

    entries: dict = {"scenario": name, "version": __version__}
    for key, value in cfg.items():
        entries[f"config.{key}"] = value
    entries["geometry.s_o_m"] = geometry.s_o
    entries["geometry.eq3_residual_per_m"] = eq3_residual(geometry)
    entries["geometry.d_B_prime_solved_m"] = solve_thin_lens(
        s_o=geometry.s_o, f=geometry.f
    ).s_i
    entries.update(summary)
    for fname in files:
        fpath = outdir / fname
        entries[f"output.{fname}.sha256"] = _digest(fpath)
        entries[f"output.{fname}.bytes"] = fpath.stat().st_size
    write_manifest(outdir / "manifest.txt", entries)
    print(f"{name}: wrote {len(files)} file(s) to {outdir} "
          f"(wall time {time.time() - t0:.1f} s)")
    return entries


def _cmd_run(args) -> int:
    try:
        run_scenario(
            args.scenario,
            args.config,
            args.out,
            engine=args.engine,
            seed=args.seed,
            realizations=args.realizations,
            workers=args.workers,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingFailure as exc:
        print(f"sampling validation failed: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        cfg = parse_config(args.config)
        _geometry(cfg)
        report = _sampling_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"chirp bound: dx_max = {report.chirp_dx_max:.6g} m "
          f"(margin {report.chirp_margin:.3g}) -> {'ok' if report.chirp_ok else 'FAIL'}")
    print(f"guard band: window/(4*aperture) = {report.guard_margin:.3g} "
          f"-> {'ok' if report.guard_ok else 'FAIL'}")
    for msg in report.messages:
        print(msg, file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_SAMPLING


def _cmd_list(_args) -> int:
    for name in sorted(SCENARIOS):
        print(name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ghost",
        description="Two-arm pseudo-thermal ghost-imaging simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--engine", choices=["mc", "analytic"], default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--realizations", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="parse a config and check sampling")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_list = sub.add_parser("list-scenarios", help="list scenario names")
    p_list.set_defaults(func=_cmd_list)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
