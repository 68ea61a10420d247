"""``pid`` command line interface.

Exit codes: 0 success, 2 invalid input, 3 simulation aborted.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import click
import numpy as np
from scipy.signal import resample_poly

from . import __version__
from .analysis import (AnalysisError, Subject, UniformSeries, bandwidth_report, linear_baseline,
                       wavelet_spectrum)
from .campaign import (analyze_run, export_report, export_timeseries, export_wavelet,
                       load_sweep_spec, load_timeseries, run_sweep, sweep_configs)
from .dynamics import SimulationError, simulate
from .model import (PRESET_IDS, ConfigError, apply_overrides, build_preset,
                    config_to_dict, load_config, validate_config)

EXIT_INVALID = 2
EXIT_ABORTED = 3

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("PID_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="pid")
def cli():
    """Particle impact damper DEM simulations and nonlinear bandwidth analysis."""
    _setup_logging()


@cli.command()
@click.option("--json", "as_json", is_flag=True, help="Emit resolved configs as JSON.")
def presets(as_json):
    """List the preset catalog with resolved parameters."""
    rows = []
    for pid in PRESET_IDS:
        cfg = build_preset(pid)
        if as_json:
            rows.append({"id": pid, **config_to_dict(cfg)})
            continue
        lay, box = cfg.layout, cfg.container
        if lay.count:
            click.echo(
                f"{pid:18s} n={lay.count} R={lay.radius * 1e3:.1f}mm m={lay.mass:g}kg "
                f"d0={box.neighbor_clearance * 1e3:.1f}mm dv={box.ceiling_gap * 1e3:.1f}mm "
                f"d1={box.length * 1e3:.1f}mm d2={box.height * 1e3:.1f}mm "
                f"m_ps={cfg.ps_mass:g}kg {lay.mode.value}")
        else:
            click.echo(f"{pid:18s} n=0 M={cfg.ps.total_mass:g}kg K={cfg.ps.stiffness:g}N/m "
                       f"C={cfg.ps.damping:g}Ns/m")
    if as_json:
        click.echo(json.dumps(rows, indent=2))


def _simulate(config_path, preset_id, f0, out_dir, wavelet):
    try:
        if config_path:
            cfg = load_config(config_path)
        elif preset_id:
            cfg = build_preset(preset_id)
        else:
            raise ConfigError("give --config or --preset")
        if f0 is not None:
            cfg = apply_overrides(cfg, {"shock.amplitude": f0})
        errors = [v for v in validate_config(cfg) if v.level == "error"]
        if errors:
            raise ConfigError("; ".join(v.message for v in errors))
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        _fail(str(exc), EXIT_INVALID)
    for v in validate_config(cfg):
        logging.getLogger("pidsim").warning("%s: %s", v.code, v.message)

    try:
        traj, ledger = simulate(cfg)
    except SimulationError as exc:
        _fail(str(exc), EXIT_ABORTED)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n", encoding="utf-8")
    export_timeseries(traj, ledger, out / "timeseries.csv")
    record = analyze_run(cfg, traj, ledger, tuple(Subject))
    export_report([record], out / "report.json")
    if wavelet:
        omega_n = math.sqrt(cfg.ps.stiffness / cfg.ps_mass)
        omega_max = min(16 * omega_n, math.pi / traj.stride)
        # keep Nyquist at twice the top analysed frequency; the raw stride is far finer
        q = max(1, int(math.pi / (2 * omega_max * traj.stride)))
        zdot = resample_poly(traj.zdot, 1, q) if q > 1 else traj.zdot
        series = UniformSeries(float(traj.times[0]), traj.stride * q, zdot)
        ws = wavelet_spectrum(series, omega_n / 4, omega_max)
        export_wavelet(ws, out / "wavelet_ps.csv")
    summary = {"status": traj.status, "t_end": float(traj.times[-1]),
               "collisions": traj.collision_count, **{k: v for k, v in record.to_dict().items()
                                                       if k in ("e_in", "r_pid", "r_ps")}}
    click.echo(json.dumps(summary, indent=2))


@cli.command("simulate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Config JSON (full config or {\"preset\": ..., \"overrides\": ...}).")
@click.option("--preset", "preset_id", help="Preset id (used when --config is not given).")
@click.option("--f0", type=float, help="Override the shock amplitude [N].")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--wavelet/--no-wavelet", default=False, help="Also export the PS velocity wavelet spectrum.")
def simulate_command(config_path, preset_id, f0, out_dir, wavelet):
    """Run one simulation and write config.json, timeseries.csv and report.json."""
    _simulate(config_path, preset_id, f0, out_dir, wavelet)


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None, help="Worker processes (overrides the spec).")
def sweep(spec_path, out_dir, workers):
    """Run a shock-amplitude sweep and write report.json."""
    try:
        spec = load_sweep_spec(spec_path)
        changes = {"out_dir": out_dir}
        if workers is not None:
            changes["workers"] = workers
        spec = dataclasses.replace(spec, **changes)
        sweep_configs(spec)  # surface invalid overrides before any run starts
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        _fail(str(exc), EXIT_INVALID)
    records = run_sweep(spec)
    for rec in records:
        line = f"F0={rec.f0:g} N: {rec.status}"
        if rec.status == "ok":
            parts = [f"r_PID={rec.r_pid:.2f}%"]
            for name, rep in rec.reports.items():
                if rep is not None:
                    parts.append(f"{name}: bw={rep.rms_bandwidth:.3f} tau={rep.decay_time:.3f} "
                                 f"tb={rep.tb_product:.3f}")
                else:
                    parts.append(f"{name}: n/a")
            line += " " + "; ".join(parts)
        else:
            line += f" ({rec.error})"
        click.echo(line)
    if any(r.status != "ok" for r in records):
        sys.exit(EXIT_ABORTED)


def _estimate_period(t: np.ndarray, x: np.ndarray) -> float:
    """Mean spacing of same-direction zero crossings over the first half of the record."""
    half = len(x) // 2
    s = np.signbit(x[:half])
    up = np.nonzero(s[:-1] & ~s[1:])[0]
    if len(up) < 2:
        raise AnalysisError("cannot estimate an oscillation period from the velocity record")
    return float(np.mean(np.diff(t[up])))


@cli.command()
@click.option("--timeseries", "ts_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--subject", type=click.Choice(["ps", "integrated"]), default="ps")
@click.option("--period", type=float, default=None,
              help="PS natural period [s] for the energy smoothing window (estimated if omitted).")
def analyze(ts_path, subject, period):
    """Compute bandwidth, decay time and T-B product from an exported timeseries."""
    try:
        cols = load_timeseries(ts_path)
        t = cols["t"]
        if period is None:
            period = _estimate_period(t, cols["zdot"])
        rep = bandwidth_report(Subject(subject), t, cols["zdot"], cols["E_PS"],
                               cols["E_PS"] + cols["E_PID"], period)
    except (KeyError, ValueError, OSError) as exc:
        _fail(str(exc), EXIT_INVALID)
    click.echo(json.dumps(rep.to_dict(), indent=2))


@cli.command()
@click.option("--preset", "preset_id", default="ps_only", help="Use this preset's PS parameters.")
def baseline(preset_id):
    """Half-power bandwidth, decay time and T-B product of the linear PS."""
    try:
        cfg = build_preset(preset_id)
        bw, tau = linear_baseline(cfg.ps, cfg.ps_mass)
    except (ConfigError, AnalysisError) as exc:
        _fail(str(exc), EXIT_INVALID)
    click.echo(json.dumps({"mass": cfg.ps_mass, "bandwidth": bw, "decay_time": tau,
                           "tb_product": bw * tau}, indent=2))


def main():
    cli()


if __name__ == "__main__":
    main()
