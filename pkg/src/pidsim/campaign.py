"""Shock-amplitude sweeps, run records and file exporters."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .analysis import AnalysisError, BandwidthReport, Subject, WaveletSpectrum, tb_product
from .dynamics import SimulationError, simulate
from .energy import normalized_measures
from .model import ConfigError, SystemConfig, build_preset, config_from_dict, config_to_dict

logger = logging.getLogger(__name__)

CSV_FORMAT = "%.8e"  # 9 significant digits
BASE_COLUMNS = ("t", "z", "zdot", "F", "F_d", "E_PS", "E_PID", "W_PS", "W_vis", "W_f",
                "eta_PS", "eta_PID", "eta_sys")
GRANULE_COLUMNS = ("x", "y", "vx", "vy", "theta", "omega")


@dataclass(frozen=True)
class SweepSpec:
    preset: str
    amplitudes: tuple[float, ...]
    overrides: Mapping[str, Any] = field(default_factory=dict)
    subjects: tuple[Subject, ...] = (Subject.PS, Subject.INTEGRATED)
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        if not amps:
            raise ConfigError("sweep needs at least one shock amplitude")
        if any(a <= 0 for a in amps):
            raise ConfigError("shock amplitudes must be positive")
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ConfigError("shock amplitudes must be strictly increasing")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "subjects", tuple(Subject(s) for s in self.subjects))
        object.__setattr__(self, "overrides", dict(self.overrides))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SweepSpec":
        known = {"preset", "amplitudes", "overrides", "subjects", "out_dir", "workers"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown sweep fields: {sorted(unknown)}")
        try:
            return cls(
                preset=data["preset"],
                amplitudes=tuple(data["amplitudes"]),
                overrides=data.get("overrides", {}),
                subjects=tuple(data.get("subjects", ("ps", "integrated"))),
                out_dir=data.get("out_dir"),
                workers=int(data.get("workers", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed sweep spec: {exc}") from exc


def load_sweep_spec(path) -> SweepSpec:
    with open(path, encoding="utf-8") as fh:
        return SweepSpec.from_dict(json.load(fh))


@dataclass
class RunRecord:
    config: SystemConfig
    status: str  # "ok" or "failed"
    e_in: float | None = None
    r_pid: float | None = None
    r_ps: float | None = None
    reports: dict[str, BandwidthReport | None] = field(default_factory=dict)
    analysis_errors: dict[str, str] = field(default_factory=dict)
    collision_count: int = 0
    error: str | None = None
    wall_clock: float | None = None
    engine_version: str = __version__

    @property
    def digest(self) -> str:
        return self.config.digest()

    @property
    def f0(self) -> float:
        return self.config.shock.amplitude

    def to_dict(self) -> dict[str, Any]:
        """Report form; wall-clock time is left out so reports are reproducible."""
        subjects = {}
        for name, rep in self.reports.items():
            subjects[name] = rep.to_dict() if rep is not None else {"error": self.analysis_errors.get(name)}
        return {
            "f0": self.f0,
            "status": self.status,
            "error": self.error,
            "e_in": self.e_in,
            "r_pid": self.r_pid,
            "r_ps": self.r_ps,
            "collision_count": self.collision_count,
            "subjects": subjects,
            "config_digest": self.digest,
            "engine_version": self.engine_version,
            "config": config_to_dict(self.config),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunRecord":
        reports: dict[str, BandwidthReport | None] = {}
        errors: dict[str, str] = {}
        for name, rep in data.get("subjects", {}).items():
            if "error" in rep:
                reports[name] = None
                errors[name] = rep["error"]
            else:
                reports[name] = BandwidthReport(
                    subject=Subject(rep["subject"]),
                    rms_bandwidth=rep["rms_bandwidth"], decay_time=rep["decay_time"],
                    tb_product=rep["tb_product"], reference_time=rep["reference_time"],
                    end_energy_fraction=rep["end_energy_fraction"],
                    grid_resolution=rep["grid_resolution"],
                )
        return cls(
            config=config_from_dict(data["config"]), status=data["status"],
            e_in=data["e_in"], r_pid=data["r_pid"], r_ps=data["r_ps"],
            reports=reports, analysis_errors=errors,
            collision_count=data["collision_count"], error=data["error"],
            engine_version=data["engine_version"],
        )


def analyze_run(cfg: SystemConfig, traj, ledger, subjects: Iterable[Subject | str],
                wall_clock: float | None = None) -> RunRecord:
    rec = RunRecord(
        config=cfg, status="ok", e_in=ledger.e_in,
        collision_count=traj.collision_count, wall_clock=wall_clock,
    )
    if ledger.e_in > 0:
        rec.r_pid = ledger.r_pid_final
        rec.r_ps = ledger.r_ps_final
    for subject in subjects:
        subject = Subject(subject)
        try:
            rec.reports[subject.value] = tb_product(cfg, traj, ledger, subject)
        except AnalysisError as exc:
            rec.reports[subject.value] = None
            rec.analysis_errors[subject.value] = str(exc)
    return rec


def run_config(cfg: SystemConfig, subjects: Iterable[Subject | str] = tuple(Subject)) -> RunRecord:
    """Simulate and analyze one config; failures end up in the record, not as exceptions."""
    start = time.perf_counter()
    try:
        traj, ledger = simulate(cfg)
    except SimulationError as exc:
        logger.warning("run %s aborted: %s", cfg.digest()[:12], exc)
        return RunRecord(config=cfg, status="failed", error=str(exc),
                         wall_clock=time.perf_counter() - start)
    return analyze_run(cfg, traj, ledger, subjects, time.perf_counter() - start)


def _sweep_job(args: tuple[SystemConfig, tuple[str, ...]]) -> RunRecord:
    cfg, subjects = args
    return run_config(cfg, subjects)


def sweep_configs(spec: SweepSpec) -> list[SystemConfig]:
    return [
        build_preset(spec.preset, {**spec.overrides, "shock.amplitude": amp})
        for amp in spec.amplitudes
    ]


def run_sweep(spec: SweepSpec) -> list[RunRecord]:
    """One simulate+analyze pipeline per amplitude, results in amplitude order.

    If ``spec.out_dir`` is set, ``report.json`` is written there.
    """
    configs = sweep_configs(spec)
    subjects = tuple(s.value for s in spec.subjects)
    jobs = [(cfg, subjects) for cfg in configs]
    if spec.workers == 1 or len(jobs) == 1:
        records = [_sweep_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_sweep_job, jobs))
    if spec.out_dir:
        Path(spec.out_dir).mkdir(parents=True, exist_ok=True)
        export_report(records, Path(spec.out_dir) / "report.json")
    return records


# ---------------------------------------------------------------------------
# files

def _atomic_write(path, writer, mode: str = "w") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kwargs = {"encoding": "utf-8", "newline": ""} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kwargs) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def timeseries_columns(n: int) -> list[str]:
    cols = list(BASE_COLUMNS)
    for i in range(1, n + 1):
        cols.extend(f"{c}_{i}" for c in GRANULE_COLUMNS)
    return cols


def timeseries_table(traj, ledger) -> np.ndarray:
    n = traj.granules.shape[1]
    if ledger.e_in > 0:
        m = normalized_measures(ledger)
        etas = [m.eta_ps, m.eta_pid, m.eta_sys]
    else:
        etas = [np.full(len(ledger), np.nan)] * 3
    cols = [traj.times, traj.z, traj.zdot, traj.force, traj.f_d,
            ledger.e_ps, ledger.e_pid, ledger.w_ps, ledger.w_vis, ledger.w_f, *etas]
    table = np.column_stack(cols)
    if n:
        table = np.hstack([table, traj.granules.reshape(len(traj.times), n * 6)])
    return table


def export_timeseries(traj, ledger, path) -> Path:
    """CSV with one row per output sample; SI units, energies in J, eta in percent."""
    n = traj.granules.shape[1]
    header = ",".join(timeseries_columns(n))
    table = timeseries_table(traj, ledger)

    def write(fh):
        np.savetxt(fh, table, fmt=CSV_FORMAT, delimiter=",", header=header, comments="")

    return _atomic_write(path, write)


def load_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def export_report(records: Sequence[RunRecord], path) -> Path:
    if not records:
        raise ValueError("no records to export")
    text = _dump_json([r.to_dict() for r in records])
    return _atomic_write(path, lambda fh: fh.write(text))


def load_report(path) -> list[RunRecord]:
    with open(path, encoding="utf-8") as fh:
        return [RunRecord.from_dict(d) for d in json.load(fh)]


def export_wavelet(ws: WaveletSpectrum, path) -> tuple[Path, Path]:
    """Magnitude matrix as CSV (rows: frequencies descending, columns: time samples)
    plus a JSON sidecar describing both axes."""
    path = Path(path)
    sidecar = path.with_suffix(".json")

    def write(fh):
        np.savetxt(fh, ws.magnitude, fmt=CSV_FORMAT, delimiter=",")

    _atomic_write(path, write)
    axes = {
        "rows": "angular frequency [rad/s], descending",
        "columns": "time [s]",
        "omega": ws.omega.tolist(),
        "t_start": float(ws.times[0]),
        "t_step": float(ws.times[1] - ws.times[0]) if len(ws.times) > 1 else 0.0,
        "t_count": int(len(ws.times)),
        "normalization": "global maximum = 1",
    }
    text = _dump_json(axes)
    _atomic_write(sidecar, lambda fh: fh.write(text))
    return path, sidecar
