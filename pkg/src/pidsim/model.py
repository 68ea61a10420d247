"""Experiment parameters: materials, container, granule topologies, shock, integrator.

All SI units. Configs are frozen dataclasses; use :func:`build_preset` to get the
catalogued PS-PID setups and :func:`validate_config` to check a hand-made one.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from typing import Any, Mapping

import numpy as np


class ConfigError(ValueError):
    """Raised when a config cannot be built or fails validation."""

    def __init__(self, message: str, violations: list["Violation"] | None = None):
        super().__init__(message)
        self.violations = violations or []


class Mode(str, enum.Enum):
    ONE_DIMENSIONAL = "one_dimensional"
    TWO_DIMENSIONAL = "two_dimensional"


@dataclass(frozen=True)
class MaterialParams:
    youngs_modulus: float = 200e9
    poissons_ratio: float = 0.3
    density: float = 7850.0
    damping_alpha: float = 6.313e-3
    friction_mu: float = 0.099
    friction_smoothing: float = 250.0


@dataclass(frozen=True)
class PrimaryStructureParams:
    total_mass: float = 20.0
    stiffness: float = 8e4
    damping: float = 25.30


@dataclass(frozen=True)
class ContainerGeometry:
    length: float
    height: float
    neighbor_clearance: float = 0.0
    ceiling_gap: float = 0.0


@dataclass(frozen=True)
class GranuleLayout:
    """Identical spherical granules.

    ``mass`` is the declared per-granule mass; it is what the dynamics use.
    ``initial_centers`` are in container coordinates (left wall x=0, floor y=0).
    """

    radius: float
    mass: float
    initial_centers: tuple[tuple[float, float], ...] = ()
    mode: Mode = Mode.ONE_DIMENSIONAL

    @property
    def count(self) -> int:
        return len(self.initial_centers)


@dataclass(frozen=True)
class ShockPulse:
    amplitude: float = 5e3
    duration: float = 1e-3


@dataclass(frozen=True)
class IntegratorSettings:
    dt_free: float = 2e-5
    dt_contact: float = 3e-8
    proximity_gap: float = 50e-6
    ramp_steps: int = 8
    t_max: float = 60.0
    # compared against eta_sys, which is a percentage of the input energy
    energy_floor: float = 1e-4
    conservation_tol: float = 1e-3
    output_stride: float = 2e-5
    clamp_attractive: bool = False


@dataclass(frozen=True)
class SystemConfig:
    material: MaterialParams
    ps: PrimaryStructureParams
    container: ContainerGeometry
    layout: GranuleLayout
    shock: ShockPulse = field(default_factory=ShockPulse)
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)

    @property
    def granule_count(self) -> int:
        return self.layout.count

    @property
    def granule_mass_total(self) -> float:
        return self.layout.mass * self.layout.count

    @property
    def ps_mass(self) -> float:
        """PS mass with the granules removed, so that the total stays at M."""
        return self.ps.total_mass - self.granule_mass_total

    @property
    def moment_of_inertia(self) -> float:
        return 0.4 * self.layout.mass * self.layout.radius**2

    def to_dict(self) -> dict[str, Any]:
        return config_to_dict(self)

    def digest(self) -> str:
        return config_digest(self)


@dataclass(frozen=True)
class Violation:
    level: str  # "error" | "warning"
    code: str
    message: str


def sphere_inertials(density: float, radius: float) -> tuple[float, float]:
    """Mass and moment of inertia of a solid sphere."""
    if density <= 0 or radius < 0:
        raise ValueError(f"need density > 0 and radius >= 0, got {density}, {radius}")
    mass = 4.0 / 3.0 * math.pi * radius**3 * density
    return mass, 0.4 * mass * radius**2


def shock_force(t, pulse: ShockPulse):
    """Half-sine pulse ``F0 sin(pi t / t0)`` on [0, t0], identically zero afterwards.

    Accepts scalars or arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    clipped = np.minimum(t_arr, pulse.duration)
    force = np.where(
        t_arr < pulse.duration,
        pulse.amplitude * np.sin(math.pi / pulse.duration * clipped),
        0.0,
    )
    if np.ndim(force) == 0:
        return float(force)
    return force


def validate_config(cfg: SystemConfig) -> list[Violation]:
    out: list[Violation] = []

    def err(code: str, msg: str) -> None:
        out.append(Violation("error", code, msg))

    mat = cfg.material
    if not mat.youngs_modulus > 0:
        err("material.youngs_modulus", "Young's modulus must be positive")
    if not 0 <= mat.poissons_ratio < 0.5:
        err("material.poissons_ratio", "Poisson's ratio must lie in [0, 0.5)")
    if not mat.density > 0:
        err("material.density", "density must be positive")
    if not mat.damping_alpha >= 0:
        err("material.damping_alpha", "damping constant must be >= 0")
    if not mat.friction_mu >= 0:
        err("material.friction_mu", "friction coefficient must be >= 0")
    if not mat.friction_smoothing > 0:
        err("material.friction_smoothing", "friction smoothing must be positive")

    ps = cfg.ps
    for name in ("total_mass", "stiffness", "damping"):
        if not getattr(ps, name) > 0:
            err(f"ps.{name}", f"{name} must be positive")
    if not cfg.ps_mass > 0:
        err("ps.mass_budget", f"granules ({cfg.granule_mass_total} kg) leave no mass for the PS")

    box = cfg.container
    lay = cfg.layout
    if not box.length > 0:
        err("container.length", "container length must be positive")
    if lay.mode is Mode.TWO_DIMENSIONAL and not box.height > 0:
        err("container.height", "container height must be positive")
    if box.neighbor_clearance < 0 or box.ceiling_gap < 0:
        err("container.clearance", "clearances must be >= 0")

    shock = cfg.shock
    if not shock.amplitude >= 0:
        err("shock.amplitude", "shock amplitude must be >= 0")
    if not shock.duration > 0:
        err("shock.duration", "shock duration must be positive")

    integ = cfg.integrator
    if not 0 < integ.dt_contact <= integ.dt_free:
        err("integrator.dt", "need 0 < dt_contact <= dt_free")
    if not integ.proximity_gap > 0:
        err("integrator.proximity_gap", "proximity gap must be positive")
    if integ.ramp_steps < 1:
        err("integrator.ramp_steps", "ramp_steps must be >= 1")
    if not integ.t_max > shock.duration:
        err("integrator.t_max", "t_max must exceed the shock duration")
    if not integ.output_stride > 0:
        err("integrator.output_stride", "output stride must be positive")
    if not integ.energy_floor >= 0 or not integ.conservation_tol > 0:
        err("integrator.tolerances", "energy_floor must be >= 0 and conservation_tol > 0")

    if lay.count == 0:
        return out

    R = lay.radius
    if not R > 0:
        err("layout.radius", "granule radius must be positive")
        return out
    if not lay.mass > 0:
        err("layout.mass", "granule mass must be positive")
    elif mat.density > 0:
        m_sphere, _ = sphere_inertials(mat.density, R)
        mismatch = abs(m_sphere - lay.mass) / lay.mass
        if mismatch > 0.01:
            out.append(Violation(
                "warning", "layout.density_mismatch",
                f"sphere mass {m_sphere:.4g} kg differs from declared {lay.mass:.4g} kg "
                f"by {100 * mismatch:.1f}%",
            ))

    if 2 * R > box.length:
        err("layout.does_not_fit", f"granule diameter {2 * R} exceeds container length {box.length}")
    if lay.mode is Mode.TWO_DIMENSIONAL and 2 * R > box.height:
        err("layout.does_not_fit", f"granule diameter {2 * R} exceeds container height {box.height}")

    tol = 1e-12
    centers = np.asarray(lay.initial_centers, dtype=float).reshape(-1, 2)
    for i, (x, y) in enumerate(centers):
        if x - R < -tol or x + R > box.length + tol:
            err("layout.outside", f"granule {i} penetrates a side wall")
        if lay.mode is Mode.TWO_DIMENSIONAL and (y - R < -tol or y + R > box.height + tol):
            err("layout.outside", f"granule {i} penetrates the floor or ceiling")
    if lay.mode is Mode.ONE_DIMENSIONAL and len(centers) and np.ptp(centers[:, 1]) != 0:
        err("layout.one_dimensional", "1D layouts need a common y for all centers")
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            if np.hypot(*(centers[j] - centers[i])) < 2 * R - 1e-9:
                err("layout.overlap", f"granules {i} and {j} overlap initially")
    return out


# ---------------------------------------------------------------------------
# presets

_TABLE1 = PrimaryStructureParams(total_mass=20.0, stiffness=8e4, damping=25.30)
_STEEL = MaterialParams()

PRESET_IDS = (
    "ps_only",
    "single_g_config1", "single_g_config2", "single_g_config3",
    "two_g_config1", "two_g_config2", "two_g_config3",
    "two_g_config4", "two_g_config5", "two_g_config6",
    "three_g_optimal", "five_g_optimal", "eight_g_optimal",
)

# x-gaps (left wall | between granules | right wall) in mm; they sum to d0 = 6 mm.
# Gap placement is a reconstruction; only the total clearance is fixed.
_TWO_G_GAPS_MM = {
    1: (0.0, 6.0, 0.0),
    2: (0.0, 0.0, 6.0),
    3: (6.0, 0.0, 0.0),
    4: (3.0, 0.0, 3.0),
    5: (0.0, 3.0, 3.0),
    6: (3.0, 3.0, 0.0),
}

# optimal layouts: R, m, d0, dv, d1 (mm, kg); rows from the floor up
_MULTI = {
    "three_g_optimal": dict(R=23.0, m=0.4, d0=7.0, dv=11.4, d1=99.0, rows=(2, 1)),
    "five_g_optimal": dict(R=19.4, m=0.24, d0=7.0, dv=29.9, d1=130.4, rows=(3, 2)),
    "eight_g_optimal": dict(R=16.6, m=0.15, d0=5.0, dv=22.6, d1=109.5, rows=(3, 2, 3)),
}


def _one_d(R_mm: float, m: float, d0_mm: float, d1_mm: float, xs_mm: list[float]) -> tuple[ContainerGeometry, GranuleLayout]:
    R = R_mm * 1e-3
    box = ContainerGeometry(length=d1_mm * 1e-3, height=2 * R, neighbor_clearance=d0_mm * 1e-3)
    centers = tuple((x * 1e-3, R) for x in xs_mm)
    return box, GranuleLayout(radius=R, mass=m, initial_centers=centers, mode=Mode.ONE_DIMENSIONAL)


def _stacked(R_mm: float, m: float, d0_mm: float, dv_mm: float, d1_mm: float,
             rows: tuple[int, ...]) -> tuple[ContainerGeometry, GranuleLayout]:
    """Close-packed rows: the bottom row spans wall to wall, upper rows nest in the hollows
    of the row beneath and touch it. Height is set so the top row clears the ceiling by dv."""
    R, d1 = R_mm * 1e-3, d1_mm * 1e-3
    wide = max(rows)
    pitch = (d1 - 2 * R) / (wide - 1)  # bottom-row center spacing
    xs_wide = [R + k * pitch for k in range(wide)]
    xs_narrow = [0.5 * (a + b) for a, b in zip(xs_wide[:-1], xs_wide[1:])]
    rise = math.sqrt((2 * R) ** 2 - (0.5 * pitch) ** 2)
    centers = []
    y = R
    for r, count in enumerate(rows):
        xs = xs_wide if count == wide else xs_narrow
        centers.extend((x, y) for x in xs)
        if r < len(rows) - 1:
            y += rise
    height = y + R + dv_mm * 1e-3
    box = ContainerGeometry(length=d1, height=height, neighbor_clearance=d0_mm * 1e-3,
                            ceiling_gap=dv_mm * 1e-3)
    return box, GranuleLayout(radius=R, mass=m, initial_centers=tuple(centers),
                              mode=Mode.TWO_DIMENSIONAL)


def _base_preset(preset_id: str) -> SystemConfig:
    if preset_id == "ps_only":
        box = ContainerGeometry(length=0.1, height=0.1)
        layout = GranuleLayout(radius=0.0, mass=0.0)
    elif preset_id.startswith("single_g_config"):
        cfg_no = int(preset_id[-1])
        if cfg_no not in (1, 2, 3):
            raise ConfigError(f"unknown preset {preset_id!r}")
        R, d0, d1 = 33.2, 0.4, 67.2
        x = {1: d0 + R, 2: 2 * d0 + R, 3: R}[cfg_no]
        box, layout = _one_d(R, 1.2, d0, d1, [x])
    elif preset_id.startswith("two_g_config"):
        cfg_no = int(preset_id[-1])
        if cfg_no not in _TWO_G_GAPS_MM:
            raise ConfigError(f"unknown preset {preset_id!r}")
        R, d0, d1 = 26.3, 6.0, 111.2
        g_left, g_mid, _ = _TWO_G_GAPS_MM[cfg_no]
        x1 = g_left + R
        x2 = x1 + 2 * R + g_mid
        box, layout = _one_d(R, 0.6, d0, d1, [x1, x2])
    elif preset_id in _MULTI:
        p = _MULTI[preset_id]
        box, layout = _stacked(p["R"], p["m"], p["d0"], p["dv"], p["d1"], p["rows"])
    else:
        raise ConfigError(f"unknown preset {preset_id!r}; choose from {', '.join(PRESET_IDS)}")
    return SystemConfig(material=_STEEL, ps=_TABLE1, container=box, layout=layout)


def _coerce(current: Any, value: Any) -> Any:
    if isinstance(current, enum.Enum):
        return type(current)(value)
    if isinstance(current, tuple):
        return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
    if isinstance(current, bool):
        return bool(value)
    if isinstance(current, int) and not isinstance(value, bool):
        if float(value) != int(value):
            raise ConfigError(f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _set_path(obj: Any, path: list[str], value: Any) -> Any:
    names = {f.name for f in fields(obj)}
    head = path[0]
    if head not in names:
        raise ConfigError(f"unknown parameter {head!r} in {type(obj).__name__}")
    current = getattr(obj, head)
    if len(path) == 1:
        if is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{head!r} needs a mapping")
            for k, v in value.items():
                current = _set_path(current, [k], v)
            return replace(obj, **{head: current})
        return replace(obj, **{head: _coerce(current, value)})
    if not is_dataclass(current):
        raise ConfigError(f"{head!r} has no sub-parameters")
    return replace(obj, **{head: _set_path(current, path[1:], value)})


def apply_overrides(cfg: SystemConfig, overrides: Mapping[str, Any] | None) -> SystemConfig:
    """Apply ``{"shock.amplitude": 100.0}``-style or nested overrides."""
    for key, value in (overrides or {}).items():
        cfg = _set_path(cfg, key.split("."), value)
    return cfg


def build_preset(preset_id: str, overrides: Mapping[str, Any] | None = None) -> SystemConfig:
    cfg = apply_overrides(_base_preset(preset_id), overrides)
    errors = [v for v in validate_config(cfg) if v.level == "error"]
    if errors:
        raise ConfigError(
            f"preset {preset_id!r} with overrides is invalid: "
            + "; ".join(v.message for v in errors),
            errors,
        )
    return cfg


# ---------------------------------------------------------------------------
# serialization

def config_to_dict(cfg: SystemConfig) -> dict[str, Any]:
    def conv(v: Any) -> Any:
        if isinstance(v, enum.Enum):
            return v.value
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        return v

    return conv(asdict(cfg))


def config_from_dict(data: Mapping[str, Any]) -> SystemConfig:
    """Inverse of :func:`config_to_dict`. Missing sections fall back to defaults
    except ``container`` and ``layout``, which have none."""
    try:
        layout = dict(data["layout"])
        layout.pop("count", None)
        layout["initial_centers"] = tuple(tuple(map(float, c)) for c in layout.get("initial_centers", ()))
        layout["mode"] = Mode(layout.get("mode", Mode.ONE_DIMENSIONAL.value))
        cfg = SystemConfig(
            material=MaterialParams(**data.get("material", {})),
            ps=PrimaryStructureParams(**data.get("ps", {})),
            container=ContainerGeometry(**data["container"]),
            layout=GranuleLayout(**layout),
            shock=ShockPulse(**data.get("shock", {})),
            integrator=IntegratorSettings(**data.get("integrator", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    return cfg


def load_config(path) -> SystemConfig:
    """Read a config JSON file: either a full config or ``{"preset": id, "overrides": {...}}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "preset" in data:
        return build_preset(data["preset"], data.get("overrides"))
    return config_from_dict(data)


def config_digest(cfg: SystemConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
