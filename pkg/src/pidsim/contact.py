"""Hertzian normal contact with Hertz-type damping and tanh-smoothed Coulomb friction.

Walls are rigid, translate with the primary structure in x, and are treated as a
second granule identical to the one touching them. Normals point from granule ``i``
towards its partner; tangents are the normals rotated by +90 degrees.

This is the readable reference path. The integrator uses an equivalent compiled
kernel; the two are cross-checked in the tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import MaterialParams, Mode, SystemConfig


class ContactKind(str, enum.Enum):
    GRANULE_GRANULE = "granule_granule"
    GRANULE_WALL = "granule_wall"


class Wall(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    FLOOR = "floor"
    CEILING = "ceiling"


WALL = None  # partner marker for effective_params

_WALL_NORMALS = {
    Wall.LEFT: (-1.0, 0.0),
    Wall.RIGHT: (1.0, 0.0),
    Wall.FLOOR: (0.0, -1.0),
    Wall.CEILING: (0.0, 1.0),
}


@dataclass(frozen=True)
class EffectivePairParams:
    e_eff: float
    r_eff: float
    m_eff: float
    hertz_coeff: float


@dataclass(frozen=True)
class Contact:
    kind: ContactKind
    i: int
    partner: int | Wall
    penetration: float
    penetration_rate: float
    normal: tuple[float, float]
    tangent: tuple[float, float]
    tangential_slip_rate: float


@dataclass(frozen=True)
class ContactForces:
    normal_force: np.ndarray       # on granule i
    tangential_force: np.ndarray   # on granule i
    torque_on_i: float
    torque_on_partner: float       # zero for walls
    damping_power: float           # rate of viscous dissipation in this contact
    friction_power: float          # rate of frictional dissipation in this contact


def effective_params(radius_a: float, radius_b: float | None, mass_a: float,
                     mass_b: float | None, material: MaterialParams) -> EffectivePairParams:
    """Combination rules for a pair; pass ``WALL`` for a wall partner."""
    if radius_b is WALL:
        radius_b = radius_a
    if mass_b is WALL:
        mass_b = mass_a
    if min(radius_a, radius_b, mass_a, mass_b) <= 0:
        raise ValueError("radii and masses must be positive")
    compliance = (1 - material.poissons_ratio**2) / material.youngs_modulus
    e_eff = 1.0 / (2 * compliance)
    r_eff = 1.0 / (1.0 / radius_a + 1.0 / radius_b)
    m_eff = 1.0 / (1.0 / mass_a + 1.0 / mass_b)
    return EffectivePairParams(e_eff, r_eff, m_eff, 4.0 / 3.0 * e_eff * math.sqrt(r_eff))


def pair_params(cfg: SystemConfig) -> EffectivePairParams:
    """Granule-granule parameters; identical to granule-wall ones for identical granules."""
    lay = cfg.layout
    return effective_params(lay.radius, lay.radius, lay.mass, lay.mass, cfg.material)


def normal_magnitude(c: Contact, p: EffectivePairParams, material: MaterialParams,
                     clamp: bool = False) -> float:
    """Signed magnitude ``A d^1.5 + gamma d'``; negative means net attraction."""
    d = c.penetration
    if d <= 0:
        return 0.0
    gamma = material.damping_alpha * math.sqrt(p.m_eff * p.hertz_coeff) * d**0.25
    mag = p.hertz_coeff * d**1.5 + gamma * c.penetration_rate
    if clamp and mag < 0:
        return 0.0
    return mag


def normal_contact_force(c: Contact, p: EffectivePairParams, material: MaterialParams,
                         clamp: bool = False) -> np.ndarray:
    return -normal_magnitude(c, p, material, clamp) * np.asarray(c.normal)


def tangential_friction_force(c: Contact, normal_force: np.ndarray, material: MaterialParams,
                              radius_i: float, radius_j: float = 0.0,
                              mode: Mode = Mode.TWO_DIMENSIONAL) -> tuple[np.ndarray, float, float]:
    """Friction on granule i plus the torques it induces on i and on its partner.

    Zero in 1D mode, where friction is neglected.
    """
    if mode is Mode.ONE_DIMENSIONAL or c.penetration <= 0:
        return np.zeros(2), 0.0, 0.0
    mag = material.friction_mu * float(np.hypot(*normal_force)) \
        * math.tanh(material.friction_smoothing * c.tangential_slip_rate)
    t = np.asarray(c.tangent)
    f = -mag * t
    n = np.asarray(c.normal)
    torque_i = radius_i * float(n[0] * f[1] - n[1] * f[0])
    # partner sees -f at its contact point, which sits at -R_j n from its center
    torque_j = radius_j * float(n[0] * f[1] - n[1] * f[0])
    return f, torque_i, torque_j


def contact_forces(c: Contact, p: EffectivePairParams, cfg: SystemConfig) -> ContactForces:
    mat = cfg.material
    R = cfg.layout.radius
    clamp = cfg.integrator.clamp_attractive
    mag = normal_magnitude(c, p, mat, clamp)
    normal = -mag * np.asarray(c.normal)
    r_j = R if c.kind is ContactKind.GRANULE_GRANULE else 0.0
    f, tau_i, tau_j = tangential_friction_force(c, normal, mat, R, r_j, cfg.layout.mode)
    elastic = p.hertz_coeff * max(c.penetration, 0.0) ** 1.5
    damping_power = (mag - elastic) * c.penetration_rate if c.penetration > 0 else 0.0
    friction_power = -float(f @ np.asarray(c.tangent)) * c.tangential_slip_rate
    return ContactForces(normal, f, tau_i, tau_j, damping_power, friction_power)


def contact_potential_energy(c: Contact, p: EffectivePairParams) -> tuple[float, float]:
    """Elastic energy ``(2/5) A d^2.5``; split evenly between two granules, all to the
    granule for a wall contact. Returns (share of i, share of partner)."""
    if c.penetration <= 0:
        return 0.0, 0.0
    total = 0.4 * p.hertz_coeff * c.penetration**2.5
    if c.kind is ContactKind.GRANULE_GRANULE:
        return 0.5 * total, 0.5 * total
    return total, 0.0


def detect_contacts(state, cfg: SystemConfig) -> list[Contact]:
    """All overlapping granule pairs and granule-wall pairs, with their kinematics."""
    n = cfg.layout.count
    R = cfg.layout.radius
    pos = state.positions
    vel = state.velocities
    spin = state.spins
    out: list[Contact] = []
    for i in range(n):
        for j in range(i + 1, n):
            d_vec = pos[j] - pos[i]
            d = float(np.hypot(*d_vec))
            if d >= 2 * R:
                continue
            nrm = d_vec / d
            tan = np.array([-nrm[1], nrm[0]])
            rel = vel[i] - vel[j]
            out.append(Contact(
                ContactKind.GRANULE_GRANULE, i, j,
                penetration=2 * R - d,
                penetration_rate=float(rel @ nrm),
                normal=(float(nrm[0]), float(nrm[1])),
                tangent=(float(tan[0]), float(tan[1])),
                tangential_slip_rate=float(rel @ tan) + R * spin[i] + R * spin[j],
            ))
    walls = (Wall.LEFT, Wall.RIGHT) if cfg.layout.mode is Mode.ONE_DIMENSIONAL else tuple(Wall)
    wall_vel = np.array([state.zdot, 0.0])
    for i in range(n):
        x, y = pos[i]
        for w in walls:
            if w is Wall.LEFT:
                delta = R - (x - state.z)
            elif w is Wall.RIGHT:
                delta = x + R - (state.z + cfg.container.length)
            elif w is Wall.FLOOR:
                delta = R - y
            else:
                delta = y + R - cfg.container.height
            if delta <= 0:
                continue
            nrm = np.array(_WALL_NORMALS[w])
            tan = np.array([-nrm[1], nrm[0]])
            rel = vel[i] - wall_vel
            out.append(Contact(
                ContactKind.GRANULE_WALL, i, w,
                penetration=float(delta),
                penetration_rate=float(rel @ nrm),
                normal=(float(nrm[0]), float(nrm[1])),
                tangent=(float(tan[0]), float(tan[1])),
                tangential_slip_rate=float(rel @ tan) + R * spin[i],
            ))
    return out
