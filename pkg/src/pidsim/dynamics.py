"""Equations of motion of the PS-PID system and their RK4 integration.

``derivatives``/``rk4_step``/``advance`` are plain-Python reference versions that work
on :class:`SystemState`. :func:`simulate` drives the compiled kernel in ``_kernel``,
which implements the same physics on a flat state vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from .contact import ContactForces, ContactKind, Wall, contact_forces, detect_contacts, pair_params
from .model import Mode, SystemConfig, shock_force

logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """A run was aborted (blow-up or conservation violation)."""

    def __init__(self, message: str, trajectory=None, ledger=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.ledger = ledger


class ConservationError(SimulationError):
    pass


class NonFiniteStateError(SimulationError):
    pass


@dataclass
class SystemState:
    time: float
    z: float
    zdot: float
    positions: np.ndarray   # (n, 2) inertial frame
    velocities: np.ndarray  # (n, 2)
    angles: np.ndarray      # (n,)
    spins: np.ndarray       # (n,)

    @property
    def count(self) -> int:
        return len(self.angles)

    @classmethod
    def at_rest(cls, cfg: SystemConfig) -> "SystemState":
        n = cfg.layout.count
        pos = np.asarray(cfg.layout.initial_centers, dtype=float).reshape(n, 2)
        if cfg.layout.mode is Mode.ONE_DIMENSIONAL:
            pos = pos.copy()
            pos[:, 1] = 0.0
        return cls(0.0, 0.0, 0.0, pos, np.zeros((n, 2)), np.zeros(n), np.zeros(n))

    def to_vector(self) -> np.ndarray:
        n = self.count
        y = np.zeros(K.state_size(n))
        y[0], y[1] = self.z, self.zdot
        y[2:2 + n] = self.positions[:, 0]
        y[2 + n:2 + 2 * n] = self.positions[:, 1]
        y[2 + 2 * n:2 + 3 * n] = self.angles
        y[2 + 3 * n:2 + 4 * n] = self.velocities[:, 0]
        y[2 + 4 * n:2 + 5 * n] = self.velocities[:, 1]
        y[2 + 5 * n:2 + 6 * n] = self.spins
        return y

    @classmethod
    def from_vector(cls, t: float, y: np.ndarray, n: int) -> "SystemState":
        pos = np.column_stack([y[2:2 + n], y[2 + n:2 + 2 * n]])
        vel = np.column_stack([y[2 + 3 * n:2 + 4 * n], y[2 + 4 * n:2 + 5 * n]])
        return cls(float(t), float(y[0]), float(y[1]), pos, vel,
                   y[2 + 2 * n:2 + 3 * n].copy(), y[2 + 5 * n:2 + 6 * n].copy())


@dataclass
class StateDerivative:
    zdot: float
    zddot: float
    velocities: np.ndarray
    accelerations: np.ndarray
    spins: np.ndarray
    angular_accelerations: np.ndarray
    f_d: float
    contacts: list = field(default_factory=list)
    forces: list[ContactForces] = field(default_factory=list)
    damping_power: float = 0.0
    friction_power: float = 0.0
    ps_damping_power: float = 0.0


def derivatives(state: SystemState, cfg: SystemConfig) -> StateDerivative:
    n = state.count
    lay = cfg.layout
    acc = np.zeros((n, 2))
    ang_acc = np.zeros(n)
    f_d = 0.0
    contacts = detect_contacts(state, cfg) if n else []
    forces = []
    p_vis = p_f = 0.0
    if contacts:
        params = pair_params(cfg)
        inertia = cfg.moment_of_inertia
        for c in contacts:
            cf = contact_forces(c, params, cfg)
            forces.append(cf)
            total = cf.normal_force + cf.tangential_force
            acc[c.i] += total / lay.mass
            ang_acc[c.i] += cf.torque_on_i / inertia
            if c.kind is ContactKind.GRANULE_GRANULE:
                acc[c.partner] -= total / lay.mass
                ang_acc[c.partner] += cf.torque_on_partner / inertia
            else:
                f_d -= float(total[0])
            p_vis += cf.damping_power
            p_f += cf.friction_power
    if lay.mode is Mode.ONE_DIMENSIONAL:
        acc[:, 1] = 0.0
        ang_acc[:] = 0.0
    ps = cfg.ps
    force = shock_force(state.time, cfg.shock)
    zdd = (force + f_d - ps.damping * state.zdot - ps.stiffness * state.z) / cfg.ps_mass
    return StateDerivative(
        zdot=state.zdot, zddot=zdd,
        velocities=state.velocities.copy(), accelerations=acc,
        spins=state.spins.copy(), angular_accelerations=ang_acc,
        f_d=f_d, contacts=contacts, forces=forces,
        damping_power=p_vis, friction_power=p_f,
        ps_damping_power=ps.damping * state.zdot**2,
    )


def _shift(state: SystemState, d: StateDerivative, h: float) -> SystemState:
    return SystemState(
        state.time + h,
        state.z + h * d.zdot,
        state.zdot + h * d.zddot,
        state.positions + h * d.velocities,
        state.velocities + h * d.accelerations,
        state.angles + h * d.spins,
        state.spins + h * d.angular_accelerations,
    )


def rk4_step(state: SystemState, dt: float, cfg: SystemConfig) -> SystemState:
    """One classical RK4 step (reference implementation)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = derivatives(state, cfg)
    k2 = derivatives(_shift(state, k1, dt / 2), cfg)
    k3 = derivatives(_shift(state, k2, dt / 2), cfg)
    k4 = derivatives(_shift(state, k3, dt), cfg)
    for k in (k1, k2, k3, k4):
        if not (math.isfinite(k.zddot) and np.all(np.isfinite(k.accelerations))
                and np.all(np.isfinite(k.angular_accelerations))):
            raise NonFiniteStateError(f"non-finite derivative at t={state.time}")

    def comb(a, b, c, d):
        return (a + 2 * b + 2 * c + d) / 6.0

    return SystemState(
        state.time + dt,
        state.z + dt * comb(k1.zdot, k2.zdot, k3.zdot, k4.zdot),
        state.zdot + dt * comb(k1.zddot, k2.zddot, k3.zddot, k4.zddot),
        state.positions + dt * comb(k1.velocities, k2.velocities, k3.velocities, k4.velocities),
        state.velocities + dt * comb(k1.accelerations, k2.accelerations, k3.accelerations, k4.accelerations),
        state.angles + dt * comb(k1.spins, k2.spins, k3.spins, k4.spins),
        state.spins + dt * comb(k1.angular_accelerations, k2.angular_accelerations,
                                k3.angular_accelerations, k4.angular_accelerations),
    )


# ---------------------------------------------------------------------------
# kernel plumbing

def kernel_params(cfg: SystemConfig) -> np.ndarray:
    p = np.zeros(K.N_PARAMS)
    lay = cfg.layout
    p[K.P_MPS] = cfg.ps_mass
    p[K.P_K] = cfg.ps.stiffness
    p[K.P_C] = cfg.ps.damping
    p[K.P_F0] = cfg.shock.amplitude
    p[K.P_T0] = cfg.shock.duration
    p[K.P_D1] = cfg.container.length
    p[K.P_D2] = cfg.container.height
    p[K.P_ALPHA] = cfg.material.damping_alpha
    p[K.P_MU] = cfg.material.friction_mu
    p[K.P_KS] = cfg.material.friction_smoothing
    p[K.P_ONE_D] = 1.0 if lay.mode is Mode.ONE_DIMENSIONAL else 0.0
    p[K.P_CLAMP] = 1.0 if cfg.integrator.clamp_attractive else 0.0
    if lay.count:
        params = pair_params(cfg)
        p[K.P_A] = params.hertz_coeff
        p[K.P_MEFF] = params.m_eff
        p[K.P_R] = lay.radius
        p[K.P_M] = lay.mass
        p[K.P_I] = cfg.moment_of_inertia
    return p


def slot_partners(n: int) -> list[tuple[int, int | Wall]]:
    """Decode kernel contact slots into (granule, partner)."""
    out: list[tuple[int, int | Wall]] = []
    for i in range(n):
        for j in range(i + 1, n):
            out.append((i, j))
    for i in range(n):
        for w in (Wall.LEFT, Wall.RIGHT, Wall.FLOOR, Wall.CEILING):
            out.append((i, w))
    return out


class StepController:
    """Two-level step size with a geometric ramp of ``ramp_steps`` levels between them.

    Level 0 steps with ``dt_contact``; level ``ramp_steps`` with ``dt_free``.
    """

    CONTACT, RAMP, FREE = "contact", "ramp", "free"

    def __init__(self, cfg: SystemConfig, level: int | None = None):
        self.cfg = cfg
        self.ramp = cfg.integrator.ramp_steps
        self.level = self.ramp if level is None else level
        self._p = kernel_params(cfg)
        n = cfg.layout.count
        self._gaps = np.empty(K.n_slots(n))
        self._closing = np.empty(K.n_slots(n))

    def mode(self) -> str:
        if self.level == 0:
            return self.CONTACT
        return self.FREE if self.level == self.ramp else self.RAMP

    def dt(self) -> float:
        it = self.cfg.integrator
        return K.step_for_level(self.level, self.ramp, it.dt_free, it.dt_contact)

    def update(self, state: SystemState) -> float:
        it = self.cfg.integrator
        K.scan_gaps(state.to_vector(), self._p, state.count, self._gaps, self._closing)
        self.level = K.choose_level(self.level, self.ramp, self._gaps, self._closing,
                                    it.dt_free, it.dt_contact, it.proximity_gap)
        return self.dt()


def advance(state: SystemState, cfg: SystemConfig,
            controller: StepController | None = None) -> tuple[SystemState, str]:
    """Pick the step size for ``state`` and take one RK4 step with it."""
    controller = controller or StepController(cfg)
    dt = controller.update(state)
    return rk4_step(state, dt, cfg), controller.mode()


# ---------------------------------------------------------------------------
# trajectories

@dataclass
class CollisionEvent:
    time: float
    granule: int
    partner: int | Wall
    onset: bool


@dataclass
class Trajectory:
    """Uniformly sampled run output.

    ``granules`` has shape (samples, n, 6) with columns x, y, vx, vy, theta, omega.
    """

    times: np.ndarray
    z: np.ndarray
    zdot: np.ndarray
    granules: np.ndarray
    force: np.ndarray
    f_d: np.ndarray
    events: list[CollisionEvent]
    mode_log: list[tuple[float, str]]
    status: str
    stride: float

    @property
    def collision_count(self) -> int:
        return sum(1 for e in self.events if e.onset)

    def state(self, k: int) -> SystemState:
        g = self.granules[k]
        return SystemState(float(self.times[k]), float(self.z[k]), float(self.zdot[k]),
                           g[:, 0:2].copy(), g[:, 2:4].copy(), g[:, 4].copy(), g[:, 5].copy())


_MODE_NAMES = {0: StepController.CONTACT, 1: StepController.RAMP, 2: StepController.FREE}
_STATUS_NAMES = {
    K.DONE_FLOOR: "energy_floor",
    K.DONE_TMAX: "t_max",
    K.ABORT_CONSERVATION: "conservation_violation",
    K.ABORT_NONFINITE: "non_finite",
}


def simulate(cfg: SystemConfig, initial: SystemState | None = None,
             chunk_samples: int = 50_000, check_conservation: bool = True):
    """Integrate from rest (or ``initial``) and return ``(Trajectory, EnergyLedger)``.

    Stops when t_max is reached or when eta_sys drops below ``energy_floor`` (never
    before five shock durations). Raises :class:`ConservationError` if the energy
    balance drifts beyond ``conservation_tol``.
    """
    from .energy import EnergyLedger

    n = cfg.layout.count
    it = cfg.integrator
    p = kernel_params(cfg)
    state0 = initial or SystemState.at_rest(cfg)
    y = state0.to_vector()
    stride = it.output_stride
    start_index = math.ceil(state0.time / stride - 1e-9)
    clock = np.array([state0.time, start_index * stride])
    level = np.array([it.ramp_steps], dtype=np.int64)
    sample_index = np.array([start_index], dtype=np.int64)
    ns = K.n_slots(n)
    active = np.zeros(ns, dtype=np.bool_)
    gaps = np.empty(ns)
    K.scan_gaps(y, p, n, gaps, np.empty(ns))
    active[:] = gaps < 0.0
    tol = it.conservation_tol if check_conservation else np.inf
    fsettings = np.array([
        it.dt_free, it.dt_contact, it.proximity_gap, it.t_max, it.energy_floor,
        tol, stride, 5.0 * cfg.shock.duration,
    ])
    isettings = np.array([it.ramp_steps], dtype=np.int64)

    size = y.shape[0]
    samples_chunks, diag_chunks, share_chunks = [], [], []
    ev_cap = max(4 * ns, 65536)
    ev_t, ev_s, ev_on = [], [], []
    mode_t: list[float] = [state0.time]
    mode_v: list[int] = [2]
    partners = slot_partners(n)

    status = K.RUNNING
    while True:
        samples = np.empty((chunk_samples, size))
        diag = np.empty((chunk_samples, K.N_DIAG))
        shares = np.empty((chunk_samples, n))
        ev_time = np.empty(ev_cap)
        ev_slot = np.empty(ev_cap, dtype=np.int64)
        ev_flag = np.empty(ev_cap, dtype=np.bool_)
        ev_count = np.zeros(1, dtype=np.int64)
        m_time = np.empty(ev_cap)
        m_val = np.empty(ev_cap, dtype=np.int64)
        m_count = np.zeros(1, dtype=np.int64)
        status, written = K.run_chunk(
            p, n, fsettings, isettings, y, clock, level, active, sample_index,
            samples, diag, shares, ev_time, ev_slot, ev_flag, ev_count, m_time, m_val, m_count,
        )
        samples_chunks.append(samples[:written])
        diag_chunks.append(diag[:written])
        share_chunks.append(shares[:written])
        c = int(ev_count[0])
        ev_t.append(ev_time[:c])
        ev_s.append(ev_slot[:c])
        ev_on.append(ev_flag[:c])
        mc = int(m_count[0])
        mode_t.extend(m_time[:mc].tolist())
        mode_v.extend(m_val[:mc].tolist())
        if status != K.BUFFER_FULL:
            break

    data = np.concatenate(samples_chunks)
    diag = np.concatenate(diag_chunks)
    shares = np.concatenate(share_chunks)
    times = (start_index + np.arange(len(data))) * stride
    times[0] = state0.time if start_index * stride < state0.time else times[0]
    events = [
        CollisionEvent(float(t), partners[s][0], partners[s][1], bool(on))
        for t, s, on in zip(np.concatenate(ev_t), np.concatenate(ev_s), np.concatenate(ev_on))
    ]
    gran = np.stack([
        data[:, 2:2 + n], data[:, 2 + n:2 + 2 * n],
        data[:, 2 + 3 * n:2 + 4 * n], data[:, 2 + 4 * n:2 + 5 * n],
        data[:, 2 + 2 * n:2 + 3 * n], data[:, 2 + 5 * n:2 + 6 * n],
    ], axis=-1)
    traj = Trajectory(
        times=times, z=data[:, 0].copy(), zdot=data[:, 1].copy(), granules=gran,
        force=diag[:, K.D_F].copy(), f_d=diag[:, K.D_FD].copy(),
        events=events,
        mode_log=[(float(t), _MODE_NAMES[int(v)]) for t, v in zip(mode_t, mode_v)],
        status=_STATUS_NAMES[status], stride=stride,
    )
    aux = 2 + 6 * n
    ledger = EnergyLedger(
        times=times,
        e_ps=diag[:, K.D_EPS].copy(), e_pid=diag[:, K.D_EPID].copy(), e_granules=shares,
        w_ps=data[:, aux].copy(), w_vis=data[:, aux + 1].copy(), w_f=data[:, aux + 2].copy(),
        e_in_so_far=data[:, aux + 3].copy(), f_d=traj.f_d,
        shock_duration=cfg.shock.duration,
    )
    if status == K.ABORT_CONSERVATION:
        raise ConservationError(
            f"energy balance residual exceeded {it.conservation_tol:g} at t={times[-1]:.6g} s",
            traj, ledger)
    if status == K.ABORT_NONFINITE:
        raise NonFiniteStateError(f"state became non-finite at t={times[-1]:.6g} s", traj, ledger)
    logger.info("run finished (%s) at t=%.4g s with %d collisions",
                traj.status, times[-1], traj.collision_count)
    return traj, ledger
