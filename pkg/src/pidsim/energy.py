"""Energy bookkeeping: instantaneous energies, input energy, cumulative dissipation,
normalized measures and the conservation residual used to accept a run."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .contact import ContactKind, contact_potential_energy, pair_params
from .model import SystemConfig, shock_force


@dataclass(frozen=True)
class EnergySample:
    time: float
    e_ps: float
    e_pid: float
    e_granules: np.ndarray
    w_ps: float
    w_vis: float
    w_f: float
    e_in_so_far: float
    f_d: float


@dataclass
class EnergyLedger:
    """Column-oriented energy history of one run (all in joules)."""

    times: np.ndarray
    e_ps: np.ndarray
    e_pid: np.ndarray
    e_granules: np.ndarray  # (samples, n)
    w_ps: np.ndarray
    w_vis: np.ndarray
    w_f: np.ndarray
    e_in_so_far: np.ndarray
    f_d: np.ndarray
    shock_duration: float

    def __len__(self) -> int:
        return len(self.times)

    def sample(self, k: int) -> EnergySample:
        return EnergySample(
            float(self.times[k]), float(self.e_ps[k]), float(self.e_pid[k]),
            self.e_granules[k].copy(), float(self.w_ps[k]), float(self.w_vis[k]),
            float(self.w_f[k]), float(self.e_in_so_far[k]), float(self.f_d[k]),
        )

    @property
    def e_in(self) -> float:
        return float(self.e_in_so_far[-1])

    @property
    def e_sys(self) -> np.ndarray:
        return self.e_ps + self.e_pid

    @property
    def w_pid(self) -> np.ndarray:
        return self.w_vis + self.w_f

    def residual(self) -> np.ndarray:
        """Relative energy-balance error at every sample (NaN before the shock ends)."""
        if self.e_in <= 0:
            return np.zeros_like(self.times)
        total = self.e_ps + self.e_pid + self.w_ps + self.w_vis + self.w_f
        res = np.abs(total - self.e_in_so_far) / self.e_in
        res[self.times < self.shock_duration] = np.nan
        return res

    def max_residual(self) -> float:
        res = self.residual()
        res = res[np.isfinite(res)]
        return float(res.max()) if res.size else 0.0

    @property
    def r_pid_final(self) -> float:
        return 100.0 * float(self.w_pid[-1]) / self.e_in

    @property
    def r_ps_final(self) -> float:
        return 100.0 * float(self.w_ps[-1]) / self.e_in


def instantaneous_energies(state, contacts, cfg: SystemConfig) -> tuple[float, float, np.ndarray]:
    """Return (E_PS, E_PID, per-granule energies) for one state."""
    lay = cfg.layout
    e_ps = 0.5 * cfg.ps_mass * state.zdot**2 + 0.5 * cfg.ps.stiffness * state.z**2
    n = lay.count
    shares = np.zeros(n)
    if n:
        shares += 0.5 * lay.mass * np.sum(state.velocities**2, axis=1)
        shares += 0.5 * cfg.moment_of_inertia * state.spins**2
    if contacts:
        params = pair_params(cfg)
        for c in contacts:
            a, b = contact_potential_energy(c, params)
            shares[c.i] += a
            if c.kind is ContactKind.GRANULE_GRANULE:
                shares[c.partner] += b
    return float(e_ps), float(shares.sum()), shares


def input_energy(traj, cfg: SystemConfig) -> float:
    """Trapezoidal quadrature of F * zdot over the shock window of a sampled trajectory."""
    t0 = cfg.shock.duration
    t = traj.times
    if t[-1] < t0 - 1e-12:
        raise ValueError(f"trajectory ends at {t[-1]} s, before the shock ends at {t0} s")
    mask = t <= t0 + 1e-12
    power = shock_force(t[mask], cfg.shock) * traj.zdot[mask]
    return float(np.trapezoid(power, t[mask]))


def accumulate_dissipation(times, ps_power, damping_power, friction_power):
    """Cumulative trapezoidal integrals of the three dissipation powers.

    Returns (W_PS, W_vis, W_f) on the same time grid, starting at zero.
    """
    out = []
    for power in (ps_power, damping_power, friction_power):
        out.append(cumulative_trapezoid(np.asarray(power, float), np.asarray(times, float), initial=0.0))
    return tuple(out)


@dataclass(frozen=True)
class NormalizedMeasures:
    eta_pid: np.ndarray
    eta_ps: np.ndarray
    eta_sys: np.ndarray
    r_pid: np.ndarray
    r_ps: np.ndarray


def normalized_measures(ledger: EnergyLedger) -> NormalizedMeasures:
    """Energies and cumulative dissipation as percentages of the input shock energy."""
    e_in = ledger.e_in
    if e_in <= 0:
        raise ValueError("input energy is zero; normalized measures are undefined")
    scale = 100.0 / e_in
    return NormalizedMeasures(
        eta_pid=ledger.e_pid * scale,
        eta_ps=ledger.e_ps * scale,
        eta_sys=(ledger.e_ps + ledger.e_pid) * scale,
        r_pid=ledger.w_pid * scale,
        r_ps=ledger.w_ps * scale,
    )
