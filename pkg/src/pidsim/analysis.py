"""Dissipative-capacity metrics of a decaying response.

The RMS bandwidth is the second spectral moment of the squared energy spectrum of
the response envelope; the decay time is how long the energy takes to fall to 1/e
of its post-shock peak; their product is the time-bandwidth (T-B) product, equal
to one for any underdamped linear resonator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import fft, fftfreq, fftshift, ifft, next_fast_len
from scipy.ndimage import maximum_filter1d
from scipy.signal import hilbert

from .model import PrimaryStructureParams, SystemConfig

MORLET_W0 = 6.0


class AnalysisError(ValueError):
    """A signal does not satisfy the preconditions of a metric."""


class Subject(str, enum.Enum):
    PS = "ps"
    INTEGRATED = "integrated"


@dataclass(frozen=True)
class UniformSeries:
    start: float
    interval: float
    values: np.ndarray

    def __post_init__(self):
        if not self.interval > 0:
            raise AnalysisError("sample interval must be positive")
        if len(self.values) < 16:
            raise AnalysisError(f"series too short ({len(self.values)} < 16 samples)")

    @property
    def times(self) -> np.ndarray:
        return self.start + self.interval * np.arange(len(self.values))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Spectrum:
    omega: np.ndarray   # rad/s, two-sided, ascending
    energy: np.ndarray  # |F[x]|^2


@dataclass(frozen=True)
class BandwidthReport:
    subject: Subject
    rms_bandwidth: float
    decay_time: float
    tb_product: float
    reference_time: float
    end_energy_fraction: float
    grid_resolution: float

    def to_dict(self) -> dict:
        return {
            "subject": self.subject.value,
            "rms_bandwidth": self.rms_bandwidth,
            "decay_time": self.decay_time,
            "tb_product": self.tb_product,
            "reference_time": self.reference_time,
            "end_energy_fraction": self.end_energy_fraction,
            "grid_resolution": self.grid_resolution,
        }


@dataclass(frozen=True)
class WaveletSpectrum:
    times: np.ndarray
    omega: np.ndarray      # rad/s, descending
    magnitude: np.ndarray  # (len(omega), len(times)), global max 1


def analytic_envelope(x: UniformSeries) -> UniformSeries:
    """Modulus of the analytic signal of the whole record.

    Zero-padded to twice the length so the start transient cannot wrap onto the tail.
    """
    values = np.asarray(x.values, dtype=float)
    n = len(values)
    env = np.abs(hilbert(values, N=next_fast_len(2 * n))[:n])
    return UniformSeries(x.start, x.interval, env)


def energy_spectrum(x: UniformSeries, pad_factor: int = 4) -> Spectrum:
    """Two-sided |DFT|^2 of ``x``, zero-padded to at least ``pad_factor`` times its length."""
    n = len(x)
    nfft = next_fast_len(max(pad_factor, 1) * n)
    spec = fft(np.asarray(x.values, float), nfft) * x.interval
    omega = 2 * np.pi * fftshift(fftfreq(nfft, d=x.interval))
    return Spectrum(omega, fftshift(np.abs(spec) ** 2))


def spectral_rms_width(spectrum: Spectrum) -> float:
    """``2 sqrt(int w^2 E^2 dw / int E^2 dw)`` by trapezoidal quadrature."""
    e2 = spectrum.energy**2
    den = np.trapezoid(e2, spectrum.omega)
    if not den > 0:
        raise AnalysisError("zero spectrum; bandwidth undefined")
    num = np.trapezoid(spectrum.omega**2 * e2, spectrum.omega)
    return 2.0 * math.sqrt(num / den)


def _check_decay(values: np.ndarray, limit: float = 1e-2) -> float:
    peak = float(np.max(np.abs(values)))
    if not peak > 0:
        raise AnalysisError("constant zero signal; bandwidth undefined")
    tail = values[-max(1, len(values) // 100):]
    end = float(np.max(np.abs(tail))) / peak
    if end >= limit:
        raise AnalysisError(
            f"signal has not decayed: end amplitude is {end:.3g} of peak (need < {limit:g})")
    return end


def rms_bandwidth(signal: UniformSeries, envelope: bool = True, pad_factor: int = 4) -> float:
    """RMS (nonlinear) bandwidth in rad/s.

    With ``envelope=True`` the analytic envelope of the oscillatory input is taken
    first; pass ``False`` when the input already is an amplitude envelope.
    """
    _check_decay(np.asarray(signal.values, float))
    env = analytic_envelope(signal) if envelope else signal
    return spectral_rms_width(energy_spectrum(env, pad_factor))


def upper_envelope(values: np.ndarray) -> np.ndarray:
    """Smallest nonincreasing curve lying on or above ``values`` (running max from the end)."""
    return np.maximum.accumulate(np.asarray(values, float)[::-1])[::-1]


def decay_time_constant(energy: UniformSeries) -> tuple[float, float]:
    """Time for the energy to drop to 1/e of its peak; returns (decay time, peak time)."""
    e = np.asarray(energy.values, float)
    k_peak = int(np.argmax(e))
    peak = e[k_peak]
    if not peak > 0:
        raise AnalysisError("energy never rises above zero")
    env = upper_envelope(e)
    thr = peak / math.e
    below = np.nonzero(env[k_peak:] < thr)[0]
    if below.size == 0:
        raise AnalysisError("energy never decays below 1/e of its peak within the record")
    k = k_peak + int(below[0])
    a, b = env[k - 1], env[k]
    frac = (a - thr) / (a - b)
    t_cross = energy.start + energy.interval * (k - 1 + frac)
    t_ref = energy.start + energy.interval * k_peak
    return t_cross - t_ref, t_ref


def natural_period(ps: PrimaryStructureParams, mass: float | None = None) -> float:
    m = ps.total_mass if mass is None else mass
    return 2 * math.pi / math.sqrt(ps.stiffness / m)


def moving_max(values: np.ndarray, window: int) -> np.ndarray:
    """Maximum over the forward-looking window ``[k, k + window)``."""
    window = max(int(window), 1)
    # origin shifts the centered filter so each output looks ahead only
    return maximum_filter1d(np.asarray(values, float), size=window,
                            origin=-(window // 2), mode="nearest")


def integrated_signal(e_sys: np.ndarray, window: int, kind: str = "sqrt_energy") -> np.ndarray:
    smoothed = moving_max(e_sys, window)
    if kind == "sqrt_energy":
        return np.sqrt(np.maximum(smoothed, 0.0))
    if kind == "energy":
        return smoothed
    raise ValueError(f"unknown integrated signal kind {kind!r}")


def bandwidth_report(subject: Subject, times: np.ndarray, zdot: np.ndarray,
                     e_ps: np.ndarray, e_sys: np.ndarray, period: float,
                     integrated_kind: str = "sqrt_energy", pad_factor: int = 4) -> BandwidthReport:
    """Metrics from raw uniformly sampled arrays (used by both the API and the CLI)."""
    subject = Subject(subject)
    dt = float(times[1] - times[0])
    start = float(times[0])
    if subject is Subject.PS:
        sig = UniformSeries(start, dt, np.asarray(zdot, float))
        bw = rms_bandwidth(sig, envelope=True, pad_factor=pad_factor)
        energy = np.asarray(e_ps, float)
    else:
        energy = np.asarray(e_sys, float)
        window = max(int(round(period / dt)), 1)
        sig = UniformSeries(start, dt, integrated_signal(energy, window, integrated_kind))
        bw = rms_bandwidth(sig, envelope=False, pad_factor=pad_factor)
    tau, t_ref = decay_time_constant(UniformSeries(start, dt, energy))
    nfft = next_fast_len(max(pad_factor, 1) * len(times))
    return BandwidthReport(
        subject=subject, rms_bandwidth=bw, decay_time=tau, tb_product=bw * tau,
        reference_time=t_ref,
        end_energy_fraction=float(energy[-1] / energy.max()),
        grid_resolution=2 * math.pi / (nfft * dt),
    )


def tb_product(cfg: SystemConfig, traj, ledger, subject: Subject | str,
               integrated_kind: str = "sqrt_energy", pad_factor: int = 4) -> BandwidthReport:
    """Bandwidth, decay time and their product for the PS or the whole PS-PID system."""
    period = natural_period(cfg.ps, cfg.ps_mass)
    return bandwidth_report(Subject(subject), traj.times, traj.zdot, ledger.e_ps, ledger.e_sys,
                            period, integrated_kind, pad_factor)


def linear_baseline(ps: PrimaryStructureParams, mass: float | None = None) -> tuple[float, float]:
    """Half-power bandwidth C/M and decay time M/C of the PID-less oscillator."""
    m = ps.total_mass if mass is None else mass
    if ps.damping >= 2 * math.sqrt(ps.stiffness * m):
        raise AnalysisError("oscillator is not underdamped")
    return ps.damping / m, m / ps.damping


def wavelet_spectrum(x: UniformSeries, omega_min: float, omega_max: float,
                     voices: int = 16, w0: float = MORLET_W0) -> WaveletSpectrum:
    """Morlet CWT magnitude on a log-spaced frequency grid (``voices`` per octave).

    Each row is scaled so a unit tone gives the same peak at every frequency; the
    grid is then normalized to a global maximum of 1.
    """
    nyquist = math.pi / x.interval
    if not 0 < omega_min < omega_max <= nyquist:
        raise AnalysisError(f"frequency range must lie in (0, {nyquist:.6g}] rad/s")
    octaves = math.log2(omega_max / omega_min)
    count = max(int(math.ceil(octaves * voices)) + 1, 2)
    omega = omega_max * 2.0 ** (-np.arange(count) / voices)
    omega = omega[omega >= omega_min * (1 - 1e-12)]

    values = np.asarray(x.values, float)
    n = len(values)
    nfft = next_fast_len(2 * n)
    spec = fft(values, nfft)
    w = 2 * np.pi * fftfreq(nfft, d=x.interval)
    out = np.empty((len(omega), n))
    for r, om in enumerate(omega):
        scale = w0 / om
        psi = np.where(w > 0, np.exp(-0.5 * (scale * w - w0) ** 2), 0.0)
        out[r] = np.abs(ifft(spec * psi)[:n])
    peak = out.max()
    if peak > 0:
        out /= peak
    return WaveletSpectrum(x.times, omega, out)
