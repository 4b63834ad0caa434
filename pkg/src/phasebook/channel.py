"""Frequency-selective Rayleigh fading with Jakes time correlation and an
exponential power-delay profile.

Each realization is a sum of n_taps unit-power rays with i.i.d. delays drawn
from a truncated exponential density on [0, n_taps) samples, uniform phases
and Jakes-distributed Doppler shifts.  This construction reproduces the
closed-form frequency correlation
    R_f(d) = (1 - exp(-L*(1/tau + j*2*pi*d/N))) / ((1 - exp(-L/tau)) * (1 + j*2*pi*(d/N)*tau))
and time correlation J0(2*pi*f_d*lag) exactly in expectation, with
E|H(k)|^2 = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import RngStream, bessel_j0

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelParams:
    f_c: float = 5e9
    f_s: float = 25e6
    tau_rms: float = 3.0  # RMS delay spread in samples
    speed: float = 7.0 / 3.6  # m/s
    n_taps: int = 10
    n_fft: int = 64
    doppler_norm: float = 0.0  # max Doppler normalized to the symbol duration

    def __post_init__(self):
        if self.tau_rms <= 0:
            raise ConfigError(f"tau_rms must be positive, got {self.tau_rms}")
        if self.n_taps < 1:
            raise ConfigError("n_taps must be >= 1")
        if self.doppler_norm < 0 or self.speed < 0:
            raise ConfigError("speed and doppler_norm must be non-negative")


def make_channel_params(
    n_fft: int = 64,
    n_cp: int = 16,
    f_c: float = 5e9,
    f_s: float = 25e6,
    tau_rms: float = 3.0,
    speed_kmh: float = 7.0,
    n_taps: int = 10,
    doppler_norm: float | None = None,
) -> ChannelParams:
    """Standard urban-style parameter set; doppler_norm derived from speed unless given."""
    speed = speed_kmh / 3.6
    if doppler_norm is None:
        symbol_t = (n_fft + n_cp) / f_s
        doppler_norm = speed * f_c / SPEED_OF_LIGHT * symbol_t
    return ChannelParams(
        f_c=f_c, f_s=f_s, tau_rms=tau_rms, speed=speed,
        n_taps=n_taps, n_fft=n_fft, doppler_norm=float(doppler_norm),
    )


@dataclass(frozen=True)
class ChannelRealization:
    """Per-symbol frequency response plus the path parameters that produced it."""

    freq_response: np.ndarray  # (n_symbols, n_fft)
    delays: np.ndarray
    phases: np.ndarray
    dopplers: np.ndarray
    amplitudes: np.ndarray


def _draw_delays(gen: np.random.Generator, params: ChannelParams, size) -> np.ndarray:
    """Truncated-exponential delays on [0, n_taps) with rate 1/tau_rms."""
    u = gen.random(size)
    span = 1.0 - np.exp(-params.n_taps / params.tau_rms)
    return -params.tau_rms * np.log1p(-u * span)


def _h_matrix(params, delays, phases, dopplers, n_symbols) -> np.ndarray:
    n = params.n_fft
    l = params.n_taps
    k = np.arange(n)
    m = np.arange(n_symbols)
    # rays: (L,) each; symbol evolution (M, L); bin signature (L, N)
    ray = np.exp(1j * phases) / np.sqrt(l)
    time_part = np.exp(2j * np.pi * np.outer(m, dopplers))  # (M, L)
    freq_part = np.exp(-2j * np.pi * np.outer(delays, k) / n)  # (L, N)
    return (time_part * ray[None, :]) @ freq_part


def gen_channel(params: ChannelParams, n_symbols: int, rng: RngStream) -> ChannelRealization:
    """Draw one channel realization, constant within each symbol."""
    if n_symbols < 1:
        raise ConfigError("n_symbols must be >= 1")
    gen = rng.generator
    l = params.n_taps
    delays = _draw_delays(gen, params, l)
    phases = gen.uniform(0.0, 2.0 * np.pi, l)
    arrival = gen.uniform(0.0, 2.0 * np.pi, l)
    dopplers = params.doppler_norm * np.cos(arrival)
    h = _h_matrix(params, delays, phases, dopplers, n_symbols)
    return ChannelRealization(
        freq_response=h,
        delays=delays,
        phases=phases,
        dopplers=dopplers,
        amplitudes=np.full(l, 1.0 / np.sqrt(l)),
    )


def freq_corr(params: ChannelParams, delta_bins) -> np.ndarray:
    """Frequency correlation at a bin separation (separation normalized by n_fft)."""
    d = np.asarray(delta_bins, dtype=float) / params.n_fft
    l = params.n_taps
    tau = params.tau_rms
    num = 1.0 - np.exp(-l * (1.0 / tau + 2j * np.pi * d))
    den = (1.0 - np.exp(-l / tau)) * (1.0 + 2j * np.pi * d * tau)
    return num / den


def freq_corr_matrix(params: ChannelParams, bins_a, bins_b) -> np.ndarray:
    """Matrix of frequency correlations at pairwise bin separations."""
    a = np.asarray(bins_a, dtype=int)
    b = np.asarray(bins_b, dtype=int)
    if np.any(a < 0) or np.any(a >= params.n_fft) or np.any(b < 0) or np.any(b >= params.n_fft):
        raise ConfigError("bin indices must lie in [0, n_fft)")
    return freq_corr(params, a[:, None] - b[None, :])


def time_corr(params: ChannelParams, lag) -> np.ndarray | float:
    """Jakes time correlation at a lag in symbols."""
    return bessel_j0(2.0 * np.pi * params.doppler_norm * np.asarray(lag, dtype=float))


def joint_corr_matrix(params: ChannelParams, d_symbols: int, bins) -> np.ndarray:
    """Separable time-frequency correlation over d stacked symbols.

    Entry ((m,k),(n,l)) = Rt(m-n) * Rf(k-l); symbol blocks are ordered most
    recent first so the first block row correlates the current symbol with
    the stack.  Raises on a numerically non-PSD assembly.
    """
    if d_symbols < 1:
        raise ConfigError("d_symbols must be >= 1")
    lags = np.arange(d_symbols)
    rt = np.asarray(time_corr(params, np.abs(lags[:, None] - lags[None, :])))
    rf = freq_corr_matrix(params, bins, bins)
    big = np.kron(rt, rf)
    min_eig = float(np.linalg.eigvalsh(big).min())
    if min_eig < -1e-9:
        raise RuntimeError(f"correlation matrix lost positive semidefiniteness: {min_eig}")
    return big
