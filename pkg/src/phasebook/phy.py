"""OFDM transmit chain and link application: Gray-mapped QAM with pilots,
unitary IFFT/FFT with cyclic prefix, per-sample phase rotation and AWGN.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .numerics import RngStream, complex_gaussian, fft, ifft


def _gray_decode(v: int) -> int:
    out = 0
    while v:
        out ^= v
        v >>= 1
    return out


@lru_cache(maxsize=None)
def _axis_tables(half_bits: int) -> tuple[np.ndarray, np.ndarray]:
    """(amplitude per Gray-coded bit pattern, bit pattern per level index)."""
    n_levels = 1 << half_bits
    top = n_levels - 1
    amps = np.empty(n_levels)
    pattern_of_level = np.empty(n_levels, dtype=np.int64)
    for pattern in range(n_levels):
        idx = _gray_decode(pattern)
        amps[pattern] = top - 2 * idx  # pattern 0 -> most positive level
        pattern_of_level[idx] = pattern
    return amps, pattern_of_level


@lru_cache(maxsize=None)
def qam_constellation(bits_per_symbol: int) -> np.ndarray:
    """Unit-average-energy Gray-mapped square QAM, indexed by the bit word."""
    m = bits_per_symbol
    if m not in (2, 4, 6):
        raise ConfigError(f"bits_per_symbol must be 2, 4 or 6, got {m}")
    h = m // 2
    amps, _ = _axis_tables(h)
    n_levels = 1 << h
    scale = np.sqrt(2.0 * np.mean(amps**2))
    words = np.arange(1 << m)
    i_amp = amps[words >> h]
    q_amp = amps[words & (n_levels - 1)]
    return (i_amp + 1j * q_amp) / scale


def qam_map(bits, bits_per_symbol: int) -> np.ndarray:
    """Bits (0/1) to constellation symbols; bit count must divide evenly."""
    m = bits_per_symbol
    bits = np.asarray(bits).ravel()
    if bits.size % m:
        raise ConfigError(f"bit count {bits.size} not divisible by {m}")
    const = qam_constellation(m)
    weights = 1 << np.arange(m - 1, -1, -1)
    words = bits.reshape(-1, m) @ weights
    return const[words]


def qam_hard_demap(symbols, bits_per_symbol: int) -> np.ndarray:
    """Nearest-constellation-point decisions back to bits."""
    m = bits_per_symbol
    if m not in (2, 4, 6):
        raise ConfigError(f"bits_per_symbol must be 2, 4 or 6, got {m}")
    h = m // 2
    amps, pattern_of_level = _axis_tables(h)
    n_levels = 1 << h
    scale = np.sqrt(2.0 * np.mean(amps**2))
    sym = np.asarray(symbols).ravel() * scale
    top = n_levels - 1

    def axis_patterns(vals):
        idx = np.clip(np.round((top - vals) / 2.0), 0, top).astype(np.int64)
        return pattern_of_level[idx]

    words = (axis_patterns(sym.real) << h) | axis_patterns(sym.imag)
    shifts = np.arange(m - 1, -1, -1)
    return ((words[:, None] >> shifts) & 1).astype(np.int8).ravel()


@dataclass(frozen=True)
class OfdmParams:
    """Grid layout: n_fft bins of which n_pilots carry a fixed pilot symbol."""

    n_fft: int = 64
    n_cp: int = 16
    n_pilots: int = 8
    bits_per_symbol: int = 4
    es: float = 1.0
    pilot_value: complex = (1.0 + 1.0j) / np.sqrt(2.0)

    def __post_init__(self):
        if self.n_pilots < 0 or (self.n_pilots and self.n_fft % self.n_pilots):
            raise ConfigError("n_pilots must divide n_fft (or be zero)")
        if self.bits_per_symbol not in (2, 4, 6):
            raise ConfigError("bits_per_symbol must be 2, 4 or 6")
        if self.es <= 0:
            raise ConfigError("es must be positive")

    @property
    def pilot_indices(self) -> np.ndarray:
        if self.n_pilots == 0:
            return np.array([], dtype=int)
        return np.arange(self.n_pilots) * (self.n_fft // self.n_pilots)

    @property
    def data_indices(self) -> np.ndarray:
        mask = np.ones(self.n_fft, dtype=bool)
        mask[self.pilot_indices] = False
        return np.flatnonzero(mask)

    @property
    def n_data(self) -> int:
        return self.n_fft - self.n_pilots


@dataclass(frozen=True)
class NoiseModel:
    """Complex noise variance per sample, fixed by the Eb/N0 operating point."""

    sigma_w_sq: float

    def __post_init__(self):
        if not self.sigma_w_sq > 0:
            raise ConfigError("sigma_w_sq must be positive")


def noise_from_ebn0(ebn0_db: float, params: OfdmParams, code_rate: float = 1.0) -> NoiseModel:
    """Map Eb/N0 (dB) to per-sample noise variance.

    Eb charges the pilot overhead and code rate to the information bits;
    the cyclic prefix is excluded (each symbol spends n_fft * es of energy
    on (n_fft - n_pilots) * bits_per_symbol * code_rate information bits).
    """
    if params.n_data == 0:
        raise ConfigError("no data subcarriers")
    info_bits = params.n_data * params.bits_per_symbol * code_rate
    eb = params.n_fft * params.es / info_bits
    return NoiseModel(sigma_w_sq=eb / 10.0 ** (ebn0_db / 10.0))


def assemble_grid(data_symbols: np.ndarray, params: OfdmParams) -> np.ndarray:
    """Place data symbols and pilots onto (n_symbols, n_fft) grid rows."""
    data_symbols = np.atleast_2d(data_symbols)
    if data_symbols.shape[1] != params.n_data:
        raise ConfigError(
            f"expected {params.n_data} data symbols per row, got {data_symbols.shape[1]}"
        )
    n_sym = data_symbols.shape[0]
    root_es = np.sqrt(params.es)
    grid = np.empty((n_sym, params.n_fft), dtype=complex)
    grid[:, params.pilot_indices] = params.pilot_value * root_es
    grid[:, params.data_indices] = data_symbols * root_es
    return grid


def extract_data(grid: np.ndarray, params: OfdmParams) -> np.ndarray:
    return np.atleast_2d(grid)[:, params.data_indices]


def ofdm_modulate(grid, params: OfdmParams) -> np.ndarray:
    """Unitary IFFT plus cyclic prefix; accepts (n_fft,) or (n_symbols, n_fft)."""
    grid = np.asarray(grid)
    if grid.shape[-1] != params.n_fft:
        raise ConfigError(f"grid length {grid.shape[-1]} != n_fft {params.n_fft}")
    x = ifft(grid)
    return np.concatenate([x[..., params.n_fft - params.n_cp:], x], axis=-1)


def ofdm_demodulate(samples, params: OfdmParams) -> np.ndarray:
    """Drop the cyclic prefix and apply the unitary FFT."""
    samples = np.asarray(samples)
    if samples.shape[-1] != params.n_fft + params.n_cp:
        raise ConfigError(
            f"symbol length {samples.shape[-1]} != n_fft + n_cp {params.n_fft + params.n_cp}"
        )
    return fft(samples[..., params.n_cp:])


def apply_link(
    time_samples: np.ndarray,
    channel_freq: np.ndarray | None,
    phn_theta: np.ndarray | None,
    noise: NoiseModel | None,
    rng: RngStream | None,
    params: OfdmParams,
) -> np.ndarray:
    """Run transmit samples through channel, receiver phase rotation and AWGN.

    The prefix makes per-symbol convolution circular, so the channel is applied
    as a per-bin multiply on the symbol core and the prefix is rebuilt from the
    core tail; the phase trace then rotates every output sample (prefix too).
    channel_freq is (n_symbols, n_fft) or None for a flat unit channel;
    phn_theta is (n_symbols, n_fft + n_cp) or None for a clean oscillator.
    """
    ts = np.atleast_2d(time_samples)
    n_sym, span = ts.shape
    if span != params.n_fft + params.n_cp:
        raise ConfigError("time samples have the wrong per-symbol length")
    core = ts[:, params.n_cp:]
    if channel_freq is not None:
        spec = fft(core) * np.atleast_2d(channel_freq)
        core = ifft(spec)
    out = np.concatenate([core[:, params.n_fft - params.n_cp:], core], axis=-1)
    if phn_theta is not None:
        out = out * np.exp(1j * np.atleast_2d(phn_theta))
    if noise is not None:
        if rng is None:
            raise ConfigError("an RngStream is required to draw noise")
        out = out + complex_gaussian(rng, out.shape, noise.sigma_w_sq)
    return out if time_samples.ndim > 1 else out[0]


@dataclass(frozen=True)
class Frame:
    """One transmitted frame: bits, coded stream, QAM grid and time samples."""

    info_bits: np.ndarray
    coded_bits: np.ndarray | None
    qam_grid: np.ndarray
    time_samples: np.ndarray
    params: OfdmParams = field(repr=False)
