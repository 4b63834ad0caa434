"""Deterministic numeric kernel: unitary FFT, special functions, seeded RNG streams."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ConfigError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def fft(x, inverse: bool = False) -> np.ndarray:
    """Unitary FFT along the last axis (1/sqrt(N) scaling in both directions).

    The length must be a power of two; anything else is a configuration error
    so that mis-sized grids fail loudly instead of silently zero-padding.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ConfigError(f"transform length must be a power of two, got {n}")
    if inverse:
        return np.fft.ifft(x, axis=-1) * np.sqrt(n)
    return np.fft.fft(x, axis=-1) / np.sqrt(n)


def ifft(x) -> np.ndarray:
    return fft(x, inverse=True)


def erf_inv(p):
    """Inverse error function on (-1, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(np.abs(arr) >= 1.0):
        raise ConfigError(f"erf_inv domain is |p| < 1, got {p}")
    out = special.erfinv(arr)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out


def bessel_j0(x):
    """Zeroth-order Bessel function of the first kind."""
    out = special.j0(x)
    return float(out) if np.isscalar(x) else out


@dataclass
class RngStream:
    """Counter-based RNG substream.

    Identical (seed, stream_id) pairs replay identical sample sequences across
    runs and processes; distinct stream ids are statistically independent, so
    phase-noise, channel, noise and data draws can share one master seed.
    stream_id may be an int or a tuple of ints (hierarchical derivation).
    """

    seed: int
    stream_id: int | tuple[int, ...] = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def substream(self, *ids: int) -> "RngStream":
        """Derive an independent child stream."""
        base = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        return RngStream(self.seed, base + tuple(ids))


def gaussian_samples(rng: RngStream, n: int, sigma: float) -> np.ndarray:
    """n i.i.d. zero-mean Gaussian samples with standard deviation sigma."""
    if sigma < 0:
        raise ConfigError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return np.zeros(n)
    return sigma * rng.generator.standard_normal(n)


def complex_gaussian(rng: RngStream, shape, variance: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with E|w|^2 = variance."""
    if variance < 0:
        raise ConfigError(f"variance must be non-negative, got {variance}")
    if variance == 0.0:
        return np.zeros(shape, dtype=complex)
    g = rng.generator
    s = np.sqrt(variance / 2.0)
    return s * (g.standard_normal(shape) + 1j * g.standard_normal(shape))
