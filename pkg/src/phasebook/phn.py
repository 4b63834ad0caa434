"""Phase-noise trace generators.

Two oscillator models: a free-running oscillator as a Gaussian random walk,
and a PLL-stabilised oscillator as a mean-reverting AR(1) process.  Traces
cover whole frames including cyclic-prefix samples (a physical oscillator
does not pause during the prefix), laid out as (symbols, n_cp + n_fft).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .numerics import RngStream

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class WienerPhnParams:
    """Random-walk oscillator: per-sample increment variance 2*pi*beta_t/n_fft."""

    beta_t: float
    n_fft: int = 64
    n_cp: int = 16

    def __post_init__(self):
        if self.beta_t < 0:
            raise ConfigError(f"beta_t must be non-negative, got {self.beta_t}")
        if self.n_fft < 1 or self.n_cp < 0:
            raise ConfigError("n_fft must be >= 1 and n_cp >= 0")

    @property
    def sigma_eps_sq(self) -> float:
        return TWO_PI * self.beta_t / self.n_fft


@dataclass(frozen=True)
class PllPhnParams:
    """Charge-pump PLL oscillator, modelled as a first-order AR(1) discretisation.

    theta(n+1) = (1 - gamma) * theta(n) + eps(n), with reversion rate
    gamma = 2*pi*f_pll/f_s and driving variance 2*pi*(beta_t_vco + beta_t_ref)/n_fft.
    f_lp and f_pd are accepted and validated but do not enter the recursion.
    """

    beta_t_vco: float
    beta_t_ref: float = 0.0
    f_lp: float = 20e3
    f_pd: float = 20e3
    f_pll: float = 100e3
    f_c: float = 5e9
    f_ref: float = 100e6
    f_s: float = 25e6
    n_fft: int = 64
    n_cp: int = 16

    def __post_init__(self):
        if self.beta_t_vco < 0 or self.beta_t_ref < 0:
            raise ConfigError("beta_t values must be non-negative")
        for name in ("f_lp", "f_pd", "f_pll", "f_c", "f_ref", "f_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.gamma >= 2.0:
            raise ConfigError(
                f"unstable discretisation: 2*pi*f_pll/f_s = {self.gamma:.4g} >= 2"
            )

    @property
    def gamma(self) -> float:
        return TWO_PI * self.f_pll / self.f_s

    @property
    def sigma_drive_sq(self) -> float:
        return TWO_PI * (self.beta_t_vco + self.beta_t_ref) / self.n_fft


@dataclass(frozen=True)
class PhnTrace:
    """Per-sample phase (radians) over a frame, shape (symbols, n_cp + n_fft)."""

    theta: np.ndarray
    n_cp: int

    @property
    def n_symbols(self) -> int:
        return self.theta.shape[0]

    def core(self) -> np.ndarray:
        """Phase over the n_fft samples that survive prefix removal."""
        return self.theta[:, self.n_cp:]

    def psi(self) -> np.ndarray:
        """Accumulated phase at the start of each symbol core."""
        return self.theta[:, self.n_cp]


def zero_trace(n_symbols: int, n_fft: int, n_cp: int) -> PhnTrace:
    return PhnTrace(np.zeros((n_symbols, n_fft + n_cp)), n_cp)


def _draw_increments(rng: RngStream, n: int, sigma_sq: float) -> np.ndarray:
    if sigma_sq == 0.0:
        return np.zeros(n)
    return np.sqrt(sigma_sq) * rng.generator.standard_normal(n)


def gen_wiener(params: WienerPhnParams, n_symbols: int, rng: RngStream) -> PhnTrace:
    """One continuous random walk across the frame, prefix samples included."""
    if n_symbols < 1:
        raise ConfigError("n_symbols must be >= 1")
    span = params.n_fft + params.n_cp
    eps = _draw_increments(rng, n_symbols * span, params.sigma_eps_sq)
    theta = np.cumsum(eps).reshape(n_symbols, span)
    return PhnTrace(theta, params.n_cp)


def gen_pll(params: PllPhnParams, n_symbols: int, rng: RngStream) -> PhnTrace:
    """Mean-reverting AR(1) trace starting from zero phase."""
    if n_symbols < 1:
        raise ConfigError("n_symbols must be >= 1")
    span = params.n_fft + params.n_cp
    total = n_symbols * span
    eps = _draw_increments(rng, total, params.sigma_drive_sq)
    rho = 1.0 - params.gamma
    theta = lfilter([1.0], [1.0, -rho], eps)
    return PhnTrace(theta.reshape(n_symbols, span), params.n_cp)


def rms_drift_deg(beta_t: float) -> float:
    """RMS phase drift accumulated over one n_fft-sample symbol, in degrees."""
    return 180.0 * np.sqrt(TWO_PI * beta_t) / np.pi
