"""Piecewise-constant phase-trajectory codebooks from quantized random-walk statistics.

An n_fft-sample symbol is split into n_segments pieces.  The per-segment step
of the segment-averaged random walk is Gaussian with variance
(2L^2+1)/(3L) * sigma_eps_sq; that Gaussian is quantized into n_regions
equiprobable regions represented by their conditional means.  Enumerating all
step sequences over segments 1..J-1 (the first segment is pinned to zero, a
common offset being estimated separately at the receiver) yields
K = Q^(J-1) candidate trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError
from .numerics import RngStream, erf_inv

DEFAULT_K_CAP = 1_000_000


def step_variance(sigma_eps_sq: float, seg_len: float) -> float:
    """Variance of the difference of consecutive segment averages of a random walk."""
    if seg_len < 1:
        raise ConfigError(f"segment length must be >= 1, got {seg_len}")
    return (2.0 * seg_len**2 + 1.0) / (3.0 * seg_len) * sigma_eps_sq


def region_boundaries(n_regions: int, sigma_x: float) -> np.ndarray:
    """Finite interior edges splitting N(0, sigma_x^2) into equiprobable regions.

    Returns the Q-1 ascending edges; Q=1 gives an empty array (one region).
    """
    q = n_regions
    if q < 1:
        raise ConfigError(f"n_regions must be >= 1, got {q}")
    if q == 1:
        return np.array([])
    scale = math.sqrt(2.0) * sigma_x
    if q % 2 == 1:
        pos = [scale * erf_inv((2 * l - 1) / q) for l in range(1, (q - 1) // 2 + 1)]
    else:
        pos = [scale * erf_inv(2 * l / q) for l in range(1, q // 2)]
        pos = [0.0] + pos
    pos = np.array(pos)
    if q % 2 == 1:
        return np.concatenate([-pos[::-1], pos])
    # even: 0 appears once
    return np.concatenate([-pos[:0:-1], pos])


def _gauss_pdf_integral(a: float, b: float, sigma: float) -> float:
    """P(a < X < b) for X ~ N(0, sigma^2)."""
    fa = math.erf(a / (math.sqrt(2.0) * sigma)) if math.isfinite(a) else math.copysign(1.0, a)
    fb = math.erf(b / (math.sqrt(2.0) * sigma)) if math.isfinite(b) else math.copysign(1.0, b)
    return 0.5 * (fb - fa)


def _x_exp_term(x: float, sigma: float) -> float:
    """exp(-x^2 / (2 sigma^2)), with the vanishing-tail convention at +-inf."""
    if not math.isfinite(x):
        return 0.0
    return math.exp(-0.5 * x * x / (sigma * sigma))


def quantization_points(boundaries: np.ndarray, sigma_x: float) -> np.ndarray:
    """Conditional mean of each region: the minimum-MSE representative points.

    The point for region (a, b) is
    sigma*sqrt(2/pi) * (exp(-a^2/2s^2) - exp(-b^2/2s^2)) / (erf(b/sqrt(2)s) - erf(a/sqrt(2)s)),
    antisymmetric and zero-mean overall.
    """
    if sigma_x == 0.0:
        return np.zeros(len(boundaries) + 1)
    edges = np.concatenate([[-np.inf], np.asarray(boundaries, dtype=float), [np.inf]])
    pts = []
    for a, b in zip(edges[:-1], edges[1:]):
        num = sigma_x * math.sqrt(2.0 / math.pi) * (_x_exp_term(a, sigma_x) - _x_exp_term(b, sigma_x))
        den = 2.0 * _gauss_pdf_integral(a, b, sigma_x)
        pts.append(num / den)
    return np.array(pts)


def _second_moment_integral(a: float, b: float, sigma: float) -> float:
    """Integral of x^2 * pdf over (a, b) for N(0, sigma^2), tails handled."""
    mass = _gauss_pdf_integral(a, b, sigma)
    ta = a * _x_exp_term(a, sigma) if math.isfinite(a) else 0.0
    tb = b * _x_exp_term(b, sigma) if math.isfinite(b) else 0.0
    return sigma * sigma * mass - sigma / math.sqrt(2.0 * math.pi) * (tb - ta)


def _segment_lengths(n_fft: int, n_segments: int) -> tuple[int, ...]:
    """Balanced partition of n_fft samples into n_segments near-equal pieces."""
    offsets = [round(j * n_fft / n_segments) for j in range(n_segments + 1)]
    lengths = tuple(int(b - a) for a, b in zip(offsets[:-1], offsets[1:]))
    if min(lengths) < 1:
        raise ConfigError(f"n_segments={n_segments} too large for n_fft={n_fft}")
    return lengths


@dataclass(frozen=True)
class CodebookDesign:
    """Quantizer and segmentation parameters for one codebook."""

    n_fft: int
    n_segments: int
    n_regions: int
    sigma_eps_sq: float
    seg_lengths: tuple[int, ...]
    sigma_x_sq: float
    boundaries: np.ndarray
    points: np.ndarray
    probs: np.ndarray

    @property
    def seg_len(self) -> float:
        return self.n_fft / self.n_segments

    @property
    def n_trajectories(self) -> int:
        return self.n_regions ** (self.n_segments - 1)


def design_codebook(
    n_fft: int, n_segments: int, n_regions: int, sigma_eps_sq: float
) -> CodebookDesign:
    """Build and validate the quantizer design for (n_fft, J, Q, sigma_eps_sq)."""
    if n_segments < 1 or n_regions < 1:
        raise ConfigError("n_segments and n_regions must be >= 1")
    if sigma_eps_sq < 0:
        raise ConfigError("sigma_eps_sq must be non-negative")
    seg_lengths = _segment_lengths(n_fft, n_segments)
    sigma_x_sq = step_variance(sigma_eps_sq, n_fft / n_segments)
    sigma_x = math.sqrt(sigma_x_sq)
    boundaries = region_boundaries(n_regions, sigma_x)
    points = quantization_points(boundaries, sigma_x)
    probs = np.full(n_regions, 1.0 / n_regions)
    design = CodebookDesign(
        n_fft=n_fft,
        n_segments=n_segments,
        n_regions=n_regions,
        sigma_eps_sq=float(sigma_eps_sq),
        seg_lengths=seg_lengths,
        sigma_x_sq=sigma_x_sq,
        boundaries=boundaries,
        points=points,
        probs=probs,
    )
    _validate_design(design)
    return design


def _validate_design(design: CodebookDesign) -> None:
    if sum(design.seg_lengths) != design.n_fft:
        raise ConfigError("segment lengths must partition the symbol")
    if abs(float(design.probs.sum()) - 1.0) > 1e-12:
        raise ConfigError("region probabilities must sum to 1")
    mean = float(design.probs @ design.points)
    if abs(mean) > 1e-12:
        raise ConfigError(f"quantizer is not zero-mean: {mean}")
    if design.sigma_x_sq > 0:
        if np.any(np.diff(design.boundaries) <= 0):
            raise ConfigError("boundaries must be strictly increasing")
        if np.any(np.diff(design.points) <= 0):
            raise ConfigError("points must be strictly increasing")


def quantization_error_variance(design: CodebookDesign) -> float:
    """Mean squared quantization error of the per-segment step quantizer."""
    sigma_x = math.sqrt(design.sigma_x_sq)
    if sigma_x == 0.0:
        return 0.0
    edges = np.concatenate([[-np.inf], design.boundaries, [np.inf]])
    total = 0.0
    for (a, b), point in zip(zip(edges[:-1], edges[1:]), design.points):
        mass = _gauss_pdf_integral(a, b, sigma_x)
        cond_second = _second_moment_integral(a, b, sigma_x) / mass
        total += mass * (cond_second - point * point)
    return total


@dataclass(frozen=True)
class Codebook:
    """K piecewise-constant phase trajectories of length n_fft (radians)."""

    design: CodebookDesign
    trajectories: np.ndarray  # (K, n_fft)

    @property
    def k(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_fft(self) -> int:
        return self.trajectories.shape[1]

    @cached_property
    def rotors(self) -> np.ndarray:
        """exp(-j * phi_k(n)): one multiply per sample de-rotates by trajectory k."""
        return np.exp(-1j * self.trajectories)

    @cached_property
    def zero_index(self) -> int | None:
        """Index of the all-zero trajectory, present exactly once for odd Q."""
        flat = np.flatnonzero(np.abs(self.trajectories).max(axis=1) == 0.0)
        return int(flat[0]) if flat.size else None


def build_codebook(design: CodebookDesign, k_cap: int = DEFAULT_K_CAP) -> Codebook:
    """Enumerate all Q^(J-1) step sequences into piecewise-constant trajectories."""
    q = design.n_regions
    j = design.n_segments
    k = design.n_trajectories
    if k > k_cap:
        raise ConfigError(f"codebook size {k} exceeds cap {k_cap}")
    if j == 1:
        levels = np.zeros((1, 1))
    else:
        # lexicographic enumeration: index of segment 1 varies slowest
        grids = np.meshgrid(*([design.points] * (j - 1)), indexing="ij")
        steps = np.stack([g.ravel() for g in grids], axis=1)  # (K, J-1)
        levels = np.concatenate([np.zeros((k, 1)), np.cumsum(steps, axis=1)], axis=1)
    traj = np.repeat(levels, np.array(design.seg_lengths), axis=1)
    return Codebook(design=design, trajectories=traj)


def cpe_only_mse(n_fft: int, sigma_eps_sq: float) -> float:
    """Residual MSE of correcting a random walk by a single common phase."""
    return (n_fft - 1) * (n_fft + 1) * sigma_eps_sq / 6.0


def analytic_mse(design: CodebookDesign, normalized: bool = True) -> float:
    """Closed-form approximation of the best-match trajectory MSE.

    Segment-averaging residual plus accumulated quantization error,
    (N+J)(N-J)/(6J) * sigma_eps_sq + L*(J-1)*sigma_q_sq, optionally normalized
    by the common-phase-only residual (N-1)(N+1)*sigma_eps_sq/6.
    """
    n = design.n_fft
    j = design.n_segments
    seg_term = (n + j) * (n - j) / (6.0 * j) * design.sigma_eps_sq
    quant_term = design.seg_len * (j - 1) * quantization_error_variance(design)
    raw = seg_term + quant_term
    if not normalized:
        return raw
    if design.sigma_eps_sq == 0.0:
        raise ConfigError("normalized MSE undefined for sigma_eps_sq = 0")
    return raw / cpe_only_mse(n, design.sigma_eps_sq)


def simulated_mse(
    design: CodebookDesign,
    n_realizations: int,
    rng: RngStream,
    normalized: bool = True,
    batch: int = 64,
) -> tuple[float, float]:
    """Monte-Carlo best-match MSE over random-walk realizations.

    For each realization the cost of trajectory k is the squared residual
    after removing the optimal common offset, which for fixed k is the sample
    mean of (theta - phi_k); the minimum over the whole codebook is averaged.
    Returns (mse, standard_error), normalized like `analytic_mse` by default.
    """
    if n_realizations < 1:
        raise ConfigError("n_realizations must be >= 1")
    cb = build_codebook(design)
    n = design.n_fft
    phi = cb.trajectories
    phi_norm_sq = np.einsum("kn,kn->k", phi, phi)
    phi_sum = phi.sum(axis=1)
    sigma_eps = math.sqrt(design.sigma_eps_sq)
    gen = rng.generator

    mins = np.empty(n_realizations)
    done = 0
    while done < n_realizations:
        b = min(batch, n_realizations - done)
        theta = np.cumsum(sigma_eps * gen.standard_normal((b, n)), axis=1)
        th_norm_sq = np.einsum("bn,bn->b", theta, theta)
        th_sum = theta.sum(axis=1)
        cross = theta @ phi.T  # (b, K)
        sum_diff = th_sum[:, None] - phi_sum[None, :]
        cost = th_norm_sq[:, None] + phi_norm_sq[None, :] - 2.0 * cross - sum_diff**2 / n
        mins[done : done + b] = cost.min(axis=1)
        done += b

    mse = float(mins.mean())
    se = float(mins.std(ddof=1) / math.sqrt(n_realizations)) if n_realizations > 1 else 0.0
    if normalized:
        if design.sigma_eps_sq == 0.0:
            return (0.0, 0.0) if mse == 0.0 else (math.inf, math.inf)
        norm = cpe_only_mse(n, design.sigma_eps_sq)
        return mse / norm, se / norm
    return mse, se


def save_codebook(cb: Codebook, path) -> None:
    """Write a codebook as a flat text table: header lines then K rows of N phases."""
    d = cb.design
    header = (
        "phasebook codebook v1\n"
        f"n_fft={d.n_fft} n_segments={d.n_segments} n_regions={d.n_regions} "
        f"sigma_eps_sq={d.sigma_eps_sq!r} k={cb.k}"
    )
    np.savetxt(path, cb.trajectories, header=header)


def load_codebook(path) -> Codebook:
    """Read a codebook written by `save_codebook`, revalidating its shape."""
    meta: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    meta[key] = val
    required = {"n_fft", "n_segments", "n_regions", "sigma_eps_sq", "k"}
    if not required <= meta.keys():
        raise ConfigError(f"codebook header missing keys: {sorted(required - meta.keys())}")
    design = design_codebook(
        int(meta["n_fft"]), int(meta["n_segments"]), int(meta["n_regions"]),
        float(meta["sigma_eps_sq"]),
    )
    traj = np.loadtxt(path, ndmin=2)
    if traj.shape != (int(meta["k"]), design.n_fft):
        raise ConfigError(
            f"codebook table shape {traj.shape} does not match header "
            f"({meta['k']} x {design.n_fft})"
        )
    if np.any(traj[:, : design.seg_lengths[0]] != 0.0):
        raise ConfigError("first segment of every trajectory must be zero")
    return Codebook(design=design, trajectories=traj)
