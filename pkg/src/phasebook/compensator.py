"""Receiver: per-trajectory de-rotation, common-gain correction, best-match
trajectory selection, LS/MMSE channel estimation and the decision-feedback loop.

The candidate loop works on (K, n_fft) arrays throughout: de-rotating the
received time samples by every codebook trajectory, equalizing each candidate
and scoring it by squared distance to reference symbols (pilots first, pilots
plus re-encoded decisions inside the feedback loop).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, freq_corr_matrix, joint_corr_matrix
from .codebook import Codebook
from .coding import CodeParams, conv_encode, deinterleave, interleave, viterbi_decode
from .errors import ConfigError, EstimationError
from .numerics import fft
from .phy import NoiseModel, OfdmParams, qam_hard_demap, qam_map

CHANNEL_MAG_FLOOR = 1e-6


@dataclass
class OpCounter:
    """Dense-equivalent complex operation tally for executed receiver steps."""

    mults: int = 0
    adds: int = 0

    def matvec(self, rows: int, cols: int, count: int = 1) -> None:
        self.mults += count * rows * cols
        self.adds += count * rows * max(cols - 1, 0)

    def elementwise_mult(self, n: int, count: int = 1) -> None:
        self.mults += count * n

    def elementwise_add(self, n: int, count: int = 1) -> None:
        self.adds += count * n

    def fft(self, n: int, count: int = 1) -> None:
        log2n = int(np.log2(n))
        self.mults += count * (n // 2) * log2n
        self.adds += count * n * log2n


def derotate_all(y_core: np.ndarray, codebook: Codebook, counter: OpCounter | None = None) -> np.ndarray:
    """De-rotate the prefix-stripped samples by every trajectory, then FFT.

    Returns the (K, n_fft) grid of per-candidate frequency-domain vectors.
    """
    y_core = np.asarray(y_core)
    if y_core.ndim != 1 or y_core.shape[0] != codebook.n_fft:
        raise ConfigError("y_core must be a prefix-stripped vector of n_fft samples")
    rotated = codebook.rotors * y_core[None, :]
    if counter is not None:
        counter.elementwise_mult(codebook.n_fft, codebook.k)
        counter.fft(codebook.n_fft, codebook.k)
    return fft(rotated)


def circulant_derotator(codebook: Codebook, index: int) -> np.ndarray:
    """Frequency-domain equivalent of de-rotating by trajectory `index`.

    The matrix of DFT coefficients of exp(-j*phi_k): multiplying the plain
    FFT output by it equals the time-domain de-rotation path.
    """
    n = codebook.n_fft
    d = codebook.rotors[index]
    f = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / np.sqrt(n)
    return f @ np.diag(d) @ f.conj().T


def cpe_gain(
    derotated: np.ndarray,
    channel: np.ndarray,
    refs: np.ndarray,
    bins: np.ndarray,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Least-squares common complex gain over the reference bins, per candidate.

    Bins where the channel-estimate magnitude is below a small floor are
    excluded from both sums; a candidate with no usable bins at all raises.
    """
    derotated = np.atleast_2d(derotated)
    channel = np.broadcast_to(np.atleast_2d(channel), derotated.shape)
    yh = derotated[:, bins]
    hh = channel[:, bins]
    usable = np.abs(hh) >= CHANNEL_MAG_FLOOR
    if not usable.any(axis=1).all():
        raise EstimationError("no usable reference bins for some candidate")
    safe_h = np.where(usable, hh, 1.0)
    z = np.where(usable, yh / safe_h, 0.0)
    num = (np.conj(refs)[None, :] * z).sum(axis=1)
    den = (np.abs(refs[None, :]) ** 2 * usable).sum(axis=1)
    if counter is not None:
        k, nb = yh.shape
        counter.elementwise_mult(nb, 2 * k)  # divide by H, multiply by conj ref
        counter.elementwise_add(nb - 1, k)
        counter.mults += k  # final ratio
    return num / den


def equalize(
    derotated: np.ndarray,
    channel: np.ndarray,
    eta: np.ndarray | complex,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Per-bin zero-forcing with the common-gain correction applied."""
    derotated = np.atleast_2d(derotated)
    channel = np.atleast_2d(channel)
    eta_col = np.atleast_1d(eta)[:, None]
    if counter is not None:
        counter.elementwise_mult(derotated.shape[-1], 2 * derotated.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = derotated / (channel * eta_col)
    return out


def selection_cost(
    candidates: np.ndarray,
    refs: np.ndarray,
    bins: np.ndarray,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Squared distance to the reference symbols on the given bins, per candidate."""
    diff = np.atleast_2d(candidates)[:, bins] - refs[None, :]
    cost = np.einsum("kb,kb->k", diff, np.conj(diff)).real
    cost = np.where(np.isfinite(cost), cost, np.inf)
    if counter is not None:
        k, nb = diff.shape
        counter.elementwise_mult(nb, k)
        counter.elementwise_add(nb, k)
    return cost


@dataclass(frozen=True)
class SelectionResult:
    """Winning trajectory with its gain, equalized symbols and channel estimate."""

    k_star: int
    eta: complex
    symbols: np.ndarray
    channel_est: np.ndarray | None
    cost_min: float
    cost_max: float


def ls_channel(derotated: np.ndarray, refs: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Elementwise least-squares channel estimate at the given bins."""
    if np.any(refs == 0):
        raise ConfigError("reference symbols must be nonzero for the LS estimate")
    return np.atleast_2d(derotated)[:, bins] / refs[None, :]


@dataclass
class MmseGains:
    """Precomputed linear-MMSE smoothing matrices for one noise operating point.

    `pilot` maps pilot-bin LS estimates to all bins; `full` smooths a
    full-grid LS vector; `multi[d]` consumes the current full-grid LS stacked
    with d-1 previous symbols' selected LS vectors.
    """

    pilot: np.ndarray
    full: np.ndarray
    multi: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        chan_params: ChannelParams,
        ofdm: OfdmParams,
        noise: NoiseModel,
        d_past: int = 1,
    ) -> "MmseGains":
        n = ofdm.n_fft
        load = noise.sigma_w_sq / ofdm.es
        all_bins = np.arange(n)
        pilots = ofdm.pilot_indices
        if pilots.size == 0:
            raise ConfigError("pilot-based estimation requires pilots")

        def gain(cross, obs):
            a = obs + load * np.eye(obs.shape[0])
            return np.linalg.solve(a, cross.conj().T).conj().T

        r_ap = freq_corr_matrix(chan_params, all_bins, pilots)
        r_pp = freq_corr_matrix(chan_params, pilots, pilots)
        r_aa = freq_corr_matrix(chan_params, all_bins, all_bins)
        pilot = gain(r_ap, r_pp)
        full = gain(r_aa, r_aa)
        multi: dict[int, np.ndarray] = {}
        for d in range(2, d_past + 1):
            big = joint_corr_matrix(chan_params, d, all_bins)
            multi[d] = gain(big[:n, :], big)
        return cls(pilot=pilot, full=full, multi=multi)


def mmse_channel(
    ls: np.ndarray,
    which: str,
    gains: MmseGains,
    history: list[np.ndarray] | None = None,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Apply the precomputed MMSE gain; `which` is 'pilot', 'full' or 'multi'."""
    ls = np.atleast_2d(ls)
    if which == "pilot":
        w = gains.pilot
        obs = ls
    elif which == "full":
        w = gains.full
        obs = ls
    elif which == "multi":
        if not history:
            w = gains.full
            obs = ls
        else:
            d = len(history) + 1
            if d not in gains.multi:
                raise ConfigError(f"no multi-symbol gain precomputed for depth {d}")
            w = gains.multi[d]
            k = ls.shape[0]
            past = np.concatenate(history)[None, :]
            obs = np.concatenate([ls, np.broadcast_to(past, (k, past.shape[1]))], axis=1)
    else:
        raise ConfigError(f"unknown MMSE mode {which!r}")
    if counter is not None:
        counter.matvec(w.shape[0], w.shape[1], count=obs.shape[0])
    return obs @ w.T


def _select(cost: np.ndarray) -> int:
    return int(np.argmin(cost))  # ties break to the smallest index


def slicer_cost(
    candidates: np.ndarray,
    ofdm: OfdmParams,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Distance of equalized data symbols to the nearest constellation point.

    The practical decision-distance criterion: a wrongly de-rotated candidate
    leaves inter-carrier leakage that pushes every data symbol off the grid,
    so this statistic discriminates trajectories even when a per-candidate
    channel estimate has absorbed the common rotation.
    """
    data = np.atleast_2d(candidates)[:, ofdm.data_indices] / np.sqrt(ofdm.es)
    flat = data.ravel()
    hard = qam_hard_demap(flat, ofdm.bits_per_symbol)
    sliced = qam_map(hard, ofdm.bits_per_symbol).reshape(data.shape)
    diff = data - sliced
    cost = np.einsum("kb,kb->k", diff, np.conj(diff)).real * ofdm.es
    if counter is not None:
        k, nb = data.shape
        counter.elementwise_mult(nb, k)
        counter.elementwise_add(nb, k)
    return np.where(np.isfinite(cost), cost, np.inf)


def receive_symbol_alg1(
    y_core: np.ndarray,
    codebook: Codebook,
    channel: np.ndarray,
    ofdm: OfdmParams,
    counter: OpCounter | None = None,
    pilot_cost_only: bool = False,
) -> SelectionResult:
    """Best-match receiver for a known channel, no feedback.

    De-rotates by every trajectory, fits the common gain on the pilots, and
    scores each candidate by the pilot-bin distance plus the decision distance
    of its equalized data symbols to the nearest constellation point (the
    practical hard-decision criterion; `pilot_cost_only` restricts the score
    to the pilot bins).
    """
    pilots = ofdm.pilot_indices
    if pilots.size == 0:
        raise ConfigError("the trajectory receiver needs pilot bins")
    refs = np.full(pilots.size, ofdm.pilot_value * np.sqrt(ofdm.es))
    grid = derotate_all(y_core, codebook, counter)
    chan = np.broadcast_to(np.atleast_2d(channel), grid.shape)
    eta = cpe_gain(grid, chan, refs, pilots, counter)
    cand = equalize(grid, chan, eta, counter)
    cost = selection_cost(cand[:, pilots], refs, np.arange(pilots.size), counter)
    if not pilot_cost_only:
        cost = cost + slicer_cost(cand, ofdm, counter)
    k_star = _select(cost)
    return SelectionResult(
        k_star=k_star,
        eta=complex(eta[k_star]),
        symbols=cand[k_star],
        channel_est=None,
        cost_min=float(cost[k_star]),
        cost_max=float(cost.max()),
    )


@dataclass
class SymbolDiag:
    k_star: int
    eta: complex
    cost_min: float
    cost_max: float
    chest_mse: float | None


@dataclass
class FrameResult:
    info_bits: np.ndarray
    symbol_grid: np.ndarray
    diagnostics: list[list[SymbolDiag]]


def _decode_grid(
    s_hat: np.ndarray, ofdm: OfdmParams, code: CodeParams
) -> tuple[np.ndarray, np.ndarray]:
    """Hard-demap the data bins, deinterleave and Viterbi-decode one frame."""
    data = s_hat[:, ofdm.data_indices] / np.sqrt(ofdm.es)
    hard = qam_hard_demap(data.ravel(), ofdm.bits_per_symbol)
    coded = deinterleave(hard, code.interleave_span)
    return viterbi_decode(coded, code), coded


def _reencode_grid(info_bits: np.ndarray, ofdm: OfdmParams, code: CodeParams) -> np.ndarray:
    """Re-encode decisions into a reference grid; pilot bins carry the true pilots."""
    coded = conv_encode(info_bits, code)
    syms = qam_map(interleave(coded, code.interleave_span), ofdm.bits_per_symbol)
    n_sym = code.interleave_span
    grid = np.empty((n_sym, ofdm.n_fft), dtype=complex)
    root_es = np.sqrt(ofdm.es)
    grid[:, ofdm.pilot_indices] = ofdm.pilot_value * root_es
    grid[:, ofdm.data_indices] = syms.reshape(n_sym, -1) * root_es
    return grid


def receive_frame_alg2(
    y_frame: np.ndarray,
    codebook: Codebook,
    ofdm: OfdmParams,
    code: CodeParams,
    n_iters: int = 0,
    gains: MmseGains | None = None,
    channel_true: np.ndarray | None = None,
    true_channel_for_mse: np.ndarray | None = None,
    counter: OpCounter | None = None,
) -> FrameResult:
    """Joint channel estimation and trajectory compensation over a coded frame.

    Pass 0 estimates each candidate's channel from pilots (skipped when
    `channel_true` is supplied), fits the pilot gain and selects by pilot
    distance.  The frame is then decoded; each further iteration re-encodes
    the decisions into a full reference grid and repeats the loop with
    full-grid LS + MMSE smoothing (stacking up to d_past previous symbols'
    selected LS vectors), all-bin gain and all-bin distance.
    """
    y_frame = np.atleast_2d(y_frame)
    n_sym = y_frame.shape[0]
    if n_sym != code.interleave_span:
        raise ConfigError(
            f"frame must span {code.interleave_span} symbols, got {n_sym}"
        )
    known = channel_true is not None
    if not known and gains is None:
        raise ConfigError("estimation mode requires precomputed MMSE gains")
    pilots = ofdm.pilot_indices
    pilot_refs = np.full(pilots.size, ofdm.pilot_value * np.sqrt(ofdm.es))
    all_bins = np.arange(ofdm.n_fft)
    # de-rotate once per symbol, reused across iterations
    grids = [derotate_all(y_frame[m, ofdm.n_cp:], codebook, counter) for m in range(n_sym)]

    diag_all: list[list[SymbolDiag]] = []
    s_bar: np.ndarray | None = None
    s_hat = np.empty((n_sym, ofdm.n_fft), dtype=complex)
    info_bits = None
    for it in range(n_iters + 1):
        diag_pass: list[SymbolDiag] = []
        ls_history: list[np.ndarray] = []
        for m in range(n_sym):
            grid = grids[m]
            if it == 0:
                if known:
                    chan = np.broadcast_to(channel_true[m][None, :], grid.shape)
                    eta = cpe_gain(grid, chan, pilot_refs, pilots, counter)
                    cand = equalize(grid[:, pilots], chan[:, pilots], eta, counter)
                    cost = selection_cost(cand, pilot_refs, np.arange(pilots.size), counter)
                else:
                    # With a per-candidate channel estimate the pilot residual
                    # barely separates trajectories (the estimate absorbs the
                    # common rotation), so the pilot cost is augmented with the
                    # decision-distance criterion over the data bins.
                    ls_p = ls_channel(grid, pilot_refs, pilots)
                    chan = mmse_channel(ls_p, "pilot", gains, counter=counter)
                    eta = cpe_gain(grid, chan, pilot_refs, pilots, counter)
                    cand = equalize(grid, chan, eta, counter)
                    cost = selection_cost(cand[:, pilots], pilot_refs, np.arange(pilots.size), counter)
                    cost = cost + slicer_cost(cand, ofdm, counter)
            else:
                refs = s_bar[m]
                if known:
                    chan = np.broadcast_to(channel_true[m][None, :], grid.shape)
                    ls_full = None
                else:
                    ls_full = ls_channel(grid, refs, all_bins)
                    if counter is not None:
                        counter.elementwise_mult(ofdm.n_fft, codebook.k)
                    chan = mmse_channel(
                        ls_full, "multi", gains, history=ls_history, counter=counter
                    )
                eta = cpe_gain(grid, chan, refs, all_bins, counter)
                cand = equalize(grid, chan, eta, counter)
                cost = selection_cost(cand, refs, all_bins, counter)
            k_star = _select(cost)
            s_hat[m] = equalize(grid[k_star], chan[k_star], eta[k_star])[0]
            if it > 0 and not known:
                max_hist = max(gains.multi) - 1 if gains.multi else 0
                ls_history.insert(0, ls_full[k_star])
                del ls_history[max_hist:]
            chest = None
            if true_channel_for_mse is not None and not known:
                diff = chan[k_star] - true_channel_for_mse[m]
                chest = float(np.mean(np.abs(diff) ** 2))
            diag_pass.append(
                SymbolDiag(
                    k_star=k_star,
                    eta=complex(eta[k_star]),
                    cost_min=float(cost[k_star]),
                    cost_max=float(cost.max()),
                    chest_mse=chest,
                )
            )
        diag_all.append(diag_pass)
        info_bits, _ = _decode_grid(s_hat, ofdm, code)
        if it < n_iters:
            s_bar = _reencode_grid(info_bits, ofdm, code)
    return FrameResult(info_bits=info_bits, symbol_grid=s_hat.copy(), diagnostics=diag_all)
