"""Monte-Carlo experiment runner: configs, seeded BER sweeps, MSE grids,
CSV/plot emission and operation-count instrumentation.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan_mod
from . import codebook as cb_mod
from . import phn as phn_mod
from .coding import CodeParams, conv_encode, frame_bit_budget, interleave, viterbi_decode
from .coding import deinterleave
from .compensator import (
    MmseGains,
    OpCounter,
    receive_frame_alg2,
    receive_symbol_alg1,
)
from .errors import ConfigError
from .numerics import RngStream
from .phy import (
    NoiseModel,
    OfdmParams,
    apply_link,
    assemble_grid,
    noise_from_ebn0,
    ofdm_demodulate,
    ofdm_modulate,
    qam_hard_demap,
    qam_map,
)

# component sub-stream ids within one (point, frame) seed
_S_PHN, _S_CHAN, _S_NOISE, _S_DATA = 0, 1, 2, 3


@dataclass
class SimConfig:
    """Flat, file-mirrorable experiment description (key = value per field)."""

    label: str = ""
    receiver: str = "codebook"  # codebook | ideal
    modulation_bits: int = 4
    n_fft: int = 64
    n_cp: int = 16
    n_pilots: int = 8
    q: int = 3
    j_segments: int = 4
    coded: bool = True
    interleave_span: int = 20
    n_symbols_per_frame: int = 20  # uncoded frames; coded frames follow the span
    phn_model: str = "wiener"  # wiener | pll | none
    beta_t: float = 0.01
    pll_beta_t_vco: float = 0.01
    pll_beta_t_ref: float = 2.0 ** -9
    pll_f_lp: float = 20e3
    pll_f_pd: float = 20e3
    pll_f_pll: float = 100e3
    pll_f_ref: float = 100e6
    channel: str = "rayleigh"  # rayleigh | awgn
    known_channel: bool = False
    f_c: float = 5e9
    f_s: float = 25e6
    tau_rms_samples: float = 3.0
    speed_kmh: float = 7.0
    n_taps: int = 10
    doppler_norm: float | None = None
    d_past: int = 1
    n_iters: int = 0
    ebn0_db_grid: tuple[float, ...] = (8.0, 12.0, 16.0)
    frames_per_point: int = 200
    err_target: int = 200
    master_seed: int = 20260810
    beta_t_hat: float | None = None
    doppler_hat: float | None = None

    def __post_init__(self):
        grid = tuple(float(x) for x in self.ebn0_db_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("ebn0_db_grid must be strictly increasing")
        self.ebn0_db_grid = grid
        if self.receiver not in ("codebook", "ideal"):
            raise ConfigError(f"unknown receiver {self.receiver!r}")
        if self.phn_model not in ("wiener", "pll", "none"):
            raise ConfigError(f"unknown phn_model {self.phn_model!r}")
        if self.channel not in ("rayleigh", "awgn"):
            raise ConfigError(f"unknown channel {self.channel!r}")
        if self.channel == "awgn" and not self.known_channel:
            raise ConfigError("awgn runs assume known_channel = true")
        if self.q < 1 or self.j_segments < 1:
            raise ConfigError("q and j_segments must be >= 1")
        if self.frames_per_point < 1 or self.err_target < 1:
            raise ConfigError("frames_per_point and err_target must be >= 1")
        if self.n_iters < 0 or self.d_past < 1:
            raise ConfigError("n_iters must be >= 0 and d_past >= 1")
        if self.coded and self.receiver == "codebook" and not self.known_channel:
            if self.channel != "rayleigh":
                raise ConfigError("channel estimation requires the rayleigh model")

    # -- derived pieces ----------------------------------------------------
    def ofdm(self) -> OfdmParams:
        return OfdmParams(
            n_fft=self.n_fft,
            n_cp=self.n_cp,
            n_pilots=self.n_pilots,
            bits_per_symbol=self.modulation_bits,
        )

    def code(self) -> CodeParams:
        return CodeParams(interleave_span=self.interleave_span)

    def chan_params(self, assumed: bool = False) -> chan_mod.ChannelParams:
        doppler = self.doppler_norm
        if assumed and self.doppler_hat is not None:
            doppler = self.doppler_hat
        return chan_mod.make_channel_params(
            n_fft=self.n_fft,
            n_cp=self.n_cp,
            f_c=self.f_c,
            f_s=self.f_s,
            tau_rms=self.tau_rms_samples,
            speed_kmh=self.speed_kmh,
            n_taps=self.n_taps,
            doppler_norm=doppler,
        )

    def design_beta_t(self) -> float:
        if self.beta_t_hat is not None:
            return self.beta_t_hat
        if self.phn_model == "pll":
            return self.pll_beta_t_vco
        if self.phn_model == "none":
            return 0.0
        return self.beta_t

    def build_codebook(self) -> cb_mod.Codebook | None:
        if self.receiver != "codebook":
            return None
        sigma_eps_sq = 2.0 * math.pi * self.design_beta_t() / self.n_fft
        design = cb_mod.design_codebook(self.n_fft, self.j_segments, self.q, sigma_eps_sq)
        return cb_mod.build_codebook(design)

    def echo(self) -> dict:
        return dataclasses.asdict(self)


def config_hash(config: SimConfig) -> str:
    blob = json.dumps(config.echo(), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class PointResult:
    ebn0_db: float
    bit_errors: int
    bits: int
    frames: int
    frame_errors: int
    zero_traj_selected: int
    symbols_seen: int
    chest_mse_sum: float
    chest_mse_count: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else math.nan

    @property
    def stderr(self) -> float:
        if not self.bits:
            return math.nan
        p = self.ber
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.bits)

    @property
    def zero_traj_fraction(self) -> float:
        return self.zero_traj_selected / self.symbols_seen if self.symbols_seen else math.nan


@dataclass
class SimResult:
    config: dict
    config_hash: str
    master_seed: int
    points: list[PointResult]
    wall_time_s: float = 0.0
    op_counts: dict | None = None

    def ber_array(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])


def _frame_seed(master_seed: int, point_idx: int, frame_idx: int, component: int) -> RngStream:
    return RngStream(master_seed, (point_idx, frame_idx, component))


def _gen_phn(config: SimConfig, n_sym: int, rng: RngStream) -> np.ndarray | None:
    if config.phn_model == "none":
        return None
    if config.phn_model == "wiener":
        if config.beta_t == 0.0:
            return None
        params = phn_mod.WienerPhnParams(config.beta_t, config.n_fft, config.n_cp)
        return phn_mod.gen_wiener(params, n_sym, rng).theta
    params = phn_mod.PllPhnParams(
        beta_t_vco=config.pll_beta_t_vco,
        beta_t_ref=config.pll_beta_t_ref,
        f_lp=config.pll_f_lp,
        f_pd=config.pll_f_pd,
        f_pll=config.pll_f_pll,
        f_c=config.f_c,
        f_ref=config.pll_f_ref,
        f_s=config.f_s,
        n_fft=config.n_fft,
        n_cp=config.n_cp,
    )
    return phn_mod.gen_pll(params, n_sym, rng).theta


def _gen_channel(config: SimConfig, n_sym: int, rng: RngStream) -> np.ndarray | None:
    if config.channel == "awgn":
        return None
    params = config.chan_params(assumed=False)
    return chan_mod.gen_channel(params, n_sym, rng).freq_response


def _simulate_frame(
    config: SimConfig,
    ofdm: OfdmParams,
    code: CodeParams | None,
    codebook,
    gains: MmseGains | None,
    noise: NoiseModel,
    point_idx: int,
    frame_idx: int,
    counter: OpCounter | None = None,
) -> tuple[int, int, dict]:
    """Run one frame end to end; returns (bit_errors, bits, diagnostics)."""
    n_sym = code.interleave_span if config.coded else config.n_symbols_per_frame
    rng_data = _frame_seed(config.master_seed, point_idx, frame_idx, _S_DATA)
    rng_phn = _frame_seed(config.master_seed, point_idx, frame_idx, _S_PHN)
    rng_chan = _frame_seed(config.master_seed, point_idx, frame_idx, _S_CHAN)
    rng_noise = _frame_seed(config.master_seed, point_idx, frame_idx, _S_NOISE)

    m_bits = ofdm.bits_per_symbol
    if config.coded:
        n_info = frame_bit_budget(ofdm.n_data, m_bits, code)
        info_bits = rng_data.generator.integers(0, 2, n_info)
        coded_bits = conv_encode(info_bits, code)
        tx_bits = interleave(coded_bits, code.interleave_span)
    else:
        n_info = n_sym * ofdm.n_data * m_bits
        info_bits = rng_data.generator.integers(0, 2, n_info)
        tx_bits = info_bits
    syms = qam_map(tx_bits, m_bits).reshape(n_sym, ofdm.n_data)
    grid = assemble_grid(syms, ofdm)
    ts = ofdm_modulate(grid, ofdm)

    h = _gen_channel(config, n_sym, rng_chan)
    theta = _gen_phn(config, n_sym, rng_phn)
    y = apply_link(ts, h, theta, noise, rng_noise, ofdm)

    h_for_rx = h if h is not None else np.ones((n_sym, ofdm.n_fft))
    diag = {"zero_traj": 0, "symbols": 0, "chest_sum": 0.0, "chest_n": 0}

    if config.receiver == "ideal":
        s_hat = ofdm_demodulate(y, ofdm) / h_for_rx
        rx_data = (s_hat[:, ofdm.data_indices] / np.sqrt(ofdm.es)).ravel()
        hard = qam_hard_demap(rx_data, m_bits)
        if config.coded:
            decoded = viterbi_decode(deinterleave(hard, code.interleave_span), code)
        else:
            decoded = hard
    elif config.coded:
        res = receive_frame_alg2(
            y,
            codebook,
            ofdm,
            code,
            n_iters=config.n_iters,
            gains=gains,
            channel_true=h_for_rx if config.known_channel else None,
            true_channel_for_mse=None if config.known_channel else h,
            counter=counter,
        )
        decoded = res.info_bits
        zi = codebook.zero_index
        last_pass = res.diagnostics[-1]
        diag["symbols"] = len(last_pass)
        diag["zero_traj"] = sum(1 for d in last_pass if zi is not None and d.k_star == zi)
        chest = [d.chest_mse for d in last_pass if d.chest_mse is not None]
        diag["chest_sum"] = float(np.sum(chest)) if chest else 0.0
        diag["chest_n"] = len(chest)
    else:
        hard_parts = []
        zi = codebook.zero_index
        for m in range(n_sym):
            res = receive_symbol_alg1(y[m, ofdm.n_cp:], codebook, h_for_rx[m], ofdm, counter)
            data = res.symbols[ofdm.data_indices] / np.sqrt(ofdm.es)
            hard_parts.append(qam_hard_demap(data, m_bits))
            diag["symbols"] += 1
            diag["zero_traj"] += 1 if zi is not None and res.k_star == zi else 0
        decoded = np.concatenate(hard_parts)

    errors = int(np.count_nonzero(decoded != info_bits))
    return errors, int(info_bits.size), diag


def run_ber(config: SimConfig) -> SimResult:
    """BER over the Eb/N0 grid with early stopping at err_target bit errors."""
    t0 = time.monotonic()
    ofdm = config.ofdm()
    code = config.code() if config.coded else None
    codebook = config.build_codebook()
    if config.receiver == "codebook" and ofdm.n_pilots == 0:
        raise ConfigError("the codebook receiver requires pilots")
    code_rate = 0.5 if config.coded else 1.0

    points: list[PointResult] = []
    for p_idx, ebn0 in enumerate(config.ebn0_db_grid):
        noise = noise_from_ebn0(ebn0, ofdm, code_rate)
        gains = None
        if config.receiver == "codebook" and not config.known_channel:
            gains = MmseGains.build(
                config.chan_params(assumed=True), ofdm, noise, d_past=config.d_past
            )
        acc = PointResult(
            ebn0_db=float(ebn0), bit_errors=0, bits=0, frames=0, frame_errors=0,
            zero_traj_selected=0, symbols_seen=0, chest_mse_sum=0.0, chest_mse_count=0,
        )
        for f_idx in range(config.frames_per_point):
            errs, bits, diag = _simulate_frame(
                config, ofdm, code, codebook, gains, noise, p_idx, f_idx
            )
            acc.bit_errors += errs
            acc.bits += bits
            acc.frames += 1
            acc.frame_errors += 1 if errs else 0
            acc.zero_traj_selected += diag["zero_traj"]
            acc.symbols_seen += diag["symbols"]
            acc.chest_mse_sum += diag["chest_sum"]
            acc.chest_mse_count += diag["chest_n"]
            if acc.bit_errors >= config.err_target:
                break
        points.append(acc)
    return SimResult(
        config=config.echo(),
        config_hash=config_hash(config),
        master_seed=config.master_seed,
        points=points,
        wall_time_s=time.monotonic() - t0,
    )


# -- MSE table -------------------------------------------------------------


@dataclass
class MseCell:
    q: int
    j: int
    k: int
    mse_sim: float
    mse_sim_se: float
    mse_analytic: float
    n_realizations: int


@dataclass
class MseTable:
    cells: list[MseCell]
    n_fft: int
    beta_t: float
    master_seed: int


def run_mse(
    cells: list[tuple[int, int]],
    n_fft: int = 64,
    beta_t: float = 0.01,
    n_realizations: int = 5000,
    n_realizations_large: int = 500,
    large_k_threshold: int = 16384,
    master_seed: int = 20260810,
) -> MseTable:
    """Normalized best-match MSE grid: simulated and closed-form per (Q, J)."""
    sigma_eps_sq = 2.0 * math.pi * beta_t / n_fft
    out: list[MseCell] = []
    for idx, (q, j) in enumerate(cells):
        design = cb_mod.design_codebook(n_fft, j, q, sigma_eps_sq)
        k = design.n_trajectories
        n_real = n_realizations_large if k >= large_k_threshold else n_realizations
        rng = RngStream(master_seed, (100, idx))
        sim, se = cb_mod.simulated_mse(design, n_real, rng)
        out.append(
            MseCell(
                q=q, j=j, k=k, mse_sim=sim, mse_sim_se=se,
                mse_analytic=cb_mod.analytic_mse(design), n_realizations=n_real,
            )
        )
    return MseTable(cells=out, n_fft=n_fft, beta_t=beta_t, master_seed=master_seed)


# -- emission ----------------------------------------------------------------

CSV_HEADER = "config_hash,ebn0_db,ber,stderr,bits,frames,seed"


def emit_csv(result: SimResult, path) -> None:
    """One row per Eb/N0 point; byte-identical for identical config + seed."""
    lines = [CSV_HEADER]
    for p in result.points:
        lines.append(
            f"{result.config_hash},{p.ebn0_db!r},{p.ber!r},{p.stderr!r},"
            f"{p.bits},{p.frames},{result.master_seed}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


MSE_CSV_HEADER = "q,j,k,mse_sim,mse_sim_se,mse_analytic,n_realizations,seed"


def emit_mse_csv(table: MseTable, path) -> None:
    lines = [MSE_CSV_HEADER]
    for c in table.cells:
        lines.append(
            f"{c.q},{c.j},{c.k},{c.mse_sim!r},{c.mse_sim_se!r},"
            f"{c.mse_analytic!r},{c.n_realizations},{table.master_seed}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_plot(results: list[SimResult] | SimResult, path) -> None:
    """BER vs Eb/N0 on a log-y axis, one series per labeled config."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(results, SimResult):
        results = [results]
    fig, ax = plt.subplots(figsize=(7, 5))
    for res in results:
        x = [p.ebn0_db for p in res.points]
        y = [max(p.ber, 1e-12) for p in res.points]
        label = res.config.get("label") or res.config_hash
        ax.semilogy(x, y, marker="o", label=label)
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# -- operation counts --------------------------------------------------------


def proposed_mult_count(k: int, n: int, n_iters: int) -> int:
    """Closed-form complex multiplications per symbol for the candidate-loop receiver."""
    return (n_iters + 1) * (k * (2 * n * n + 6 * n + 1) + n)


def proposed_add_count(k: int, n: int, n_iters: int) -> int:
    """Closed-form complex additions per symbol for the candidate-loop receiver."""
    return (n_iters + 1) * (k * n * (3 * n - 2) - k + n - 1)


def count_ops(config: SimConfig) -> dict:
    """Closed-form per-symbol operation counts plus measured counters.

    The measured numbers come from one instrumented frame of the configured
    receiver, divided by the number of symbols, tallying dense-equivalent
    complex operations per executed step (Viterbi excluded, as in the
    closed-form counts).
    """
    ofdm = config.ofdm()
    codebook = config.build_codebook()
    if codebook is None:
        raise ConfigError("operation counting needs the codebook receiver")
    k = codebook.k
    formula = {
        "formula_mults": proposed_mult_count(k, config.n_fft, config.n_iters),
        "formula_adds": proposed_add_count(k, config.n_fft, config.n_iters),
    }
    counter = OpCounter()
    code = config.code() if config.coded else None
    noise = noise_from_ebn0(config.ebn0_db_grid[0], ofdm, 0.5 if config.coded else 1.0)
    gains = None
    if not config.known_channel:
        gains = MmseGains.build(config.chan_params(assumed=True), ofdm, noise, config.d_past)
    _simulate_frame(config, ofdm, code, codebook, gains, noise, 0, 0, counter=counter)
    n_sym = code.interleave_span if config.coded else config.n_symbols_per_frame
    return {
        **formula,
        "measured_mults": counter.mults // n_sym,
        "measured_adds": counter.adds // n_sym,
        "k": k,
        "n_fft": config.n_fft,
        "n_iters": config.n_iters,
    }


# -- config file -------------------------------------------------------------


def _coerce(value: str, target_type) -> object:
    v = value.strip()
    if target_type is bool:
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {value!r}")
    if v.lower() in ("none", "null"):
        return None
    if target_type is int:
        return int(v)
    if target_type is float:
        return float(v)
    if target_type is str:
        return v
    # tuple-of-float grids: comma separated
    return tuple(float(tok) for tok in v.split(",") if tok.strip())


_FIELD_TYPES = {
    "label": str, "receiver": str, "modulation_bits": int, "n_fft": int,
    "n_cp": int, "n_pilots": int, "q": int, "j_segments": int, "coded": bool,
    "interleave_span": int, "n_symbols_per_frame": int, "phn_model": str,
    "beta_t": float, "pll_beta_t_vco": float, "pll_beta_t_ref": float,
    "pll_f_lp": float, "pll_f_pd": float, "pll_f_pll": float, "pll_f_ref": float,
    "channel": str, "known_channel": bool, "f_c": float, "f_s": float,
    "tau_rms_samples": float, "speed_kmh": float, "n_taps": int,
    "doppler_norm": float, "d_past": int, "n_iters": int,
    "ebn0_db_grid": tuple, "frames_per_point": int, "err_target": int,
    "master_seed": int, "beta_t_hat": float, "doppler_hat": float,
}


def parse_config_file(path) -> dict:
    """Read `key = value` lines (hash comments allowed) into config kwargs."""
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(value, _FIELD_TYPES[key])
    return out


def make_config(**kwargs) -> SimConfig:
    return SimConfig(**kwargs)
