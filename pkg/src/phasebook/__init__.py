"""OFDM link-level simulator with phase-noise mitigation by trajectory codebooks."""

from .channel import ChannelParams, ChannelRealization, gen_channel, make_channel_params
from .codebook import (
    Codebook,
    CodebookDesign,
    analytic_mse,
    build_codebook,
    design_codebook,
    load_codebook,
    save_codebook,
    simulated_mse,
)
from .coding import CodeParams, conv_encode, deinterleave, interleave, viterbi_decode
from .compensator import (
    MmseGains,
    OpCounter,
    SelectionResult,
    receive_frame_alg2,
    receive_symbol_alg1,
)
from .errors import ConfigError, EstimationError, FramingError
from .harness import SimConfig, SimResult, emit_csv, emit_plot, run_ber, run_mse
from .numerics import RngStream, bessel_j0, erf_inv, fft, gaussian_samples, ifft
from .phn import (
    PhnTrace,
    PllPhnParams,
    WienerPhnParams,
    gen_pll,
    gen_wiener,
)
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

__version__ = "0.1.0"
