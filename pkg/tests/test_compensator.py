import math

import numpy as np
import pytest

from phasebook.channel import gen_channel, make_channel_params
from phasebook.codebook import build_codebook, design_codebook
from phasebook.coding import CodeParams, conv_encode, deinterleave, interleave, viterbi_decode
from phasebook.compensator import (
    MmseGains,
    circulant_derotator,
    cpe_gain,
    derotate_all,
    equalize,
    ls_channel,
    mmse_channel,
    receive_frame_alg2,
    receive_symbol_alg1,
    selection_cost,
)
from phasebook.errors import ConfigError, EstimationError
from phasebook.numerics import RngStream, fft
from phasebook.phy import (
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

OFDM = OfdmParams()
SE2 = 2 * math.pi * 0.01 / 64
CB = build_codebook(design_codebook(64, 4, 3, SE2))


def random_symbol(np_rng, ofdm=OFDM):
    bits = np_rng.integers(0, 2, ofdm.n_data * ofdm.bits_per_symbol)
    grid = assemble_grid(qam_map(bits, ofdm.bits_per_symbol).reshape(1, -1), ofdm)[0]
    return bits, grid, ofdm_modulate(grid, ofdm)


# -- de-rotation ---------------------------------------------------------------


def test_derotate_zero_trajectory_equals_plain_fft(np_rng):
    _, _, ts = random_symbol(np_rng)
    grid = derotate_all(ts[16:], CB)
    np.testing.assert_allclose(grid[CB.zero_index], fft(ts[16:]), atol=1e-12)


def test_derotate_preserves_energy(np_rng):
    _, _, ts = random_symbol(np_rng)
    grid = derotate_all(ts[16:], CB)
    norms = np.linalg.norm(grid, axis=1)
    assert np.abs(norms - np.linalg.norm(ts[16:])).max() < 1e-9


def test_derotate_matches_circulant_path(np_rng):
    # two-path oracle: time-domain de-rotation + FFT vs circulant multiply
    _, _, ts = random_symbol(np_rng)
    y = ts[16:]
    grid = derotate_all(y, CB)
    plain = fft(y)
    for k in (0, 5, CB.zero_index, 26):
        mat = circulant_derotator(CB, k)
        np.testing.assert_allclose(grid[k], mat @ plain, atol=1e-9)
        # the matrix is circulant: constant along wrapped diagonals
        first_col = mat[:, 0]
        np.testing.assert_allclose(mat[:, 1], np.roll(first_col, 1), atol=1e-12)


def test_derotate_requires_core_length(np_rng):
    with pytest.raises(ConfigError):
        derotate_all(np.zeros(80, dtype=complex), CB)


# -- gain and selection ---------------------------------------------------------


def test_cpe_gain_identity_when_clean():
    refs = np.full(4, 1.0 + 0.0j)
    derot = np.ones((1, 8), dtype=complex)
    eta = cpe_gain(derot, np.ones((1, 8)), refs, np.arange(4))
    assert eta[0] == pytest.approx(1.0)


def test_cpe_gain_recovers_pure_rotation(np_rng):
    refs = qam_map(np_rng.integers(0, 2, 16 * 4), 4)[:16]
    rot = np.exp(1j * 1.234)
    derot = (refs * rot)[None, :]
    eta = cpe_gain(derot, np.ones((1, 16)), refs, np.arange(16))
    assert abs(eta[0] - rot) < 1e-10


def test_cpe_gain_excludes_faded_bins():
    refs = np.ones(4, dtype=complex)
    chan = np.array([[1.0, 1e-9, 1.0, 1.0]], dtype=complex)
    derot = np.array([[2.0, 999.0, 2.0, 2.0]], dtype=complex)
    eta = cpe_gain(derot, chan, refs, np.arange(4))
    assert eta[0] == pytest.approx(2.0)  # the blown-up bin is ignored


def test_cpe_gain_all_bins_excluded_raises():
    refs = np.ones(2, dtype=complex)
    with pytest.raises(EstimationError):
        cpe_gain(np.ones((1, 2)), np.full((1, 2), 1e-9), refs, np.arange(2))


def test_pilot_and_all_bin_gain_agree_on_clean_data(np_rng):
    _, grid, ts = random_symbol(np_rng)
    rot = np.exp(0.456j)
    y = apply_link(ts, None, np.full(80, 0.456), None, None, OFDM)
    bins = ofdm_demodulate(y, OFDM)[None, :]
    pilots = OFDM.pilot_indices
    eta_p = cpe_gain(bins, np.ones((1, 64)), grid[pilots], pilots)
    eta_a = cpe_gain(bins, np.ones((1, 64)), grid, np.arange(64))
    assert abs(eta_p[0] - rot) < 1e-10
    assert abs(eta_a[0] - eta_p[0]) < 1e-10


def test_selection_cost_and_tie_breaking():
    cand = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]], dtype=complex)
    refs = np.ones(2, dtype=complex)
    cost = selection_cost(cand, refs, np.arange(2))
    assert int(np.argmin(cost)) == 0  # tie between rows 0 and 1 -> smallest index
    assert cost[2] > cost[0]


# -- LS / MMSE channel estimation ------------------------------------------------


def test_ls_channel_noiseless(np_rng):
    _, grid, ts = random_symbol(np_rng)
    h = gen_channel(make_channel_params(), 1, RngStream(9, 0)).freq_response
    y = apply_link(ts, h, None, None, None, OFDM)
    bins = ofdm_demodulate(y, OFDM)
    est = ls_channel(bins, grid, np.arange(64))
    assert np.abs(est - h).max() < 1e-9


def test_ls_channel_pilot_subset_shape(np_rng):
    _, grid, ts = random_symbol(np_rng)
    pilots = OFDM.pilot_indices
    est = ls_channel(ofdm_demodulate(ts, OFDM)[None, :], grid[pilots], pilots)
    assert est.shape == (1, 8)


def test_ls_channel_rejects_zero_reference():
    with pytest.raises(ConfigError):
        ls_channel(np.ones((1, 4)), np.array([1.0, 0.0]), np.arange(2))


def test_ls_channel_noise_variance(np_rng):
    nm = NoiseModel(0.04)
    refs = qam_map(np_rng.integers(0, 2, 64 * 4), 4)
    rng = RngStream(10, 0)
    errs = []
    for _ in range(3000):
        noise = (rng.generator.standard_normal(64) + 1j * rng.generator.standard_normal(64)) * math.sqrt(nm.sigma_w_sq / 2)
        est = ls_channel((refs + noise)[None, :], refs, np.arange(64))[0]
        errs.append(np.abs(est - 1.0) ** 2)
    measured = np.mean(errs, axis=0)
    expected = nm.sigma_w_sq / np.abs(refs) ** 2
    assert np.abs(measured / expected - 1.0).max() < 0.25
    assert abs(np.mean(measured) / np.mean(expected) - 1.0) < 0.05


def _gains(noise_var=0.01, d_past=1, doppler=None, n_pilots=8):
    params = make_channel_params(doppler_norm=doppler)
    ofdm = OfdmParams(n_pilots=n_pilots)
    return MmseGains.build(params, ofdm, NoiseModel(noise_var), d_past=d_past), params, ofdm


def test_mmse_full_grid_near_ls_in_clean_limit(np_rng):
    gains, params, _ = _gains(noise_var=1e-12)
    h = gen_channel(params, 1, RngStream(11, 0)).freq_response
    est = mmse_channel(h, "full", gains)
    assert np.abs(est - h).max() < 1e-6


def test_mmse_pilot_flat_channel_constant():
    gains, params, ofdm = _gains(noise_var=1e-6)
    flat_params = make_channel_params(tau_rms=1e-9)
    gains_flat = MmseGains.build(flat_params, ofdm, NoiseModel(1e-6))
    ls_p = np.full((1, 8), 0.7 - 0.2j)
    est = gains_flat and mmse_channel(ls_p, "pilot", gains_flat)[0]
    np.testing.assert_allclose(est, est[0], atol=1e-6)
    assert est[0] == pytest.approx(0.7 - 0.2j, abs=1e-4)


def test_mmse_beats_linear_interpolation_at_20db():
    # comparison oracle: pilot LS + linear interpolation across bins
    noise_var = float(noise_from_ebn0(20.0, OFDM, 1.0).sigma_w_sq)
    gains, params, _ = _gains(noise_var=noise_var)
    gen = RngStream(12, 0)
    pilots = OFDM.pilot_indices
    err_mmse = err_interp = 0.0
    n_real = 3000
    for _ in range(n_real):
        h = gen_channel(params, 1, gen).freq_response[0]
        w = (gen.generator.standard_normal(8) + 1j * gen.generator.standard_normal(8)) * math.sqrt(noise_var / 2)
        ls_p = h[pilots] + w
        est = mmse_channel(ls_p[None, :], "pilot", gains)[0]
        interp = np.interp(np.arange(64), pilots, ls_p.real) + 1j * np.interp(
            np.arange(64), pilots, ls_p.imag
        )
        err_mmse += np.mean(np.abs(est - h) ** 2)
        err_interp += np.mean(np.abs(interp - h) ** 2)
    assert err_mmse < err_interp


def test_mmse_multi_symbol_uses_history(np_rng):
    gains, params, _ = _gains(noise_var=0.01, d_past=3)
    assert set(gains.multi) == {2, 3}
    h = gen_channel(params, 3, RngStream(13, 0)).freq_response
    est1 = mmse_channel(h[2], "multi", gains, history=[])
    est3 = mmse_channel(h[2][None, :], "multi", gains, history=[h[1], h[0]])
    assert est1.shape == est3.shape == (1, 64)
    # near-static channel: stacking clean history cannot hurt
    e1 = np.mean(np.abs(est1 - h[2]) ** 2)
    e3 = np.mean(np.abs(est3 - h[2]) ** 2)
    assert e3 <= e1 * 1.05


def test_mmse_requires_pilots():
    with pytest.raises(ConfigError):
        MmseGains.build(make_channel_params(), OfdmParams(n_pilots=0), NoiseModel(0.01))


def test_mmse_unknown_mode():
    gains, _, _ = _gains()
    with pytest.raises(ConfigError):
        mmse_channel(np.ones((1, 8)), "nope", gains)


# -- single-symbol receiver -------------------------------------------------------


def test_alg1_clean_link_selects_zero_trajectory(np_rng):
    bits, grid, ts = random_symbol(np_rng)
    res = receive_symbol_alg1(ts[16:], CB, np.ones(64), OFDM)
    assert res.k_star == CB.zero_index
    assert np.abs(res.symbols - grid).max() < 1e-9
    assert res.cost_min <= res.cost_max


def test_alg1_exact_codebook_phase_recovered(np_rng):
    bits, grid, ts = random_symbol(np_rng)
    k0, offset = 17, 0.9
    theta = np.concatenate([np.full(16, offset), CB.trajectories[k0] + offset])
    y = apply_link(ts, None, theta, None, None, OFDM)
    res = receive_symbol_alg1(y[16:], CB, np.ones(64), OFDM)
    assert res.k_star == k0
    assert abs(res.eta - np.exp(1j * offset)) < 1e-9
    assert np.abs(res.symbols - grid).max() < 1e-9


def test_alg1_single_entry_codebook(np_rng):
    cb1 = build_codebook(design_codebook(64, 1, 1, SE2))
    _, _, ts = random_symbol(np_rng)
    res = receive_symbol_alg1(ts[16:], cb1, np.ones(64), OFDM)
    assert res.k_star == 0


def test_alg1_beats_cpe_only_under_phase_noise():
    from phasebook.phn import WienerPhnParams, gen_wiener

    cb1 = build_codebook(design_codebook(64, 1, 1, SE2))
    noise = noise_from_ebn0(16.0, OFDM, 1.0)
    params = WienerPhnParams(0.01, 64, 16)
    gen = np.random.default_rng(3)
    errs = {27: 0, 1: 0}
    n_sym = 400
    for i in range(n_sym):
        bits = gen.integers(0, 2, 56 * 4)
        grid = assemble_grid(qam_map(bits, 4).reshape(1, -1), OFDM)
        ts = ofdm_modulate(grid, OFDM)
        theta = gen_wiener(params, 1, RngStream(1000, i)).theta
        y = apply_link(ts, None, theta, noise, RngStream(2000, i), OFDM)[0]
        for cb, key in ((CB, 27), (cb1, 1)):
            res = receive_symbol_alg1(y[16:], cb, np.ones(64), OFDM)
            hard = qam_hard_demap(res.symbols[OFDM.data_indices], 4)
            errs[key] += int(np.count_nonzero(hard != bits))
    assert errs[27] < errs[1] / 2


# -- framed receiver ----------------------------------------------------------------


def _coded_frame(np_rng, code=CodeParams(), ofdm=OFDM, seed=50):
    n_info = 2234
    bits = np_rng.integers(0, 2, n_info)
    tx = interleave(conv_encode(bits, code), code.interleave_span)
    syms = qam_map(tx, 4).reshape(20, 56)
    grid = assemble_grid(syms, ofdm)
    return bits, grid, ofdm_modulate(grid, ofdm)


def test_alg2_zero_iters_known_channel_clean(np_rng):
    bits, _, ts = _coded_frame(np_rng)
    res = receive_frame_alg2(ts, CB, OFDM, CodeParams(), channel_true=np.ones((20, 64)))
    np.testing.assert_array_equal(res.info_bits, bits)
    assert len(res.diagnostics) == 1
    assert all(d.k_star == CB.zero_index for d in res.diagnostics[0])


def test_alg2_iteration_count_and_shape(np_rng):
    bits, _, ts = _coded_frame(np_rng)
    res = receive_frame_alg2(ts, CB, OFDM, CodeParams(), n_iters=2, channel_true=np.ones((20, 64)))
    assert len(res.diagnostics) == 3
    assert res.symbol_grid.shape == (20, 64)
    np.testing.assert_array_equal(res.info_bits, bits)


def test_alg2_frame_length_validation(np_rng):
    with pytest.raises(ConfigError):
        receive_frame_alg2(np.zeros((3, 80), dtype=complex), CB, OFDM, CodeParams(),
                           channel_true=np.ones((3, 64)))


def test_alg2_requires_gains_when_estimating(np_rng):
    with pytest.raises(ConfigError):
        receive_frame_alg2(np.zeros((20, 80), dtype=complex), CB, OFDM, CodeParams())


def test_alg2_estimation_high_snr_recovers_bits(np_rng):
    bits, _, ts = _coded_frame(np_rng)
    noise = noise_from_ebn0(30.0, OFDM, 0.5)
    params = make_channel_params()
    h = gen_channel(params, 20, RngStream(60, 1)).freq_response
    y = apply_link(ts, h, None, noise, RngStream(61, 1), OFDM)
    gains = MmseGains.build(params, OfdmParams(n_pilots=16), NoiseModel(noise.sigma_w_sq), 1)
    ofdm16 = OfdmParams(n_pilots=16)
    # rebuild the frame on the 16-pilot layout for a clean-estimation check
    bits = np_rng.integers(0, 2, frame_bits := 20 * 48 * 4 // 2 - 6)
    tx = interleave(conv_encode(bits), 20)
    grid = assemble_grid(qam_map(tx, 4).reshape(20, -1), ofdm16)
    ts = ofdm_modulate(grid, ofdm16)
    y = apply_link(ts, h, None, noise, RngStream(61, 2), ofdm16)
    res = receive_frame_alg2(y, CB, ofdm16, CodeParams(), n_iters=1, gains=gains)
    assert np.mean(res.info_bits != bits) < 0.001


def test_alg2_k1_matches_independent_cpe_reference(np_rng):
    # degenerate single-entry codebook == hand-rolled pilot-gain receiver, bit for bit
    cb1 = build_codebook(design_codebook(64, 1, 1, SE2))
    bits, _, ts = _coded_frame(np_rng)
    from phasebook.phn import WienerPhnParams, gen_wiener

    h = gen_channel(make_channel_params(), 20, RngStream(70, 0)).freq_response
    theta = gen_wiener(WienerPhnParams(0.01, 64, 16), 20, RngStream(71, 0)).theta
    noise = noise_from_ebn0(18.0, OFDM, 0.5)
    y = apply_link(ts, h, theta, noise, RngStream(72, 0), OFDM)

    res = receive_frame_alg2(y, cb1, OFDM, CodeParams(), channel_true=h)

    # independent reference: FFT, pilot LS gain, equalize, demap, decode
    pilots = OFDM.pilot_indices
    pref = np.full(8, OFDM.pilot_value)
    s_hat = np.empty((20, 64), dtype=complex)
    for m in range(20):
        bins = ofdm_demodulate(y[m], OFDM)
        z = bins[pilots] / h[m][pilots]
        eta = np.sum(np.conj(pref) * z) / np.sum(np.abs(pref) ** 2)
        s_hat[m] = bins / (h[m] * eta)
    hard = qam_hard_demap(s_hat[:, OFDM.data_indices].ravel(), 4)
    ref_bits = viterbi_decode(deinterleave(hard, 20))
    np.testing.assert_array_equal(res.info_bits, ref_bits)


def test_alg2_dd_fb_improves_over_zeroth_pass():
    from phasebook.phn import WienerPhnParams, gen_wiener

    params = make_channel_params()
    ofdm16 = OfdmParams(n_pilots=16)
    noise = noise_from_ebn0(16.0, ofdm16, 0.5)
    gains = MmseGains.build(params, ofdm16, NoiseModel(noise.sigma_w_sq), 3)
    gen = np.random.default_rng(8)
    errs0 = errs2 = total = 0
    for f in range(25):
        bits = gen.integers(0, 2, 20 * 48 * 4 // 2 - 6)
        tx = interleave(conv_encode(bits), 20)
        grid = assemble_grid(qam_map(tx, 4).reshape(20, -1), ofdm16)
        ts = ofdm_modulate(grid, ofdm16)
        h = gen_channel(params, 20, RngStream(80, f)).freq_response
        theta = gen_wiener(WienerPhnParams(0.01, 64, 16), 20, RngStream(81, f)).theta
        y = apply_link(ts, h, theta, noise, RngStream(82, f), ofdm16)
        r0 = receive_frame_alg2(y, CB, ofdm16, CodeParams(), n_iters=0, gains=gains)
        r2 = receive_frame_alg2(y, CB, ofdm16, CodeParams(), n_iters=2, gains=gains)
        errs0 += int(np.count_nonzero(r0.info_bits != bits))
        errs2 += int(np.count_nonzero(r2.info_bits != bits))
        total += bits.size
    se = math.sqrt(max(errs0, 1)) + math.sqrt(max(errs2, 1))
    assert errs2 < errs0 - 2 * se
