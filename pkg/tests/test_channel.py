import math

import numpy as np
import pytest

from phasebook.channel import (
    ChannelParams,
    freq_corr,
    freq_corr_matrix,
    gen_channel,
    joint_corr_matrix,
    make_channel_params,
    time_corr,
)
from phasebook.errors import ConfigError
from phasebook.numerics import RngStream, bessel_j0


def table_params(**kw):
    return make_channel_params(**kw)


def test_table_defaults():
    p = table_params()
    assert p.n_taps == 10 and p.tau_rms == 3.0
    # 7 km/h at 5 GHz, 3.2 us symbols
    assert p.doppler_norm == pytest.approx(1.0372e-4, rel=1e-3)


def test_doppler_override():
    p = table_params(doppler_norm=0.03)
    assert p.doppler_norm == 0.03


def test_zero_speed_static_channel():
    p = table_params(speed_kmh=0.0)
    h = gen_channel(p, 6, RngStream(1, 0)).freq_response
    for m in range(1, 6):
        np.testing.assert_allclose(h[m], h[0], atol=1e-12)


def test_single_tap_flat_fading():
    p = table_params(n_taps=1)
    h = gen_channel(p, 1, RngStream(2, 0)).freq_response[0]
    np.testing.assert_allclose(np.abs(h), np.abs(h[0]), atol=1e-12)


def test_unit_average_power():
    p = table_params()
    gen = RngStream(3, 0)
    acc = 0.0
    n_real = 10_000
    for _ in range(n_real):
        h = gen_channel(p, 1, gen).freq_response
        acc += np.mean(np.abs(h) ** 2)
    assert 0.97 < acc / n_real < 1.03


def test_delays_within_support():
    p = table_params()
    r = gen_channel(p, 1, RngStream(4, 0))
    assert np.all(r.delays >= 0) and np.all(r.delays < p.n_taps)
    assert r.amplitudes == pytest.approx(np.full(10, 1 / math.sqrt(10)))


def test_seed_determinism():
    p = table_params()
    a = gen_channel(p, 3, RngStream(5, 1)).freq_response
    b = gen_channel(p, 3, RngStream(5, 1)).freq_response
    assert np.array_equal(a, b)


def test_freq_corr_zero_separation():
    assert freq_corr(table_params(), 0) == pytest.approx(1.0)


def test_freq_corr_near_flat_limit():
    p = table_params(tau_rms=1e-9)
    np.testing.assert_allclose(freq_corr(p, np.arange(16)), np.ones(16), atol=1e-6)


def test_freq_corr_matrix_shape_and_hermitian():
    p = table_params()
    bins = np.arange(0, 64, 4)
    r = freq_corr_matrix(p, bins, bins)
    assert r.shape == (16, 16)
    np.testing.assert_allclose(r, r.conj().T, atol=1e-14)
    np.testing.assert_allclose(np.diag(r), np.ones(16), atol=1e-14)


def test_freq_corr_matrix_rejects_out_of_range():
    with pytest.raises(ConfigError):
        freq_corr_matrix(table_params(), [0, 64], [0])


def test_sample_covariance_matches_formula():
    # Monte-Carlo covariance oracle vs the closed form, moderate scale;
    # the acceptance suite repeats this at 1e5 realizations
    p = table_params()
    gen = RngStream(6, 0)
    n_real = 20_000
    bins = np.arange(0, 64, 8)
    acc = np.zeros((8, 8), dtype=complex)
    for _ in range(n_real):
        h = gen_channel(p, 1, gen).freq_response[0][bins]
        acc += np.outer(h, h.conj())
    emp = acc / n_real
    theo = freq_corr_matrix(p, bins, bins)
    assert np.abs(emp - theo).max() < 0.04


def test_time_corr_values():
    p = table_params(doppler_norm=0.03)
    assert time_corr(p, 0) == pytest.approx(1.0)
    assert time_corr(p, 7) == pytest.approx(float(bessel_j0(2 * math.pi * 0.03 * 7)))
    assert time_corr(table_params(doppler_norm=0.0), 11) == pytest.approx(1.0)


def test_sample_time_autocorrelation_matches_j0():
    p = table_params(doppler_norm=0.05)
    gen = RngStream(7, 0)
    n_real, lags = 4000, 10
    acc = np.zeros(lags + 1, dtype=complex)
    for _ in range(n_real):
        h = gen_channel(p, lags + 1, gen).freq_response
        acc += (h[:1, :] * h.conj()).mean(axis=1)
    emp = (acc / n_real).real
    theo = np.array([time_corr(p, -l) for l in range(lags + 1)])
    assert np.abs(emp - theo).max() < 0.05


def test_joint_corr_reduces_to_freq_corr():
    p = table_params()
    bins = np.arange(0, 64, 8)
    np.testing.assert_allclose(
        joint_corr_matrix(p, 1, bins), freq_corr_matrix(p, bins, bins), atol=1e-14
    )


def test_joint_corr_zero_doppler_blocks():
    p = table_params(doppler_norm=0.0)
    bins = np.arange(0, 64, 16)
    big = joint_corr_matrix(p, 3, bins)
    rf = freq_corr_matrix(p, bins, bins)
    nb = bins.size
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(big[i * nb:(i + 1) * nb, j * nb:(j + 1) * nb], rf, atol=1e-14)


def test_joint_corr_psd():
    p = table_params(doppler_norm=0.03)
    big = joint_corr_matrix(p, 3, np.arange(64))
    assert np.linalg.eigvalsh(big).min() > -1e-9


def test_joint_corr_matches_monte_carlo():
    p = table_params(doppler_norm=0.05)
    bins = np.array([0, 32])
    gen = RngStream(8, 0)
    n_real = 20_000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(n_real):
        h = gen_channel(p, 2, gen).freq_response
        v = np.concatenate([h[0][bins], h[1][bins]])
        acc += np.outer(v, v.conj())
    emp = acc / n_real
    theo = joint_corr_matrix(p, 2, bins)
    # block order differs only by which symbol is "first"; both are Hermitian-symmetric in lag
    assert np.abs(emp - theo).max() < 0.05
