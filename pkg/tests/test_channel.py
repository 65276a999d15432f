import time

import numpy as np
import pytest
from scipy.special import erfc

from specfill.channel import (
    ChannelConfig, awgn, awgn_array, awgn_tensor, make_rng, noise_variance, sample_snr, snr_db_to_esn0_db,
)
from specfill.modem import IQSignal, ModulationKind, demodulate, modulate
from specfill import tensor as T
from specfill.tensor import Tensor


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def test_noise_variance_closed_form():
    assert float(noise_variance(1.0, 10.0)) == pytest.approx(0.05, rel=1e-12)
    assert np.sqrt(float(noise_variance(1.0, 10.0))) == pytest.approx(0.223607, abs=1e-6)
    assert float(noise_variance(2.0, 0.0)) == pytest.approx(1.0)


def test_infinite_snr_is_noiseless(rng):
    x = modulate(rng.integers(0, 2, 64), ModulationKind.QPSK)
    y = awgn(x, np.inf, rng)
    np.testing.assert_array_equal(y.i, x.i)
    np.testing.assert_array_equal(y.q, x.q)


def test_noise_statistics_monte_carlo():
    n = 10**6
    x = np.zeros((2, n))
    x[0] = 1.0  # Es = 1
    noise = awgn_array(x, 10.0, make_rng(7)) - x
    var = noise.var(axis=1)
    np.testing.assert_allclose(var, 0.05, rtol=0.01)
    sigma = np.sqrt(0.05)
    assert np.all(np.abs(noise.mean(axis=1)) < 4 * sigma / np.sqrt(n))
    assert abs(np.corrcoef(noise[0], noise[1])[0, 1]) < 0.01


def test_snr_measured_against_actual_power(rng):
    x = np.zeros((2, 200_000))
    x[0] = 3.0  # Es = 9
    noise = awgn_array(x, 10.0, rng) - x
    assert noise.var() == pytest.approx(9 * 0.05, rel=0.02)


def test_per_example_snr(rng):
    x = np.ones((2, 2, 100_000)) / np.sqrt(2)
    noise = awgn_array(x, np.array([0.0, 20.0]), rng) - x
    np.testing.assert_allclose(noise.reshape(2, -1).var(axis=1), [0.5, 0.005], rtol=0.02)


def test_draw_order_is_sample_major_i_first():
    x = np.zeros((2, 3))
    x[0] = 1.0
    sigma = np.sqrt(0.05)
    out = awgn_array(x, 10.0, make_rng(5))
    raw = make_rng(5).standard_normal((3, 2))
    np.testing.assert_allclose(out - x, sigma * raw.T, atol=1e-15)


def test_same_seed_same_noise():
    x = np.ones((4, 2, 16))
    a = awgn_array(x, 8.0, make_rng(3, 1))
    b = awgn_array(x, 8.0, make_rng(3, 1))
    c = awgn_array(x, 8.0, make_rng(3, 2))
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


@pytest.mark.parametrize("esn0_db", [4.0, 10 * np.log10(4.0), 8.0])
def test_bpsk_ber_matches_closed_form(esn0_db):
    t0 = time.perf_counter()
    rng = make_rng(2024, int(esn0_db * 100))
    bits = rng.integers(0, 2, 10**6)
    y = awgn(modulate(bits, ModulationKind.BPSK), esn0_db, rng)
    ber = np.mean(demodulate(y, ModulationKind.BPSK) != bits)
    oracle = q_function(np.sqrt(2 * 10 ** (esn0_db / 10)))
    assert abs(ber / oracle - 1) <= 0.10
    assert time.perf_counter() - t0 < 30


def test_oracle_value_at_linear_four():
    assert q_function(np.sqrt(8.0)) == pytest.approx(2.34e-3, rel=0.01)


def test_sample_snr():
    rng = make_rng(0)
    draws = sample_snr(ChannelConfig(5, 15), rng, 10**5)
    assert 9.9 <= draws.mean() <= 10.1
    assert draws.min() >= 5 and draws.max() <= 15
    assert sample_snr(ChannelConfig(fixed_snr_db=10.0), rng) == 10.0
    np.testing.assert_array_equal(sample_snr(ChannelConfig(7, 7), rng, 5), 7.0)
    with pytest.raises(ValueError):
        ChannelConfig(10, 5)


@pytest.mark.parametrize("snr", [10.0, 5.0, 14.0])
def test_esn0_identity(snr):
    assert snr_db_to_esn0_db(snr) == snr


def test_awgn_tensor_matches_array_path(rng):
    x = rng.standard_normal((3, 2, 8))
    snr = np.array([5.0, 10.0, 15.0])
    expected = awgn_array(x, snr, make_rng(9))
    for track in (True, False):
        out = awgn_tensor(Tensor(x), snr, make_rng(9), track_power=track)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_awgn_tensor_gradient(rng):
    from specfill.gradcheck import check_gradients

    x = Tensor(rng.standard_normal((2, 2, 5)), requires_grad=True)
    w = rng.standard_normal((2, 2, 5))
    err = check_gradients(lambda: T.sum_(T.mul(awgn_tensor(x, np.array([3.0, 9.0]), make_rng(1)), w)), [x], step=1e-6)
    assert err < 1e-3
    x.grad = None
    T.sum_(T.mul(awgn_tensor(x, 3.0, make_rng(1), track_power=False), w)).backward()
    np.testing.assert_allclose(x.grad, w)


def test_iqsignal_wrapper(rng):
    s = IQSignal(np.ones(4), np.zeros(4))
    out = awgn(s, 10.0, rng)
    assert isinstance(out, IQSignal) and out.n == 4
