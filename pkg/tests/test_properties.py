import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from specfill import tensor as T
from specfill.config import from_ini, to_ini
from specfill.evaluate import ber, shannon_capacity
from specfill.losses import LossConfig, alpha_schedule, loss_a, loss_b, loss_mse, loss_shape
from specfill.modem import ModulationKind, demodulate, modulate
from specfill.tensor import Tensor

finite = st.floats(-50, 50, allow_nan=False, width=64)


def points(min_size=1, max_size=12):
    return st.integers(min_size, max_size).flatmap(lambda n: arrays(np.float64, (n, 2), elements=finite))


@given(st.sampled_from(list(ModulationKind)), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_modem_round_trip(kind, symbols, seed):
    bits = np.random.default_rng(seed).integers(0, 2, symbols * kind.bits_per_symbol)
    s = modulate(bits, kind)
    np.testing.assert_array_equal(demodulate(s, kind), bits)
    assert abs(np.mean(s.i**2 + s.q**2) - 1.0) < 1e-12


@given(points(), points())
def test_loss_shape_symmetric_and_nonnegative(x, y):
    a, b = float(loss_shape(x, y).data), float(loss_shape(y, x).data)
    assert a >= 0
    assert np.isclose(a, b, rtol=1e-12, atol=1e-12)
    assert float(loss_shape(x, x).data) == 0.0


@given(arrays(np.float64, (2, 6), elements=finite), st.integers(0, 2**32 - 1))
def test_losses_nonnegative(logits, seed):
    rng = np.random.default_rng(seed)
    clean = modulate(rng.integers(0, 2, 12), ModulationKind.QPSK).to_array()
    assert float(loss_a(Tensor(logits), clean).data) >= 0
    assert float(loss_b(Tensor(logits[0]), rng.integers(0, 2, 6)).data) >= 0
    assert float(loss_mse(Tensor(logits), clean).data) >= 0


@given(st.integers(0, 500))
def test_alpha_schedule_bounds(epoch):
    a = alpha_schedule(epoch)
    assert 0.5 <= a <= 1.0
    assert alpha_schedule(epoch + 1) <= a


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    out = T.softmax(Tensor(x), axis=-1).data
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_attention_shape_and_convexity(length, hd, seed):
    rng = np.random.default_rng(seed)
    q, k, v = (rng.standard_normal((2, length, hd)) * 5 for _ in range(3))
    out = T.attention(Tensor(q), Tensor(k), Tensor(v)).data
    assert out.shape == v.shape
    # every output is a convex combination of value rows
    assert np.all(out <= v.max(axis=-2, keepdims=True) + 1e-9)
    assert np.all(out >= v.min(axis=-2, keepdims=True) - 1e-9)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=40), st.integers(0, 2**32 - 1))
def test_ber_properties(bits, seed):
    x = np.array(bits)
    y = np.random.default_rng(seed).integers(0, 2, x.size)
    assert ber(x, x) == 0.0
    assert 0.0 <= ber(x, y) <= 1.0
    assert ber(x, y) == ber(y, x)


@given(st.floats(0.1, 1e4), st.floats(0.0, 1e3), st.floats(0.01, 10))
def test_shannon_monotone(bw, s, n):
    c = shannon_capacity(bw, s, n)
    assert shannon_capacity(bw, s * 1.5 + 1e-3, n) > c
    assert shannon_capacity(bw * 1.5, s, n) >= c


@given(st.floats(0.0, 1.0), st.floats(0.0, 5.0), st.integers(0, 10_000), st.sampled_from(["base", "mse_aux"]))
def test_config_round_trip(alpha, beta, seed, mode):
    from specfill.config import TrainConfig

    cfg = TrainConfig(seed=seed, loss=LossConfig(mode, alpha=alpha, beta=beta))
    assert from_ini(to_ini(cfg)) == cfg
