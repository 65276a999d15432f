import itertools
import time

import numpy as np
import pytest

from specfill.modem import BitMessage, IQSignal, ModulationKind, demodulate, modulate, symbol_labels

BPSK, QPSK = ModulationKind.BPSK, ModulationKind.QPSK
R = 1 / np.sqrt(2)


def all_words(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)


def test_bpsk_mapping():
    s = modulate(BitMessage.from_string("011"), BPSK)
    np.testing.assert_array_equal(s.i, [1, -1, -1])
    np.testing.assert_array_equal(s.q, [0, 0, 0])


def test_qpsk_mapping():
    s = modulate([0, 0], QPSK)
    np.testing.assert_allclose([s.i[0], s.q[0]], [R, R], atol=1e-15)
    s = modulate([0, 1, 1, 0, 1, 1], QPSK)
    np.testing.assert_allclose(s.i, [R, -R, -R], atol=1e-15)
    np.testing.assert_allclose(s.q, [-R, R, -R], atol=1e-15)


def test_lengths():
    assert modulate(np.zeros(32), BPSK).n == 32
    assert modulate(np.zeros(2048), QPSK).n == 1024


def test_slicing_and_tie_break():
    s = IQSignal(np.array([0.9, -1.1, 0.0]), np.zeros(3))
    np.testing.assert_array_equal(demodulate(s, BPSK), [0, 1, 0])
    s = IQSignal(np.array([0.0]), np.array([-0.0]))
    np.testing.assert_array_equal(demodulate(s, QPSK), [0, 0])


@pytest.mark.parametrize("kind", [BPSK, QPSK])
def test_exhaustive_round_trip_and_unit_energy(kind):
    t0 = time.perf_counter()
    for n in range(kind.bits_per_symbol, 13, kind.bits_per_symbol):
        words = all_words(n)
        s = modulate(words, kind)
        np.testing.assert_array_equal(demodulate(s, kind), words)
        energy = s.i**2 + s.q**2
        np.testing.assert_allclose(energy.mean(), 1.0, rtol=0, atol=1e-15)
    assert time.perf_counter() - t0 < 1.0


def test_all_qpsk_bytes_round_trip():
    words = all_words(8)
    assert len(words) == 256
    assert np.count_nonzero(demodulate(modulate(words, QPSK), QPSK) != words) == 0


def test_qpsk_gray_neighbours_differ_in_one_bit():
    points = {}
    for bits in itertools.product((0, 1), repeat=2):
        s = modulate(bits, QPSK)
        points[bits] = np.angle(s.i[0] + 1j * s.q[0])
    for a, b in itertools.combinations(points, 2):
        gap = abs((points[a] - points[b] + np.pi) % (2 * np.pi) - np.pi)
        if np.isclose(gap, np.pi / 2):
            assert sum(x != y for x, y in zip(a, b)) == 1


def test_symbol_labels():
    np.testing.assert_array_equal(symbol_labels([0, 1, 1, 0, 1, 1], QPSK), [1, 2, 3])
    np.testing.assert_array_equal(symbol_labels([1, 0], BPSK), [1, 0])


def test_validation_errors():
    with pytest.raises(ValueError):
        modulate([0, 1, 0], QPSK)
    with pytest.raises(ValueError):
        modulate([0, 2], BPSK)
    with pytest.raises(ValueError):
        BitMessage.from_string("01x")
    with pytest.raises(ValueError):
        BitMessage(np.array([], dtype=np.uint8))
    with pytest.raises(ValueError):
        IQSignal(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        IQSignal(np.array([np.nan]), np.zeros(1))
    with pytest.raises(ValueError, match="unknown modulation"):
        ModulationKind.parse("8psk")


def test_parse_and_string_round_trip():
    assert ModulationKind.parse("QPSK") is QPSK
    assert BitMessage.from_string("10110").to_string() == "10110"
    s = modulate(all_words(4), QPSK)
    back = IQSignal.from_array(s.to_array())
    np.testing.assert_array_equal(back.i, s.i)
    assert s.to_array().shape == (16, 2, 2)
