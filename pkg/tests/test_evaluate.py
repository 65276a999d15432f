import math

import numpy as np
import pytest
from scipy.stats import norm

from specfill.channel import make_rng
from specfill.config import TrainConfig, preset
from specfill.evaluate import (
    BerPoint, ber, baseline_ber_a, bitrates, capacity_curve, capacity_empirical, export_signals, learned_signals,
    q_component_utilization, shannon_capacity, sweep_ber, theoretical_ber, write_ber_csv,
)
from specfill.modem import BitMessage, IQSignal, ModulationKind, modulate
from specfill.networks import init_params
from specfill.training import split, synthesize_dataset, train

from _toy import alpha_one_config, toy_config


@pytest.fixture(scope="module")
def trained():
    # eight B bits per example keeps the 1e5-bit sweeps short
    cfg = toy_config(length_b=8, dataset_size=512, epochs=4)
    tr, te = split(synthesize_dataset(cfg), 0.8)
    return cfg, train(tr, cfg, te).best_params, te


@pytest.fixture(scope="module")
def a_preserving():
    cfg = alpha_one_config()
    tr, te = split(synthesize_dataset(cfg), 0.8)
    return cfg, train(tr, cfg, te).best_params, te


def test_ber_examples():
    truth = BitMessage(np.zeros(32, np.uint8))
    flipped = np.zeros(32, np.uint8)
    flipped[5] = 1
    assert ber(truth, truth) == 0.0
    assert ber(flipped, truth) == 0.03125
    assert ber(np.ones(32), truth) == 1.0
    with pytest.raises(ValueError):
        ber([0, 1], [0])


def test_capacity_examples():
    assert capacity_empirical(1, 1.0) == 1.0
    assert capacity_empirical(1, 0.75) == 0.75
    with pytest.raises(ValueError):
        capacity_empirical(1, 1.5)


def test_shannon_examples():
    assert shannon_capacity(1, 0, 1) == 0.0
    assert shannon_capacity(1, 3, 1) == 2.0
    assert shannon_capacity(3000, 1000, 1) == pytest.approx(3000 * math.log(1001) / math.log(2))
    assert shannon_capacity(3000, 1000, 1) == pytest.approx(29901.7, abs=0.1)
    with pytest.raises(ValueError):
        shannon_capacity(1, 1, 0)


def test_bitrates():
    assert bitrates(preset("exp1-bpsk")) == (1.0, 1.0)
    assert bitrates(preset("exp2-qpsk-mse")) == (2.0, 4 / 256)


def test_theoretical_ber_against_scipy():
    assert theoretical_ber(ModulationKind.BPSK, 10 * math.log10(4)) == pytest.approx(norm.sf(math.sqrt(8)), rel=1e-12)
    assert theoretical_ber(ModulationKind.QPSK, 10.0) == pytest.approx(norm.sf(math.sqrt(10)), rel=1e-12)
    assert theoretical_ber(ModulationKind.BPSK, 10 * math.log10(4)) == pytest.approx(2.3389e-3, rel=1e-4)


def test_baseline_ber_matches_theory():
    sim = baseline_ber_a(ModulationKind.QPSK, 6.0, 10**6, seed=3)
    assert sim == pytest.approx(theoretical_ber(ModulationKind.QPSK, 6.0), rel=0.1)


def test_capacity_curve_doubles_at_high_snr():
    cfg = preset("exp1-bpsk")
    caps = capacity_curve([BerPoint(14.0, 0.0, 0.0, 10**5, 10**5)], cfg)
    assert caps[0].capacity_a_only == pytest.approx(1.0, abs=1e-6)
    assert caps[0].capacity_learned == 2.0


def test_q_component_utilization():
    assert q_component_utilization(modulate(np.array([0, 1, 1, 0]), ModulationKind.BPSK)) == 0.0
    assert q_component_utilization(IQSignal(np.ones(5), np.full(5, 0.3))) == 0.0
    assert q_component_utilization(np.array([[[1, 1], [1, -1]]])) == 1.0


def test_noiseless_sweep_preserves_a(a_preserving):
    cfg, params, te = a_preserving
    (p,) = sweep_ber(params, cfg, te, [np.inf], min_bits=1000)
    assert p.ber_a == 0.0


def test_sweep_monotone_and_deterministic(trained):
    cfg, params, te = trained
    snrs = [5.0, 7.5, 10.0, 12.5, 15.0]
    pts = sweep_ber(params, cfg, te, snrs, min_bits=100_000, seed=1)
    assert pts == sweep_ber(params, cfg, te, snrs, min_bits=100_000, seed=1)
    for lo, hi in zip(pts, pts[1:]):
        se = math.sqrt(max(lo.ber_a, 1e-6) * (1 - lo.ber_a) / lo.bits_counted_a)
        assert hi.ber_a <= lo.ber_a + 3 * se
    assert all(p.bits_counted_a >= 100_000 and p.bits_counted_b >= 100_000 for p in pts)


def test_doubling_bit_budget_is_consistent(trained):
    cfg, params, te = trained
    (a,) = sweep_ber(params, cfg, te, [8.0], min_bits=50_000, seed=2)
    (b,) = sweep_ber(params, cfg, te, [8.0], min_bits=100_000, seed=5)
    for x, y, n in ((a.ber_a, b.ber_a, a.bits_counted_a), (a.ber_b, b.ber_b, a.bits_counted_b)):
        se = math.sqrt(max(x, 1e-4) * (1 - x) / n)
        assert abs(x - y) < 3 * se


def test_ber_csv(tmp_path):
    write_ber_csv(tmp_path / "b.csv", [BerPoint(5.0, 0.1, 0.2, 100, 200)])
    assert (tmp_path / "b.csv").read_text() == "esn0_db,ber_a,ber_b,bits_a,bits_b\n5.0,0.1,0.2,100,200\n"


def test_export_signals(trained, tmp_path):
    cfg, params, te = trained
    t1, c1 = export_signals(params, cfg, te, 3, 10.0, tmp_path / "a", seed=4)
    t2, c2 = export_signals(params, cfg, te, 3, 10.0, tmp_path / "b", seed=4)
    assert t1.read_bytes() == t2.read_bytes() and c1.read_bytes() == c2.read_bytes()
    rows = t1.read_text().splitlines()
    assert rows[0] == "index,i_fixed,q_fixed,i_learned,q_learned"
    assert len(rows) - 1 == cfg.length_a
    assert all(float(r.split(",")[2]) == 0.0 for r in rows[1:])
    assert len(c1.read_text().splitlines()) - 1 == cfg.length_a
    with pytest.raises(IndexError):
        export_signals(params, cfg, te, len(te), 10.0, tmp_path / "c")


def test_learned_signals_shape():
    cfg = toy_config()
    params = init_params(cfg.modulator, cfg.demodulator, make_rng(0))
    ds = synthesize_dataset(cfg)
    assert learned_signals(params, cfg, ds).shape == (64, 2, 8)
