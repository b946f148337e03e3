import math

import numpy as np
import pytest

from mixspt.channels import ChannelSpec
from mixspt.decoders import DecodingLattice, ErrorModel, benchmark_point, matching_failures, sample_edges
from mixspt.lattice import Chain1D
from mixspt.protocol import coherent_info_no_env, h2
from mixspt.virtual import (RepetitionNoise, decode_repetition, foliated_from_sample, logical_flips,
                            sample_repetition_noise, simulate_virtual_1d, simulate_virtual_2d, syndrome_history,
                            virtual_benchmark_point)


def test_virtual_1d_noiseless_is_one():
    est = simulate_virtual_1d(5, 0.0, 1000)
    assert est.value == pytest.approx(1.0, abs=1e-12)


def test_virtual_1d_matches_closed_form():
    est = simulate_virtual_1d(10, 0.1, 100_000, seed=1)
    exact = 1 - h2((1 + 0.8 ** 10) / 2)
    assert abs(est.value - exact) < 3 * est.stderr


def test_virtual_1d_fully_scrambled():
    est = simulate_virtual_1d(2, 0.5, 100_000, seed=2)
    assert abs(est.value) < 3 * est.stderr


def test_virtual_1d_argument_errors():
    with pytest.raises(ValueError):
        simulate_virtual_1d(3, 0.6, 100)
    with pytest.raises(ValueError):
        simulate_virtual_1d(0, 0.1, 100)


@pytest.mark.parametrize("N,p", [(2, 0.1), (3, 0.2), (3, 0.05)])
def test_estimator_triangle(N, p):
    chain = Chain1D(N)
    channel = ChannelSpec("z_dephase", p_b=p, mask="B")
    dense = coherent_info_no_env(chain, channel, "exact_dense").value
    closed = coherent_info_no_env(chain, channel, "closed_form").value
    virtual = simulate_virtual_1d(N, p, 50_000, seed=N)
    assert dense == pytest.approx(closed, abs=1e-9)
    assert abs(virtual.value - closed) < 3 * virtual.stderr
    assert abs(virtual.value - dense) < 3 * virtual.stderr


def test_noiseless_repetition_code_never_fails():
    assert simulate_virtual_2d(6, 6, 0.0, 500).failure_rate == 0.0


def test_single_data_flip_creates_two_events():
    noise = RepetitionNoise(np.zeros((1, 3, 5), dtype=np.uint8), np.zeros((1, 4, 5), dtype=np.uint8))
    noise.data_flips[0, 1, 2] = 1
    events = syndrome_history(noise)[0]
    assert events.sum() == 2 and events[1, 1] == 1 and events[1, 2] == 1
    noise.meas_errors[0, 2, 0] = 1  # a measurement error lights two consecutive rounds
    events = syndrome_history(noise)[0]
    assert events[1, 0] == 1 and events[2, 0] == 1


def test_shared_seed_syndromes_identical():
    dl = DecodingLattice(8, 6)
    sample = sample_edges(dl, ErrorModel("z", p=0.1), np.random.default_rng(3), 2000)
    noise = foliated_from_sample(dl, sample)
    history = syndrome_history(noise).reshape(len(sample.errors), -1)
    assert (history == dl.syndrome(sample.errors)).all()
    assert (logical_flips(noise) == dl.logical_parity(sample.errors)).all()
    direct = matching_failures(dl, ErrorModel("z", p=0.1), sample)
    foliated = decode_repetition(noise, 0.1)
    assert abs(direct.mean() - foliated.mean()) < 0.01  # differ only where tied matchings exist


def test_failure_rates_match_decoder_module():
    for L, p in [(8, 0.07), (12, 0.09)]:
        a = virtual_benchmark_point(L, p, 8000, seed=4)
        b = benchmark_point(L, p, 8000, seed=5)
        assert abs(a.failure_rate - b.failure_rate) < 3 * math.hypot(a.stderr, b.stderr)


def test_failure_rate_falls_with_size_below_crossing():
    rates = [simulate_virtual_2d(L, L, 0.05, 10_000, seed=6).failure_rate for L in (6, 10, 14)]
    assert rates[0] > rates[1] > rates[2]


def test_boundary_rounds_are_perfect():
    noise = sample_repetition_noise(5, 4, 0.5, 100, np.random.default_rng(7))
    assert not noise.meas_errors[:, [0, -1]].any()
    with pytest.raises(ValueError):
        foliated_from_sample(DecodingLattice(4, 4, boundary_noise=True),
                             sample_edges(DecodingLattice(4, 4, True), ErrorModel("z", p=0.1),
                                          np.random.default_rng(8), 2))
