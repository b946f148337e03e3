import math

import numpy as np
import pytest

from mixspt import gf2
from mixspt.channels import ChannelSpec
from mixspt.decoders import (DecodingLattice, ErrorModel, OddDefectError, ReferenceMatcher, benchmark_point,
                             brute_force_pairing_weight, class_probability_exact, class_probability_tm,
                             decode_1d_ml, decode_2d_matching, matching_failures, parity_posterior,
                             sample_edges, sample_parity_entropy, write_benchmark_csv, LatticeTooLargeError)
from mixspt.lattice import LiebCylinder2D
from mixspt.protocol import h2


def test_1d_ml_limits():
    obs = {"A": np.array([1, -1, 1]), "B": np.array([-1, -1])}
    guess, ent = decode_1d_ml(obs, 0.0, 0.0)
    assert guess == {"A": -1, "B": 1} and ent == 0.0
    _, ent = decode_1d_ml(obs, 0.5, 0.5)
    assert ent == pytest.approx(2.0)
    _, ent = decode_1d_ml({"B": np.ones(10)}, 0.0, 0.1)
    assert ent == pytest.approx(h2((1 + 0.8 ** 10) / 2))


def test_1d_ml_success_matches_sampled_environments():
    rng = np.random.default_rng(0)
    n, p, trials = 10, 0.1, 100_000
    true = np.where(rng.random((trials, n)) < 0.5, 1, -1)
    env_flips = rng.random((trials, n)) < p
    observed = np.where(env_flips, -true, true)
    guesses = np.prod(observed, axis=1)  # bias positive, so ML keeps the observed parity
    success = np.mean(guesses == np.prod(true, axis=1))
    expected = (1 + 0.8 ** 10) / 2
    sigma = math.sqrt(expected * (1 - expected) / trials)
    assert abs(success - expected) < 3 * sigma


def test_sdc_parity_posterior_reduces_to_dephasing():
    obs = np.array([[1, -1, -1, 1, 1]])
    sdc = ErrorModel("sdc", q=0.3, r=0.0)
    z = ErrorModel("z", p=0.15)
    assert parity_posterior(sdc, obs) == pytest.approx(parity_posterior(z, obs), abs=1e-15)


def test_sampled_parity_entropy_matches_closed_form():
    rng = np.random.default_rng(1)
    spec = ChannelSpec("sdc", theta=0.3, phi=0.2, q=0.6)
    from mixspt.protocol import parity_posterior_entropy
    samples = sample_parity_entropy(spec, 5, "B", 40_000, rng)
    exact = parity_posterior_entropy(spec, 5, "B")
    assert abs(samples.mean() - exact) < 3 * samples.std() / math.sqrt(len(samples))


def test_check_structure():
    dl = DecodingLattice(4, 5)
    assert dl.H.shape == (15, 3 * 5 + 2 * 5)
    assert (dl.H.sum(axis=0) == 2).all()  # every noisy edge borders two plaquettes
    assert gf2.rank(dl.H) == 14
    assert dl.logical.sum() == 3
    noisy = DecodingLattice(4, 5, boundary_noise=True)
    assert noisy.H.shape == (17, 35) and (noisy.H.sum(axis=0) == 2).all()


def test_true_records_have_no_syndrome():
    rng = np.random.default_rng(2)
    dl = DecodingLattice(5, 4)
    s = sample_edges(dl, ErrorModel("z", p=0.2), rng, 50)
    assert not dl.record_syndrome(s.true).any()
    assert (dl.record_syndrome(s.observed) == dl.syndrome(s.errors)).all()


def test_zero_defects_and_adjacent_pair():
    dl = DecodingLattice(4, 4)
    model = ErrorModel("z", p=0.1)
    record = np.ones(len(dl.cylinder.edges), dtype=int)
    correction, gamma = decode_2d_matching(dl, model, record)
    assert not correction.any() and gamma == 1
    j = dl.column_of[dl.cylinder.horizontal_edge(1, 2)]
    record[dl.noisy_positions[j]] = -1
    correction, gamma = decode_2d_matching(dl, model, record)
    assert correction.sum() == 1 and correction[j] == 1


def test_odd_defects_rejected():
    dl = DecodingLattice(4, 4)
    with pytest.raises(OddDefectError):
        ReferenceMatcher(dl, np.ones(dl.H.shape[1])).decode(np.eye(dl.H.shape[0], dtype=np.uint8)[0])
    with pytest.raises(OddDefectError):
        decode_2d_matching(dl, ErrorModel("z", p=0.1), np.ones(len(dl.cylinder.edges)),
                           syndrome=np.eye(dl.H.shape[0], dtype=np.uint8)[0])


@pytest.mark.parametrize("boundary", [False, True])
def test_matching_is_minimum_weight(boundary):
    rng = np.random.default_rng(3)
    dl = DecodingLattice(5, 4, boundary)
    model = ErrorModel("z", p=0.12)
    w = np.full(dl.H.shape[1], math.log(0.88 / 0.12))
    ref = ReferenceMatcher(dl, w)
    sample = sample_edges(dl, model, rng, 80)
    checked = 0
    for rec, err in zip(sample.observed, sample.errors):
        syn = dl.syndrome(err)
        fast, _ = decode_2d_matching(dl, model, rec)
        slow, total = ref.decode(syn)
        assert (dl.syndrome(fast) == syn).all() and (dl.syndrome(slow) == syn).all()
        assert w @ fast == pytest.approx(w @ slow)
        if syn.sum() <= 8:
            assert brute_force_pairing_weight(dl, w, syn) == pytest.approx(total)
            checked += 1
    assert checked > 20


def test_homology_soundness():
    rng = np.random.default_rng(4)
    dl = DecodingLattice(5, 5)
    model = ErrorModel("z", p=0.08)
    kernel = gf2.nullspace(dl.H)
    loops = [k for k in kernel if dl.logical_parity(k) == 0]
    sample = sample_edges(dl, model, rng, 30)
    for rec, err in zip(sample.observed, sample.errors):
        _, gamma = decode_2d_matching(dl, model, rec)
        loop = loops[rng.integers(len(loops))]
        true_gamma = int(np.prod(dl.noisy_part(rec)[dl.logical == 1])) * (-1) ** int(dl.logical_parity(err))
        # flipping a contractible loop of true outcomes leaves the syndrome and the string charge unchanged
        shifted_rec = rec.copy()
        shifted_rec[dl.noisy_positions[loop == 1]] *= -1
        _, gamma_shifted = decode_2d_matching(dl, model, shifted_rec)
        assert dl.logical_parity(loop) == 0
        assert gamma_shifted == gamma
        assert (gamma_shifted == true_gamma) == (gamma == true_gamma)


@pytest.mark.parametrize("boundary", [False, True])
@pytest.mark.parametrize("model", [ErrorModel("z", p=0.1), ErrorModel("sdc", q=0.5, r=0.6)], ids=["z", "sdc"])
def test_exact_and_transfer_matrix_class_probabilities_agree(boundary, model):
    rng = np.random.default_rng(5)
    dl = DecodingLattice(4, 4, boundary)
    for rec in sample_edges(dl, model, rng, 15).observed:
        a, b = class_probability_exact(dl, model, rec), class_probability_tm(dl, model, rec)
        assert a.reference_parity == b.reference_parity
        assert np.allclose(a.log_probs, b.log_probs, atol=1e-9)


def test_class_probabilities_sum_to_record_probability():
    # each record's class sum runs over the 2^k patterns sharing its syndrome,
    # so summing over all records counts every pattern 2^k times
    dl = DecodingLattice(3, 3)
    model = ErrorModel("z", p=0.2)
    n = dl.H.shape[1]
    total = 0.0
    rng = np.random.default_rng(6)
    true = sample_edges(dl, model, rng, 1).true[0]
    for bits in range(2 ** n):
        errs = ((bits >> np.arange(n)) & 1).astype(np.uint8)
        rec = true.copy()
        rec[dl.noisy_positions[errs == 1]] *= -1
        lk = class_probability_exact(dl, model, rec)
        total += np.exp(np.logaddexp(*lk.log_probs)) / 2 ** len(gf2.nullspace(dl.H))
    assert total == pytest.approx(1.0, abs=1e-9)


def test_sdc_zero_bias_equals_dephasing_at_half_q():
    rng = np.random.default_rng(7)
    dl = DecodingLattice(4, 3)
    sdc, z = ErrorModel("sdc", q=0.3, r=0.0), ErrorModel("z", p=0.15)
    for rec in sample_edges(dl, sdc, rng, 10).observed:
        a, b = class_probability_exact(dl, sdc, rec), class_probability_exact(dl, z, rec)
        da, db = a.log_probs - np.logaddexp(*a.log_probs), b.log_probs - np.logaddexp(*b.log_probs)
        assert np.abs(da - db).max() < 1e-12


def test_delta_saturates_without_noise():
    dl = DecodingLattice(3, 3)
    lk = class_probability_exact(dl, ErrorModel("z", p=0.0), np.ones(len(dl.cylinder.edges)))
    assert lk.saturated and lk.delta is None and lk.entropy == 0.0


def test_delta_grows_with_size_below_threshold():
    rng = np.random.default_rng(8)
    model = ErrorModel("z", p=0.04)
    means = []
    for L in (3, 4):
        dl = DecodingLattice(L, L)
        vals = [class_probability_exact(dl, model, rec).delta for rec in sample_edges(dl, model, rng, 400).observed]
        means.append(np.mean([v for v in vals if v is not None]))
    assert means[1] > means[0]


def test_too_large_for_exhaustive_sum():
    dl = DecodingLattice(7, 7)
    with pytest.raises(LatticeTooLargeError):
        class_probability_exact(dl, ErrorModel("z", p=0.1), np.ones(len(dl.cylinder.edges)))


def test_mwpm_close_to_maximum_likelihood_on_small_lattice():
    rng = np.random.default_rng(9)
    dl = DecodingLattice(4, 4)
    model = ErrorModel("z", p=0.05)
    sample = sample_edges(dl, model, rng, 3000)
    mwpm = matching_failures(dl, model, sample)
    ml = np.array([class_probability_exact(dl, model, rec).chosen != dl.logical_parity(err)
                   for rec, err in zip(sample.observed, sample.errors)])
    assert ml.mean() <= mwpm.mean() + 1e-12
    diff = mwpm.astype(float) - ml
    assert abs(diff.mean()) < 3 * max(diff.std(), 1e-3) / math.sqrt(len(diff)) + 1e-3


def test_failure_rate_monotone_in_p():
    rates = [benchmark_point(12, p, 3000, seed=10).failure_rate for p in (0.05, 0.1, 0.15)]
    assert rates[0] < rates[1] < rates[2]


def test_sdc_matching_runs_with_outcome_dependent_weights():
    row = benchmark_point(6, 0.0, 200, seed=11, model_kind="sdc", q=0.2, r=0.5)
    assert 0 <= row.failure_rate < 0.5


def test_benchmark_csv(tmp_path):
    row = benchmark_point(4, 0.05, 200, seed=12, with_delta=True)
    path = tmp_path / "bench.csv"
    write_benchmark_csv([row], str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "L,p,n_samples,failure_rate,stderr,mean_delta,seed"
    assert lines[1].startswith("4,0.05,200,")


def test_protocol_decoder_estimator_on_cylinder():
    from mixspt.protocol import coherent_info_no_env
    lat = LiebCylinder2D(4, 4)
    zero = coherent_info_no_env(lat, ChannelSpec("z_dephase", p_b=0.0, mask="B"), "decoder_mc", n_traj=10, seed=0)
    assert zero.value == 1.0
    low = coherent_info_no_env(lat, ChannelSpec("z_dephase", p_b=0.03, mask="B"), "decoder_mc", n_traj=300, seed=1)
    high = coherent_info_no_env(lat, ChannelSpec("z_dephase", p_b=0.3, mask="B"), "decoder_mc", n_traj=300, seed=1)
    assert low.value > high.value
    assert high.value == pytest.approx(0.0, abs=0.1)
