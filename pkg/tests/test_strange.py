import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixspt.channels import ChannelSpec
from mixspt.lattice import Chain1D, LiebCylinder2D
from mixspt.protocol import h2
from mixspt.statmech import (IsingInstance, SquareLattice, log_partition_exact,
                             nishimori_beta, sample_lambda_disorder, sample_nishimori, _all_configs)
from mixspt.strange import (LiebGraph, LRBlocks, Ring1D, SC_COLUMNS, UnsupportedClosedFormError,
                            cluster_vector, fit_correlation_length, ic_from_sc, ic_via_blocks, lr_blocks,
                            perturbed_type1_sc, reconstruct_lr, sample_trajectory, type1_decay_1d, type1_sc,
                            type2_sc, write_sc_csv, x_basis_amplitudes)


@settings(max_examples=15, deadline=None)
@given(st.floats(0, math.pi / 2), st.floats(0, math.pi / 2), st.floats(0, 1))
def test_type2_dense_matches_closed_form(theta, phi, q):
    ring = Ring1D(6)
    channel = ChannelSpec("sdc", theta=theta, phi=phi, q=q, mask="A")
    dense_val = type2_sc(channel, ring, 0, 6).value
    assert dense_val == pytest.approx(type2_sc(channel, ring, 0, 6, "closed_form").value, abs=1e-10)
    s, t = q * math.sin(2 * phi), 1 - q
    expected = ((1 + s) ** 4 * (1 - s) ** 2 + t ** 6) / ((1 + s) ** 6 + t ** 6)
    assert dense_val == pytest.approx(expected, abs=1e-10)


def test_type2_limits():
    ring = Ring1D(6)
    sdc = ChannelSpec("sdc", theta=0.4, phi=0.3, q=0.8, mask="A")
    assert type2_sc(sdc, ring, 1, 7).value == pytest.approx(1.0, abs=1e-12)
    flat = ChannelSpec("sdc", theta=0.4, phi=0.0, q=0.8, mask="A")
    assert type2_sc(flat, ring, 0, 4).value == pytest.approx(1.0, abs=1e-12)
    # dephasing keeps E*(X) inside span(X), so the charge stays visible
    assert type2_sc(ChannelSpec("z_dephase", p_a=0.3, mask="A"), ring, 0, 4).value == pytest.approx(1.0)
    # full replacement by |+> kills the type-II signal on that sublattice
    assert type2_sc(ChannelSpec("swap", mask="A"), ring, 0, 4).value == pytest.approx(0.0, abs=1e-12)
    # separation independence
    vals = [type2_sc(sdc, ring, 0, 2 * k).value for k in range(1, 6)]
    assert np.ptp(vals) < 1e-12


def test_type2_closed_form_scope():
    ring = Ring1D(4)
    with pytest.raises(UnsupportedClosedFormError):
        type2_sc(ChannelSpec("sdc", theta=0.2, phi=0.2, mask="AB"), ring, 0, 2, "closed_form")
    with pytest.raises(UnsupportedClosedFormError):
        type2_sc(ChannelSpec("sdc", theta=0.2, phi=0.2, mask="A"), ring, 0, 1, "closed_form")
    with pytest.raises(UnsupportedClosedFormError):
        type2_sc(ChannelSpec("controlled_hadamard", p_a=0.3, mask="A"), ring, 0, 2, "closed_form")


@pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
def test_type1_decay_length_1d(p):
    report = type1_decay_1d(p, 8, np.random.default_rng(0))
    t = 1 - 2 * p
    assert np.allclose(report.values, t ** np.arange(1, 9), atol=1e-10)
    xi_exact = 1 / math.log(1 / t)
    assert abs(report.xi - xi_exact) < 0.05 * xi_exact
    assert report.xi_ci[0] <= report.xi <= report.xi_ci[1]


def test_type1_sign_tracks_bond_record():
    chain = Chain1D(4)
    channel = ChannelSpec("z_dephase", p_b=0.2, mask="B")
    rng = np.random.default_rng(1)
    for _ in range(5):
        m = sample_trajectory(chain, channel, rng)
        for n in (1, 2, 3, 4):
            sign = np.prod(m[1:2 * n:2])
            assert type1_sc(channel, chain, m, 0, 2 * n).value == pytest.approx(sign * 0.6 ** n, abs=1e-10)


def test_type1_without_noise_is_one():
    chain = Chain1D(3)
    m = sample_trajectory(chain, None, np.random.default_rng(2))
    assert abs(type1_sc(None, chain, m, 0, 6).value) == pytest.approx(1.0)


def test_x_basis_sampling_respects_stabilizers():
    chain = Chain1D(3)
    amps = x_basis_amplitudes(cluster_vector(chain), chain.n_sites)
    assert np.sum(np.abs(amps) ** 2) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = sample_trajectory(chain, None, rng)
        assert np.prod(m[0::2]) == 1  # product of A-site X's stabilizes the open chain


def test_type1_2d_dense_matches_ising_map_on_small_graph():
    graph = LiebGraph(SquareLattice(2, 4))
    channel = ChannelSpec("z_dephase", p_b=0.15, mask="B")
    rng = np.random.default_rng(4)
    for _ in range(3):
        m = sample_trajectory(graph, channel, rng)
        for i, j in [(0, 5), (1, 3), (2, 6)]:
            a = type1_sc(channel, graph, m, i, j).value
            b = type1_sc(channel, graph, m, i, j, "ising_map").value
            assert a == pytest.approx(b, abs=1e-10)


def test_type1_2d_dense_matches_ising_map_on_cylinder():
    lat = LiebCylinder2D(3, 3)
    channel = ChannelSpec("z_dephase", p_b=0.15, mask="B")
    m = sample_trajectory(lat, channel, np.random.default_rng(1))
    i, j = lat.vertex(0, 0), lat.vertex(2, 1)
    a = type1_sc(channel, lat, m, i, j).value
    assert a == pytest.approx(type1_sc(channel, lat, m, i, j, "ising_map").value, abs=1e-10)
    bad = m.copy()
    bad[lat.vertical_edge(0, 0)] *= -1  # breaks the undecohered boundary loop
    with pytest.raises(ValueError):
        type1_sc(channel, lat, bad, i, j)


def test_ising_map_scope():
    graph = LiebGraph(SquareLattice(2, 4))
    m = np.ones(graph.n_qubits, dtype=int)
    with pytest.raises(ValueError):
        type1_sc(ChannelSpec("z_dephase", p_a=0.1, p_b=0.1, mask="AB"), graph, m, 0, 1, "ising_map")
    with pytest.raises(ValueError):
        type1_sc(ChannelSpec("z_dephase", p_b=0.1, mask="B"), Chain1D(2), np.ones(5), 0, 2, "ising_map")


def fwht(v):
    v = np.array(v, dtype=float)
    h = 1
    while h < len(v):
        v = v.reshape(-1, 2, h)
        v = np.stack([v[:, 0] + v[:, 1], v[:, 0] - v[:, 1]], axis=1).reshape(-1)
        h *= 2
    return v


def test_edge_record_probability_is_partition_function():
    square = SquareLattice(2, 4)
    graph = LiebGraph(square)
    p = 0.2
    n, nv = graph.n_qubits, graph.n_vertices
    probs = np.abs(x_basis_amplitudes(cluster_vector(graph), n)) ** 2
    clean = probs.reshape(2 ** nv, -1).sum(axis=0)  # marginal over vertex outcomes
    ne = square.n_edges
    codes = np.arange(2 ** ne)
    n_flip = np.array([bin(c).count("1") for c in codes])
    noise = p ** n_flip * (1 - p) ** (ne - n_flip)
    # XOR convolution of the clean record distribution with the flip distribution
    noisy = np.real(fwht(fwht(clean) * fwht(noise))) / len(clean)
    ratios = []
    for code in range(2 ** ne):
        bits = (code >> (ne - 1 - np.arange(ne))) & 1
        bonds = 1 - 2 * bits
        z = math.exp(log_partition_exact(IsingInstance(square, nishimori_beta(p) * bonds)))
        if noisy[code] > 1e-15:
            ratios.append(noisy[code] / z)
    assert len(ratios) == 2 ** ne
    assert np.ptp(ratios) < 1e-9 * np.mean(ratios)


def test_born_and_iid_averages_agree_for_gauge_invariant_quantities():
    square = SquareLattice(3, 3)
    p = 0.15
    beta = nishimori_beta(p)
    spins = _all_configs(square.n_spins).astype(float)
    bond_products = spins[:, square.edges[:, 0]] * spins[:, square.edges[:, 1]]
    records = _all_configs(square.n_edges).astype(float)
    energies = bond_products @ (beta * records.T)  # (spin configs, records)
    shift = energies.max(axis=0)
    w = np.exp(energies - shift)
    z = w.sum(axis=0)
    i, j = 0, 5
    sc = (spins[:, i] * spins[:, j]) @ w / z
    f = 1 - h2((1 + np.abs(sc)) / 2)
    log_born = np.log(z) + shift
    born = np.exp(log_born - log_born.max())
    born /= born.sum()
    n_neg = (records == -1).sum(axis=1)
    iid = p ** n_neg * (1 - p) ** (square.n_edges - n_neg)
    assert born @ f == pytest.approx(iid @ f, rel=1e-10)
    assert born @ sc ** 2 == pytest.approx(iid @ sc ** 2, rel=1e-10)
    assert not np.allclose(born, iid)


@pytest.mark.parametrize("channel", [
    ChannelSpec("z_dephase", p_b=0.15, mask="B"),
    ChannelSpec("z_dephase", p_a=0.1, p_b=0.15, mask="AB"),
    ChannelSpec("sdc", theta=0.3, phi=0.4, q=0.7, mask="B"),
], ids=["zB", "zAB", "sdc"])
def test_block_reconstruction_and_sc_route(channel):
    blocks = lr_blocks(Chain1D(3), channel, 0, 6)
    assert blocks.p_m.sum() == pytest.approx(1.0)
    assert blocks.equal_diagonal.all()
    for rho, probs, sc in zip(blocks.rho, blocks.sector_probs, blocks.sc):
        assert np.abs(reconstruct_lr(probs, np.nan_to_num(sc)) - rho).max() < 1e-9
    res = ic_via_blocks(blocks)
    assert not res.fallback
    assert res.via_sc == pytest.approx(res.direct, abs=1e-10)


def test_sc_route_matches_closed_form_dephasing():
    blocks = lr_blocks(Chain1D(3), ChannelSpec("z_dephase", p_b=0.15, mask="B"), 0, 6)
    assert ic_via_blocks(blocks).value == pytest.approx(1 - h2((1 + 0.7 ** 3) / 2), abs=1e-12)


def test_unequal_diagonals_fall_back_to_dense_entropies():
    rho = np.diag([0.6, 0.0, 0.0, 0.4]).astype(complex)
    rho[0, 3] = rho[3, 0] = 0.2
    res = ic_via_blocks(LRBlocks(np.array([1.0]), rho[None]))
    assert res.fallback and res.via_sc is None
    assert res.value == pytest.approx(res.direct)


def test_ic_from_sc_validation():
    assert ic_from_sc([1.0], [[1.0, 0.0]], [[1.0, np.nan]]) == pytest.approx(1.0)
    assert ic_from_sc([1.0], [[0.5, 0.5]], [[0.0, 0.0]]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        ic_from_sc([0.5], [[1.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        ic_from_sc([1.0], [[1.0, 0.0]], [[1.5, 0.0]])
    with pytest.raises(ValueError):
        ic_from_sc([1.0], [1.0, 0.0], [1.0, 0.0])


def test_lambda_enhances_strange_correlator():
    square = SquareLattice(6, 6)
    rng = np.random.default_rng(5)
    p = 0.03
    for _ in range(5):
        bonds = sample_nishimori((6, 6), p, rng).instance.bonds
        base = perturbed_type1_sc(0.0, p, bonds, square, (0, 0), (5, 3)).value
        pert = perturbed_type1_sc(0.1, p, bonds, square, (0, 0), (5, 3)).value
        assert abs(pert) > abs(base)


def test_strange_correlator_vanishes_at_strong_noise():
    square = SquareLattice(6, 6)
    rng = np.random.default_rng(6)
    for sample in sample_lambda_disorder((6, 6), 0.45, 0.1, rng, 3):
        bonds = sample.instance.bonds
        mc = perturbed_type1_sc(0.1, 0.45, bonds, square, (0, 0), (5, 3), method="metropolis")
        assert abs(mc.value) < 3 * mc.extras["mc_stderr"]
        exact = perturbed_type1_sc(0.1, 0.45, bonds, square, (0, 0), (5, 3)).value
        assert abs(exact) < 1e-3


def test_fit_correlation_length():
    seps = np.arange(1, 7)
    xi, (lo, hi) = fit_correlation_length(seps, 0.5 * np.exp(-seps / 2.5))
    assert xi == pytest.approx(2.5)
    assert lo == pytest.approx(hi)
    noisy = np.exp(-seps / 2.5) * (1 + 0.05 * np.random.default_rng(7).standard_normal(6))
    xi, (lo, hi) = fit_correlation_length(seps, noisy)
    assert lo < xi < hi
    with pytest.raises(ValueError):
        fit_correlation_length([1, 2, 3], [1e-20, 0.0, 0.5])


def test_sc_csv(tmp_path):
    path = tmp_path / "sc.csv"
    write_sc_csv([["I", "z_dephase", 0.1, 0.0, 3, 0.512, 0.0, 4.48, 0]], str(path), {"version": "x"})
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(SC_COLUMNS + ["version"])
    assert lines[1].startswith("I,z_dephase,0.1,0.0,3,0.512")
