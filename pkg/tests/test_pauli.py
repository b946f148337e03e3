import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixspt import dense
from mixspt.pauli import (PauliOperator, StabilizerState, entanglement_entropy,
                          measure_pauli, multiply)


def test_x_times_z_is_minus_i_y():
    p = multiply(PauliOperator.from_string("X"), PauliOperator.from_string("Z"))
    assert p.letters() == "Y"
    assert p.phase == -1j


@given(st.text(alphabet="IXYZ", min_size=1, max_size=6), st.sampled_from([1, -1]))
def test_hermitian_pauli_squares_to_identity(label, sign):
    p = PauliOperator.from_string(label, sign)
    sq = p * p
    assert sq.x == 0 and sq.z == 0 and sq.phase == 1


def test_two_qubit_product_matches_matrices():
    p = PauliOperator.from_string("XZ")
    q = PauliOperator.from_string("ZX")
    assert np.allclose((p * q).to_matrix(), p.to_matrix() @ q.to_matrix())


@given(st.text(alphabet="IXYZ", min_size=3, max_size=3), st.text(alphabet="IXYZ", min_size=3, max_size=3),
       st.sampled_from([1, -1, 1j, -1j]), st.sampled_from([1, -1, 1j, -1j]))
def test_products_and_commutation_match_matrices(a, b, sa, sb):
    p, q = PauliOperator.from_string(a, sa), PauliOperator.from_string(b, sb)
    mp, mq = p.to_matrix(), q.to_matrix()
    assert np.allclose((p * q).to_matrix(), mp @ mq)
    assert p.commutes(q) == np.allclose(mp @ mq, mq @ mp)


def test_size_mismatch_raises():
    with pytest.raises(ValueError, match="size mismatch"):
        multiply(PauliOperator.from_string("X"), PauliOperator.from_string("XX"))


def test_deterministic_measurement():
    state = StabilizerState.zeros(1)
    outcome, post, det = measure_pauli(state, PauliOperator.from_string("Z"), np.random.default_rng(0))
    assert (outcome, det) == (1, True)
    assert post.generators == state.generators


def test_random_measurement_frequency():
    rng = np.random.default_rng(1)
    state = StabilizerState.zeros(1)
    x = PauliOperator.from_string("X")
    outs = [measure_pauli(state, x, rng)[0] for _ in range(10_000)]
    assert abs(np.mean(np.array(outs) == 1) - 0.5) < 0.02


def test_non_hermitian_measurement_rejected():
    with pytest.raises(ValueError, match="Hermitian"):
        measure_pauli(StabilizerState.zeros(1), PauliOperator.from_string("X", 1j), np.random.default_rng(0))


def test_repeated_measurement_is_stable():
    rng = np.random.default_rng(2)
    state = StabilizerState.plus(3).cz(0, 1).cz(1, 2)
    p = PauliOperator.from_string("ZIY")
    first, post, _ = measure_pauli(state, p, rng)
    second, post2, det = measure_pauli(post, p, rng)
    assert det and first == second
    assert post2.generators == post.generators


def test_bell_pair_entropy():
    bell = StabilizerState(2, [PauliOperator.from_string("XX"), PauliOperator.from_string("ZZ")])
    assert entanglement_entropy(bell, [0]) == 1.0
    assert entanglement_entropy(StabilizerState.zeros(4), [0, 2]) == 0.0
    with pytest.raises(IndexError):
        entanglement_entropy(bell, [5])


def test_five_qubit_cluster_leaves_dressed_bell_pair():
    # measuring X on the bulk of a 5-site chain leaves Z^{ge} X^{go} acting on a Bell pair
    state = StabilizerState.plus(5)
    for i in range(4):
        state = state.cz(i, i + 1)
    rng = np.random.default_rng(3)
    outcomes = {}
    for q in (1, 2, 3):
        outcomes[q], state, _ = measure_pauli(state, PauliOperator.on(5, {q: "X"}), rng)
    g_even, g_odd = outcomes[2], outcomes[1] * outcomes[3]
    assert state.expectation(PauliOperator.on(5, {0: "X", 4: "X"})) == g_even
    assert state.expectation(PauliOperator.on(5, {0: "Z", 4: "Z"})) == g_odd
    assert entanglement_entropy(state, [4]) == 1.0


def _random_clifford(n, depth, rng):
    ops = []
    for _ in range(depth):
        kind = rng.integers(4)
        a, b = rng.choice(n, size=2, replace=False)
        ops.append((("h", "s", "cnot", "cz")[kind], int(a), int(b)))
    return ops


_GATES = {"h": dense.H, "s": np.diag([1, 1j])}
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


def _run_both(n, ops):
    stab = StabilizerState.zeros(n)
    vec = np.zeros(2 ** n, dtype=complex)
    vec[0] = 1
    ds = dense.DenseState.from_vector(vec)
    for name, a, b in ops:
        if name in ("h", "s"):
            stab = getattr(stab, name)(a)
            ds = dense.apply_unitary(ds, _GATES[name], [a])
        elif name == "cnot":
            stab = stab.cnot(a, b)
            ds = dense.apply_unitary(ds, _CNOT, [a, b])
        else:
            stab = stab.cz(a, b)
            ds = dense.apply_unitary(ds, _CZ, [a, b])
    return stab, ds


def test_entropy_matches_dense_on_random_cliffords():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        stab, ds = _run_both(n, _random_clifford(n, 30, rng))
        for g in stab.generators:
            assert np.allclose(g.to_matrix() @ ds.data, ds.data)
        region = [int(q) for q in rng.choice(n, size=int(rng.integers(1, n)), replace=False)]
        assert abs(entanglement_entropy(stab, region) - dense.entropy(ds, region)) < 1e-12
        comp = [q for q in range(n) if q not in region]
        assert entanglement_entropy(stab, region) == entanglement_entropy(stab, comp)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_measurement_statistics_match_dense(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    stab, ds = _run_both(n, _random_clifford(n, 15, rng))
    label = "".join(rng.choice(list("IXYZ"), size=n))
    if set(label) == {"I"}:
        label = "Z" + label[1:]
    p = PauliOperator.from_string(label, int(rng.choice([1, -1])))
    branches = dense.projective_measure(ds, p.to_matrix(), list(range(n)))
    probs = {s: pr for s, pr, _ in branches}
    outcome, post, det = measure_pauli(stab, p, rng)
    if det:
        assert probs.get(outcome, 0) == pytest.approx(1.0, abs=1e-10)
    else:
        assert probs[1] == pytest.approx(0.5, abs=1e-10)
    post_vec = dict((s, st_.data) for s, _, st_ in branches)[outcome]
    for g in post.generators:
        assert np.allclose(g.to_matrix() @ post_vec, post_vec)


def test_measurement_frequencies_within_three_sigma_of_dense():
    rng = np.random.default_rng(11)
    n = 4
    stab, ds = _run_both(n, _random_clifford(n, 20, rng))
    p = PauliOperator.from_string("XZIY")
    (_, prob_plus) = next(((s, pr) for s, pr, _ in dense.projective_measure(ds, p.to_matrix(), range(n)) if s == 1),
                          (1, 0.0))
    trials = 10_000
    hits = sum(measure_pauli(stab, p, rng)[0] == 1 for _ in range(trials))
    sigma = max(np.sqrt(prob_plus * (1 - prob_plus) / trials), 1e-12)
    assert abs(hits / trials - prob_plus) <= 3 * sigma


def test_mixed_state_commuting_measurement_adds_generator():
    state = StabilizerState(2, [PauliOperator.from_string("ZZ")])
    outcome, post, det = measure_pauli(state, PauliOperator.from_string("ZI"), forced=-1)
    assert not det and outcome == -1
    assert post.expectation(PauliOperator.from_string("IZ")) == -1
    assert entanglement_entropy(post, [0]) == 0.0
    assert entanglement_entropy(state, [0, 1]) == 1.0
