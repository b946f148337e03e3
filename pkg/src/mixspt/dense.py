"""Exact state-vector and density-matrix simulation for small systems.

Qubit 0 is the most significant tensor factor.  Environment qubits used to
purify channels are always appended after the system qubits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_PURE = 24
MAX_MIXED = 14
EIG_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


class SizeCapError(ValueError):
    pass


@dataclass
class KrausChannel:
    operators: list[np.ndarray]
    tol: float = 1e-10

    def __post_init__(self) -> None:
        self.operators = [np.asarray(k, dtype=complex) for k in self.operators]
        dim = self.operators[0].shape[0]
        if any(k.shape != (dim, dim) for k in self.operators):
            raise ValueError("Kraus operators must share one square shape")
        total = sum(k.conj().T @ k for k in self.operators)
        if np.abs(total - np.eye(dim)).max() > self.tol:
            raise ValueError("Kraus set is not trace preserving")

    @property
    def n_qubits(self) -> int:
        return int(np.log2(self.operators[0].shape[0]))

    def adjoint(self, op: np.ndarray) -> np.ndarray:
        """Heisenberg-picture action sum_a K_a^dag op K_a."""
        return sum(k.conj().T @ op @ k for k in self.operators)


@dataclass
class DenseState:
    n_qubits: int
    data: np.ndarray
    kind: str = field(default="pure")

    def __post_init__(self) -> None:
        cap = MAX_PURE if self.kind == "pure" else MAX_MIXED
        if self.n_qubits > cap:
            raise SizeCapError(f"{self.kind} state limited to {cap} qubits, got {self.n_qubits}")
        dim = 2 ** self.n_qubits
        if self.kind == "pure":
            self.data = np.asarray(self.data, dtype=complex).reshape(dim)
        elif self.kind == "mixed":
            self.data = np.asarray(self.data, dtype=complex).reshape(dim, dim)
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "DenseState":
        vec = np.asarray(vec, dtype=complex).ravel()
        n = int(round(np.log2(vec.size)))
        norm = np.linalg.norm(vec)
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"state vector not normalized (norm {norm})")
        return cls(n, vec, "pure")

    @classmethod
    def from_density(cls, rho: np.ndarray) -> "DenseState":
        rho = np.asarray(rho, dtype=complex)
        n = int(round(np.log2(rho.shape[0])))
        if abs(np.trace(rho) - 1) > 1e-10 or np.abs(rho - rho.conj().T).max() > 1e-10:
            raise ValueError("density matrix must be Hermitian with unit trace")
        return cls(n, rho, "mixed")

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> "DenseState":
        out = np.array([1.0 + 0j])
        for v in vectors:
            out = np.kron(out, np.asarray(v, dtype=complex))
        return cls.from_vector(out)

    def density(self) -> np.ndarray:
        if self.kind == "mixed":
            return self.data
        return np.outer(self.data, self.data.conj())

    def to_mixed(self) -> "DenseState":
        return self if self.kind == "mixed" else DenseState(self.n_qubits, self.density(), "mixed")


def _check_targets(n: int, targets: Sequence[int]) -> list[int]:
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ValueError("targets must be distinct")
    if any(t < 0 or t >= n for t in targets):
        raise IndexError(f"target out of range for {n} qubits")
    return targets


def _apply_left(tensor: np.ndarray, op: np.ndarray, axes: list[int]) -> np.ndarray:
    k = len(axes)
    op_t = op.reshape([2] * (2 * k))
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def apply_unitary(state: DenseState, u: np.ndarray, targets: Sequence[int]) -> DenseState:
    targets = _check_targets(state.n_qubits, targets)
    n = state.n_qubits
    if state.kind == "pure":
        t = _apply_left(state.data.reshape([2] * n), u, targets)
        return DenseState(n, t.reshape(-1), "pure")
    t = state.data.reshape([2] * (2 * n))
    t = _apply_left(t, u, targets)
    t = _apply_left(t, u.conj(), [n + q for q in targets])
    return DenseState(n, t.reshape(2 ** n, 2 ** n), "mixed")


def apply_channel(state: DenseState, ch: KrausChannel, targets: Sequence[int]) -> DenseState:
    targets = _check_targets(state.n_qubits, targets)
    if len(targets) != ch.n_qubits:
        raise ValueError("channel arity does not match targets")
    if len(ch.operators) == 1:
        return apply_unitary(state, ch.operators[0], targets)
    n = state.n_qubits
    rho = state.to_mixed().data.reshape([2] * (2 * n))
    out = np.zeros_like(rho)
    for k in ch.operators:
        t = _apply_left(rho, k, targets)
        out += _apply_left(t, k.conj(), [n + q for q in targets])
    return DenseState(n, out.reshape(2 ** n, 2 ** n), "mixed")


def _eigen_projectors(basis: np.ndarray) -> dict[int, np.ndarray]:
    vals, vecs = np.linalg.eigh(basis)
    if np.abs(np.abs(vals) - 1).max() > 1e-9:
        raise ValueError("measurement operator must have +-1 spectrum")
    projs: dict[int, np.ndarray] = {}
    for sign in (1, -1):
        cols = vecs[:, np.isclose(vals, sign)]
        if cols.shape[1]:
            projs[sign] = cols @ cols.conj().T
    return projs


def projective_measure(state: DenseState, basis: np.ndarray, targets: Sequence[int],
                       tol: float = 1e-14) -> list[tuple[int, float, DenseState]]:
    """Born distribution over outcomes of a +-1 valued observable.

    Returns (outcome, probability, renormalized post-state) for every
    outcome with probability above ``tol``.
    """
    targets = _check_targets(state.n_qubits, targets)
    n = state.n_qubits
    out = []
    for sign, proj in _eigen_projectors(np.asarray(basis, dtype=complex)).items():
        if state.kind == "pure":
            t = _apply_left(state.data.reshape([2] * n), proj, targets).reshape(-1)
            prob = float(np.vdot(t, t).real)
            if prob > tol:
                out.append((sign, prob, DenseState(n, t / np.sqrt(prob), "pure")))
        else:
            t = state.data.reshape([2] * (2 * n))
            t = _apply_left(t, proj, targets)
            t = _apply_left(t, proj.conj(), [n + q for q in targets]).reshape(2 ** n, 2 ** n)
            prob = float(np.trace(t).real)
            if prob > tol:
                out.append((sign, prob, DenseState(n, t / prob, "mixed")))
    total = sum(p for _, p, _ in out)
    if abs(total - 1) > 1e-10:
        raise ValueError(f"outcome probabilities sum to {total}")
    return out


def measure_outcome(state: DenseState, basis: np.ndarray, targets: Sequence[int], outcome: int
                    ) -> tuple[float, DenseState]:
    for sign, prob, post in projective_measure(state, basis, targets, tol=0.0):
        if sign == outcome:
            if prob <= 0:
                break
            return prob, post
    raise ValueError(f"outcome {outcome} has zero probability")


def partial_trace(state: DenseState, keep: Iterable[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (in the given order)."""
    keep = _check_targets(state.n_qubits, list(keep))
    n = state.n_qubits
    rest = [q for q in range(n) if q not in set(keep)]
    if state.kind == "pure":
        t = np.transpose(state.data.reshape([2] * n), keep + rest).reshape(2 ** len(keep), -1)
        return t @ t.conj().T
    t = state.data.reshape([2] * (2 * n))
    letters = [chr(97 + i) for i in range(2 * n)]
    for q in rest:
        letters[n + q] = letters[q]
    out = "".join(letters[q] for q in keep) + "".join(letters[n + q] for q in keep)
    red = np.einsum("".join(letters) + "->" + out, t)
    d = 2 ** len(keep)
    return red.reshape(d, d)


def entropy_of(rho: np.ndarray) -> float:
    """Von Neumann entropy in bits with small negative eigenvalues clipped."""
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < -EIG_TOL:
        raise ValueError(f"density matrix has eigenvalue {vals.min():.3e}")
    vals = vals[vals > EIG_TOL]
    return float(-(vals * np.log2(vals)).sum())


def entropy(state: DenseState, region: Iterable[int]) -> float:
    region = list(region)
    if not region:
        return 0.0
    return entropy_of(partial_trace(state, region))


def mutual_information(state: DenseState, a: Iterable[int], b: Iterable[int]) -> float:
    a, b = list(a), list(b)
    if set(a) & set(b):
        raise ValueError("regions overlap")
    return entropy(state, a) + entropy(state, b) - entropy(state, a + b)


def cz_circuit(n: int, edges: Iterable[tuple[int, int]], initial: np.ndarray | None = None) -> np.ndarray:
    """CZ gates on ``initial`` (default |+>^n); returns the state vector.

    Built as a diagonal phase from bit operations, so it scales to the pure
    cap without per-gate tensor contractions.
    """
    if n > MAX_PURE:
        raise SizeCapError(f"pure state limited to {MAX_PURE} qubits")
    idx = np.arange(2 ** n, dtype=np.int64)
    parity = np.zeros(2 ** n, dtype=np.int8)
    for a, b in edges:
        parity ^= (((idx >> (n - 1 - a)) & (idx >> (n - 1 - b))) & 1).astype(np.int8)
    del idx
    if initial is None:
        vec = np.full(2 ** n, 2 ** (-n / 2), dtype=complex)
    else:
        vec = np.asarray(initial, dtype=complex).copy()
    vec[parity == 1] *= -1
    return vec


def pauli_expectations(vec: np.ndarray, n: int, paulis) -> list[complex]:
    """<v|P|v> for each PauliOperator P, via index arithmetic (no matrices)."""
    idx = np.arange(2 ** n, dtype=np.int64 if n > 30 else np.int32)
    out = []
    for p in paulis:
        xmask = sum(1 << (n - 1 - q) for q in range(n) if (p.x >> q) & 1)
        zmask = sum(1 << (n - 1 - q) for q in range(n) if (p.z >> q) & 1)
        odd = np.bitwise_count(idx & zmask) & 1
        signed = np.where(odd == 1, -vec, vec)
        # (X^x Z^z v)[i ^ xmask] = sign(i) v[i]  =>  <v|X^x Z^z v> = sum conj(v[i ^ xmask]) sign(i) v[i]
        out.append(complex(1j ** p.k * np.vdot(vec[idx ^ xmask], signed)))
    return out
