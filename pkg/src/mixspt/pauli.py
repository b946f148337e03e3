"""Symplectic Pauli operators and stabilizer states.

A Pauli operator is stored as ``i**k * X^x Z^z`` where ``x`` and ``z`` are
integer bitsets (bit ``j`` is qubit ``j``) and ``X^x Z^z`` means all X
factors to the left of all Z factors.  This keeps products exact: moving
``Z^z1`` past ``X^x2`` costs ``(-1)**popcount(z1 & x2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import gf2

VALIDATE = True

_PHASES = (1, 1j, -1, -1j)


def _popcount(v: int) -> int:
    return v.bit_count()


@dataclass(frozen=True)
class PauliOperator:
    n_qubits: int
    x: int
    z: int
    k: int = 0  # power of i in the X^x Z^z convention

    @classmethod
    def identity(cls, n: int) -> "PauliOperator":
        return cls(n, 0, 0, 0)

    @classmethod
    def from_string(cls, label: str, sign: complex = 1) -> "PauliOperator":
        """``"XIZY"`` with qubit 0 first; ``sign`` in {1, -1, 1j, -1j}."""
        x = z = 0
        n_y = 0
        for j, ch in enumerate(label.upper()):
            if ch in "XY":
                x |= 1 << j
            if ch in "ZY":
                z |= 1 << j
            if ch == "Y":
                n_y += 1
            if ch not in "IXYZ":
                raise ValueError(f"bad Pauli letter {ch!r}")
        return cls(len(label), x, z, (n_y + _PHASES.index(sign)) % 4)

    @classmethod
    def on(cls, n: int, letters: dict[int, str], sign: complex = 1) -> "PauliOperator":
        chars = ["I"] * n
        for q, ch in letters.items():
            if not 0 <= q < n:
                raise IndexError(f"qubit {q} out of range for {n} qubits")
            chars[q] = ch
        return cls.from_string("".join(chars), sign)

    @property
    def x_bits(self) -> np.ndarray:
        return np.array([(self.x >> j) & 1 for j in range(self.n_qubits)], dtype=np.uint8)

    @property
    def z_bits(self) -> np.ndarray:
        return np.array([(self.z >> j) & 1 for j in range(self.n_qubits)], dtype=np.uint8)

    @property
    def phase(self) -> complex:
        """Prefactor relative to the plain letter string (Y counted as Y)."""
        return _PHASES[(self.k - _popcount(self.x & self.z)) % 4]

    @property
    def is_hermitian(self) -> bool:
        return (self.k - _popcount(self.x & self.z)) % 2 == 0

    @property
    def sign(self) -> int:
        if not self.is_hermitian:
            raise ValueError("non-Hermitian Pauli has no real sign")
        return int(self.phase.real)

    def letters(self) -> str:
        out = []
        for j in range(self.n_qubits):
            xb, zb = (self.x >> j) & 1, (self.z >> j) & 1
            out.append("IZXY"[xb * 2 + zb])
        return "".join(out)

    def __repr__(self) -> str:
        p = {1: "+", -1: "-", 1j: "+i", -1j: "-i"}[self.phase]
        return f"PauliOperator({p}{self.letters()})"

    def commutes(self, other: "PauliOperator") -> bool:
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        return multiply(self, other)

    def __neg__(self) -> "PauliOperator":
        return PauliOperator(self.n_qubits, self.x, self.z, (self.k + 2) % 4)

    def unsigned(self) -> "PauliOperator":
        """Same letters with phase +1."""
        return PauliOperator(self.n_qubits, self.x, self.z, _popcount(self.x & self.z) % 4)

    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def support(self) -> list[int]:
        s = self.x | self.z
        return [j for j in range(self.n_qubits) if (s >> j) & 1]

    def padded(self, n: int) -> "PauliOperator":
        if n < self.n_qubits:
            raise ValueError("cannot shrink a Pauli operator")
        return PauliOperator(n, self.x, self.z, self.k)

    def to_matrix(self) -> np.ndarray:
        """Dense matrix, qubit 0 as the most significant tensor factor."""
        mats = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
                "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1, -1])}
        out = np.array([[1.0 + 0j]])
        for ch in self.letters():
            out = np.kron(out, mats[ch])
        return self.phase * out


def multiply(p: PauliOperator, q: PauliOperator) -> PauliOperator:
    if p.n_qubits != q.n_qubits:
        raise ValueError(f"size mismatch: {p.n_qubits} vs {q.n_qubits} qubits")
    k = p.k + q.k + 2 * _popcount(p.z & q.x)
    return PauliOperator(p.n_qubits, p.x ^ q.x, p.z ^ q.z, k % 4)


class StabilizerState:
    """Stabilizer group given by independent, commuting Hermitian generators."""

    def __init__(self, n_qubits: int, generators: Sequence[PauliOperator], validate: bool = True):
        self.n_qubits = n_qubits
        self.generators: list[PauliOperator] = list(generators)
        if validate and VALIDATE:
            self.check()

    @classmethod
    def zeros(cls, n: int) -> "StabilizerState":
        return cls(n, [PauliOperator(n, 0, 1 << j) for j in range(n)], validate=False)

    @classmethod
    def plus(cls, n: int) -> "StabilizerState":
        return cls(n, [PauliOperator(n, 1 << j, 0) for j in range(n)], validate=False)

    @property
    def is_pure(self) -> bool:
        return len(self.generators) == self.n_qubits

    def copy(self) -> "StabilizerState":
        return StabilizerState(self.n_qubits, self.generators, validate=False)

    def check(self) -> None:
        gens = self.generators
        if len(gens) > self.n_qubits:
            raise ValueError("more generators than qubits")
        for g in gens:
            if g.n_qubits != self.n_qubits or not g.is_hermitian:
                raise ValueError(f"invalid generator {g}")
        for a in range(len(gens)):
            for b in range(a + 1, len(gens)):
                if not gens[a].commutes(gens[b]):
                    raise ValueError("generators do not commute")
        # independence over GF(2) rules out -I in the group
        if gens and gf2.rank(self._symplectic(gens)) != len(gens):
            raise ValueError("generators are not independent")

    def _symplectic(self, gens: Sequence[PauliOperator], region: Iterable[int] | None = None) -> np.ndarray:
        cols = list(range(self.n_qubits)) if region is None else sorted(region)
        mat = np.zeros((len(gens), 2 * len(cols)), dtype=np.uint8)
        for r, g in enumerate(gens):
            for c, q in enumerate(cols):
                mat[r, c] = (g.x >> q) & 1
                mat[r, len(cols) + c] = (g.z >> q) & 1
        return mat

    # gates -------------------------------------------------------------
    def _map(self, fn) -> "StabilizerState":
        return StabilizerState(self.n_qubits, [fn(g) for g in self.generators], validate=False)

    def h(self, q: int) -> "StabilizerState":
        bit = 1 << q

        def conj(g: PauliOperator) -> PauliOperator:
            a, b = (g.x >> q) & 1, (g.z >> q) & 1
            x = (g.x & ~bit) | (b << q)
            z = (g.z & ~bit) | (a << q)
            return PauliOperator(g.n_qubits, x, z, (g.k + 2 * (a & b)) % 4)

        return self._map(conj)

    def s(self, q: int) -> "StabilizerState":
        def conj(g: PauliOperator) -> PauliOperator:
            a = (g.x >> q) & 1
            return PauliOperator(g.n_qubits, g.x, g.z ^ (a << q), (g.k + a) % 4)

        return self._map(conj)

    def cnot(self, control: int, target: int) -> "StabilizerState":
        if control == target:
            raise ValueError("control equals target")

        def conj(g: PauliOperator) -> PauliOperator:
            xc, zt = (g.x >> control) & 1, (g.z >> target) & 1
            return PauliOperator(g.n_qubits, g.x ^ (xc << target), g.z ^ (zt << control), g.k)

        return self._map(conj)

    def cz(self, a: int, b: int) -> "StabilizerState":
        if a == b:
            raise ValueError("CZ needs two distinct qubits")

        def conj(g: PauliOperator) -> PauliOperator:
            xa, xb = (g.x >> a) & 1, (g.x >> b) & 1
            z = g.z ^ (xb << a) ^ (xa << b)
            return PauliOperator(g.n_qubits, g.x, z, (g.k + 2 * (xa & xb)) % 4)

        return self._map(conj)

    def apply_pauli(self, p: PauliOperator) -> "StabilizerState":
        return self._map(lambda g: g if g.commutes(p) else -g)

    def append_qubits(self, count: int, basis: str = "Z") -> "StabilizerState":
        n = self.n_qubits + count
        gens = [g.padded(n) for g in self.generators]
        for j in range(self.n_qubits, n):
            gens.append(PauliOperator(n, 1 << j, 0) if basis == "X" else PauliOperator(n, 0, 1 << j))
        return StabilizerState(n, gens, validate=False)

    # group queries -----------------------------------------------------
    def decompose(self, p: PauliOperator) -> PauliOperator | None:
        """Product of generators equal to ``p`` up to sign, or None."""
        used = self.decomposition_mask(p)
        if used is None:
            return None
        prod = PauliOperator.identity(self.n_qubits)
        for i, g in enumerate(self.generators):
            if (used >> i) & 1:
                prod = prod * g
        return prod

    def decomposition_mask(self, p: PauliOperator) -> int | None:
        """Bit mask of the generators whose product is ``p`` up to phase, or None."""
        n = self.n_qubits
        rows = [((g.x << n) | g.z, 1 << i) for i, g in enumerate(self.generators)]
        target = (p.x << n) | p.z
        basis: list[tuple[int, int]] = []
        for vec, combo in rows:
            for bvec, bcombo in basis:
                if vec ^ bvec < vec:
                    vec, combo = vec ^ bvec, combo ^ bcombo
            if vec:
                basis.append((vec, combo))
                basis.sort(reverse=True)
        used = 0
        for bvec, bcombo in basis:
            if target ^ bvec < target:
                target, used = target ^ bvec, used ^ bcombo
        return None if target else used

    def expectation(self, p: PauliOperator) -> int:
        """<p> in {+1, -1, 0} for a Hermitian Pauli ``p``."""
        if any(not p.commutes(g) for g in self.generators):
            return 0
        prod = self.decompose(p)
        if prod is None:
            return 0
        return 1 if prod.k == p.k else -1


def measure_pauli(state: StabilizerState, p: PauliOperator, rng: np.random.Generator | None = None,
                  forced: int | None = None) -> tuple[int, StabilizerState, bool]:
    """Measure Hermitian ``p``; returns (outcome, post_state, deterministic).

    ``forced`` selects the outcome of a random measurement (for exhaustive
    enumeration); it is ignored for deterministic ones.
    """
    if not p.is_hermitian:
        raise ValueError("measured Pauli must be Hermitian")
    if p.n_qubits != state.n_qubits:
        raise ValueError("size mismatch between operator and state")
    gens = state.generators
    anti = [i for i, g in enumerate(gens) if not g.commutes(p)]
    if not anti:
        prod = state.decompose(p)
        if prod is not None:
            return (1 if prod.k == p.k else -1), state, True
        outcome = _draw(rng, forced)
        post = StabilizerState(state.n_qubits, gens + [p if outcome == 1 else -p], validate=False)
        return outcome, post, False
    outcome = _draw(rng, forced)
    pivot = gens[anti[0]]
    new = list(gens)
    for i in anti[1:]:
        new[i] = gens[i] * pivot
    new[anti[0]] = p if outcome == 1 else -p
    return outcome, StabilizerState(state.n_qubits, new, validate=False), False


def _draw(rng: np.random.Generator | None, forced: int | None) -> int:
    if forced is not None:
        if forced not in (1, -1):
            raise ValueError("forced outcome must be +1 or -1")
        return forced
    if rng is None:
        raise ValueError("random measurement needs a random source")
    return 1 if rng.random() < 0.5 else -1


def entanglement_entropy(state: StabilizerState, region: Iterable[int]) -> float:
    """Von Neumann entropy of ``region`` in bits.

    Uses S(A) = |A| - dim(G_A), with dim(G_A) = r - rank(G restricted to the
    complement); for pure states this equals rank(G|_A) - |A|.
    """
    region = sorted(set(region))
    if any(q < 0 or q >= state.n_qubits for q in region):
        raise IndexError("region out of range")
    comp = [q for q in range(state.n_qubits) if q not in set(region)]
    gens = state.generators
    if not gens:
        return float(len(region))
    rank_comp = gf2.rank(state._symplectic(gens, comp)) if comp else 0
    return float(len(region) - (len(gens) - rank_comp))
