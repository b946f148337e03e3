"""Single-site decoherence channels in Kraus and purified form.

Each purification acts on ``[system, env_1, ..., env_k]`` with the
environment starting in ``env_state``.  Strengths ``p`` of the rotation
based purifications obey ``p = sin(angle / 2) ** 2`` for ``Rx(angle)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np
from scipy.linalg import expm

from .dense import I2, MINUS, PLUS, X, Y, Z, H, KrausChannel

KINDS = ("z_dephase", "y_dephase", "swap", "controlled_hadamard", "sdc")
Sublattice = Literal["A", "B"]


class NotPauliChannelError(TypeError):
    """Raised when Pauli-frame sampling is requested for a non-Pauli channel."""


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    p_a: float = 0.0
    p_b: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    q: float = 1.0
    mask: str = "AB"
    boundary: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        for name in ("p_a", "p_b", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not -1e-12 <= self.theta <= np.pi / 2 + 1e-12:
            raise ValueError("theta must lie in [0, pi/2]")
        if self.mask not in ("A", "B", "AB"):
            raise ValueError("mask must be 'A', 'B' or 'AB'")

    def hits(self, sublattice: str) -> bool:
        return sublattice in self.mask

    def strength(self, sublattice: str) -> float:
        return self.p_a if sublattice == "A" else self.p_b

    @property
    def is_pauli(self) -> bool:
        return self.kind in ("z_dephase", "y_dephase")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSpec":
        return cls(**data)


def _rx(angle: float) -> np.ndarray:
    return expm(-0.5j * angle * X)


def _controlled(target_op: np.ndarray) -> np.ndarray:
    """Control on the env qubit (second factor), ``target_op`` on the system."""
    return np.kron(I2, np.diag([1, 0])) + np.kron(target_op, np.diag([0, 1]))


_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def sdc_unitary(theta: float) -> np.ndarray:
    """CNOT(env -> sys) . exp(i theta Y_env) . SWAP on [sys, env]."""
    return _controlled(X) @ np.kron(I2, expm(1j * theta * Y)) @ _SWAP


def sdc_kraus_pair(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form K0, K1 of the symmetry-decoupling channel."""
    c, s = np.cos, np.sin
    k0 = 0.5 * (c(theta - phi) * I2 + s(theta + phi) * X + s(theta - phi) * 1j * Y + c(theta + phi) * Z)
    k1 = 0.5 * (c(theta + phi) * I2 - s(theta - phi) * X + s(theta + phi) * 1j * Y - c(theta - phi) * Z)
    return k0, k1


@dataclass(frozen=True)
class Purification:
    unitary: np.ndarray
    env_state: np.ndarray

    @property
    def n_env(self) -> int:
        return int(np.log2(self.env_state.size))

    def kraus(self) -> list[np.ndarray]:
        """<e|U|e0> for every computational basis state e of the environment."""
        k = self.n_env
        u = self.unitary.reshape(2, 2 ** k, 2, 2 ** k)
        return [np.einsum("stc,c->st", u[:, e, :, :], self.env_state) for e in range(2 ** k)]


def purification(spec: ChannelSpec, sublattice: Sublattice) -> Purification:
    p = spec.strength(sublattice)
    angle = 2 * np.arcsin(np.sqrt(p))
    zero = np.array([1, 0], dtype=complex)
    if spec.kind == "z_dephase":
        return Purification(_controlled(Z) @ np.kron(I2, _rx(angle)), zero)
    if spec.kind == "y_dephase":
        return Purification(_controlled(Y) @ np.kron(I2, _rx(angle)), zero)
    if spec.kind == "controlled_hadamard":
        return Purification(_controlled(H) @ np.kron(I2, _rx(angle)), zero)
    if spec.kind == "swap":
        return Purification(_SWAP.copy(), PLUS.copy())
    u = sdc_unitary(spec.theta)
    e1 = np.array([np.cos(spec.phi), np.sin(spec.phi)], dtype=complex)
    if spec.q >= 1.0:
        return Purification(u, e1)
    # second environment qubit switches the channel on with probability q
    e2 = np.array([np.sqrt(1 - spec.q), np.sqrt(spec.q)], dtype=complex)
    ident = np.eye(4, dtype=complex)
    on = np.diag([0, 1]).astype(complex)
    off = np.diag([1, 0]).astype(complex)
    big = np.kron(ident, off) + np.kron(u, on)  # ordering [sys, E1, E2]
    return Purification(big, np.kron(e1, e2))


def kraus_of(spec: ChannelSpec, sublattice: Sublattice = "A") -> KrausChannel:
    p = spec.strength(sublattice)
    if spec.kind == "z_dephase":
        ops = [np.sqrt(1 - p) * I2, np.sqrt(p) * Z]
    elif spec.kind == "y_dephase":
        ops = [np.sqrt(1 - p) * I2, np.sqrt(p) * Y]
    elif spec.kind == "swap":
        ops = [np.outer(PLUS, PLUS.conj()), Z @ np.outer(MINUS, MINUS.conj())]
    elif spec.kind == "controlled_hadamard":
        ops = [np.sqrt(1 - p) * I2, np.sqrt(p) * H]
    else:
        k0, k1 = sdc_kraus_pair(spec.theta, spec.phi)
        ops = [np.sqrt(spec.q) * k0, np.sqrt(spec.q) * k1]
        if spec.q < 1:
            ops.insert(0, np.sqrt(1 - spec.q) * I2)
    ops = [k for k in ops if np.abs(k).max() > 0]
    return KrausChannel(ops)


@dataclass(frozen=True)
class TransformedCharge:
    decomposable: bool
    operators: dict[int, np.ndarray]  # m -> O^(m) on the environment
    charge: np.ndarray  # U (X (x) I) U^dag on [sys, env]

    def eigenbasis(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """(eigenvalue signs, eigenvectors as columns) of O^(m)."""
        if not self.decomposable:
            raise ValueError("charge is not decomposable")
        vals, vecs = np.linalg.eigh(self.operators[m])
        return np.sign(vals).astype(int), vecs

    def env_pauli_terms(self, m: int, tol: float = 1e-12) -> dict[str, float]:
        """Real Pauli expansion of O^(m) (single env qubit only)."""
        op = self.operators[m]
        if op.shape != (2, 2):
            raise ValueError("Pauli expansion offered for one environment qubit")
        out = {}
        for name, mat in (("I", I2), ("X", X), ("Y", Y), ("Z", Z)):
            c = np.trace(mat @ op) / 2
            if abs(c) > tol:
                out[name] = float(c.real)
        return out


def transformed_charge(spec: ChannelSpec, sublattice: Sublattice = "A", tol: float = 1e-10) -> TransformedCharge:
    pur = purification(spec, sublattice)
    d_env = pur.env_state.size
    x_sys = np.kron(X, np.eye(d_env))
    g = pur.unitary @ x_sys @ pur.unitary.conj().T
    decomposable = np.abs(g @ x_sys - x_sys @ g).max() < tol
    ops: dict[int, np.ndarray] = {}
    if decomposable:
        gt = g.reshape(2, d_env, 2, d_env)
        for m, v in ((1, PLUS), (-1, MINUS)):
            ops[m] = np.einsum("s,satb,t->ab", v.conj(), gt, v)
    return TransformedCharge(bool(decomposable), ops, g)


def canonical_kraus(ops: list[np.ndarray], tol: float = 1e-12) -> list[np.ndarray]:
    """Linearly independent Kraus set from the Choi eigendecomposition."""
    d = ops[0].shape[0]
    vecs = np.array([k.reshape(-1) for k in ops])
    choi = vecs.T @ vecs.conj()
    vals, ev = np.linalg.eigh(choi)
    return [np.sqrt(v) * ev[:, i].reshape(d, d) for i, v in enumerate(vals) if v > tol]


def is_weakly_symmetric(spec: ChannelSpec, sublattice: Sublattice = "A", tol: float = 1e-9) -> bool:
    """True iff X K_i X = sum_j x_ij K_j with a unitary mixing x."""
    ops = canonical_kraus(kraus_of(spec, sublattice).operators)
    a = np.array([k.reshape(-1) for k in ops]).T
    b = np.array([(X @ k @ X).reshape(-1) for k in ops]).T
    mix, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = np.abs(a @ mix - b).max()
    unitary = np.abs(mix.conj().T @ mix - np.eye(len(ops))).max()
    return bool(residual < tol and unitary < tol)


def sample_pauli_errors(spec: ChannelSpec, sublattices: list[str], rng: np.random.Generator) -> np.ndarray:
    """Pauli-frame sample: boolean error indicator per listed site."""
    if not spec.is_pauli:
        raise NotPauliChannelError(f"{spec.kind} is not a Pauli channel")
    probs = np.array([spec.strength(s) if spec.hits(s) else 0.0 for s in sublattices])
    return rng.random(len(probs)) < probs
