"""Type-I and type-II strange correlators of decohered cluster states.

Both are ratios of matrix elements of the decohered state between
X-basis product states.  Writing rho = sum_k K_k |psi><psi| K_k^dag with
product Kraus operators, <a|rho|b> = sum_k <a|K_k psi> conj(<b|K_k psi>);
the branch amplitudes for product bras come from contracting the state
tensor site by site, so no density matrix is ever formed.

Geometries: ``Ring1D`` (periodic chain, even sites = sublattice A),
``Chain1D`` and ``LiebCylinder2D`` from the lattice module, and
``LiebGraph`` which decorates any statmech ``SquareLattice`` with edge
qubits (vertices = sublattice A, edges = B).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

from . import dense
from .channels import ChannelSpec, kraus_of, sample_pauli_errors
from .dense import H as HADAMARD, MINUS, PLUS
from .lattice import Chain1D, LiebCylinder2D
from .protocol import h2, noisy_sites
from .statmech import K_MAX, IsingInstance, RBIMInstance, SquareLattice, correlation, nishimori_beta

MAX_BRANCHES = 2 ** 22
MAX_BLOCK_QUBITS = 14
DIAGONAL_TOL = 1e-6


class UnsupportedClosedFormError(ValueError):
    pass


@dataclass(frozen=True)
class Ring1D:
    """Periodic cluster chain of ``2 L`` qubits."""
    L: int

    def __post_init__(self) -> None:
        if self.L < 2:
            raise ValueError("ring needs L >= 2")

    @property
    def n_qubits(self) -> int:
        return 2 * self.L

    @property
    def cz_edges(self) -> list[tuple[int, int]]:
        n = self.n_qubits
        return [(k, (k + 1) % n) for k in range(n)]

    def sublattice(self, site: int) -> str:
        return "A" if site % 2 == 0 else "B"

    def noisy_sites(self, channel: ChannelSpec) -> dict[int, str]:
        return {s: self.sublattice(s) for s in range(self.n_qubits) if channel.hits(self.sublattice(s))}


@dataclass(frozen=True)
class LiebGraph:
    """Vertex qubits ``0..V-1`` (spin order of ``square``) then one qubit per bond."""
    square: SquareLattice

    @property
    def n_vertices(self) -> int:
        return self.square.n_spins

    @property
    def n_qubits(self) -> int:
        return self.square.n_spins + self.square.n_edges

    def vertex(self, x: int, y: int) -> int:
        return self.square.index((x, y))

    def bond_qubit(self, bond: int) -> int:
        return self.n_vertices + bond

    @cached_property
    def cz_edges(self) -> list[tuple[int, int]]:
        out = []
        for b, (u, v) in enumerate(self.square.edges):
            out += [(int(u), self.bond_qubit(b)), (int(v), self.bond_qubit(b))]
        return out

    def sublattice(self, site: int) -> str:
        return "A" if site < self.n_vertices else "B"

    def noisy_sites(self, channel: ChannelSpec) -> dict[int, str]:
        return {s: self.sublattice(s) for s in range(self.n_qubits) if channel.hits(self.sublattice(s))}


def _n_qubits(graph) -> int:
    return graph.n_sites if isinstance(graph, Chain1D) else graph.n_qubits


def _noisy(graph, channel: ChannelSpec | None) -> dict[int, str]:
    if channel is None:
        return {}
    if isinstance(graph, (Chain1D, LiebCylinder2D)):
        return noisy_sites(graph, channel)
    return graph.noisy_sites(channel)


def _kraus_by_site(graph, channel: ChannelSpec | None) -> dict[int, list[np.ndarray]]:
    return {s: kraus_of(channel, sub).operators for s, sub in _noisy(graph, channel).items()}


def cluster_vector(graph) -> np.ndarray:
    return dense.cz_circuit(_n_qubits(graph), graph.cz_edges)


def _branch_amplitudes(psi: np.ndarray, n: int, kraus: dict[int, list[np.ndarray]], bras: list[np.ndarray]) -> np.ndarray:
    """<bra| K_k |psi> for every product Kraus branch k (flattened)."""
    rows = {}
    for s in range(n):
        ops = kraus.get(s, [np.eye(2)])
        rows[s] = np.stack([bras[s].conj() @ k for k in ops])
    n_branches = math.prod(len(r) for r in rows.values())
    if n_branches > MAX_BRANCHES:
        raise dense.SizeCapError(f"{n_branches} Kraus branches exceed {MAX_BRANCHES}")
    t = psi.reshape((2,) * n)
    remaining = list(range(n))
    for s in sorted(range(n), key=lambda q: len(rows[q])):  # single-row sites shrink the tensor first
        pos = remaining.index(s)
        t = np.tensordot(t, rows[s], axes=([pos], [1]))
        remaining.pop(pos)
        if rows[s].shape[0] == 1:
            t = t[..., 0]
    return t.reshape(-1)


def rho_element(graph, channel: ChannelSpec | None, bra_a: list[np.ndarray], bra_b: list[np.ndarray],
                psi: np.ndarray | None = None) -> complex:
    """<a|rho|b> for product states a, b of the decohered cluster state."""
    n = _n_qubits(graph)
    psi = cluster_vector(graph) if psi is None else psi
    kraus = _kraus_by_site(graph, channel)
    amp_a = _branch_amplitudes(psi, n, kraus, bra_a)
    amp_b = _branch_amplitudes(psi, n, kraus, bra_b)
    return complex(np.vdot(amp_b, amp_a))


def _x_states(outcomes) -> list[np.ndarray]:
    return [PLUS if int(o) == 1 else MINUS for o in outcomes]


# -------------------------------------------------------------------- reports

@dataclass
class StrangeCorrelatorReport:
    kind: str
    i: int
    j: int
    values: np.ndarray
    method: str
    xi: float | None = None
    xi_ci: tuple[float, float] | None = None
    extras: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(np.mean(self.values))

    @property
    def stderr(self) -> float:
        n = len(self.values)
        return float(np.std(self.values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


# ------------------------------------------------------------------ type II

def _adjoint_x_coefficients(channel: ChannelSpec, sublattice: str) -> tuple[float, float]:
    """(s, t) with E*(X) = s I + t X, or raise if E*(X) leaves that span."""
    out = kraus_of(channel, sublattice).adjoint(dense.X)
    s, t = out[0, 0].real, out[0, 1].real
    if np.abs(out - (s * np.eye(2) + t * dense.X)).max() > 1e-12:
        raise UnsupportedClosedFormError(f"{channel.kind} does not map X into span(I, X)")
    return float(s), float(t)


def type2_closed_form(channel: ChannelSpec, ring: Ring1D, sublattice: str) -> float:
    """Separation-independent type-II value on a ring with one decohered sublattice.

    Charged operators on the clean sublattice give 1; on the decohered
    sublattice the value is
    [(1+s)^(L-2) (1-s)^2 + t^L] / [(1+s)^L + t^L] where E*(X) = s + t X.
    """
    hit = [sub for sub in ("A", "B") if channel.hits(sub)]
    if len(hit) == 2:
        raise UnsupportedClosedFormError("closed form needs a single decohered sublattice")
    if not hit or sublattice not in hit:
        return 1.0
    s, t = _adjoint_x_coefficients(channel, hit[0])
    L = ring.L
    return ((1 + s) ** (L - 2) * (1 - s) ** 2 + t ** L) / ((1 + s) ** L + t ** L)


def type2_sc(channel: ChannelSpec, ring: Ring1D, i: int, j: int, method: str = "dense") -> StrangeCorrelatorReport:
    """Tr(rho Z_i Z_j rho0 Z_j Z_i) / Tr(rho rho0) with rho0 = |+><+|^n."""
    if method == "closed_form":
        if ring.sublattice(i) != ring.sublattice(j):
            raise UnsupportedClosedFormError("closed form needs i and j on the same sublattice")
        value = type2_closed_form(channel, ring, ring.sublattice(i))
    elif method == "dense":
        n = ring.n_qubits
        psi = cluster_vector(ring)
        plus = [PLUS] * n
        flipped = [MINUS if q in (i, j) else PLUS for q in range(n)]
        num = rho_element(ring, channel, flipped, flipped, psi)
        den = rho_element(ring, channel, plus, plus, psi)
        value = (num / den).real
    else:
        raise ValueError(f"unknown method {method!r}")
    return StrangeCorrelatorReport("II", i, j, np.array([value]), method)


# ------------------------------------------------------------------- type I

def x_basis_amplitudes(psi: np.ndarray, n: int) -> np.ndarray:
    t = psi.reshape((2,) * n)
    for q in range(n):
        t = np.moveaxis(np.tensordot(HADAMARD, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def sample_trajectory(graph, channel: ChannelSpec | None, rng: np.random.Generator,
                      psi: np.ndarray | None = None) -> np.ndarray:
    """X-basis outcomes (+-1 per qubit) of the decohered state; Pauli channels only."""
    n = _n_qubits(graph)
    psi = cluster_vector(graph) if psi is None else psi
    probs = np.abs(x_basis_amplitudes(psi, n)) ** 2
    idx = rng.choice(len(probs), p=probs / probs.sum())
    bits = (idx >> (n - 1 - np.arange(n))) & 1
    outcomes = 1 - 2 * bits
    noisy = _noisy(graph, channel)
    if noisy:
        sites = sorted(noisy)
        flips = sample_pauli_errors(channel, [noisy[s] for s in sites], rng)
        outcomes[np.array(sites)[flips]] *= -1
    return outcomes


def ising_instance(graph, channel: ChannelSpec, outcomes: np.ndarray) -> IsingInstance:
    """Vertex Ising model whose bond e has coupling m_e atanh(1-2p_e).

    Valid for Z-dephasing that acts on edge qubits only; undecohered edges
    get the saturated coupling.
    """
    if channel.kind != "z_dephase" or channel.hits("A"):
        raise ValueError("the Ising map covers Z-dephasing on edge qubits only")
    if isinstance(graph, LiebCylinder2D):
        square = SquareLattice(graph.Lx, graph.Ly)
        bond_qubits = [graph.horizontal_edge(x, y) for x in range(graph.Lx - 1) for y in range(graph.Ly)]
        bond_qubits += [graph.vertical_edge(x, y) for x in range(graph.Lx) for y in range(graph.Ly)]
    elif isinstance(graph, LiebGraph):
        square = graph.square
        bond_qubits = [graph.bond_qubit(b) for b in range(square.n_edges)]
    else:
        raise ValueError("the Ising map needs a two-dimensional Lieb geometry")
    noisy = _noisy(graph, channel)
    beta = nishimori_beta(channel.strength("B"))
    k = np.array([beta if q in noisy else K_MAX for q in bond_qubits])
    return IsingInstance(square, k * np.asarray(outcomes)[bond_qubits])


def _spin_index(graph, site: int) -> int:
    if isinstance(graph, LiebCylinder2D):
        _, x, y = graph.labels[site]
        return x * graph.Ly + y
    return site


def type1_sc(channel: ChannelSpec | None, graph, outcomes: np.ndarray, i: int, j: int,
             method: str = "dense") -> StrangeCorrelatorReport:
    """<m|rho|m'> / <m|rho|m> where m' flips the outcomes at i and j."""
    outcomes = np.asarray(outcomes)
    if method == "dense":
        n = _n_qubits(graph)
        psi = cluster_vector(graph)
        flipped = outcomes.copy()
        flipped[[i, j]] *= -1
        den = rho_element(graph, channel, _x_states(outcomes), _x_states(outcomes), psi)
        if abs(den) < 1e-14:
            raise ValueError("trajectory has zero probability")
        num = rho_element(graph, channel, _x_states(outcomes), _x_states(flipped), psi)
        value = (num / den).real
        assert n == len(outcomes)
    elif method == "ising_map":
        if channel is None:
            channel = ChannelSpec("z_dephase", mask="B")
        model = ising_instance(graph, channel, outcomes)
        value = correlation(model, _spin_index(graph, i), _spin_index(graph, j)).value
    else:
        raise ValueError(f"unknown method {method!r}")
    return StrangeCorrelatorReport("I", i, j, np.array([value]), method)


def perturbed_type1_sc(lam: float, p: float, bonds: np.ndarray, square: SquareLattice, i, j,
                       method: str = "auto") -> StrangeCorrelatorReport:
    """Vertex correlation of the lam-perturbed model for one edge record."""
    inst = RBIMInstance(square, bonds, p, lam)
    res = correlation(inst, i, j, method=method)
    return StrangeCorrelatorReport("I", square.index(i), square.index(j), np.array([res.value]), res.method,
                                   extras={"lambda": lam, "p": p, "mc_stderr": res.stderr})


def fit_correlation_length(separations, values, level: float = 0.95) -> tuple[float, tuple[float, float]]:
    """Least squares of log|SC| against separation; points at the noise floor are dropped."""
    sep = np.asarray(separations, dtype=float)
    mag = np.abs(np.asarray(values, dtype=float))
    keep = mag > 10 * np.finfo(float).eps
    if keep.sum() < 2:
        raise ValueError("need two separations above the noise floor")
    fit = stats.linregress(sep[keep], np.log(mag[keep]))
    xi = -1.0 / fit.slope
    dof = keep.sum() - 2
    if dof < 1 or fit.stderr == 0:
        return xi, (xi, xi)
    half = stats.t.ppf(0.5 + level / 2, dof) * fit.stderr
    lo, hi = sorted((-1.0 / (fit.slope - half), -1.0 / (fit.slope + half)))
    return xi, (lo, hi)


def type1_decay_1d(p: float, max_separation: int, rng: np.random.Generator) -> StrangeCorrelatorReport:
    """|SC^I(0, 2n)| for n = 1..max_separation on a chain with its B sites Z-dephased."""
    chain = Chain1D(max_separation)
    channel = ChannelSpec("z_dephase", p_b=p, mask="B")
    m = sample_trajectory(chain, channel, rng)
    seps = np.arange(1, max_separation + 1)
    vals = np.array([abs(type1_sc(channel, chain, m, 0, 2 * n).value) for n in seps])
    xi, ci = fit_correlation_length(seps, vals)
    return StrangeCorrelatorReport("I", 0, 2 * max_separation, vals, "dense", xi, ci,
                                   extras={"separations": seps, "p": p})


# ------------------------------------------------- block decomposition route

@dataclass
class LRBlocks:
    """Per-trajectory 4x4 states of (L, R) in the X basis |++>, |+->, |-+>, |-->."""
    p_m: np.ndarray
    rho: np.ndarray

    @property
    def sector_probs(self) -> np.ndarray:
        d = np.real(np.einsum("tii->ti", self.rho))
        return np.stack([d[:, 0] + d[:, 3], d[:, 1] + d[:, 2]], axis=1)

    @property
    def sc(self) -> np.ndarray:
        """Off-diagonal over diagonal in each charge sector (nan for empty sectors)."""
        r = self.rho
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.stack([r[:, 0, 3] / r[:, 0, 0], r[:, 1, 2] / r[:, 1, 1]], axis=1)
        return np.where(self.sector_probs > 1e-12, out, np.nan)

    @property
    def equal_diagonal(self) -> np.ndarray:
        d = np.real(np.einsum("tii->ti", self.rho))
        cross = np.abs(self.rho[:, [0, 0, 3, 3], [1, 2, 1, 2]]).max(axis=1)
        return (np.abs(d[:, 0] - d[:, 3]) <= DIAGONAL_TOL) & (np.abs(d[:, 1] - d[:, 2]) <= DIAGONAL_TOL) \
            & (cross <= DIAGONAL_TOL)

    def direct_terms(self) -> np.ndarray:
        """I(L:R) - S(L) = S(R) - S(LR) for each trajectory."""
        out = np.empty(len(self.p_m))
        for k, r in enumerate(self.rho):
            t = r.reshape(2, 2, 2, 2)
            rho_r = np.einsum("abac->bc", t)
            out[k] = dense.entropy_of(rho_r) - dense.entropy_of(r)
        return out


def lr_blocks(graph, channel: ChannelSpec | None, left: int, right: int) -> LRBlocks:
    """Exhaustive trajectories of all qubits other than ``left`` and ``right``."""
    n = _n_qubits(graph)
    if n > MAX_BLOCK_QUBITS:
        raise dense.SizeCapError(f"block enumeration limited to {MAX_BLOCK_QUBITS} qubits")
    t = cluster_vector(graph).reshape((1,) + (2,) * n)
    for s, ops in _kraus_by_site(graph, channel).items():
        r = np.tensordot(t, np.stack(ops), axes=([1 + s], [2]))
        r = np.moveaxis(np.moveaxis(r, -1, 1 + s), -1, 0)
        t = r.reshape((-1,) + (2,) * n)
    for q in range(n):
        t = np.moveaxis(np.tensordot(HADAMARD, t, axes=([1], [1 + q])), 0, 1 + q)
    rest = [q for q in range(n) if q not in (left, right)]
    t = np.transpose(t, [0] + [1 + q for q in rest] + [1 + left, 1 + right]).reshape(t.shape[0], -1, 4)
    rho = np.einsum("bma,bmc->mac", t, t.conj())
    p_m = np.real(np.einsum("mii->m", rho))
    keep = p_m > 1e-14
    return LRBlocks(p_m[keep], rho[keep] / p_m[keep, None, None])


def reconstruct_lr(sector_probs: np.ndarray, sc: np.ndarray) -> np.ndarray:
    """4x4 X-basis state from charge-sector weights and sector off-diagonals."""
    out = np.zeros((4, 4), dtype=complex)
    for (a, b), p, c in zip([(0, 3), (1, 2)], sector_probs, sc):
        if p == 0:
            continue
        out[a, a] = out[b, b] = p / 2
        out[a, b] = p * c / 2
        out[b, a] = np.conj(out[a, b])
    return out


def ic_from_sc(p_m: np.ndarray, sector_probs: np.ndarray, sc: np.ndarray) -> float:
    """sum_m p_m [1 - sum_s p_s h2((1+|SC_s|)/2) - H(p_s)] with equal-diagonal blocks."""
    p_m = np.asarray(p_m, dtype=float)
    sector_probs = np.asarray(sector_probs, dtype=float)
    sc = np.asarray(sc)
    if p_m.ndim != 1 or sector_probs.shape != (len(p_m), 2) or sc.shape != (len(p_m), 2):
        raise ValueError("expected p_m (T,), sector_probs (T, 2) and sc (T, 2)")
    if abs(p_m.sum() - 1) > 1e-9 or np.abs(sector_probs.sum(axis=1) - 1).max() > 1e-9:
        raise ValueError("probabilities must be normalized")
    occupied = sector_probs > 1e-12
    mags = np.where(occupied, np.abs(np.where(occupied, sc, 0.0)), 0.0)
    if (mags > 1 + 1e-9).any():
        raise ValueError("|SC| exceeds 1")
    total = 0.0
    for pm, ps, mag in zip(p_m, sector_probs, mags):
        block = sum(w * h2((1 + min(v, 1.0)) / 2) for w, v in zip(ps, mag) if w > 1e-12)
        charge = -sum(w * math.log2(w) for w in ps if w > 0)
        total += pm * (1 - block - charge)
    return total


@dataclass(frozen=True)
class BlockRouteResult:
    value: float
    via_sc: float | None
    direct: float
    fallback: bool


def ic_via_blocks(blocks: LRBlocks) -> BlockRouteResult:
    """Strange-correlator route when every block has equal diagonals, dense entropies otherwise."""
    direct = float(blocks.p_m @ blocks.direct_terms())
    if blocks.equal_diagonal.all():
        via = ic_from_sc(blocks.p_m, blocks.sector_probs, blocks.sc)
        return BlockRouteResult(via, via, direct, False)
    return BlockRouteResult(direct, None, direct, True)


# ------------------------------------------------------------------- output

SC_COLUMNS = ["kind", "channel", "p", "lambda", "separation", "value", "stderr", "xi_fit", "seed"]


def write_sc_csv(rows: list[list], path: str, extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SC_COLUMNS + list(extra))
        for row in rows:
            w.writerow(list(row) + list(extra.values()))
