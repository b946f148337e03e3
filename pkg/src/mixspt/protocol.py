"""Boundary-to-boundary communication through a measured cluster state.

The ancilla L is entangled with the left boundary, the state is decohered,
every bulk site is measured in the X basis and the right boundary R is kept.
Coherent informations are reported in bits.

Two engines are provided:

* a stabilizer engine for noiseless (or Pauli-frame) trajectories, and
* a dense branch register that builds the cluster state site by site and
  measures each site as soon as all of its CZ gates have been applied, so
  the live register stays small.  Branches are either enumerated
  exhaustively (unnormalized amplitudes carry the Born weights) or sampled.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import dense
from .channels import ChannelSpec, purification, sample_pauli_errors, transformed_charge
from .lattice import Chain1D, Lattice, LiebCylinder2D, build_cluster_1d, build_cluster_2d, entangle_ancilla
from .pauli import PauliOperator, StabilizerState, entanglement_entropy, measure_pauli

ANCILLA = "anc"
MAX_ELEMENTS = 2 ** 25
PRUNE = 1e-24


def h2(x) -> np.ndarray | float:
    """Binary entropy in bits, vectorized, with h2(0) = h2(1) = 0."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -(x * np.log2(x) + (1 - x) * np.log2(1 - x))
    out = np.where((x <= 0) | (x >= 1), 0.0, out)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------- records


@dataclass(frozen=True)
class ChargeClass:
    labels: dict[str, int]

    def key(self) -> tuple[int, ...]:
        return tuple(self.labels[k] for k in sorted(self.labels))


@dataclass
class TrajectoryRecord:
    m: np.ndarray
    p_m: float
    gamma: ChargeClass
    env: np.ndarray | None = None
    block: np.ndarray | None = None  # reduced density matrix of (L, R)

    def m_hash(self) -> str:
        return hashlib.sha1(np.asarray(self.m, dtype=np.int8).tobytes()).hexdigest()[:16]


@dataclass
class CoherentInfoReport:
    value: float
    estimator: str
    stderr: float = 0.0
    n_traj: int | None = None
    seed: int | None = None
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_json_default, sort_keys=True)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def write_trajectory_csv(records: Sequence[TrajectoryRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        keys = sorted(records[0].gamma.labels) if records else []
        writer.writerow(["m_hash", *[f"gamma_{k}" for k in keys], "p_m"])
        for rec in records:
            writer.writerow([rec.m_hash(), *[rec.gamma.labels[k] for k in keys], f"{rec.p_m:.12g}"])


# --------------------------------------------------------------------------- geometry


@dataclass(frozen=True)
class ProtocolGeometry:
    n_sites: int
    neighbors: dict[int, tuple[int, ...]]
    measured: tuple[int, ...]
    right: tuple[int, ...]
    targets: tuple[int, ...]
    code: str
    sublattice: dict[int, str]
    charges: dict[str, tuple[int, ...]]  # charge-class label -> measured sites in its product


def geometry(lattice: Lattice) -> ProtocolGeometry:
    if isinstance(lattice, Chain1D):
        n = lattice.n_sites
        measured = tuple(range(n - 1))
        charges = {"even": tuple(s for s in measured if s % 2 == 0), "odd": tuple(s for s in measured if s % 2)}
        sub = {s: lattice.sublattice(s) for s in range(n)}
        targets, code, right = (lattice.left,), "bell", (lattice.right,)
    elif isinstance(lattice, LiebCylinder2D):
        n = lattice.n_qubits
        right = tuple(lattice.boundary_column("R"))
        measured = tuple(q for q in range(n) if q not in set(right))
        charges = {"V": tuple(v for v in lattice.vertices if v in set(measured)), "l": tuple(lattice.row_path(0))}
        sub = {q: ("A" if lattice.labels[q][0] == "v" else "B") for q in range(n)}
        targets, code = tuple(lattice.boundary_column("L")), "repetition"
    else:
        raise TypeError("unknown lattice")
    nb: dict[int, list[int]] = {q: [] for q in range(n)}
    for a, b in lattice.cz_edges:
        nb[a].append(b)
        nb[b].append(a)
    return ProtocolGeometry(n, {q: tuple(v) for q, v in nb.items()}, measured, right, targets, code, sub, charges)


def _is_trivial(channel: ChannelSpec, sublattice: str) -> bool:
    if channel.kind in ("z_dephase", "y_dephase", "controlled_hadamard"):
        return channel.strength(sublattice) == 0.0
    if channel.kind == "sdc":
        return channel.q == 0.0
    return False


def noisy_sites(lattice: Lattice, channel: ChannelSpec | None) -> dict[int, str]:
    """Decohered site -> sublattice.  Boundary sites are skipped unless
    ``channel.boundary`` is set; identity channels are dropped."""
    if channel is None:
        return {}
    out: dict[int, str] = {}
    if isinstance(lattice, Chain1D):
        for sub in ("A", "B"):
            if channel.hits(sub) and not _is_trivial(channel, sub):
                for s in lattice.sites(sub, bulk_only=not channel.boundary):
                    out[s] = sub
        return out
    edge_skip = set() if channel.boundary else set(lattice.boundary_edges())
    col_skip = set() if channel.boundary else set(lattice.boundary_column("L") + lattice.boundary_column("R"))
    if channel.hits("A") and not _is_trivial(channel, "A"):
        out.update({v: "A" for v in lattice.vertices if v not in col_skip})
    if channel.hits("B") and not _is_trivial(channel, "B"):
        out.update({e: "B" for e in lattice.edges if e not in edge_skip})
    return out


def charge_class(geo: ProtocolGeometry, outcomes: dict[int, int]) -> ChargeClass:
    return ChargeClass({k: int(np.prod([outcomes[s] for s in sites])) for k, sites in geo.charges.items()})


# --------------------------------------------------------------------------- stabilizer engine


def _prepare_stabilizer(lattice: Lattice, entangled: bool = True) -> StabilizerState:
    if not entangled:
        geo = geometry(lattice)
        state = StabilizerState.plus(geo.n_sites).append_qubits(1, basis="X")
        anc = geo.n_sites
        for t in geo.targets:
            state = state.cz(anc, t)
        if geo.code == "bell":
            return state.h(anc)
        for t in geo.targets:
            state = state.h(t)
        return state
    base = build_cluster_1d(lattice.N) if isinstance(lattice, Chain1D) else build_cluster_2d(lattice.Lx, lattice.Ly)
    return entangle_ancilla(base, lattice, "L")


def _x(n: int, q: int) -> PauliOperator:
    return PauliOperator.on(n, {q: "X"})


@dataclass
class BranchTable:
    """Every outcome string of a measurement sequence on a stabilizer state.

    Row b holds the generator phases (powers of i) of branch b over the
    shared generator bits ``unsigned_state``, its Born probability and its
    outcomes (+1 / -1, one column per measurement).
    """
    unsigned_state: StabilizerState
    phases: np.ndarray
    probs: np.ndarray
    outcomes: np.ndarray


def enumerate_branches(state: StabilizerState, ops: Sequence[PauliOperator]) -> BranchTable:
    """Exhaustive outcome tree, one level per measurement.

    Which generators anticommute with a measured Pauli, and which product
    reproduces a commuting one, depend on generator bits only, so the
    tableau update is done once per level and the branches differ only in
    their phase columns.
    """
    n = state.n_qubits
    gens = [PauliOperator(n, g.x, g.z, 0) for g in state.generators]
    phases = np.array([[g.k for g in state.generators]], dtype=np.int64)
    probs = np.ones(1)
    outcomes = np.zeros((1, 0), dtype=np.int8)
    for op in ops:
        anti = [i for i, g in enumerate(gens) if not g.commutes(op)]
        if not anti:
            used = StabilizerState(n, gens, validate=False).decomposition_mask(op)
            if used is not None:
                prod = PauliOperator.identity(n)
                for i, g in enumerate(gens):
                    if (used >> i) & 1:
                        prod = prod * g
                picked = [i for i in range(len(gens)) if (used >> i) & 1]
                k = (prod.k + phases[:, picked].sum(axis=1)) % 4
                outcomes = np.column_stack([outcomes, np.where(k == op.k % 4, 1, -1).astype(np.int8)])
                continue
            gens.append(PauliOperator(n, op.x, op.z, 0))
            phases = np.column_stack([phases, np.zeros(len(probs), dtype=np.int64)])
            slot = len(gens) - 1
        else:
            slot = anti[0]
            pivot = gens[slot]
            for i in anti[1:]:
                prod = gens[i] * pivot
                gens[i] = PauliOperator(n, prod.x, prod.z, 0)
                phases[:, i] = (phases[:, i] + phases[:, slot] + prod.k) % 4
            gens[slot] = PauliOperator(n, op.x, op.z, 0)
        plus, minus = phases.copy(), phases.copy()
        plus[:, slot] = op.k % 4
        minus[:, slot] = (op.k + 2) % 4
        phases = np.concatenate([plus, minus])
        probs = np.concatenate([probs, probs]) / 2
        column = np.repeat(np.array([1, -1], dtype=np.int8), len(outcomes))
        outcomes = np.column_stack([np.concatenate([outcomes, outcomes]), column])
    return BranchTable(StabilizerState(n, gens, validate=False), phases, probs, outcomes)


def coherent_info_pure(lattice: Lattice, exhaustive: bool = True, n_traj: int = 0, seed: int | None = None,
                       entangled: bool = True, max_random: int = 16) -> CoherentInfoReport:
    """Sum_m p_m S(rho_R^(m)) for the noiseless protocol.

    Exhaustive mode walks the full outcome tree when it has at most
    ``2**max_random`` leaves.  Beyond that it uses the fact that which
    measurements are random, and the unsigned post-measurement group, do not
    depend on earlier outcomes: every branch then has the same entropy and a
    single representative branch is exact.
    """
    state = _prepare_stabilizer(lattice, entangled)
    geo = geometry(lattice)
    n = state.n_qubits
    right = list(geo.right)
    params = {"lattice": json.loads(lattice.to_json()) | {"labels": None}, "entangled": entangled}
    if not exhaustive:
        rng = np.random.default_rng(seed)
        vals = []
        for _ in range(n_traj):
            s = state
            for q in geo.measured:
                _, s, _ = measure_pauli(s, _x(n, q), rng)
            vals.append(entanglement_entropy(s, right))
        vals = np.array(vals)
        return CoherentInfoReport(float(vals.mean()), "stabilizer_mc", float(vals.std(ddof=1) / math.sqrt(len(vals))),
                                  n_traj, seed, params)

    # count random measurements along one branch
    s, n_random = state, 0
    for q in geo.measured:
        _, s, det = measure_pauli(s, _x(n, q), forced=1)
        n_random += not det
    representative = entanglement_entropy(s, right)
    if n_random > max_random:
        return CoherentInfoReport(representative, "exact_stabilizer", params=params,
                                  extras={"method": "sign_class", "n_random": n_random})

    branches = enumerate_branches(state, [_x(n, q) for q in geo.measured])
    # the entropy reads only generator bits, which all branches share
    entropy = entanglement_entropy(branches.unsigned_state, right)
    total = float(branches.probs.sum() * entropy)
    leaves = len(branches.probs)
    return CoherentInfoReport(total, "exact_stabilizer", params=params,
                              extras={"method": "enumeration", "leaves": leaves, "n_random": n_random})


def _stabilizer_pauli_trajectories(lattice: Lattice, channel: ChannelSpec, n_traj: int, seed: int | None
                                   ) -> tuple[np.ndarray, list[dict[int, int]], list[dict[int, bool]]]:
    """Pauli-frame trajectories: entropy of R with the environment record,
    true outcomes and the sampled error pattern."""
    state = _prepare_stabilizer(lattice)
    geo = geometry(lattice)
    n = state.n_qubits
    noisy = noisy_sites(lattice, channel)
    letter = "Z" if channel.kind == "z_dephase" else "Y"
    rng = np.random.default_rng(seed)
    sites = sorted(noisy)
    ents, outs, errs = [], [], []
    for _ in range(n_traj):
        flips = sample_pauli_errors(channel, [noisy[s] for s in sites], rng)
        s = state
        for site, f in zip(sites, flips):
            if f:
                s = s.apply_pauli(PauliOperator.on(n, {site: letter}))
        outcomes = {}
        for q in geo.measured:
            outcomes[q], s, _ = measure_pauli(s, _x(n, q), rng)
        ents.append(entanglement_entropy(s, list(geo.right)))
        outs.append(outcomes)
        errs.append(dict(zip(sites, map(bool, flips))))
    return np.array(ents), outs, errs


# --------------------------------------------------------------------------- dense branch register


class BranchRegister:
    """Batch of (unnormalized) state vectors over a shared list of qubit labels.

    Axis 0 of ``tensor`` enumerates branches; axis ``1 + j`` is ``labels[j]``.
    With ``rng`` set, measurements sample one outcome per branch and keep
    states normalized; otherwise every measurement doubles the batch.
    """

    def __init__(self, rng: np.random.Generator | None = None, batch: int = 1, max_elements: int = MAX_ELEMENTS):
        self.tensor = np.ones((batch,), dtype=complex)
        self.labels: list = []
        self.records: dict = {}
        self.rng = rng
        self.max_elements = max_elements

    @property
    def batch(self) -> int:
        return self.tensor.shape[0]

    def _axes(self, labels) -> list[int]:
        return [1 + self.labels.index(lab) for lab in labels]

    def _guard(self) -> None:
        if len(self.labels) > dense.MAX_PURE:
            raise dense.SizeCapError(f"live register of {len(self.labels)} qubits exceeds {dense.MAX_PURE}")
        if self.tensor.size > self.max_elements:
            raise dense.SizeCapError(f"branch register holds {self.tensor.size} amplitudes")

    def add(self, labels: Sequence, vec: np.ndarray) -> None:
        k = len(labels)
        self.tensor = np.multiply.outer(self.tensor, np.asarray(vec, dtype=complex).reshape((2,) * k))
        self.labels += list(labels)
        self._guard()

    @staticmethod
    def _contract(t: np.ndarray, op: np.ndarray, axes: list[int]) -> np.ndarray:
        k = len(axes)
        out = np.tensordot(op.reshape((2,) * (2 * k)), t, axes=(list(range(k, 2 * k)), axes))
        return np.moveaxis(out, list(range(k)), axes)

    def apply(self, op: np.ndarray, labels: Sequence) -> None:
        self.tensor = self._contract(self.tensor, np.asarray(op, dtype=complex), self._axes(labels))

    def apply_per_branch(self, ops: dict, keys: np.ndarray, labels: Sequence) -> None:
        axes = self._axes(labels)
        for key, op in ops.items():
            sel = keys == key
            if sel.any():
                self.tensor[sel] = self._contract(self.tensor[sel], np.asarray(op, dtype=complex), axes)

    def cz(self, a, b) -> None:
        idx = [slice(None)] * self.tensor.ndim
        ia, ib = self._axes([a, b])
        idx[ia] = idx[ib] = 1
        self.tensor[tuple(idx)] *= -1

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.tensor.reshape(self.batch, -1)) ** 2, axis=1)

    def measure(self, label) -> np.ndarray:
        """Computational-basis measurement; records outcome +1 for |0>, -1 for |1>."""
        ax = self._axes([label])[0]
        t0, t1 = np.take(self.tensor, 0, axis=ax), np.take(self.tensor, 1, axis=ax)
        self.labels.remove(label)
        if self.rng is None:
            b = self.batch
            self.tensor = np.concatenate([t0, t1])
            self.records = {k: np.concatenate([v, v]) for k, v in self.records.items()}
            self.records[label] = np.concatenate([np.ones(b, np.int8), -np.ones(b, np.int8)])
            keep = self.norms() > PRUNE
            if not keep.all():
                self.tensor = self.tensor[keep]
                self.records = {k: v[keep] for k, v in self.records.items()}
        else:
            n0 = np.sum(np.abs(t0.reshape(len(t0), -1)) ** 2, axis=1)
            n1 = np.sum(np.abs(t1.reshape(len(t1), -1)) ** 2, axis=1)
            pick0 = self.rng.random(len(n0)) * (n0 + n1) < n0
            shape = (-1,) + (1,) * (t0.ndim - 1)
            chosen = np.where(pick0.reshape(shape), t0, t1)
            norm = np.sqrt(np.where(pick0, n0, n1)).reshape(shape)
            self.tensor = chosen / norm
            self.records[label] = np.where(pick0, 1, -1).astype(np.int8)
        self._guard()
        return self.records[label]

    def weights(self) -> np.ndarray:
        if self.rng is not None:
            return np.full(self.batch, 1.0 / self.batch)
        return self.norms()

    def reduced(self, keep: Sequence) -> np.ndarray:
        """Per-branch normalized reduced density matrices on ``keep``."""
        axes = self._axes(keep)
        rest = [a for a in range(1, self.tensor.ndim) if a not in axes]
        t = np.transpose(self.tensor, [0] + axes + rest).reshape(self.batch, 2 ** len(keep), -1)
        rho = np.einsum("bij,bkj->bik", t, t.conj())
        tr = np.einsum("bii->b", rho).real
        return rho / tr[:, None, None]


def batched_entropy(rho: np.ndarray) -> np.ndarray:
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < -dense.EIG_TOL:
        raise ValueError(f"density matrix has eigenvalue {vals.min():.3e}")
    vals = np.where(vals > dense.EIG_TOL, vals, 1.0)
    return -np.sum(vals * np.log2(vals), axis=-1)


@dataclass
class DenseRun:
    register: BranchRegister
    geometry: ProtocolGeometry
    noisy: dict[int, str]
    env_labels: list
    env_mode: str

    def weights(self) -> np.ndarray:
        return self.register.weights()

    def outcomes(self) -> np.ndarray:
        return np.stack([self.register.records[q] for q in self.geometry.measured], axis=1)

    def gamma(self) -> dict[str, np.ndarray]:
        rec = self.register.records
        return {k: np.prod([rec[s] for s in sites], axis=0) if sites else np.ones(self.register.batch, np.int8)
                for k, sites in self.geometry.charges.items()}


def run_dense(lattice: Lattice, channel: ChannelSpec | None = None, env_mode: Literal["kept", "measured"] = "kept",
              n_traj: int | None = None, seed: int | None = None, entangled: bool = True,
              max_elements: int = MAX_ELEMENTS) -> DenseRun:
    """Build, decohere and measure the protocol state site by site.

    ``env_mode='kept'`` leaves every environment qubit in the register;
    ``'measured'`` measures it right after its system site, in the
    eigenbasis of the outcome-dependent transformed charge (computational
    basis when the charge does not decompose).
    """
    geo = geometry(lattice)
    noisy = noisy_sites(lattice, channel)
    rng = np.random.default_rng(seed) if n_traj else None
    reg = BranchRegister(rng, batch=n_traj or 1, max_elements=max_elements)
    reg.add([ANCILLA], dense.PLUS)
    measured = set(geo.measured)
    introduced: set[int] = set()
    done: set[int] = set()
    env_labels: list = []
    charges: dict[str, object] = {}
    bases: dict[str, dict] = {}

    def decohere(site: int) -> list:
        sub = noisy[site]
        pur = purification(channel, sub)
        labels = [("E", site, j) for j in range(pur.n_env)]
        reg.add(labels, pur.env_state)
        reg.apply(pur.unitary, [site, *labels])
        return labels

    for site in range(geo.n_sites):
        reg.add([site], dense.PLUS)
        introduced.add(site)
        if site in geo.targets:
            reg.cz(ANCILLA, site)
            if geo.code == "repetition":
                reg.apply(dense.H, [site])
            else:
                reg.apply(dense.H, [ANCILLA])
        for nb in geo.neighbors[site]:
            if entangled and nb in introduced:
                reg.cz(site, nb)
        ready = [q for q in sorted(introduced - done) if q in measured
                 and all(nb in introduced for nb in geo.neighbors[q])]
        for q in ready:
            done.add(q)
            labels = decohere(q) if q in noisy else []
            reg.apply(dense.H, [q])
            m = reg.measure(q)
            if not labels:
                continue
            if env_mode == "kept":
                env_labels += labels
                continue
            sub = noisy[q]
            if sub not in charges:
                charges[sub] = transformed_charge(channel, sub)
                if charges[sub].decomposable:
                    bases[sub] = {mm: charges[sub].eigenbasis(mm)[1].conj().T for mm in (1, -1)}
            if sub in bases:
                reg.apply_per_branch(bases[sub], m, labels)
            for lab in labels:
                reg.measure(lab)
    for q in geo.right:
        if q in noisy:
            env_labels += decohere(q)
    if env_mode == "measured":
        for lab in [lab for lab in env_labels]:
            reg.measure(lab)
        env_labels = []
    return DenseRun(reg, geo, noisy, env_labels, env_mode)


def _group_mixtures(run: DenseRun, keys: np.ndarray, labels: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Weights and density matrices of ``labels`` mixed over branches sharing a key row."""
    w = run.weights()
    rho = run.register.reduced(labels) * w[:, None, None]
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    groups = inverse.max() + 1
    gw = np.bincount(inverse, weights=w, minlength=groups)
    grho = np.zeros((groups,) + rho.shape[1:], dtype=complex)
    np.add.at(grho, inverse, rho)
    return gw, grho / gw[:, None, None]


def dense_quantities(run: DenseRun) -> dict[str, float]:
    """I_c(L:ERM), I_c(L:RM) and per-trajectory diagnostics for one run."""
    reg, geo = run.register, run.geometry
    w = run.weights()
    right = list(geo.right)
    out: dict[str, float] = {"total_weight": float(w.sum())}
    if run.env_mode == "kept":
        s_l = batched_entropy(reg.reduced([ANCILLA]))
        s_r = batched_entropy(reg.reduced(right))
        s_lr = batched_entropy(reg.reduced([ANCILLA] + right))
        out["ic_with_env"] = float(w @ s_l)
        out["ic_no_env"] = float(w @ (s_r - s_lr))
        out["mutual_info_lr"] = float(w @ (s_l + s_r - s_lr))
    else:
        out["ic_with_env"] = float(w @ batched_entropy(reg.reduced(right)))
        gw, grho = _group_mixtures(run, run.outcomes(), [ANCILLA] + right)
        d_r = 2 ** len(right)
        rho_r = np.einsum("gaiaj->gij", grho.reshape(len(gw), 2, d_r, 2, d_r))
        rho_l = np.einsum("giaja->gij", grho.reshape(len(gw), 2, d_r, 2, d_r))
        s_r, s_lr, s_l = batched_entropy(rho_r), batched_entropy(grho), batched_entropy(rho_l)
        out["ic_no_env"] = float(gw @ (s_r - s_lr))
        out["mutual_info_lr"] = float(gw @ (s_l + s_r - s_lr))
    # destroyed information as defined through I_c = sum p I(L:R) - (|L| - I_dest)
    out["i_dest"] = out["ic_no_env"] - out["mutual_info_lr"] + 1.0
    return out


def trajectory_records(run: DenseRun) -> list[TrajectoryRecord]:
    """One record per system-outcome string m (environment mixed in)."""
    outcomes = run.outcomes()
    right = list(run.geometry.right)
    gw, grho = _group_mixtures(run, outcomes, [ANCILLA] + right)
    uniq = np.unique(outcomes, axis=0)
    out = []
    for row, weight, rho in zip(uniq, gw, grho):
        gamma = ChargeClass({k: int(np.prod([row[run.geometry.measured.index(s)] for s in sites]))
                             for k, sites in run.geometry.charges.items()})
        out.append(TrajectoryRecord(row.copy(), float(weight), gamma, None, rho))
    return out


def gamma_conditioned_ic(run: DenseRun) -> float:
    """I_c(L:R Gamma): the boundary state mixed over all m sharing a charge class."""
    gam = run.gamma()
    keys = np.stack([gam[k] for k in sorted(gam)], axis=1)
    right = list(run.geometry.right)
    gw, grho = _group_mixtures(run, keys, [ANCILLA] + right)
    d_r = 2 ** len(right)
    rho_r = np.einsum("gaiaj->gij", grho.reshape(len(gw), 2, d_r, 2, d_r))
    return float(gw @ (batched_entropy(rho_r) - batched_entropy(grho)))


# --------------------------------------------------------------------------- closed forms


def _sdc_flip_factors(channel: ChannelSpec) -> tuple[float, float, float]:
    """(P(o=+1), 1-2f(+1), 1-2f(-1)) for one SDC-decohered site, where f(o)
    is the posterior probability that the observed outcome o is wrong."""
    q, r = channel.q, math.sin(2 * channel.phi)
    p_plus = 0.5 * (1 + q * r)
    factors = []
    for o in (1, -1):
        flip = q * (1 + r * o) / 2
        denom = (1 - q) + q * (1 + r * o)
        factors.append(1 - 2 * flip / denom if denom > 0 else 0.0)
    return p_plus, factors[0], factors[1]


def bias_deficit(t) -> np.ndarray | float:
    """1 - h2((1 + t) / 2) in bits, accurate for tiny |t| where the direct form cancels."""
    t = np.abs(np.asarray(t, dtype=float))
    series = sum(t ** (2 * k) / (2 * k * (2 * k - 1)) for k in range(1, 9))
    out = np.where(t < 1e-2, series / math.log(2), 1.0 - h2((1 + t) / 2))
    return float(out) if out.ndim == 0 else out


def parity_posterior_deficit(channel: ChannelSpec, n_sites: int, sublattice: str) -> float:
    """1 - E_m H(gamma | m) for the charge of ``n_sites`` independently
    decohered sites whose true outcomes are uniformly random."""
    if n_sites == 0:
        return 1.0
    if channel.kind == "z_dephase":
        p = channel.strength(sublattice)
        return bias_deficit((1 - 2 * p) ** n_sites)
    if channel.kind == "sdc":
        from scipy.stats import binom

        p_plus, f_plus, f_minus = _sdc_flip_factors(channel)
        k = np.arange(n_sites + 1)
        bias = f_plus ** k * f_minus ** (n_sites - k)
        return float(binom.pmf(k, n_sites, p_plus) @ bias_deficit(bias))
    raise ValueError(f"no closed form for {channel.kind}")


def parity_posterior_entropy(channel: ChannelSpec, n_sites: int, sublattice: str) -> float:
    """E_m H(gamma | m); see parity_posterior_deficit."""
    if n_sites == 0:
        return 0.0
    return 1.0 - parity_posterior_deficit(channel, n_sites, sublattice)


def _sublattice_counts(lattice: Lattice, channel: ChannelSpec) -> dict[str, int]:
    noisy = noisy_sites(lattice, channel)
    right = set(geometry(lattice).right)
    counts = {"A": 0, "B": 0}
    for s, sub in noisy.items():
        if s not in right:
            counts[sub] += 1
    return counts


def closed_form_1d(chain: Chain1D, channel: ChannelSpec) -> float:
    """Exact I_c(L:RM) for a chain with Z-dephasing or SDC noise."""
    if channel.kind not in ("z_dephase", "sdc") or channel.boundary:
        raise ValueError(f"closed form covers bulk z_dephase / sdc noise, not {channel.kind}")
    counts = _sublattice_counts(chain, channel)
    active = [s for s in ("A", "B") if counts[s]]
    return 1.0 - len(active) + sum(parity_posterior_deficit(channel, counts[s], s) for s in active)


def asymptote_1d(p_a: float, p_b: float, N: int, both: bool = True) -> float:
    """Large-N expansion of the Z-dephasing result (entropy of a nearly fair coin)."""
    terms = [(1 - 2 * p_b) ** (2 * N)]
    if both:
        terms.append((1 - 2 * p_a) ** (2 * N))
    base = 1.0 - len(terms)
    return base + sum(terms) / (2 * math.log(2))


# --------------------------------------------------------------------------- public estimators


def _params(lattice: Lattice, channel: ChannelSpec | None) -> dict:
    lat = json.loads(lattice.to_json())
    lat.pop("labels", None)
    return {"lattice": lat, "channel": channel.to_dict() if channel else None}


def coherent_info_with_env(lattice: Lattice, channel: ChannelSpec, exhaustive: bool = True,
                           n_traj: int | None = None, seed: int | None = None,
                           env_mode: Literal["measured", "kept"] = "measured") -> CoherentInfoReport:
    """I_c(L:ERM).  ``measured`` follows the protocol (system first, then
    the environment in the charge eigenbasis); ``kept`` treats the whole
    environment as quantum side information."""
    params = _params(lattice, channel) | {"env_mode": env_mode}
    if channel.is_pauli and not exhaustive and noisy_sites(lattice, channel) and \
            (isinstance(lattice, LiebCylinder2D) or lattice.N > 6):
        ents, _, _ = _stabilizer_pauli_trajectories(lattice, channel, n_traj or 100, seed)
        return CoherentInfoReport(float(ents.mean()), "stabilizer_mc", float(ents.std(ddof=1) / math.sqrt(len(ents))),
                                  len(ents), seed, params)
    run = run_dense(lattice, channel, env_mode, None if exhaustive else n_traj, seed)
    vals = dense_quantities(run)
    if exhaustive:
        return CoherentInfoReport(vals["ic_with_env"], "exact_dense", params=params, extras=vals)
    per = batched_entropy(run.register.reduced([ANCILLA] if env_mode == "kept" else list(run.geometry.right)))
    return CoherentInfoReport(float(per.mean()), "dense_mc", float(per.std(ddof=1) / math.sqrt(len(per))),
                              n_traj, seed, params)


def coherent_info_no_env(lattice: Lattice, channel: ChannelSpec,
                         estimator: Literal["exact_dense", "closed_form", "decoder_mc"] = "exact_dense",
                         n_traj: int = 1000, seed: int | None = None, method: str = "auto") -> CoherentInfoReport:
    """I_c(L:RM) with the environment traced out."""
    params = _params(lattice, channel)
    if estimator == "exact_dense":
        vals = dense_quantities(run_dense(lattice, channel, "kept"))
        return CoherentInfoReport(vals["ic_no_env"], estimator, params=params, extras=vals)
    if estimator == "closed_form":
        if not isinstance(lattice, Chain1D):
            raise ValueError("closed form is available for chains only")
        return CoherentInfoReport(closed_form_1d(lattice, channel), estimator, params=params)
    if estimator != "decoder_mc":
        raise ValueError(f"unknown estimator {estimator!r}")
    if channel.kind not in ("z_dephase", "sdc"):
        raise ValueError(f"decoder estimator needs z_dephase or sdc noise, got {channel.kind}")
    return _decoder_mc(lattice, channel, n_traj, seed, params, method)


def _decoder_mc(lattice: Lattice, channel: ChannelSpec, n_traj: int, seed: int | None, params: dict,
                method: str) -> CoherentInfoReport:
    from . import decoders

    rng = np.random.default_rng(seed)
    counts = _sublattice_counts(lattice, channel)
    ic_env = 1.0  # transformed charge decomposes for both supported channels
    if isinstance(lattice, Chain1D):
        samples = np.zeros(n_traj)
        for sub in ("A", "B"):
            if counts[sub]:
                samples += decoders.sample_parity_entropy(channel, counts[sub], sub, n_traj, rng)
    else:
        samples = np.zeros(n_traj)
        if counts["A"]:
            samples += decoders.sample_parity_entropy(channel, counts["A"], "A", n_traj, rng)
        if counts["B"]:
            samples += decoders.sample_string_entropy(lattice, channel, n_traj, rng, method=method)
    value = ic_env - samples.mean()
    return CoherentInfoReport(float(value), "decoder_mc", float(samples.std(ddof=1) / math.sqrt(n_traj)),
                              n_traj, seed, params, {"ic_with_env": ic_env})
