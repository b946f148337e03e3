"""Decoding the leaked symmetry charge from bulk measurement outcomes.

1D: the charge of a sublattice is the product of its outcomes; its
posterior depends only on the flip model.

2D: edge outcomes of a cylinder satisfy plaquette constraints, so a
decohered record has a syndrome.  Error patterns with the same syndrome
fall into two classes distinguished by their parity on the logical string
``l`` (row-0 horizontal edges).  Three decoders are offered: minimum-weight
perfect matching (pymatching, with an independent networkx reference), an
exhaustive class-probability sum over the GF(2) solution space, and an
Ising transfer-matrix evaluation of the same class probabilities.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np
import pymatching
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import gf2
from .channels import ChannelSpec
from .lattice import LiebCylinder2D
from .protocol import h2

MAX_NULLSPACE = 22
MAX_DEFECTS = 200


class LatticeTooLargeError(ValueError):
    pass


class OddDefectError(ValueError):
    pass


# --------------------------------------------------------------------------- error models


@dataclass(frozen=True)
class ErrorModel:
    """Per-site flip likelihoods.  ``kind='z'`` flips with probability ``p``;
    ``kind='sdc'`` replaces the outcome with probability ``q`` by a fresh one
    with P(+1) = (1 + r)/2."""

    kind: str
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("z", "sdc"):
            raise ValueError(f"unknown error model {self.kind!r}")
        if not (0 <= self.p <= 1 and 0 <= self.q <= 1 and -1 <= self.r <= 1):
            raise ValueError("error model parameters out of range")

    @classmethod
    def from_channel(cls, channel: ChannelSpec, sublattice: str = "B") -> "ErrorModel":
        if channel.kind == "z_dephase":
            return cls("z", p=channel.strength(sublattice))
        if channel.kind == "sdc":
            return cls("sdc", q=channel.q, r=math.sin(2 * channel.phi))
        raise ValueError(f"no classical error model for {channel.kind}")

    def weights(self, observed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(no-flip, flip) likelihood weights given the observed outcomes."""
        observed = np.asarray(observed)
        if self.kind == "z":
            return np.full(observed.shape, 1 - self.p), np.full(observed.shape, self.p)
        flip = self.q * (1 + self.r * observed) / 2
        return 1 - self.q + flip, flip

    def flip_probability(self, observed: np.ndarray) -> np.ndarray:
        w0, w1 = self.weights(observed)
        return w1 / (w0 + w1)

    def corrupt(self, true: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Observed outcomes drawn from the generative model."""
        true = np.asarray(true)
        if self.kind == "z":
            return np.where(rng.random(true.shape) < self.p, -true, true)
        fresh = np.where(rng.random(true.shape) < (1 + self.r) / 2, 1, -1)
        return np.where(rng.random(true.shape) < self.q, fresh, true)


# --------------------------------------------------------------------------- 1D


def decode_1d_ml(outcomes: dict[str, np.ndarray], p_a: float, p_b: float) -> tuple[dict[str, int], float]:
    """Maximum-likelihood charge per sublattice and the posterior entropy.

    ``outcomes`` maps 'A'/'B' to the observed outcomes of the decohered
    sites of that sublattice.
    """
    guess, entropy = {}, 0.0
    for sub, p in (("A", p_a), ("B", p_b)):
        obs = np.asarray(outcomes.get(sub, []))
        bias = (1 - 2 * p) ** len(obs)
        guess[sub] = int(np.prod(obs)) * (1 if bias >= 0 else -1)
        entropy += h2((1 + abs(bias)) / 2) if len(obs) else 0.0
    return guess, entropy


def parity_posterior(model: ErrorModel, observed: np.ndarray) -> np.ndarray:
    """P(observed parity equals true parity | observed), batched over rows."""
    bias = np.prod(1 - 2 * model.flip_probability(observed), axis=-1)
    return (1 + bias) / 2


def sample_parity_entropy(channel: ChannelSpec, n_sites: int, sublattice: str, n_traj: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Samples of H(gamma | m) for one decohered sublattice of uniform true outcomes."""
    model = ErrorModel.from_channel(channel, sublattice)
    true = np.where(rng.random((n_traj, n_sites)) < 0.5, 1, -1)
    observed = model.corrupt(true, rng)
    return h2(parity_posterior(model, observed))


# --------------------------------------------------------------------------- 2D lattice


@dataclass(frozen=True)
class DecodingLattice:
    """Plaquette checks on the noisy edges of an Lx x Ly cylinder.

    With ``boundary_noise`` the boundary-column vertical edges are noisy too
    and the two boundary rings become extra checks.
    """

    Lx: int
    Ly: int
    boundary_noise: bool = False

    @cached_property
    def cylinder(self) -> LiebCylinder2D:
        return LiebCylinder2D(self.Lx, self.Ly)

    @cached_property
    def noisy_edges(self) -> list[int]:
        skip = set() if self.boundary_noise else set(self.cylinder.boundary_edges())
        return [e for e in self.cylinder.edges if e not in skip]

    @cached_property
    def column_of(self) -> dict[int, int]:
        return {e: j for j, e in enumerate(self.noisy_edges)}

    @cached_property
    def checks(self) -> list[list[int]]:
        cyl = self.cylinder
        rows = [cyl.plaquette_edges(x, y) for x in range(self.Lx - 1) for y in range(self.Ly)]
        if self.boundary_noise:
            rows += [[cyl.vertical_edge(x, y) for y in range(self.Ly)] for x in (0, self.Lx - 1)]
        return rows

    @cached_property
    def H(self) -> np.ndarray:
        mat = np.zeros((len(self.checks), len(self.noisy_edges)), dtype=np.uint8)
        for r, edges in enumerate(self.checks):
            for e in edges:
                if e in self.column_of:
                    mat[r, self.column_of[e]] = 1
        return mat

    @cached_property
    def logical(self) -> np.ndarray:
        vec = np.zeros(len(self.noisy_edges), dtype=np.uint8)
        for e in self.cylinder.row_path(0):
            vec[self.column_of[e]] = 1
        return vec

    @cached_property
    def noisy_positions(self) -> np.ndarray:
        """Positions of the noisy edges inside the full edge record."""
        pos = {e: i for i, e in enumerate(self.cylinder.edges)}
        return np.array([pos[e] for e in self.noisy_edges])

    @cached_property
    def H_record(self) -> np.ndarray:
        """Checks over every edge of the cylinder (noiseless ones included)."""
        pos = {e: i for i, e in enumerate(self.cylinder.edges)}
        mat = np.zeros((len(self.checks), len(pos)), dtype=np.uint8)
        for r, edges in enumerate(self.checks):
            for e in edges:
                mat[r, pos[e]] = 1
        return mat

    @cached_property
    def edge_vertices(self) -> np.ndarray:
        """(n_edges, 2) vertex positions (index into cylinder.vertices) of every edge."""
        pos = {v: i for i, v in enumerate(self.cylinder.vertices)}
        return np.array([[pos[q] for q in self.cylinder.edge_ends(self.cylinder.labels[e])]
                         for e in self.cylinder.edges])

    def record_syndrome(self, record: np.ndarray) -> np.ndarray:
        """Syndrome of a full +-1 edge record."""
        return ((np.asarray(record) < 0).astype(np.uint8) @ self.H_record.T) % 2

    def noisy_part(self, record: np.ndarray) -> np.ndarray:
        return np.asarray(record)[..., self.noisy_positions]

    @property
    def n_vertices(self) -> int:
        return self.Lx * self.Ly

    def syndrome(self, errors: np.ndarray) -> np.ndarray:
        return (np.asarray(errors, dtype=np.uint8) @ self.H.T) % 2

    def logical_parity(self, errors: np.ndarray) -> np.ndarray:
        return (np.asarray(errors, dtype=np.uint8) @ self.logical) % 2



@dataclass
class EdgeSample:
    """Realizations (rows): vertex gauge, true and observed outcomes of every
    edge, and the error pattern on the noisy edges."""

    gauge: np.ndarray  # +-1 per vertex
    true: np.ndarray
    observed: np.ndarray
    errors: np.ndarray  # uint8 per noisy edge, 1 where observed != true


def sample_edges(dl: DecodingLattice, model: ErrorModel, rng: np.random.Generator, n: int = 1) -> EdgeSample:
    """True outcomes sigma_a sigma_b from a uniform vertex gauge, then noise."""
    gauge = np.where(rng.random((n, dl.n_vertices)) < 0.5, 1, -1).astype(np.int8)
    ends = dl.edge_vertices
    true = gauge[:, ends[:, 0]] * gauge[:, ends[:, 1]]
    observed = true.copy()
    observed[:, dl.noisy_positions] = model.corrupt(dl.noisy_part(true), rng)
    errors = (dl.noisy_part(observed) != dl.noisy_part(true)).astype(np.uint8)
    return EdgeSample(gauge, true, observed, errors)


# --------------------------------------------------------------------------- matching


def _edge_weights(model: ErrorModel, observed: np.ndarray) -> np.ndarray:
    w0, w1 = model.weights(observed)
    with np.errstate(divide="ignore"):
        w = np.log(w0) - np.log(w1)
    return np.minimum(w, 1e6)


def decode_2d_matching(dl: DecodingLattice, model: ErrorModel, record: np.ndarray,
                       syndrome: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """MWPM correction (uint8 per noisy edge) and the decoded string charge
    from a full edge record."""
    observed = dl.noisy_part(record)
    if syndrome is None:
        syndrome = dl.record_syndrome(record)
    if not dl.boundary_noise and syndrome.sum() % 2:
        raise OddDefectError("odd number of defects on a closed check set")
    matching = pymatching.Matching.from_check_matrix(dl.H, weights=_edge_weights(model, observed))
    correction = matching.decode(syndrome).astype(np.uint8)
    signs = np.where(correction == 1, -1, 1)
    gamma = int(np.prod((signs * observed)[dl.logical == 1]))
    return correction, gamma


def matching_failures(dl: DecodingLattice, model: ErrorModel, sample: EdgeSample) -> np.ndarray:
    """Logical failure per sample row using pymatching (batched for iid noise)."""
    synd = dl.syndrome(sample.errors)
    if model.kind == "z":
        matching = pymatching.Matching.from_check_matrix(dl.H, weights=_edge_weights(model, np.ones(1)).item(),
                                                         faults_matrix=dl.logical[None, :])
        predicted = matching.decode_batch(synd)[:, 0]
        return (predicted ^ dl.logical_parity(sample.errors)).astype(bool)
    out = np.zeros(len(synd), dtype=bool)
    for i in range(len(synd)):
        correction, _ = decode_2d_matching(dl, model, sample.observed[i], synd[i])
        out[i] = bool(dl.logical_parity(correction ^ sample.errors[i]))
    return out


class ReferenceMatcher:
    """Complete defect graph with Dijkstra path weights and exact blossom
    matching (networkx).  Edges with a single check end on a boundary node."""

    def __init__(self, dl: DecodingLattice, weights: np.ndarray):
        self.dl = dl
        self.weights = np.asarray(weights, dtype=float)
        n_checks = dl.H.shape[0]
        self.boundary = n_checks
        rows, cols, vals, self.edge_id = [], [], [], {}
        for j in range(dl.H.shape[1]):
            ends = list(np.flatnonzero(dl.H[:, j]))
            if len(ends) == 1:
                ends.append(self.boundary)
            if len(ends) != 2:
                raise ValueError("each noisy edge must touch one or two checks")
            a, b = ends
            key = (min(a, b), max(a, b))
            if key in self.edge_id and self.weights[self.edge_id[key]] <= self.weights[j]:
                continue
            self.edge_id[key] = j
        for (a, b), j in self.edge_id.items():
            rows += [a, b]
            cols += [b, a]
            vals += [self.weights[j]] * 2
        self.has_boundary = any(b == self.boundary for _, b in self.edge_id)
        size = n_checks + 1
        graph = csr_matrix((np.array(vals) + 1e-300, (rows, cols)), shape=(size, size))
        self.graph = graph

    def _paths(self, sources: list[int]):
        dist, pred = dijkstra(self.graph, indices=sources, return_predecessors=True)
        return dist, pred

    def _walk(self, pred_row: np.ndarray, source: int, target: int) -> list[int]:
        edges, node = [], target
        while node != source:
            prev = pred_row[node]
            if prev < 0:
                raise ValueError("disconnected defects")
            edges.append(self.edge_id[(min(prev, node), max(prev, node))])
            node = prev
        return edges

    def pairing_weights(self, defects: list[int]) -> tuple[np.ndarray, np.ndarray]:
        dist, pred = self._paths(defects + ([self.boundary] if self.has_boundary else []))
        return dist, pred

    def decode(self, syndrome: np.ndarray) -> tuple[np.ndarray, float]:
        defects = [int(d) for d in np.flatnonzero(syndrome)]
        if len(defects) > MAX_DEFECTS:
            raise ValueError(f"{len(defects)} defects exceed the exact blossom limit")
        correction = np.zeros(self.dl.H.shape[1], dtype=np.uint8)
        if not defects:
            return correction, 0.0
        if not self.has_boundary and len(defects) % 2:
            raise OddDefectError("odd number of defects with no boundary")
        dist, pred = self.pairing_weights(defects)
        g = nx.Graph()
        k = len(defects)
        for i in range(k):
            for j in range(i + 1, k):
                g.add_edge(("d", i), ("d", j), weight=-dist[i, defects[j]])
            if self.has_boundary:
                g.add_edge(("d", i), ("b", i), weight=-dist[i, self.boundary])
                for j in range(i + 1, k):
                    g.add_edge(("b", i), ("b", j), weight=0.0)
        pairs = nx.max_weight_matching(g, maxcardinality=True)
        total = 0.0
        for u, v in pairs:
            if u[0] == "b" and v[0] == "b":
                continue
            if u[0] == "b":
                u, v = v, u
            i = u[1]
            target = self.boundary if v[0] == "b" else defects[v[1]]
            total += dist[i, target]
            for e in self._walk(pred[i], defects[i], target):
                correction[e] ^= 1
        return correction, float(total)


def brute_force_pairing_weight(dl: DecodingLattice, weights: np.ndarray, syndrome: np.ndarray) -> float:
    """Minimum total shortest-path weight over all pairings (<= 8 defects)."""
    ref = ReferenceMatcher(dl, weights)
    defects = [int(d) for d in np.flatnonzero(syndrome)]
    if len(defects) > 8:
        raise ValueError("brute force limited to 8 defects")
    if not defects:
        return 0.0
    dist, _ = ref.pairing_weights(defects)

    def best(remaining: tuple[int, ...]) -> float:
        if not remaining:
            return 0.0
        first, rest = remaining[0], remaining[1:]
        options = []
        if ref.has_boundary:
            options.append(dist[first, ref.boundary] + best(rest))
        for idx, other in enumerate(rest):
            options.append(dist[first, defects[other]] + best(rest[:idx] + rest[idx + 1:]))
        return min(options) if options else math.inf

    return best(tuple(range(len(defects))))


# --------------------------------------------------------------------------- class probabilities


@dataclass
class ClassLikelihoods:
    """Log-likelihoods of the two logical classes relative to a reference error."""

    log_probs: np.ndarray  # [class with the reference parity, the other class]
    reference_parity: int
    saturated: bool = False

    @property
    def chosen(self) -> int:
        """Logical parity of the most likely class."""
        return self.reference_parity ^ int(self.log_probs[1] > self.log_probs[0])

    @property
    def delta(self) -> float | None:
        """log(P_max / P_other); None when the other class has zero weight."""
        if self.saturated:
            return None
        return float(abs(self.log_probs[0] - self.log_probs[1]))

    @property
    def posterior(self) -> float:
        """Probability of the most likely class."""
        if self.saturated:
            return 1.0
        d = abs(self.log_probs[0] - self.log_probs[1])
        return 1.0 / (1.0 + math.exp(-d))

    @property
    def entropy(self) -> float:
        return h2(self.posterior)


def _reference_error(dl: DecodingLattice, syndrome: np.ndarray) -> np.ndarray:
    sol = gf2.solve(dl.H, np.asarray(syndrome, dtype=np.uint8))
    if sol is None:
        raise ValueError("syndrome is not reachable from noisy edges")
    return sol.astype(np.uint8)


def class_probability_exact(dl: DecodingLattice, model: ErrorModel, record: np.ndarray,
                            chunk: int = 1 << 16) -> ClassLikelihoods:
    """Sum the likelihood of every error pattern consistent with the syndrome."""
    observed = dl.noisy_part(record)
    base = _reference_error(dl, dl.record_syndrome(record))
    kernel = gf2.nullspace(dl.H)
    k = len(kernel)
    if k > MAX_NULLSPACE:
        raise LatticeTooLargeError(f"{2 ** k} error patterns per syndrome is beyond exhaustive summation")
    w0, w1 = model.weights(observed)
    # an error pattern e means the true outcome is observed * (-1)^e
    with np.errstate(divide="ignore"):
        log0, log1 = np.log(w0), np.log(w1)
    ref_parity = int(dl.logical_parity(base))
    totals = [[], []]
    kernel = kernel.astype(np.uint8)
    for start in range(0, 2 ** k, chunk):
        idx = np.arange(start, min(start + chunk, 2 ** k), dtype=np.int64)
        coeffs = ((idx[:, None] >> np.arange(k)) & 1).astype(np.uint8)
        errs = (coeffs @ kernel % 2) ^ base if k else np.broadcast_to(base, (len(idx), len(base)))
        logw = np.where(errs == 1, log1, log0).sum(axis=1)
        cls = dl.logical_parity(errs) ^ ref_parity
        for c in (0, 1):
            sel = logw[cls == c]
            sel = sel[np.isfinite(sel)]
            if len(sel):
                totals[c].append(np.logaddexp.reduce(sel))
    logs = np.array([np.logaddexp.reduce(t) if t else -np.inf for t in totals])
    saturated = bool(np.isinf(logs).any())
    return ClassLikelihoods(logs, ref_parity, saturated)


def class_probability_tm(dl: DecodingLattice, model: ErrorModel, record: np.ndarray) -> ClassLikelihoods:
    """Same class probabilities via an Ising transfer matrix along the cylinder.

    Writing an error pattern as reference + (edges cut by a vertex set),
    each class sum becomes an Ising partition function with couplings
    K_e = (1/2) ln(w_noflip / w_flip) signed by the reference error; the two
    classes differ by whether the boundary spins at row 0 agree.
    """
    if dl.Ly > 12:
        raise LatticeTooLargeError("transfer matrix limited to circumference 12")
    observed = dl.noisy_part(record)
    base = _reference_error(dl, dl.record_syndrome(record))
    w0, w1 = model.weights(observed)
    cyl = dl.cylinder
    Ly, Lx = dl.Ly, dl.Lx
    configs = np.arange(2 ** Ly)
    spins = 1 - 2 * ((configs[:, None] >> np.arange(Ly)) & 1)  # (2^Ly, Ly), bit y -> row y

    def bond(e: int):
        """(log weight when the bond is satisfied, when broken) for edge e."""
        j = dl.column_of.get(e)
        if j is None:
            return 0.0, -np.inf
        a, b = (w0[j], w1[j]) if base[j] == 0 else (w1[j], w0[j])
        with np.errstate(divide="ignore"):
            return math.log(a) if a > 0 else -np.inf, math.log(b) if b > 0 else -np.inf

    def column_logweights(x: int) -> np.ndarray:
        out = np.zeros(2 ** Ly)
        for y in range(Ly):
            sat, brk = bond(cyl.vertical_edge(x, y))
            agree = spins[:, y] * spins[:, (y + 1) % Ly] > 0
            out = out + np.where(agree, sat, brk)
        return out

    # fix the row-0 spin of the first column to +1 (global flip symmetry)
    logv = column_logweights(0) + np.where(spins[:, 0] > 0, 0.0, -np.inf)
    for x in range(Lx - 1):
        shift = np.max(logv[np.isfinite(logv)])
        vec = np.exp(logv - shift).reshape((2,) * Ly)
        for y in range(Ly):
            sat, brk = bond(cyl.horizontal_edge(x, y))
            mat = np.array([[math.exp(sat), math.exp(brk)], [math.exp(brk), math.exp(sat)]])
            axis = Ly - 1 - y  # bit y of the flat index is this tensor axis
            vec = np.moveaxis(np.tensordot(mat, vec, axes=([0], [axis])), 0, axis)
        with np.errstate(divide="ignore"):
            logv = np.log(np.maximum(vec.reshape(-1), 0.0)) + shift + column_logweights(x + 1)
    same = spins[:, 0] > 0
    logs = np.array([np.logaddexp.reduce(logv[same]), np.logaddexp.reduce(logv[~same])])
    return ClassLikelihoods(logs, int(dl.logical_parity(base)), bool(np.isinf(logs).any()))


def class_probabilities(dl: DecodingLattice, model: ErrorModel, record: np.ndarray,
                        method: str = "auto") -> ClassLikelihoods:
    if method == "auto":
        method = "exact" if len(gf2.nullspace(dl.H)) <= 16 else "transfer_matrix"
    if method == "exact":
        return class_probability_exact(dl, model, record)
    if method == "transfer_matrix":
        return class_probability_tm(dl, model, record)
    raise ValueError(f"unknown method {method!r}")


def sample_string_entropy(lattice: LiebCylinder2D, channel: ChannelSpec, n_traj: int, rng: np.random.Generator,
                          method: str = "auto") -> np.ndarray:
    """Samples of H(gamma_l | m) for edge decoherence on a cylinder."""
    dl = DecodingLattice(lattice.Lx, lattice.Ly, channel.boundary)
    model = ErrorModel.from_channel(channel, "B")
    sample = sample_edges(dl, model, rng, n_traj)
    return np.array([class_probabilities(dl, model, obs, method).entropy for obs in sample.observed])


# --------------------------------------------------------------------------- benchmark


@dataclass
class BenchmarkRow:
    L: int
    p: float
    n_samples: int
    failure_rate: float
    stderr: float
    mean_delta: float | None
    seed: int

    def as_list(self) -> list:
        fmt = lambda v: "" if v is None else f"{v:.12g}"
        return [self.L, fmt(self.p), self.n_samples, fmt(self.failure_rate), fmt(self.stderr),
                fmt(self.mean_delta), self.seed]


BENCHMARK_COLUMNS = ["L", "p", "n_samples", "failure_rate", "stderr", "mean_delta", "seed"]


def benchmark_point(L: int, p: float, n_samples: int, seed: int, model_kind: str = "z", q: float = 0.0,
                    r: float = 0.0, with_delta: bool = False, boundary_noise: bool = False) -> BenchmarkRow:
    dl = DecodingLattice(L, L, boundary_noise)
    model = ErrorModel(model_kind, p=p, q=q, r=r)
    rng = np.random.default_rng(seed)
    sample = sample_edges(dl, model, rng, n_samples)
    fails = matching_failures(dl, model, sample)
    rate = float(fails.mean())
    stderr = math.sqrt(max(rate * (1 - rate), 1.0 / n_samples) / n_samples)
    delta = None
    if with_delta:
        vals = [class_probabilities(dl, model, obs).delta for obs in sample.observed]
        finite = [v for v in vals if v is not None]
        delta = float(np.mean(finite)) if finite else None
    return BenchmarkRow(L, p, n_samples, rate, stderr, delta, seed)


def write_benchmark_csv(rows: list[BenchmarkRow], path: str, extra: dict | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCHMARK_COLUMNS + list(extra))
        for row in rows:
            writer.writerow(row.as_list() + list(extra.values()))
