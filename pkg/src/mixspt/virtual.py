"""Decohered cluster states read as noisy evolution in virtual time.

1D: measuring a chain site in the X basis teleports the logical qubit one
step forward with a byproduct X^m H.  Dephasing a measured site flips its
recorded outcome, which the receiver sees as an X error on the logical
qubit at that step.  Each sample carries the 4-dim state of (reference,
logical); after undoing the recorded byproducts the sample-averaged state
gives the surviving coherent information.

2D: columns of the decoding cylinder are rounds of a repetition code on the
Ly rows.  A horizontal edge is a data flip of one row between rounds, an
interior vertical edge is an error on one parity measurement, and the
boundary rounds are perfect.  Detection events (parity changes between
rounds) are the plaquette checks of the decoding lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pymatching

from .decoders import BenchmarkRow, DecodingLattice, EdgeSample
from .dense import H as HADAMARD, X as PAULI_X, entropy_of

_BELL = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


@dataclass(frozen=True)
class VirtualEstimate:
    value: float
    stderr: float
    n_samples: int


def _apply_logical(states: np.ndarray, op: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Apply a 2x2 op to the logical factor of (n, 2, 2) states, optionally only where mask."""
    out = np.einsum("ij,nrj->nri", op, states)
    if mask is None:
        return out
    return np.where(mask[:, None, None], out, states)


def _ic_from_states(states: np.ndarray) -> float:
    rho = np.einsum("nab,ncd->abcd", states, states.conj()).reshape(4, 4) / len(states)
    rho_logical = np.einsum("abad->bd", rho.reshape(2, 2, 2, 2))
    return entropy_of(rho_logical) - entropy_of(rho)


def simulate_virtual_1d(N: int, p: float, n_samples: int, seed: int = 0, n_blocks: int = 20) -> VirtualEstimate:
    """Coherent information surviving 2N-1 teleportation steps, N of them noisy."""
    if not 0 <= p <= 0.5:
        raise ValueError("p must lie in [0, 0.5]")
    if N < 1 or n_samples < n_blocks:
        raise ValueError("need N >= 1 and at least one sample per jackknife block")
    rng = np.random.default_rng(seed)
    states = np.tile(_BELL.reshape(2, 2), (n_samples, 1, 1))
    n_steps = 2 * N - 1
    recorded = np.empty((n_steps, n_samples), dtype=bool)
    for k in range(n_steps):
        states = _apply_logical(states, HADAMARD)
        outcome = rng.random(n_samples) < 0.5  # X-basis outcomes on a cluster chain are unbiased
        states = _apply_logical(states, PAULI_X, outcome)
        flip = rng.random(n_samples) < p if k % 2 == 0 else np.zeros(n_samples, dtype=bool)
        recorded[k] = outcome ^ flip
    for k in reversed(range(n_steps)):  # undo X^m H using the recorded m
        states = _apply_logical(states, PAULI_X, recorded[k])
        states = _apply_logical(states, HADAMARD)
    value = _ic_from_states(states)
    blocks = np.array_split(np.arange(n_samples), n_blocks)
    leave_out = np.array([_ic_from_states(np.delete(states, b, axis=0)) for b in blocks])
    stderr = math.sqrt((n_blocks - 1) / n_blocks * np.sum((leave_out - leave_out.mean()) ** 2))
    return VirtualEstimate(float(value), float(stderr), n_samples)


# --------------------------------------------------------------------------- 2D


@dataclass
class RepetitionNoise:
    """Data flips (n, rounds-1, Ly) between rounds and measurement errors (n, rounds, Ly)."""
    data_flips: np.ndarray
    meas_errors: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.data_flips.shape[0]


def sample_repetition_noise(Lx: int, Ly: int, p: float, n: int, rng: np.random.Generator,
                            p_meas: float | None = None) -> RepetitionNoise:
    p_meas = p if p_meas is None else p_meas
    data = (rng.random((n, Lx - 1, Ly)) < p).astype(np.uint8)
    meas = (rng.random((n, Lx, Ly)) < p_meas).astype(np.uint8)
    meas[:, [0, -1]] = 0
    return RepetitionNoise(data, meas)


def noise_from_edge_errors(dl: DecodingLattice, errors: np.ndarray) -> RepetitionNoise:
    """Reinterpret error patterns on the noisy cylinder edges as repetition-code noise."""
    if dl.boundary_noise:
        raise ValueError("the foliated picture assumes perfect first and last rounds")
    errors = np.atleast_2d(errors)
    cyl, col = dl.cylinder, dl.column_of
    h = np.array([[col[cyl.horizontal_edge(x, y)] for y in range(dl.Ly)] for x in range(dl.Lx - 1)])
    data = errors[:, h]
    meas = np.zeros((len(errors), dl.Lx, dl.Ly), dtype=np.uint8)
    v = np.array([[col[cyl.vertical_edge(x, y)] for y in range(dl.Ly)] for x in range(1, dl.Lx - 1)])
    meas[:, 1:-1] = errors[:, v]
    return RepetitionNoise(data.astype(np.uint8), meas)


def syndrome_history(noise: RepetitionNoise) -> np.ndarray:
    """Detection events (n, rounds-1, Ly) from running the repetition code round by round."""
    n, rounds, Ly = noise.meas_errors.shape
    data = np.zeros((n, Ly), dtype=np.uint8)
    previous = None
    events = np.zeros((n, rounds - 1, Ly), dtype=np.uint8)
    for t in range(rounds):
        if t > 0:
            data ^= noise.data_flips[:, t - 1]
        measured = data ^ np.roll(data, -1, axis=1) ^ noise.meas_errors[:, t]  # parity of rows y, y+1
        if previous is not None:
            events[:, t - 1] = measured ^ previous
        previous = measured
    return events


def spacetime_matching(Lx: int, Ly: int, p: float, p_meas: float | None = None) -> pymatching.Matching:
    """Detector graph of the repetition code; fault 0 marks data flips of row 0."""
    p_meas = p if p_meas is None else p_meas
    w_data = math.log((1 - p) / p) if 0 < p < 1 else 1e6
    w_meas = math.log((1 - p_meas) / p_meas) if 0 < p_meas < 1 else 1e6
    m = pymatching.Matching()
    det = lambda t, y: t * Ly + (y % Ly)
    for t in range(Lx - 1):
        for y in range(Ly):
            # a flip of row y changes the parities (y-1, y) and (y, y+1)
            m.add_edge(det(t, y - 1), det(t, y), fault_ids={0} if y == 0 else set(), weight=w_data,
                       merge_strategy="independent")
    for t in range(1, Lx - 1):
        for y in range(Ly):
            m.add_edge(det(t - 1, y), det(t, y), weight=w_meas, merge_strategy="independent")
    return m


def logical_flips(noise: RepetitionNoise) -> np.ndarray:
    return noise.data_flips[:, :, 0].sum(axis=1) % 2


@dataclass(frozen=True)
class VirtualFailure:
    failure_rate: float
    stderr: float
    n_samples: int
    failures: np.ndarray


def decode_repetition(noise: RepetitionNoise, p: float, p_meas: float | None = None) -> np.ndarray:
    n, rounds, Ly = noise.meas_errors.shape
    events = syndrome_history(noise).reshape(n, -1)
    predicted = spacetime_matching(rounds, Ly, p, p_meas).decode_batch(events)[:, 0]
    return (predicted ^ logical_flips(noise)).astype(bool)


def simulate_virtual_2d(Lx: int, Ly: int, p: float, n_samples: int, seed: int = 0,
                        p_meas: float | None = None, noise: RepetitionNoise | None = None) -> VirtualFailure:
    """Logical failure rate of the foliated repetition code under phenomenological noise."""
    if Lx < 3 or Ly < 3:
        raise ValueError("need at least 3 rounds and 3 rows")
    if noise is None:
        noise = sample_repetition_noise(Lx, Ly, p, n_samples, np.random.default_rng(seed), p_meas)
    fails = decode_repetition(noise, p, p_meas)
    rate = float(fails.mean())
    stderr = math.sqrt(max(rate * (1 - rate), 1.0 / len(fails)) / len(fails))
    return VirtualFailure(rate, stderr, len(fails), fails)


def foliated_from_sample(dl: DecodingLattice, sample: EdgeSample) -> RepetitionNoise:
    return noise_from_edge_errors(dl, sample.errors)


def virtual_benchmark_point(L: int, p: float, n_samples: int, seed: int) -> BenchmarkRow:
    """Foliated failure rate on an L x L cylinder in the decoder benchmark row format."""
    res = simulate_virtual_2d(L, L, p, n_samples, seed)
    return BenchmarkRow(L, p, n_samples, res.failure_rate, res.stderr, None, seed)
