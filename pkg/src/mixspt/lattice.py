"""Cluster-state lattices, symmetries, logical operators and ancilla coupling.

1D chains have sites ``0..2N``; even sites form sublattice A, odd sites B.

2D cylinders (Lieb lattice) are indexed column by column.  Column ``x``
lists its vertices ``("v", x, y)``, then its vertical edges ``("ev", x, y)``
joining ``(x, y)`` and ``(x, y+1 mod Ly)``, then the horizontal edges
``("eh", x, y)`` joining ``(x, y)`` and ``(x+1, y)`` (absent for the last
column).  Rows wrap around; columns are open.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .pauli import PauliOperator, StabilizerState


@dataclass(frozen=True)
class Chain1D:
    N: int

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("chain needs N >= 1")

    @property
    def n_sites(self) -> int:
        return 2 * self.N + 1

    @property
    def left(self) -> int:
        return 0

    @property
    def right(self) -> int:
        return 2 * self.N

    def sublattice(self, site: int) -> str:
        return "A" if site % 2 == 0 else "B"

    def sites(self, sublattice: str, bulk_only: bool = False) -> list[int]:
        lo, hi = (1, self.n_sites - 1) if bulk_only else (0, self.n_sites)
        return [s for s in range(lo, hi) if self.sublattice(s) == sublattice]

    @property
    def cz_edges(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(self.n_sites - 1)]

    def symmetry(self, n_total: int | None = None) -> dict[str, PauliOperator]:
        n = n_total or self.n_sites
        return {
            "G_even": PauliOperator.on(n, {s: "X" for s in self.sites("A")}),
            "G_odd": PauliOperator.on(n, {s: "X" for s in self.sites("B")}),
        }

    def logicals(self, n_total: int | None = None) -> dict[str, PauliOperator]:
        n = n_total or self.n_sites
        return {"X_L": PauliOperator.on(n, {0: "X", 1: "Z"}), "Z_L": PauliOperator.on(n, {0: "Z"})}

    def to_json(self) -> str:
        return json.dumps({"type": "chain1d", "N": self.N, "n_sites": self.n_sites,
                           "left": self.left, "right": self.right})


@dataclass(frozen=True)
class LiebCylinder2D:
    Lx: int
    Ly: int

    def __post_init__(self) -> None:
        if self.Lx < 3 or self.Ly < 3:
            raise ValueError("cylinder needs Lx >= 3 and Ly >= 3")

    @cached_property
    def labels(self) -> list[tuple[str, int, int]]:
        out = []
        for x in range(self.Lx):
            out += [("v", x, y) for y in range(self.Ly)]
            out += [("ev", x, y) for y in range(self.Ly)]
            if x < self.Lx - 1:
                out += [("eh", x, y) for y in range(self.Ly)]
        return out

    @cached_property
    def index(self) -> dict[tuple[str, int, int], int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    @property
    def n_qubits(self) -> int:
        return len(self.labels)

    def vertex(self, x: int, y: int) -> int:
        return self.index[("v", x, y % self.Ly)]

    def vertical_edge(self, x: int, y: int) -> int:
        return self.index[("ev", x, y % self.Ly)]

    def horizontal_edge(self, x: int, y: int) -> int:
        return self.index[("eh", x, y % self.Ly)]

    def edge_ends(self, label: tuple[str, int, int]) -> tuple[int, int]:
        kind, x, y = label
        if kind == "ev":
            return self.vertex(x, y), self.vertex(x, y + 1)
        if kind == "eh":
            return self.vertex(x, y), self.vertex(x + 1, y)
        raise ValueError(f"{label} is not an edge")

    @cached_property
    def vertices(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab[0] == "v"]

    @cached_property
    def edges(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab[0] != "v"]

    @cached_property
    def cz_edges(self) -> list[tuple[int, int]]:
        out = []
        for e in self.edges:
            a, b = self.edge_ends(self.labels[e])
            out += [(a, e), (b, e)]
        return out

    def boundary_column(self, side: str) -> list[int]:
        x = 0 if side == "L" else self.Lx - 1
        return [self.vertex(x, y) for y in range(self.Ly)]

    def boundary_edges(self) -> list[int]:
        """Vertical edges lying on the two boundary columns."""
        return [self.vertical_edge(x, y) for x in (0, self.Lx - 1) for y in range(self.Ly)]

    def plaquette_edges(self, x: int, y: int) -> list[int]:
        """Edges around the face between columns x, x+1 and rows y, y+1."""
        return [self.horizontal_edge(x, y), self.horizontal_edge(x, y + 1),
                self.vertical_edge(x, y), self.vertical_edge(x + 1, y)]

    def row_path(self, y: int = 0) -> list[int]:
        """Horizontal edges of row ``y``: the string l joining the boundaries."""
        return [self.horizontal_edge(x, y) for x in range(self.Lx - 1)]

    def stabilizers(self, n_total: int | None = None) -> list[PauliOperator]:
        n = n_total or self.n_qubits
        incident: dict[int, list[int]] = {v: [] for v in self.vertices}
        gens = []
        for e in self.edges:
            a, b = self.edge_ends(self.labels[e])
            incident[a].append(e)
            incident[b].append(e)
            gens.append(PauliOperator.on(n, {e: "X", a: "Z", b: "Z"}))
        for v in self.vertices:
            gens.append(PauliOperator.on(n, {v: "X", **{e: "Z" for e in incident[v]}}))
        return gens

    def symmetry(self, n_total: int | None = None) -> dict[str, PauliOperator]:
        n = n_total or self.n_qubits
        out = {"G_V": PauliOperator.on(n, {v: "X" for v in self.vertices})}
        for x in range(self.Lx - 1):
            for y in range(self.Ly):
                out[f"plaquette_{x}_{y}"] = PauliOperator.on(n, {e: "X" for e in self.plaquette_edges(x, y)})
        for x in range(self.Lx):
            out[f"ring_{x}"] = PauliOperator.on(n, {self.vertical_edge(x, y): "X" for y in range(self.Ly)})
        return out

    def logicals(self, side: str = "L", n_total: int | None = None) -> dict[str, PauliOperator]:
        """Repetition-code logical pair of a boundary column, dressed so it
        commutes with every cluster stabilizer."""
        n = n_total or self.n_qubits
        x = 0 if side == "L" else self.Lx - 1
        column = self.boundary_column(side)
        letters = {v: "X" for v in column}
        hx = x if side == "L" else x - 1
        for y in range(self.Ly):
            letters[self.horizontal_edge(hx, y)] = "Z"
        return {"X_bar": PauliOperator.on(n, letters), "Z_bar": PauliOperator.on(n, {column[0]: "Z"}),
                "X_bare": PauliOperator.on(n, {v: "X" for v in column})}

    def to_json(self) -> str:
        return json.dumps({"type": "lieb_cylinder", "Lx": self.Lx, "Ly": self.Ly,
                           "labels": [list(lab) for lab in self.labels]})


Lattice = Chain1D | LiebCylinder2D


def lattice_from_json(text: str) -> Lattice:
    data = json.loads(text)
    if data["type"] == "chain1d":
        return Chain1D(int(data["N"]))
    if data["type"] == "lieb_cylinder":
        return LiebCylinder2D(int(data["Lx"]), int(data["Ly"]))
    raise ValueError(f"unknown lattice type {data['type']!r}")


def _apply_cz_layer(state: StabilizerState, edges) -> StabilizerState:
    for a, b in edges:
        state = state.cz(a, b)
    return state


def build_cluster_1d(N: int) -> StabilizerState:
    chain = Chain1D(N)
    return _apply_cz_layer(StabilizerState.plus(chain.n_sites), chain.cz_edges)


def build_cluster_2d(Lx: int, Ly: int) -> StabilizerState:
    lat = LiebCylinder2D(Lx, Ly)
    return _apply_cz_layer(StabilizerState.plus(lat.n_qubits), lat.cz_edges)


def entangle_ancilla(state: StabilizerState, lattice: Lattice, side: Literal["L", "R"] = "L",
                     code: Literal["bell", "repetition"] | None = None) -> StabilizerState:
    """Append one ancilla entangled with a boundary before the CZ layer.

    The CZ layer is undone, the ancilla is coupled to the boundary product
    state, and the layer is re-applied (CZ is its own inverse).  ``bell``
    pairs the ancilla with the single boundary site of a chain;
    ``repetition`` puts it in a GHZ state with a whole boundary column.
    """
    if code is None:
        code = "bell" if isinstance(lattice, Chain1D) else "repetition"
    if isinstance(lattice, Chain1D):
        if code != "bell":
            raise ValueError("chains only support the bell code")
        targets = [lattice.left if side == "L" else lattice.right]
    elif isinstance(lattice, LiebCylinder2D):
        if code != "repetition":
            raise ValueError("cylinders only support the repetition code")
        targets = lattice.boundary_column(side)
    else:
        raise TypeError("unknown lattice")
    if side not in ("L", "R"):
        raise ValueError("side must be L or R")
    layer = lattice.cz_edges
    state = _apply_cz_layer(state, layer)
    anc = state.n_qubits
    state = state.append_qubits(1, basis="X")
    for t in targets:
        state = state.cz(anc, t)
    if code == "bell":
        state = state.h(anc)
    else:
        for t in targets:
            state = state.h(t)
    state = _apply_cz_layer(state, layer)
    state.check()
    return state


def dense_cluster_vector(lattice: Lattice, initial: np.ndarray | None = None) -> np.ndarray:
    """Dense CZ-circuit construction, used as an oracle for the builders."""
    from . import dense

    n = lattice.n_sites if isinstance(lattice, Chain1D) else lattice.n_qubits
    return dense.cz_circuit(n, lattice.cz_edges, initial)
