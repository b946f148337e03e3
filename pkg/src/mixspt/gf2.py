"""Bit-packed linear algebra over GF(2).

Rows are packed into ``uint64`` words, least significant bit first, so a
matrix with ``c`` columns occupies ``ceil(c / 64)`` words per row.
"""

from __future__ import annotations

import numpy as np

WORD = 64


def pack(bits: np.ndarray) -> np.ndarray:
    """Pack a 2D 0/1 array of shape (rows, cols) into (rows, words) uint64."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise ValueError("expected a 2D bit matrix")
    rows, cols = bits.shape
    n_words = max(1, -(-cols // WORD))
    padded = np.zeros((rows, n_words * WORD), dtype=np.uint8)
    padded[:, :cols] = bits
    as_bytes = np.packbits(padded, axis=1, bitorder="little")
    return as_bytes.view("<u8").reshape(rows, n_words).astype(np.uint64, copy=True)


def unpack(words: np.ndarray, cols: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :cols]


def _bit(words: np.ndarray, col: int) -> np.ndarray:
    return (words[:, col // WORD] >> np.uint64(col % WORD)) & np.uint64(1)


def row_reduce(words: np.ndarray, cols: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form; returns (reduced rows, pivot columns)."""
    m = np.array(words, dtype=np.uint64, copy=True)
    pivots: list[int] = []
    r = 0
    for col in range(cols):
        if r == m.shape[0]:
            break
        hits = np.flatnonzero(_bit(m[r:], col)) + r
        if hits.size == 0:
            continue
        piv = hits[0]
        if piv != r:
            m[[r, piv]] = m[[piv, r]]
        others = np.flatnonzero(_bit(m, col))
        others = others[others != r]
        m[others] ^= m[r]
        pivots.append(col)
        r += 1
    return m[:r], pivots


def rank(bits: np.ndarray) -> int:
    bits = np.asarray(bits)
    if bits.size == 0:
        return 0
    return len(row_reduce(pack(bits), bits.shape[1])[1])


def nullspace(bits: np.ndarray) -> np.ndarray:
    """Basis (as rows) of {v : bits @ v = 0 mod 2}."""
    bits = np.asarray(bits, dtype=np.uint8)
    cols = bits.shape[1]
    reduced, pivots = row_reduce(pack(bits), cols)
    dense = unpack(reduced, cols)
    free = [c for c in range(cols) if c not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for row, pc in enumerate(pivots):
            if dense[row, f]:
                basis[k, pc] = 1
    return basis


def solve(bits: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """One solution x of bits @ x = rhs (mod 2), or None if inconsistent."""
    bits = np.asarray(bits, dtype=np.uint8)
    rhs = np.asarray(rhs, dtype=np.uint8).reshape(-1, 1)
    cols = bits.shape[1]
    aug = np.concatenate([bits, rhs], axis=1)
    reduced, pivots = row_reduce(pack(aug), cols + 1)
    if cols in pivots:
        return None
    dense = unpack(reduced, cols + 1)
    x = np.zeros(cols, dtype=np.uint8)
    for row, pc in enumerate(pivots):
        x[pc] = dense[row, cols]
    return x
