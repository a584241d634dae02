"""Hilbert curve order on the per-face cell grid.

Each face's 2**level x 2**level grid of cells is linearized along a Hilbert
curve so that consecutive positions are edge-adjacent cells. The curve is
built by quadrant recursion: at every level the current orientation selects
how the four quadrants are visited and how the orientation mutates inside
each of them.
"""

from __future__ import annotations

import numpy as np

SWAP_MASK = 1
INVERT_MASK = 2

# POS_TO_IJ[orientation][position] = ij, with ij = (i << 1) | j on the
# 2x2 subgrid. Orientation is a 2-bit state (swap, invert).
POS_TO_IJ = (
    (0, 1, 3, 2),
    (0, 2, 3, 1),
    (3, 2, 0, 1),
    (3, 1, 0, 2),
)
# Orientation adjustment picked up when descending into each position.
POS_TO_ORIENTATION = (SWAP_MASK, 0, 0, INVERT_MASK | SWAP_MASK)

IJ_TO_POS = tuple(
    tuple(row.index(ij) for ij in range(4)) for row in POS_TO_IJ
)

_POS_TO_IJ_ARR = np.array(POS_TO_IJ, dtype=np.int64)
_IJ_TO_POS_ARR = np.array(IJ_TO_POS, dtype=np.int64)
_POS_TO_ORIENTATION_ARR = np.array(POS_TO_ORIENTATION, dtype=np.int64)


def xy_to_position(level: int, i: int, j: int, orientation: int = 0) -> int:
    """Hilbert position in [0, 4**level) of grid cell (i, j)."""
    pos = 0
    for k in range(level - 1, -1, -1):
        ij = (((i >> k) & 1) << 1) | ((j >> k) & 1)
        quadrant = IJ_TO_POS[orientation][ij]
        pos = (pos << 2) | quadrant
        orientation ^= POS_TO_ORIENTATION[quadrant]
    return pos


def position_to_xy(level: int, pos: int, orientation: int = 0) -> tuple[int, int]:
    """Grid cell (i, j) at the given Hilbert position."""
    i = j = 0
    for k in range(level - 1, -1, -1):
        quadrant = (pos >> (2 * k)) & 3
        ij = POS_TO_IJ[orientation][quadrant]
        i = (i << 1) | (ij >> 1)
        j = (j << 1) | (ij & 1)
        orientation ^= POS_TO_ORIENTATION[quadrant]
    return i, j


def xy_to_position_vec(level: int, i, j, orientation) -> np.ndarray:
    """Vectorized xy_to_position over int64 arrays."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    orient = np.broadcast_to(np.asarray(orientation, dtype=np.int64), i.shape).copy()
    pos = np.zeros(i.shape, dtype=np.int64)
    for k in range(level - 1, -1, -1):
        ij = (((i >> k) & 1) << 1) | ((j >> k) & 1)
        quadrant = _IJ_TO_POS_ARR[orient, ij]
        pos = (pos << 2) | quadrant
        orient ^= _POS_TO_ORIENTATION_ARR[quadrant]
    return pos


def position_to_xy_vec(level: int, pos, orientation) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized position_to_xy over int64 arrays."""
    pos = np.asarray(pos, dtype=np.int64)
    orient = np.broadcast_to(np.asarray(orientation, dtype=np.int64), pos.shape).copy()
    i = np.zeros(pos.shape, dtype=np.int64)
    j = np.zeros(pos.shape, dtype=np.int64)
    for k in range(level - 1, -1, -1):
        quadrant = (pos >> (2 * k)) & 3
        ij = _POS_TO_IJ_ARR[orient, quadrant]
        i = (i << 1) | (ij >> 1)
        j = (j << 1) | (ij & 1)
        orient ^= _POS_TO_ORIENTATION_ARR[quadrant]
    return i, j
