"""Hilbert curve tests: bijectivity, adjacency, scalar/vector agreement."""

import numpy as np

from cellsearch.s2geom import hilbert


def test_bijective_exhaustive_small_levels():
    # Every position maps to a distinct (i, j) and back, for all four
    # starting orientations, exhaustively through level 6.
    for level in range(0, 7):
        n = 4**level
        side = 1 << level
        for orientation in range(4):
            seen = set()
            for pos in range(n):
                i, j = hilbert.position_to_xy(level, pos, orientation)
                assert 0 <= i < side and 0 <= j < side
                seen.add((i, j))
                assert hilbert.xy_to_position(level, i, j, orientation) == pos
            assert len(seen) == n


def test_adjacency_exhaustive():
    # Consecutive curve positions are edge neighbors (|di| + |dj| == 1).
    for level in range(1, 7):
        for orientation in range(4):
            pos = np.arange(4**level)
            i, j = hilbert.position_to_xy_vec(level, pos, orientation)
            step = np.abs(np.diff(i)) + np.abs(np.diff(j))
            assert np.all(step == 1), f"level {level} orientation {orientation}"


def test_vec_matches_scalar():
    rng = np.random.default_rng(3)
    for level in (1, 4, 9, 15):
        n = 500
        i = rng.integers(0, 1 << level, n)
        j = rng.integers(0, 1 << level, n)
        orient = rng.integers(0, 4, n)
        pos = hilbert.xy_to_position_vec(level, i, j, orient)
        for k in range(n):
            assert pos[k] == hilbert.xy_to_position(
                level, int(i[k]), int(j[k]), int(orient[k])
            )
        i2, j2 = hilbert.position_to_xy_vec(level, pos, orient)
        np.testing.assert_array_equal(i2, i)
        np.testing.assert_array_equal(j2, j)


def test_level_zero_is_identity():
    assert hilbert.xy_to_position(0, 0, 0, 0) == 0
    assert hilbert.position_to_xy(0, 0, 3) == (0, 0)


def test_tables_are_inverse():
    for orientation in range(4):
        for pos in range(4):
            ij = hilbert.POS_TO_IJ[orientation][pos]
            assert hilbert.IJ_TO_POS[orientation][ij] == pos
