"""
Sphere grid basics: cell ids, hierarchy, and curve locality
===========================================================

The grid divides the sphere into six cube faces, each recursively split
into four children per level. A 64-bit id packs the face, the position
along a space filling curve, and a trailing sentinel bit that marks the
level. This script walks the core operations one by one.
"""

import numpy as np

from cellsearch.s2geom import (
    CellId,
    all_cells_at_level,
    cell_centers_vec,
    cell_from_latlng,
    cells_from_latlng_vec,
    num_cells_at_level,
)
from cellsearch.s2geom.hilbert import position_to_xy_vec

# 1. Encode a point. Level 11 is the retrieval granularity used by the
# search models; higher levels nest inside lower ones.
lat, lng = 48.8584, 2.2945
for level in (0, 4, 7, 11, 16):
    cell = cell_from_latlng(lat, lng, level)
    print(f"level {level:2d}  token {cell.token():<16} face {cell.face()}")

# 2. Hierarchy. A cell id is a plain integer underneath, and a child id
# always sits inside its parent's id range, so containment checks are
# two integer compares.
leaf = cell_from_latlng(lat, lng, 16)
parent = leaf.parent(11)
print("\nparent at level 11 contains the level 16 cell:", parent.contains(leaf))
print("children of the level 11 cell:", [c.token() for c in parent.children()])

# 3. Round trip. The center of a cell re-encodes to the same cell at the
# same level, exactly.
raws = all_cells_at_level(5)
clat, clng = cell_centers_vec(raws, 5)
back = cells_from_latlng_vec(clat, clng, 5)
print("\ncenter round trip exact at level 5:", bool(np.array_equal(raws, back)))

# 4. Counts. Each level multiplies the cell count by four across six faces.
for level in range(6):
    print(f"cells at level {level}: {num_cells_at_level(level)}")

# 5. Curve locality. Consecutive positions along the space filling curve
# are always edge neighbors in (i, j), which is what makes contiguous id
# ranges spatially compact.
level = 6
n = 4**level
i, j = position_to_xy_vec(level, np.arange(n), 0)
steps = np.abs(np.diff(i)) + np.abs(np.diff(j))
print(f"\nlevel {level} curve: {n} positions, all steps unit length:",
      bool(np.all(steps == 1)))

# 6. Tokens survive a text round trip, handy for vocab files and reports.
print("token round trip:", CellId.from_token(parent.token()) == parent)
