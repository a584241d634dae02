"""cellsearch: geographic retrieval on a hierarchical sphere grid.

The package pairs an extreme-multiclass classifier over grid cells with a
bounding-box regression baseline, plus the synthetic marketplace, feature
pipeline, inverted index, and evaluation tooling needed to compare the two
retrieval methods end to end.
"""

__version__ = "0.1.0"
