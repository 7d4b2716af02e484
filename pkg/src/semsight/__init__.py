"""Bird's-eye-view semantic exploration suite.

Deterministic floorplan generation, frontier-exploration simulation,
mask-constrained training-sample construction, region-restricted
evaluation metrics, and a closed-loop navigation benchmark, all over a
shared 10-class semantic raster model.
"""

__version__ = "0.1.0"

from semsight.grids import (
    SemClass,
    NUM_CLASSES,
    Pose,
    onehot_encode,
    apply_unexplored_mask,
    read_raster,
    write_raster,
)

__all__ = [
    "SemClass",
    "NUM_CLASSES",
    "Pose",
    "onehot_encode",
    "apply_unexplored_mask",
    "read_raster",
    "write_raster",
    "__version__",
]
