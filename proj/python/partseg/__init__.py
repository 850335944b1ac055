"""Border-core instance segmentation of particle volumes.

Arrays are C-ordered with axes (z, y, x).
"""

from ._core import (
    StoreError,
    ValidationError,
    decode,
    encode,
    estimate_voxel_particle_size,
    evaluate,
    generate_phantom,
    global_stats,
    infer,
    measure,
    particle_size_mm,
    read_store,
    size_normalize,
    small_core_filter,
    split_particle,
    threshwater,
    write_store,
    zscore_normalize,
)

__all__ = [
    "StoreError",
    "ValidationError",
    "decode",
    "encode",
    "estimate_voxel_particle_size",
    "evaluate",
    "generate_phantom",
    "global_stats",
    "infer",
    "measure",
    "particle_size_mm",
    "read_store",
    "size_normalize",
    "small_core_filter",
    "split_particle",
    "threshwater",
    "write_store",
    "zscore_normalize",
]
