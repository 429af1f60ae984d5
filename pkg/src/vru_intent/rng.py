"""Counter-based splitmix64 stream used by the tree-building kernels.

Both kernel backends (compiled and numpy) consume the identical stream, so
forests come out bit-identical regardless of backend.  Draw i of a stream
with seed s is mix64(s + (i+1)*GOLDEN); being counter-based makes the
sequence random-accessible and trivially vectorizable.
"""

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def draw(seed: int, index: int) -> int:
    """The index-th 64-bit output of the stream with the given seed."""
    return mix64(seed + (index + 1) * GOLDEN)


def draw_block(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs start..start+count-1 as a uint64 array (vectorized mix64)."""
    counters = (
        np.uint64(seed & _MASK)
        + (np.arange(start, start + count, dtype=np.uint64) + np.uint64(1))
        * np.uint64(GOLDEN)
    )
    z = (counters ^ (counters >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def tree_stream_seed(forest_seed: int, tree_index: int) -> int:
    """Per-tree stream seed derived only from (forest seed, tree index)."""
    return draw(forest_seed, tree_index)
