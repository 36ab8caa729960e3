"""Block-partitioned vectors, the block-maximum norm, and box constraint sets.

A decision vector is split into per-agent blocks; agent ``i`` owns block
``i``. All value types here are immutable and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PartitionMismatch

__all__ = [
    "Partition",
    "PartitionedVector",
    "BoxSet",
    "block_max_norm",
    "project_box",
    "block_slice",
]


@dataclass(frozen=True)
class Partition:
    """Dimensions of the blocks a decision vector is split into.

    Parameters
    ----------
    block_dims : sequence of int
        Per-block dimensions, one entry per agent; every entry >= 1.
    """

    block_dims: tuple

    def __init__(self, block_dims):
        dims = tuple(int(d) for d in block_dims)
        if len(dims) < 1:
            raise ValueError("partition needs at least one block")
        if any(d < 1 for d in dims):
            raise ValueError(f"block dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "block_dims", dims)

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)

    @property
    def offsets(self) -> tuple:
        """Start index of each block, plus the total dimension as sentinel."""
        out = [0]
        for d in self.block_dims:
            out.append(out[-1] + d)
        return tuple(out)

    def slices(self) -> list:
        """Per-block slices into a flat vector of length ``total_dim``."""
        off = self.offsets
        return [slice(off[i], off[i + 1]) for i in range(self.n_blocks)]

    def block_slice(self, i: int) -> slice:
        if not 0 <= i < self.n_blocks:
            raise IndexError(f"block index {i} out of range [0, {self.n_blocks})")
        off = self.offsets
        return slice(off[i], off[i + 1])


def _frozen_array(values, n=None) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if n is not None and arr.size != n:
        raise ValueError(f"expected length {n}, got {arr.size}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PartitionedVector:
    """A real vector together with its block partition."""

    data: np.ndarray
    partition: Partition

    def __init__(self, data, partition: Partition):
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "data", _frozen_array(data, partition.total_dim))

    def block(self, i: int) -> np.ndarray:
        """The ``i``-th block (0-based)."""
        return self.data[self.partition.block_slice(i)]

    def blocks(self):
        return [self.data[s] for s in self.partition.slices()]

    def __len__(self) -> int:
        return self.data.size


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Axis-aligned box ``[lower, upper]`` decomposed along a partition.

    Bounds must be finite (the set is compact) and satisfy
    ``lower <= upper`` elementwise (the set is non-empty).
    """

    lower: np.ndarray
    upper: np.ndarray
    partition: Partition

    def __init__(self, lower, upper, partition: Partition):
        lo = _frozen_array(lower, partition.total_dim)
        hi = _frozen_array(upper, partition.total_dim)
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box is empty: lower > upper somewhere")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "partition", partition)

    @classmethod
    def symmetric(cls, half_width: float, partition: Partition) -> "BoxSet":
        n = partition.total_dim
        w = float(half_width)
        return cls(np.full(n, -w), np.full(n, w), partition)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clip(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection of a raw array onto the box."""
        return np.clip(x, self.lower, self.upper)

    def clip_block(self, x_i: np.ndarray, i: int) -> np.ndarray:
        s = self.partition.block_slice(i)
        return np.clip(x_i, self.lower[s], self.upper[s])

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def block_max_norm(v) -> float:
    """Maximum over blocks of the Euclidean norm of the block.

    Accepts a :class:`PartitionedVector`, or a raw array via
    ``block_max_norm((data, partition))``.
    """
    if isinstance(v, PartitionedVector):
        data, partition = v.data, v.partition
    else:
        data, partition = v
        data = np.asarray(data, dtype=float)
    return max(float(np.linalg.norm(data[s])) for s in partition.slices())


def project_box(v: PartitionedVector, box: BoxSet) -> PartitionedVector:
    """Project onto the box; elementwise clamp to ``[lower, upper]``."""
    if v.partition != box.partition:
        raise PartitionMismatch(
            f"vector partition {v.partition.block_dims} != "
            f"box partition {box.partition.block_dims}"
        )
    return PartitionedVector(box.clip(v.data), v.partition)


def block_slice(v: PartitionedVector, i: int) -> np.ndarray:
    """Return block ``i`` of ``v`` (0-based index)."""
    return v.block(i)
