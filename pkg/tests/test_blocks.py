import numpy as np
import pytest

from asynctrack.blocks import (
    BoxSet,
    Partition,
    PartitionedVector,
    block_max_norm,
    block_slice,
    project_box,
)
from asynctrack.errors import PartitionMismatch


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition([])
    with pytest.raises(ValueError):
        Partition([2, 0])
    p = Partition([1, 2, 3])
    assert p.total_dim == 6
    assert p.offsets == (0, 1, 3, 6)


def test_block_max_norm_zero_vector():
    v = PartitionedVector(np.zeros(3), Partition([1, 2]))
    assert block_max_norm(v) == 0.0


def test_block_max_norm_direct_formula():
    v = PartitionedVector([3.0, 4.0, 0.0], Partition([1, 2]))
    assert block_max_norm(v) == pytest.approx(4.0)


def test_block_max_norm_below_euclidean():
    rng = np.random.default_rng(7)
    for _ in range(100):
        dims = rng.integers(1, 4, size=rng.integers(1, 5))
        p = Partition(dims.tolist())
        v = PartitionedVector(rng.standard_normal(p.total_dim), p)
        assert block_max_norm(v) <= np.linalg.norm(v.data) + 1e-12


def test_block_max_norm_is_a_norm():
    rng = np.random.default_rng(11)
    p = Partition([2, 3, 1])
    for _ in range(100):
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        a = rng.standard_normal()
        nx = block_max_norm(PartitionedVector(x, p))
        ny = block_max_norm(PartitionedVector(y, p))
        nxy = block_max_norm(PartitionedVector(x + y, p))
        nax = block_max_norm(PartitionedVector(a * x, p))
        assert nxy <= nx + ny + 1e-12
        assert nax == pytest.approx(abs(a) * nx)
        assert nx > 0 or np.allclose(x, 0)


def test_project_box_identity_inside():
    p = Partition([1, 1])
    box = BoxSet([-1, -1], [1, 1], p)
    v = PartitionedVector([0.5, -0.25], p)
    out = project_box(v, box)
    assert np.array_equal(out.data, v.data)


def test_project_box_clamps():
    p = Partition([1])
    box = BoxSet([0.0], [1.0], p)
    out = project_box(PartitionedVector([5.0], p), box)
    assert out.data[0] == 1.0


def test_project_box_partition_mismatch():
    box = BoxSet([-1, -1], [1, 1], Partition([2]))
    v = PartitionedVector([0.0, 0.0], Partition([1, 1]))
    with pytest.raises(PartitionMismatch):
        project_box(v, box)


def test_projection_nonexpansive_and_idempotent():
    rng = np.random.default_rng(3)
    p = Partition([2, 2])
    box = BoxSet(-np.ones(4), np.ones(4), p)
    for _ in range(100):
        x = 3 * rng.standard_normal(4)
        y = 3 * rng.standard_normal(4)
        px = project_box(PartitionedVector(x, p), box)
        py = project_box(PartitionedVector(y, p), box)
        assert np.linalg.norm(px.data - py.data) <= np.linalg.norm(x - y) + 1e-12
        assert block_max_norm(PartitionedVector(px.data - py.data, p)) <= \
            block_max_norm(PartitionedVector(x - y, p)) + 1e-12
        again = project_box(px, box)
        assert np.array_equal(again.data, px.data)


def test_block_slice_examples():
    p = Partition([1, 2])
    v = PartitionedVector([3.0, 4.0, 0.0], p)
    assert np.array_equal(block_slice(v, 1), [4.0, 0.0])
    assert np.array_equal(block_slice(v, 0), [3.0])
    with pytest.raises(IndexError):
        block_slice(v, 2)


def test_block_slices_reassemble():
    rng = np.random.default_rng(5)
    p = Partition([3, 1, 2])
    v = PartitionedVector(rng.standard_normal(6), p)
    rebuilt = np.concatenate([v.block(i) for i in range(p.n_blocks)])
    assert np.array_equal(rebuilt, v.data)


def test_vectors_are_immutable():
    v = PartitionedVector([1.0, 2.0], Partition([2]))
    with pytest.raises(ValueError):
        v.data[0] = 9.0


def test_box_validation():
    p = Partition([2])
    with pytest.raises(ValueError):
        BoxSet([1.0, 0.0], [0.0, 1.0], p)  # empty in dimension 0
    with pytest.raises(ValueError):
        BoxSet([-np.inf, 0.0], [1.0, 1.0], p)  # not compact
    with pytest.raises(ValueError):
        BoxSet([0.0], [1.0], p)  # wrong length
