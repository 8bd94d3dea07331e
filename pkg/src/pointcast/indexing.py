"""Space mappings: Cartesian-to-voxel hashing and instance-time indexing.

Both index systems reduce to 64-bit hash keys (two signed 32-bit halves),
and all grouping operations materialize as a :class:`GroupTable` that
partitions the point set with dense, first-appearance-ordered group ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenes import NormalizedScene

KIND_TARGET, KIND_OTHER, KIND_MAP = 0, 1, 2

_I32_MAX = 2**31


def pack_pair(a, b) -> np.ndarray:
    """Pack two signed 32-bit integer arrays into collision-free int64 keys."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if np.any(np.abs(a) >= _I32_MAX) or np.any(np.abs(b) >= _I32_MAX):
        raise ValueError("pair components exceed the signed 32-bit key range")
    return (a << 32) | (b & 0xFFFFFFFF)


def voxelize(points, grid_size: float) -> np.ndarray:
    """Map (N, 2) continuous coordinates to integer voxel indices, floor(p/s).

    The floor is mathematical (toward -inf), so negative coordinates land in
    negative cells.
    """
    if grid_size <= 0:
        raise ValueError("grid_size must be positive")
    points = np.asarray(points, dtype=np.float64)
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite point coordinate")
    return np.floor(points / grid_size).astype(np.int64)


@dataclass
class IndexedPointSet:
    """Flat point array with per-point instance-time and voxel indices."""

    points: np.ndarray    # (N, 2) float64, meters
    instance: np.ndarray  # (N,) int64, dense instance id
    time: np.ndarray      # (N,) int64, history step; 0 for map points
    voxels: np.ndarray    # (N, 2) int64
    kind: np.ndarray      # (N,) int64, KIND_* codes
    grid_size: float
    instance_ids: list[str]  # dense id -> original track/element id
    target_instance: int

    def __len__(self):
        return len(self.points)


@dataclass
class GroupTable:
    """A partition of [0, N) into dense groups, first-appearance ordered."""

    n_groups: int
    group_of: np.ndarray       # (N,) int64
    members: list[np.ndarray]  # group id -> ascending point indices

    def counts(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.n_groups).astype(np.int64)


def group_by_keys(keys) -> GroupTable:
    """Build a GroupTable from arbitrary int64 keys.

    Group ids are assigned in order of first appearance over the point index,
    so the table is deterministic and permutation-covariant.
    """
    keys = np.asarray(keys, dtype=np.int64)
    n = len(keys)
    uniq, inv = np.unique(keys, return_inverse=True)
    first = np.full(len(uniq), n, dtype=np.int64)
    np.minimum.at(first, inv, np.arange(n, dtype=np.int64))
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq), dtype=np.int64)
    group_of = rank[inv]
    order = np.argsort(group_of, kind="stable")
    bounds = np.cumsum(np.bincount(group_of, minlength=len(uniq)))[:-1]
    members = np.split(order, bounds)
    return GroupTable(n_groups=len(uniq), group_of=group_of, members=members)


def build_groups_by_voxel(ps: IndexedPointSet) -> GroupTable:
    """Points sharing a voxel index share a group."""
    return group_by_keys(pack_pair(ps.voxels[:, 0], ps.voxels[:, 1]))


def regroup_by_interval(ps: IndexedPointSet, interval: int) -> GroupTable:
    """Group by (instance, floor(time / interval)).

    Map points carry time 0, so each map instance collapses into one group
    regardless of the interval.
    """
    if interval < 1:
        raise ValueError("interval must be >= 1")
    return group_by_keys(pack_pair(ps.instance, ps.time // interval))


def build_groups_by_instance(ps: IndexedPointSet) -> GroupTable:
    """One group per distinct instance id."""
    return group_by_keys(ps.instance)


def index_scene(scene: NormalizedScene, grid_size: float) -> IndexedPointSet:
    """Flatten a normalized scene into an IndexedPointSet.

    Agent instances come first (in scene order) followed by map instances;
    agent points carry their history step as the time index, map points time 0.
    """
    pts, ins, tim, kind = [], [], [], []
    instance_ids = []
    target_instance = -1
    for a in scene.agents:
        dense = len(instance_ids)
        instance_ids.append(a.track_id)
        if a.track_id == scene.target_id:
            target_instance = dense
        pts.append(a.xy)
        ins.append(np.full(len(a.xy), dense, dtype=np.int64))
        tim.append(a.steps.astype(np.int64))
        k = KIND_TARGET if a.track_id == scene.target_id else KIND_OTHER
        kind.append(np.full(len(a.xy), k, dtype=np.int64))
    for m in scene.map_elements:
        dense = len(instance_ids)
        instance_ids.append(m.element_id)
        pts.append(m.xy)
        ins.append(np.full(len(m.xy), dense, dtype=np.int64))
        tim.append(np.zeros(len(m.xy), dtype=np.int64))
        kind.append(np.full(len(m.xy), KIND_MAP, dtype=np.int64))
    if target_instance < 0:
        raise ValueError(f"target agent {scene.target_id!r} not present")

    points = np.concatenate(pts, axis=0)
    instance = np.concatenate(ins)
    time = np.concatenate(tim)
    kinds = np.concatenate(kind)

    agent_mask = kinds != KIND_MAP
    it_keys = pack_pair(instance[agent_mask], time[agent_mask])
    if len(np.unique(it_keys)) != int(agent_mask.sum()):
        raise ValueError("duplicate (instance, time) pair among agent points")

    return IndexedPointSet(
        points=points,
        instance=instance,
        time=time,
        voxels=voxelize(points, grid_size),
        kind=kinds,
        grid_size=grid_size,
        instance_ids=instance_ids,
        target_instance=target_instance,
    )
