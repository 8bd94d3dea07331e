#!/usr/bin/env python3
"""The dual-representation spatial block, branch by branch.

Walks feature maps through pointwise neighborhood learning, point-to-voxel
mean propagation, the submanifold bottleneck stack, and learnable
voxel-to-point interpolation.
"""

import numpy as np

from pointcast import ModelConfig, autodiff as ad, gen_synthetic, index_scene, normalize
from pointcast.spatial import (
    ftp_point_to_voxel,
    init_spatial,
    interp_voxel_to_point,
    pointwise_learning,
    sparse_bottleneck,
    spatial_block,
)

cfg = ModelConfig(
    n_stages=1, radii=(0.4, 0.8, 1.6), grid_size=0.4,
    embed_width=8, radius_width=8, pointwise_width=16,
    voxel_width=16, spatial_width=32, interval_width=8,
    temporal_width=16, head_width=16,
)
scene = normalize(gen_synthetic(1, seed=3, profile="lane-change")[0])
ps = index_scene(scene, cfg.grid_size)
feats = ad.constant(np.random.default_rng(1).normal(size=(len(ps), cfg.embed_width)))

params = init_spatial({}, "demo", cfg.embed_width, cfg, np.random.default_rng(2))

p = pointwise_learning(ps, feats, params)
print(f"pointwise branch: {feats.shape} -> {p.shape} (all {len(ps)} points kept)")

grid = ftp_point_to_voxel(ps, feats)
print(f"voxel branch: {len(ps)} points -> {len(grid.coords)} occupied cells")

deep = sparse_bottleneck(grid, params)
same = set(map(tuple, deep.coords.tolist())) == set(map(tuple, grid.coords.tolist()))
print(f"after bottleneck stack: occupancy preserved = {same}")

v = interp_voxel_to_point(deep, ps, params)
print(f"interpolated back to points: {v.shape}")

fused = spatial_block(ps, feats, params)
print(f"fused block output: {fused.shape}")

# permutation equivariance: shuffling points shuffles rows, nothing else
perm = np.random.default_rng(3).permutation(len(ps))
from pointcast.indexing import IndexedPointSet

ps_perm = IndexedPointSet(
    points=ps.points[perm], instance=ps.instance[perm], time=ps.time[perm],
    voxels=ps.voxels[perm], kind=ps.kind[perm], grid_size=ps.grid_size,
    instance_ids=ps.instance_ids, target_instance=ps.target_instance,
)
fused_perm = spatial_block(ps_perm, ad.constant(feats.data[perm]), params)
print("equivariance residual:", np.abs(fused_perm.data - fused.data[perm]).max())
