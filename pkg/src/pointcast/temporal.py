"""Dynamic temporal learning: multi-interval feature propagation and instance pooling.

Variable-length agent histories are handled purely through instance-time
grouping; there is no padding anywhere, and nothing ever mixes features
across instances.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .indexing import IndexedPointSet, build_groups_by_instance, regroup_by_interval


@dataclass
class TemporalParams:
    intervals: tuple
    interval_mlps: list  # one MLP per interval
    pool_mlp: list       # pre-pooling transform
    pool_proj: list      # projection after concat with the pooled feature
    out_proj: list       # block output projection


def init_temporal(reg, name, c_in, cfg, rng) -> TemporalParams:
    interval_mlps = []
    c = c_in
    for i in range(len(cfg.intervals)):
        interval_mlps.append(
            nn.init_mlp(reg, f"{name}/mil/i{i}", [c, cfg.interval_width], rng,
                        final_norm=True, final_act=True)
        )
        c = 2 * cfg.interval_width  # sliced group feature concat F_t
    pool_mlp = nn.init_mlp(reg, f"{name}/pool", [c, cfg.temporal_width], rng,
                           final_norm=True, final_act=True)
    pool_proj = nn.init_mlp(reg, f"{name}/proj", [c + cfg.temporal_width, cfg.temporal_width],
                            rng, final_norm=True, final_act=True)
    out_proj = nn.init_mlp(reg, f"{name}/out", [cfg.temporal_width, cfg.temporal_width],
                           rng, final_norm=True, final_act=True)
    return TemporalParams(tuple(cfg.intervals), interval_mlps, pool_mlp, pool_proj, out_proj)


def multi_interval(ps: IndexedPointSet, feats: Tensor, intervals, interval_mlps) -> Tensor:
    """Progressive group-transform-pool-slice-concat over the interval ladder.

    For each interval t: points regroup by (instance, floor(time / t)); the
    per-point features pass through that interval's MLP; group means propagate
    back to points by slicing, and concatenate with the transformed features
    as input to the next interval.
    """
    if not intervals:
        raise ValueError("multi_interval: empty interval list")
    o_p = feats
    for interval, mlp in zip(intervals, interval_mlps):
        groups = regroup_by_interval(ps, interval)
        f_t = nn.apply_mlp(mlp, o_p)
        o = ad.scatter_mean(f_t, groups)
        o_p = ad.gather_rows(o, groups.group_of)
        o_p = ad.concat_cols(o_p, f_t)
    return o_p


def instance_pool(ps: IndexedPointSet, feats: Tensor, pool_mlp, pool_proj) -> Tensor:
    """Max-pool transformed features per instance and concat back to each point."""
    groups = build_groups_by_instance(ps)
    pooled = ad.scatter_max(nn.apply_mlp(pool_mlp, feats), groups)
    per_point = ad.gather_rows(pooled, groups.group_of)
    return nn.apply_mlp(pool_proj, ad.concat_cols(feats, per_point))


def temporal_block(ps: IndexedPointSet, feats: Tensor, params: TemporalParams) -> Tensor:
    x = multi_interval(ps, feats, params.intervals, params.interval_mlps)
    x = instance_pool(ps, x, params.pool_mlp, params.pool_proj)
    return nn.apply_mlp(params.out_proj, x)
