"""Full model assembly, displacement-regression losses, and the training loop.

The network alternates spatial and temporal blocks (each stage consuming the
previous stage's pointwise output), drops map rows at the head, mean-pools
the target agent's rows, and regresses K trajectories plus K predicted
endpoint displacement errors. At inference the trajectories are ranked by
predicted displacement, ascending.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import metrics as metrics_mod
from . import nn
from .autodiff import Tensor
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .indexing import KIND_TARGET, IndexedPointSet, index_scene
from .optim import AdamState, adam_init, adam_step, lr_at_epoch
from .scenes import AugConfig, NormalizedScene, RawScene, augment, normalize
from .spatial import init_spatial, spatial_block
from .temporal import init_temporal, temporal_block


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_stages: int = 4
    intervals: tuple = (2, 4, 6, 8, 16)
    radii: tuple = (0.2, 0.4, 0.8, 1.6)
    grid_size: float = 0.2
    n_modes: int = 6        # K trajectories
    future_steps: int = 30  # T waypoints per trajectory
    history_steps: int = 20
    embed_width: int = 32
    radius_width: int = 32
    pointwise_width: int = 64
    voxel_width: int = 64
    bottleneck_blocks: int = 2
    spatial_width: int = 128
    interval_width: int = 64
    temporal_width: int = 128
    head_width: int = 128
    loss_weight_disp: float = 1.0

    def __post_init__(self):
        if self.n_modes < 1 or self.future_steps < 1:
            raise ValueError("n_modes and future_steps must be >= 1")
        if self.grid_size <= 0:
            raise ValueError("grid_size must be positive")


@dataclass
class PredictionSet:
    """K regressed trajectories plus K predicted endpoint displacements."""

    trajectories: np.ndarray   # (K, T, 2)
    displacements: np.ndarray  # (K,)


@dataclass
class Model:
    config: ModelConfig
    embed: list
    spatial: list
    temporal: list
    head_reg: list
    head_disp: list
    params: dict = field(default_factory=dict)  # flat name -> Tensor


# input embedding: [x, y, one-hot kind (3), time / history_steps]
EMBED_IN = 6


def init_model(config: ModelConfig, seed) -> Model:
    rng = np.random.default_rng(seed)
    reg: dict[str, Tensor] = {}
    embed = nn.init_mlp(reg, "embed", [EMBED_IN, config.embed_width], rng,
                        final_norm=True, final_act=True)
    spatial, temporal = [], []
    c = config.embed_width
    for s in range(config.n_stages):
        spatial.append(init_spatial(reg, f"stage{s}/spatial", c, config, rng))
        temporal.append(init_temporal(reg, f"stage{s}/temporal", config.spatial_width, config, rng))
        c = config.temporal_width
    out_reg = config.n_modes * config.future_steps * 2
    head_reg = nn.init_mlp(reg, "head/reg", [c, config.head_width, out_reg], rng)
    head_disp = nn.init_mlp(reg, "head/disp", [c, config.head_width, config.n_modes], rng)
    return Model(config, embed, spatial, temporal, head_reg, head_disp, reg)


def point_embedding(ps: IndexedPointSet, history_steps: int) -> np.ndarray:
    onehot = np.zeros((len(ps), 3))
    onehot[np.arange(len(ps)), ps.kind] = 1.0
    t_norm = ps.time.astype(np.float64)[:, None] / float(history_steps)
    return np.hstack([ps.points, onehot, t_norm])


def forward_graph(model: Model, scene: NormalizedScene):
    """Run the network, returning (point set, reg head (1, K*T*2), disp head (1, K))."""
    cfg = model.config
    ps = index_scene(scene, cfg.grid_size)
    x = nn.apply_mlp(model.embed, ad.constant(point_embedding(ps, cfg.history_steps)))
    for sp, tp in zip(model.spatial, model.temporal):
        x = spatial_block(ps, x, sp)
        x = temporal_block(ps, x, tp)
    # drop map rows, pool the target agent's rows into one vector
    target_rows = np.flatnonzero(ps.kind == KIND_TARGET)
    pooled = ad.mean_rows(ad.gather_rows(x, target_rows))
    reg = nn.apply_mlp(model.head_reg, pooled)
    disp = nn.apply_mlp(model.head_disp, pooled)
    return ps, reg, disp


def prediction_from_heads(reg: Tensor, disp: Tensor, config: ModelConfig) -> PredictionSet:
    k, t = config.n_modes, config.future_steps
    return PredictionSet(
        trajectories=reg.data.reshape(k, t, 2).copy(),
        displacements=disp.data.reshape(k).copy(),
    )


def forward(model: Model, scene: NormalizedScene) -> PredictionSet:
    _, reg, disp = forward_graph(model, scene)
    return prediction_from_heads(reg, disp, model.config)


# ---------------------------------------------------------------------------
# losses


def select_best(pred: PredictionSet, gt: np.ndarray) -> int:
    """Index of the trajectory with the smallest endpoint error (ties: lowest)."""
    err = np.linalg.norm(pred.trajectories[:, -1, :] - gt[-1], axis=1)
    return int(np.argmin(err))


def loss_reg(reg: Tensor, gt: np.ndarray, k_star: int, config: ModelConfig) -> Tensor:
    """Smooth-L1 trajectory regression on the best mode only.

    The per-step x and y terms are summed then averaged over time, i.e.
    2x the elementwise mean over the k*-th (T, 2) block.
    """
    t2 = config.future_steps * 2
    block = ad.slice_cols(reg, k_star * t2, (k_star + 1) * t2)
    return ad.scale(ad.smooth_l1(block, gt.reshape(1, t2)), 2.0)


def displacement_targets(pred: PredictionSet, gt: np.ndarray) -> np.ndarray:
    """Actual endpoint errors per mode, used as detached regression targets."""
    return np.linalg.norm(pred.trajectories[:, -1, :] - gt[-1], axis=1)


def loss_disp(disp: Tensor, pred: PredictionSet, gt: np.ndarray) -> Tensor:
    d_star = displacement_targets(pred, gt)  # constants: no gradient into tau_reg
    return ad.smooth_l1(disp, d_star.reshape(1, -1))


def total_loss(reg: Tensor, disp: Tensor, gt: np.ndarray, config: ModelConfig) -> Tensor:
    pred = prediction_from_heads(reg, disp, config)
    k_star = select_best(pred, gt)
    l_reg = loss_reg(reg, gt, k_star, config)
    l_disp = loss_disp(disp, pred, gt)
    return ad.add(l_reg, ad.scale(l_disp, config.loss_weight_disp))


def rank_trajectories(pred: PredictionSet) -> np.ndarray:
    """Mode indices sorted by predicted displacement, ascending, stable."""
    return np.argsort(pred.displacements, kind="stable")


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = ModelConfig()
    epochs: int = 36
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay_epochs: tuple = (10, 20, 30)
    lr_decay_factor: float = 0.1
    augment: AugConfig | None = AugConfig()
    eval_every: int = 1
    seed: int = 0


@dataclass
class TrainResult:
    model: Model
    state: AdamState
    history: list
    checkpoint_path: Path | None


def _optimizer_arrays(model: Model, state: AdamState) -> dict:
    arrays = {f"params/{k}": t.data for k, t in model.params.items()}
    arrays.update({f"optim/m/{k}": v for k, v in state.m.items()})
    arrays.update({f"optim/v/{k}": v for k, v in state.v.items()})
    return arrays


def save_train_checkpoint(path, model: Model, state: AdamState, *, epoch: int, config_doc=None):
    return save_checkpoint(
        path,
        _optimizer_arrays(model, state),
        step=state.step,
        epoch=epoch,
        config=config_doc,
    )


def restore_train_checkpoint(path, model: Model, state: AdamState) -> dict:
    arrays, manifest = load_checkpoint(path)
    restore_into(model.params, arrays, prefix="params/")
    for k in state.m:
        state.m[k] = arrays[f"optim/m/{k}"].copy()
        state.v[k] = arrays[f"optim/v/{k}"].copy()
    state.step = int(manifest["global_step"])
    return manifest


def scene_forward_loss(model: Model, scene: NormalizedScene):
    if scene.future is None:
        raise ValueError(f"scene {scene.scene_id!r} has no ground-truth future")
    if len(scene.future) != model.config.future_steps:
        raise ValueError(
            f"scene {scene.scene_id!r} future has {len(scene.future)} steps, "
            f"model regresses {model.config.future_steps}"
        )
    _, reg, disp = forward_graph(model, scene)
    return total_loss(reg, disp, scene.future, model.config)


def evaluate_model(model: Model, scenes, ks=(1, 6)) -> dict:
    preds, gts = [], []
    for sc in scenes:
        if sc.future is None:
            continue
        preds.append(forward(model, sc))
        gts.append(sc.future)
    out = {}
    for k in ks:
        r = metrics_mod.evaluate(preds, gts, k=min(k, model.config.n_modes))
        out[f"minADE{k}"] = r["min_ade"]
        out[f"minFDE{k}"] = r["min_fde"]
        out[f"MR{k}"] = r["miss_rate"]
    return out


def train(
    dataset: list[RawScene],
    config: TrainConfig,
    *,
    checkpoint_path=None,
    log_path=None,
    resume=None,
    config_doc=None,
) -> TrainResult:
    """Adam training with per-scene backward passes accumulated into batches.

    Deterministic for a fixed seed: shuffling and augmentation RNG streams
    derive from (seed, epoch) and (seed, epoch, scene), so resuming from an
    epoch-boundary checkpoint replays the identical sequence.
    """
    if not dataset:
        raise ValueError("train: empty dataset")
    normalized = [normalize(s) for s in dataset]
    for sc in normalized:
        if sc.future is None:
            raise ValueError(f"scene {sc.scene_id!r} has no ground-truth future")

    model = init_model(config.model, config.seed)
    state = adam_init(model.params)
    start_epoch = 0
    if resume is not None:
        manifest = restore_train_checkpoint(resume, model, state)
        start_epoch = int(manifest["epoch"]) + 1

    history = []
    log_fh = open(log_path, "a") if log_path else None
    try:
        for epoch in range(start_epoch, config.epochs):
            t0 = time.monotonic()
            lr = lr_at_epoch(epoch, config.lr, config.lr_decay_epochs, config.lr_decay_factor)
            order = np.random.default_rng([config.seed, epoch]).permutation(len(normalized))
            epoch_loss, n_seen = 0.0, 0
            for lo in range(0, len(order), config.batch_size):
                batch = order[lo : lo + config.batch_size]
                accum = {k: np.zeros_like(t.data) for k, t in model.params.items()}
                for si in batch:
                    sc = normalized[si]
                    if config.augment is not None:
                        sc = augment(sc, [config.seed, epoch, int(si)], config.augment)
                    loss = scene_forward_loss(model, sc)
                    value = loss.item()
                    if not np.isfinite(value):
                        raise TrainingDiverged(
                            f"non-finite loss at epoch {epoch} on scene {sc.scene_id!r}"
                        )
                    epoch_loss += value
                    n_seen += 1
                    for t in model.params.values():
                        t.zero_grad()
                    ad.backward(loss)
                    for k, t in model.params.items():
                        if t.grad is not None:
                            accum[k] += t.grad
                grads = {k: g / len(batch) for k, g in accum.items()}
                adam_step(model.params, grads, state, lr)

            entry = {"epoch": epoch, "lr": lr, "train_loss": epoch_loss / max(n_seen, 1)}
            if config.eval_every and (epoch + 1) % config.eval_every == 0:
                entry.update(evaluate_model(model, normalized))
            entry["wall_seconds"] = time.monotonic() - t0
            history.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if checkpoint_path is not None:
                save_train_checkpoint(
                    checkpoint_path, model, state, epoch=epoch, config_doc=config_doc
                )
    finally:
        if log_fh:
            log_fh.close()

    ckpt = Path(checkpoint_path).with_suffix(".json") if checkpoint_path else None
    return TrainResult(model=model, state=state, history=history, checkpoint_path=ckpt)
