"""Adam optimizer, learning-rate schedule, seeded batch pipeline and the
training loop with per-epoch checkpointing."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .lf_core import LightField, extract_patches, stack_channels, upsample2x
from .model import DeOccNet, _read_blob, _write_blob, load_weights, save_weights
from .nn import Tensor, mse_loss


class NonFiniteGradient(Exception):
    pass


class TrainingDiverged(Exception):
    pass


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


class Adam:
    """Adam with bias correction; moments stored float32, math in float64."""

    def __init__(self, named_params, cfg: AdamConfig):
        self.cfg = cfg
        self.params = list(named_params)
        self.m = {n: np.zeros_like(p.data, dtype=np.float32) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data, dtype=np.float32) for n, p in self.params}
        self.t = 0

    def step(self, lr: float | None = None):
        cfg = self.cfg
        lr = cfg.lr if lr is None else lr
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient in {name!r} at step {self.t + 1}")
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            g = np.asarray(g, dtype=np.float64)
            m = cfg.beta1 * self.m[name].astype(np.float64) + (1 - cfg.beta1) * g
            v = cfg.beta2 * self.v[name].astype(np.float64) + (1 - cfg.beta2) * g * g
            self.m[name] = m.astype(np.float32)
            self.v[name] = v.astype(np.float32)
            mhat = self.m[name].astype(np.float64) / bc1
            vhat = self.v[name].astype(np.float64) / bc2
            update = lr * mhat / (np.sqrt(vhat) + cfg.eps)
            p.data = (p.data.astype(np.float64) - update).astype(p.data.dtype)

    def state_entries(self):
        for name, _ in self.params:
            yield "m." + name, self.m[name]
        for name, _ in self.params:
            yield "v." + name, self.v[name]

    def save(self, path):
        with open(path, "wb") as f:
            f.write(_write_blob(self.state_entries(), {"t": self.t, "adam": asdict(self.cfg)}))

    def load(self, path):
        with open(path, "rb") as f:
            meta, entries, _ = _read_blob(f.read())
        self.t = int(meta["t"])
        for name in self.m:
            self.m[name] = entries["m." + name].astype(np.float32).copy()
            self.v[name] = entries["v." + name].astype(np.float32).copy()


@dataclass
class TrainConfig:
    batch_size: int = 4
    patch: int = 64
    stride: int = 32
    upsample_aug: bool = False
    epochs: int = 20
    base_lr: float = 1e-3
    drop_factor: float = 0.1
    seed: int = 0
    max_steps: int | None = None
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.patch % 16:
            raise ValueError("patch size must be divisible by 16")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: base_lr for the first half of the epochs, then
    base_lr * drop_factor (paper-scale: 1e-3 -> 1e-4 at epoch 100 of 200)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    threshold = cfg.epochs // 2
    return cfg.base_lr if epoch < threshold else cfg.base_lr * cfg.drop_factor


def _dataset_items(dataset, cfg: TrainConfig):
    """Expand (occluded LF, gt) pairs into (stacked input, gt) patch items."""
    items = []
    for lf, gt in dataset:
        for lfp, gtp in extract_patches(lf, gt, cfg.patch, cfg.stride):
            x = stack_channels(lfp).astype(np.float32)
            y = np.transpose(gtp, (2, 0, 1)).astype(np.float32)
            items.append((x, y))
            if cfg.upsample_aug:
                up_views = np.stack([
                    np.stack([upsample2x(lfp.views[r, c]) for c in range(lfp.v)])
                    for r in range(lfp.u)])
                xu = stack_channels(LightField(up_views)).astype(np.float32)
                yu = np.transpose(upsample2x(gtp), (2, 0, 1)).astype(np.float32)
                items.append((xu, yu))
    return items


def make_batches(dataset, cfg: TrainConfig, seed: int, epoch: int = 0):
    """Yield epoch-shuffled (input, gt) batches, seed-deterministic.

    Items of different spatial sizes (from the 2x augmentation) are never
    mixed within a batch; a batch is flushed early when the size changes.
    """
    items = _dataset_items(dataset, cfg)
    if not items:
        raise ValueError("dataset produced no patches")
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    order = rng.permutation(len(items))
    bx, by = [], []
    for idx in order:
        x, y = items[idx]
        if bx and (len(bx) == cfg.batch_size or bx[0].shape != x.shape):
            yield np.stack(bx), np.stack(by)
            bx, by = [], []
        bx.append(x)
        by.append(y)
    if bx:
        yield np.stack(bx), np.stack(by)


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)  # (step, epoch, lr, loss)

    def append(self, step, epoch, lr, loss):
        self.rows.append((step, epoch, lr, loss))

    @property
    def losses(self):
        return [r[3] for r in self.rows]

    def smoothed_loss(self, window: int = 10, at: str = "end") -> float:
        losses = self.losses
        if not losses:
            raise ValueError("empty log")
        chunk = losses[:window] if at == "start" else losses[-window:]
        return float(np.mean(chunk))

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "epoch", "lr", "loss"])
            for row in self.rows:
                writer.writerow(row)

    def save_summary(self, path):
        summary = {
            "steps": len(self.rows),
            "first_loss": self.rows[0][3] if self.rows else None,
            "final_loss": self.rows[-1][3] if self.rows else None,
            "smoothed_start": self.smoothed_loss(at="start") if self.rows else None,
            "smoothed_end": self.smoothed_loss(at="end") if self.rows else None,
        }
        with open(path, "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)


def save_checkpoint(dirpath, net: DeOccNet, opt: Adam, epoch: int, step: int):
    os.makedirs(dirpath, exist_ok=True)
    save_weights(net, os.path.join(dirpath, "model.docn"))
    opt.save(os.path.join(dirpath, "optim.docn"))
    with open(os.path.join(dirpath, "state.json"), "w") as f:
        json.dump({"epoch": epoch, "step": step}, f, sort_keys=True)


def load_checkpoint(dirpath, net: DeOccNet, opt: Adam):
    load_weights(net, os.path.join(dirpath, "model.docn"))
    opt.load(os.path.join(dirpath, "optim.docn"))
    with open(os.path.join(dirpath, "state.json")) as f:
        state = json.load(f)
    return state["epoch"], state["step"]


def train(net: DeOccNet, dataset, cfg: TrainConfig,
          adam_cfg: AdamConfig | None = None, out_dir=None,
          resume_from=None) -> TrainingLog:
    """Train with MSE loss; returns the loss log.

    Checkpoints (model + optimizer state) are written per epoch when
    out_dir is given; a NaN loss aborts with the last checkpoint intact.
    """
    adam_cfg = adam_cfg or AdamConfig(lr=cfg.base_lr)
    opt = Adam(net.named_parameters(), adam_cfg)
    log = TrainingLog()
    start_epoch, step = 0, 0
    if resume_from is not None:
        epoch_done, step = load_checkpoint(resume_from, net, opt)
        start_epoch = epoch_done + 1
    net.train()
    done = False
    for epoch in range(start_epoch, cfg.epochs):
        lr = lr_at(epoch, cfg)
        for xb, yb in make_batches(dataset, cfg, cfg.seed, epoch):
            pred = net(Tensor(xb))
            loss = mse_loss(pred, Tensor(yb))
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"loss became non-finite at step {step}; last checkpoint retained")
            net.zero_grad()
            loss.backward()
            opt.step(lr)
            log.append(step, epoch, lr, loss_val)
            step += 1
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
        if out_dir is not None and ((epoch + 1) % cfg.checkpoint_every == 0 or done):
            save_checkpoint(os.path.join(out_dir, f"ckpt_epoch{epoch:03d}"),
                            net, opt, epoch, step)
        if done:
            break
    if out_dir is not None:
        log.save_csv(os.path.join(out_dir, "train_log.csv"))
        log.save_summary(os.path.join(out_dir, "train_summary.json"))
        save_weights(net, os.path.join(out_dir, "final.docn"))
    return log
