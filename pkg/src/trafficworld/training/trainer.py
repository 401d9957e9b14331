"""Teacher-forced next-token training loop."""
from __future__ import annotations

import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..synthworld.raster import RasterConfig
from ..synthworld.types import ScenarioLog
from ..tokenizer import ATTR_ORDER, DEFAULT_CONDITION_LENGTH
from ..model import ModelConfig, WorldModel, collate, save_checkpoint
from ..model.decoder import PLAN_GENERATIVE, PLAN_LIGHT, PLAN_TRACKED
from .augment import AugmentConfig, augment_scenario
from .data import TrainItem, build_train_item
from .losses import BatchOutputs, BatchTargets, LossWeights, compute_losses


@dataclass
class OptimConfig:
    lr: float = 2e-4
    weight_decay: float = 1e-3
    batch_size: int = 8
    epochs: int = 10
    milestones: tuple[int, ...] = (6, 8)   # epochs at which lr decays
    decay: float = 0.1
    accumulate_grad_batches: int = 1
    max_steps: int | None = None
    condition_length: int = DEFAULT_CONDITION_LENGTH
    start_window_fraction: float = 0.3     # fraction of windows anchored at frame 0
    data_workers: int = 4
    deterministic: bool = False            # single-threaded, no prefetch


@dataclass
class TrainReport:
    steps: list[int] = field(default_factory=list)
    ce: list[float] = field(default_factory=list)
    ce_key: list[float] = field(default_factory=list)
    ce_value: list[float] = field(default_factory=list)
    rec: list[float] = field(default_factory=list)
    traj: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    tokens: list[int] = field(default_factory=list)    # cumulative supervised slots
    wall_time: float = 0.0
    checkpoint: str | None = None

    def to_tsv(self) -> str:
        rows = ["step\ttokens\tce\tce_key\tce_value\trec\ttraj\tlr"]
        for i in range(len(self.steps)):
            rows.append(f"{self.steps[i]}\t{self.tokens[i]}\t{self.ce[i]:.6f}\t"
                        f"{self.ce_key[i]:.6f}\t{self.ce_value[i]:.6f}\t"
                        f"{self.rec[i]:.6f}\t{self.traj[i]:.6f}\t{self.lr[i]:.2e}")
        return "\n".join(rows) + "\n"


def _collate_items(items: list[TrainItem], model: WorldModel, dtype) -> tuple:
    vocab = model.vocab
    seq = collate([it.seq for it in items], vocab, dtype=dtype)
    raster = torch.from_numpy(np.stack([it.raster for it in items])).to(dtype)

    def gather(name):
        pos, bidx = [], []
        for b, it in enumerate(items):
            qt = getattr(it, name)
            pos.append(qt.positions)
            bidx.append(np.full(len(qt.positions), b, dtype=np.int64))
        teacher = np.concatenate([getattr(it, name).teacher for it in items], axis=0)
        mask = np.concatenate([getattr(it, name).mask for it in items], axis=0)
        out = {
            "pos": torch.from_numpy(np.concatenate(pos)),
            "b": torch.from_numpy(np.concatenate(bidx)),
            "teacher": torch.from_numpy(teacher),
            "mask": torch.from_numpy(mask).to(dtype),
        }
        if name == "gen":
            out["allowed"] = torch.from_numpy(
                np.concatenate([it.gen.id_allowed for it in items], axis=0))
        return out

    tracked, gen, light = gather("tracked"), gather("gen"), gather("light")
    traj_t = torch.from_numpy(np.concatenate([it.traj_target for it in items])).to(dtype)
    traj_m = torch.from_numpy(np.concatenate([it.traj_mask for it in items])).to(dtype)
    n_slots = sum(it.n_key_slots + it.n_value_slots for it in items)
    return seq, raster, tracked, gen, light, traj_t, traj_m, n_slots


def forward_batch(model: WorldModel, batch, full_logits: bool = False
                  ) -> tuple[BatchOutputs, BatchTargets, int]:
    seq, raster, tracked, gen, light, traj_t, traj_m, n_slots = batch
    hidden, layers, ctx = model(seq, raster)
    recon = model.raster_reconstruct(ctx)
    dtype = hidden.dtype

    def rows(q):
        return hidden[q["b"], q["pos"]]

    dec = model.decoder
    width = model.vocab.size if full_logits else model.cfg.gru_hidden
    fn = dec.teacher_logits if full_logits else dec.teacher_hidden

    def decode(q, plan):
        if len(q["pos"]) == 0:
            return torch.zeros(0, len(plan), width, dtype=dtype)
        return fn(rows(q), plan, q["teacher"], model.token_emb)

    tr = decode(tracked, model.plans[PLAN_TRACKED])
    ge = decode(gen, model.plans[PLAN_GENERATIVE])
    li = decode(light, model.plans[PLAN_LIGHT])

    head_layers = [i for i in range(model.cfg.n_layers)
                   if (i + 1) % model.cfg.traj_head_period == 0]
    traj_out = []
    for h_idx, layer_idx in enumerate(head_layers):
        h_rows = layers[layer_idx][tracked["b"], tracked["pos"]] \
            if len(tracked["pos"]) else torch.zeros(0, model.cfg.d_model, dtype=dtype)
        traj_out.append(model.traj_predict(h_idx, h_rows))

    kw = ({"tracked_logits": tr, "gen_logits": ge, "light_logits": li}
          if full_logits else
          {"tracked_hidden": tr, "gen_hidden": ge, "light_hidden": li})
    outputs = BatchOutputs(traj=traj_out, raster_recon=recon,
                           raster_input=raster, **kw)
    targets = BatchTargets(
        tracked_teacher=tracked["teacher"], tracked_mask=tracked["mask"],
        gen_teacher=gen["teacher"], gen_mask=gen["mask"],
        gen_id_allowed=gen["allowed"], light_teacher=light["teacher"],
        light_mask=light["mask"], traj_target=traj_t, traj_mask=traj_m)
    return outputs, targets, n_slots


def value_token_marginal_entropy(corpus: list[ScenarioLog], model_cfg: ModelConfig,
                                 condition_length: int = DEFAULT_CONDITION_LENGTH,
                                 max_windows_per_log: int = 4) -> float:
    """Entropy (nats) of the corpus marginal over value-token targets, the CE
    of the best constant-per-slot predictor; baseline for criterion checks."""
    vocab = model_cfg.vocabulary()
    counts: Counter = Counter()
    raster_cfg = RasterConfig(grid=model_cfg.raster_grid)
    for log in corpus:
        n = len(log.frames)
        ts = np.linspace(condition_length - 1, n - 1,
                         min(max_windows_per_log, n - condition_length + 1)).astype(int)
        for t in sorted(set(ts.tolist())):
            item = build_train_item(log, int(t), model_cfg, vocab,
                                    condition_length=condition_length,
                                    raster_cfg=raster_cfg)
            for qt, first_value in ((item.tracked, 0), (item.gen, 2), (item.light, 0)):
                for r in range(qt.teacher.shape[0]):
                    for s in range(first_value, qt.teacher.shape[1]):
                        if qt.mask[r, s] > 0:
                            counts[int(qt.teacher[r, s])] += 1
    total = sum(counts.values())
    if total == 0:
        return 0.0
    return float(-sum((c / total) * math.log(c / total) for c in counts.values()))


def train_model(corpus: list[ScenarioLog], model_cfg: ModelConfig,
                loss_weights: LossWeights | None = None,
                optim_cfg: OptimConfig | None = None, seed: int = 0,
                out_dir=None, augment_cfg: AugmentConfig | None = None,
                stop_fn=None, log_every: int = 10,
                model: WorldModel | None = None) -> tuple[WorldModel, TrainReport]:
    """Teacher-forced training; deterministic per seed in deterministic mode.

    stop_fn(report) -> bool is polled every log interval for early stopping.
    """
    if not corpus:
        raise ValueError("empty corpus")
    loss_weights = loss_weights or LossWeights()
    optim_cfg = optim_cfg or OptimConfig()
    augment_cfg = augment_cfg if augment_cfg is not None else AugmentConfig()
    torch.manual_seed(seed)
    if optim_cfg.deterministic:
        torch.set_num_threads(1)
    rng = np.random.default_rng(np.random.Philox(key=seed))
    if model is None:
        model = WorldModel(model_cfg)
    model.train()
    dtype = model.token_emb.weight.dtype
    vocab = model.vocab
    cl = optim_cfg.condition_length
    raster_cfg = RasterConfig(grid=model_cfg.raster_grid)

    window_counts = [max(1, len(log.frames) - cl + 1) for log in corpus]
    total_windows = sum(window_counts)
    steps_per_epoch = max(1, math.ceil(total_windows / optim_cfg.batch_size))
    max_steps = optim_cfg.max_steps or optim_cfg.epochs * steps_per_epoch
    milestone_steps = [max(1, round(m / optim_cfg.epochs * max_steps))
                       if optim_cfg.max_steps else m * steps_per_epoch
                       for m in optim_cfg.milestones]

    opt = torch.optim.AdamW(model.parameters(), lr=optim_cfg.lr,
                            weight_decay=optim_cfg.weight_decay)

    def lr_at(step: int) -> float:
        lr = optim_cfg.lr
        for ms in milestone_steps:
            if step >= ms:
                lr *= optim_cfg.decay
        return lr

    def sample_picks(n: int) -> list:
        picks = []
        for _ in range(n):
            li = int(rng.integers(0, len(corpus)))
            log = corpus[li]
            hi = len(log.frames) - 1
            lo = min(cl - 1, hi)
            if rng.random() < optim_cfg.start_window_fraction:
                t = lo
            else:
                t = int(rng.integers(lo, hi + 1))
            aug_seed = int(rng.integers(0, 2 ** 62))
            picks.append((log, t, aug_seed))
        return picks

    def build(args) -> TrainItem:
        log, t, aug_seed = args
        aug = augment_scenario(log, augment_cfg, aug_seed)
        return build_train_item(aug, t, model_cfg, vocab,
                                condition_length=cl, raster_cfg=raster_cfg)

    data_pool = None
    if optim_cfg.data_workers > 1 and not optim_cfg.deterministic:
        data_pool = ThreadPoolExecutor(max_workers=optim_cfg.data_workers)

    def make_batch(picks):
        items = list(data_pool.map(build, picks)) if data_pool else \
            [build(p) for p in picks]
        return _collate_items(items, model, dtype)

    # one-slot prefetch: the next batch is assembled while this one trains
    prefetcher = None if optim_cfg.deterministic else ThreadPoolExecutor(max_workers=1)
    report = TrainReport()
    tokens_cum = 0
    t_start = time.time()
    pending = sample_picks(optim_cfg.batch_size)
    fut = prefetcher.submit(make_batch, pending) if prefetcher else None
    for step in range(1, max_steps + 1):
        batch = fut.result() if fut is not None else make_batch(pending)
        if step < max_steps:
            pending = sample_picks(optim_cfg.batch_size)
            if prefetcher:
                fut = prefetcher.submit(make_batch, pending)
        lr = lr_at(step)
        for g in opt.param_groups:
            g["lr"] = lr
        outputs, targets, n_slots = forward_batch(model, batch)
        total, comps = compute_losses(outputs, targets, model, loss_weights)
        if not math.isfinite(float(total.detach())):
            raise RuntimeError(f"training diverged at step {step}: loss={float(total)}")
        total = total / optim_cfg.accumulate_grad_batches
        total.backward()
        if step % optim_cfg.accumulate_grad_batches == 0:
            opt.step()
            opt.zero_grad(set_to_none=True)
        tokens_cum += n_slots
        if step % log_every == 0 or step == max_steps:
            report.steps.append(step)
            report.tokens.append(tokens_cum)
            report.ce.append(comps["ce"])
            report.ce_key.append(comps["ce_key"])
            report.ce_value.append(comps["ce_value"])
            report.rec.append(comps["rec"])
            report.traj.append(sum(comps["traj"]))
            report.lr.append(lr)
            if stop_fn is not None and stop_fn(report):
                break
    if prefetcher:
        prefetcher.shutdown(wait=False, cancel_futures=True)
    if data_pool:
        data_pool.shutdown(wait=False, cancel_futures=True)
    report.wall_time = time.time() - t_start
    model.eval()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "model.npz"
        save_checkpoint(model, ckpt)
        (out / "curves.tsv").write_text(report.to_tsv())
        report.checkpoint = str(ckpt)
    return model, report
