"""The training loop.

Determinism contract: with a fixed seed, fixed thread count, and the same
dataset, every run visits identical batches, draws identical augmentations
and prompts (all RNG streams are pure functions of (seed, epoch, image)),
and therefore logs identical losses. Resuming from a checkpoint restores
parameters, optimizer moments, and counters exactly, so the next step's
loss breakdown is bit-identical to an uninterrupted run.

A non-finite total loss aborts training immediately, naming the offending
batch; nothing is written past the failure point.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch

from ..data.schema import AnnotationTree
from ..errors import TrainingAborted, ValidationError
from ..losses import LossBreakdown, hierarchy_loss, text_loss
from ..model.checkpoint import load_checkpoint, save_checkpoint
from ..model.network import TextHierNet
from .augment import augment
from .config import TrainConfig
from .sampling import PromptSample, sample_training_prompts

FINAL_CHECKPOINT = "final.ckpt"
LOG_FILE = "train_log.jsonl"


def make_optimizer(model: TextHierNet, cfg: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.trainable_parameters(),
        lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )


def _image_rng(seed: int, epoch: int, image_idx: int, stream: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, epoch, image_idx, stream]))
    )


def prepare_batch(
    trees: list[AnnotationTree],
    indices: list[int],
    cfg: TrainConfig,
    epoch: int,
) -> tuple[list[AnnotationTree], list[list[PromptSample]]]:
    """Augment and sample prompts for one batch, deterministically."""
    batch_trees = []
    batch_samples = []
    for idx in indices:
        tree = trees[idx]
        if cfg.augment.enabled:
            tree = augment(tree, cfg.augment, _image_rng(cfg.seed, epoch, idx, 0))
        samples = sample_training_prompts(
            tree,
            _image_rng(cfg.seed, epoch, idx, 1),
            lines_per_image=cfg.lines_per_image,
            points_per_line=cfg.points_per_line,
            shrink_ratio=cfg.shrink_ratio,
        )
        batch_trees.append(tree)
        batch_samples.append(samples)
    return batch_trees, batch_samples


def train_step(
    model: TextHierNet,
    batch_trees: list[AnnotationTree],
    batch_samples: list[list[PromptSample]],
    cfg: TrainConfig,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Forward both decode paths and compose the step loss."""
    device = model.device()
    images = torch.stack(
        [model.image_to_tensor(t.image)[0] for t in batch_trees]
    ).to(device)
    size = model.profile.input_size

    text_targets = []
    for tree in batch_trees:
        if tree.pixel_text is None:
            raise ValidationError(f"{tree.image_id}: training needs a pixel-text mask")
        text_targets.append(torch.from_numpy(tree.pixel_text.astype(np.float32)))
    text_target = torch.stack(text_targets).to(device)

    embeddings = model.embed_batch(images)
    text_out = model.text_forward(embeddings, use_hr=cfg.use_hr)
    hr_logits = text_out["hr_logits"]
    if hr_logits is None:
        hr_logits = text_out["lr_logits"]
    l_text, text_terms = text_loss(
        text_out["lr_logits"], hr_logits, text_out["iou_pred"], text_target
    )

    # Flatten prompt samples across the batch; non-blank points only carry
    # real targets, but blank points participate identically (empty masks).
    point_list, emb_idx = [], []
    gt_word, gt_line, gt_para = [], [], []
    for b_idx, samples in enumerate(batch_samples):
        for s in samples:
            point_list.append(s.point)
            emb_idx.append(b_idx)
            gt_word.append(s.word_target)
            gt_line.append(s.line_target)
            gt_para.append(s.para_target)

    if point_list:
        pts = torch.from_numpy(np.stack(point_list)).to(device)
        tokens = model.prompt_encoder.encode_points(pts)
        point_embeddings = embeddings[emb_idx]
        hier_out = model.hierarchy_forward(point_embeddings, tokens)
        to_t = lambda masks: torch.from_numpy(
            np.stack(masks).astype(np.float32)
        ).to(device)
        l_word, l_line, l_para, hier_terms = hierarchy_loss(
            hier_out["word_lr"],
            hier_out["word_hr"],
            hier_out["line_lr"],
            hier_out["para_lr"],
            hier_out["iou_line"],
            hier_out["iou_para"],
            to_t(gt_word),
            to_t(gt_line),
            to_t(gt_para),
        )
    else:
        zero = l_text.new_zeros(())
        l_word, l_line, l_para, hier_terms = zero, zero.clone(), zero.clone(), {}

    total = l_text + l_word + l_line + 0.5 * l_para
    breakdown = LossBreakdown.build(
        float(l_text.detach()),
        float(l_word.detach()),
        float(l_line.detach()),
        float(l_para.detach()),
        terms={**text_terms, **hier_terms},
    )
    return total, breakdown


def fit(
    model: TextHierNet,
    trees: list[AnnotationTree],
    cfg: TrainConfig,
    out_dir: str | Path,
    resume_from: str | Path | None = None,
) -> Path:
    """Train and return the final checkpoint path.

    Writes ``train_log.jsonl`` (one JSON object per step) and periodic
    checkpoints under ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(cfg.num_threads)

    optimizer = make_optimizer(model, cfg)
    start_epoch, step = 0, 0
    if resume_from is not None:
        _, manifest = load_checkpoint(resume_from, model=model, optimizer=optimizer)
        start_epoch = manifest["epoch"]
        step = manifest["step"]

    log_path = out / LOG_FILE
    log_mode = "a" if resume_from is not None else "w"
    n = len(trees)
    if n == 0:
        raise ValidationError("cannot train on an empty dataset")

    with open(log_path, log_mode) as log:
        for epoch in range(start_epoch, cfg.epochs):
            lr = cfg.lr_at_epoch(epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([cfg.seed, epoch]))
            ).permutation(n)
            for lo in range(0, n, cfg.batch_size):
                indices = [int(i) for i in order[lo : lo + cfg.batch_size]]
                batch_trees, batch_samples = prepare_batch(trees, indices, cfg, epoch)
                t0 = time.perf_counter()
                total, breakdown = train_step(model, batch_trees, batch_samples, cfg)
                if not torch.isfinite(total):
                    batch_id = f"epoch{epoch}:" + ",".join(
                        t.image_id for t in batch_trees
                    )
                    raise TrainingAborted(
                        f"non-finite loss at step {step} ({batch_id})",
                        step=step,
                        batch_id=batch_id,
                    )
                optimizer.zero_grad(set_to_none=True)
                total.backward()
                optimizer.step()
                dt = time.perf_counter() - t0
                log.write(
                    json.dumps(
                        {
                            "step": step,
                            "epoch": epoch,
                            "lr": lr,
                            "loss": breakdown.as_dict(),
                            "time_s": round(dt, 4),
                        }
                    )
                    + "\n"
                )
                log.flush()
                step += 1
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(
                    out / f"epoch_{epoch + 1:04d}.ckpt",
                    model,
                    optimizer,
                    step=step,
                    epoch=epoch + 1,
                )

    final = out / FINAL_CHECKPOINT
    save_checkpoint(final, model, optimizer, step=step, epoch=cfg.epochs)
    return final
