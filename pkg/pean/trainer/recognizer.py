"""CTC training of the recognizer that later serves as frozen prior generator and evaluator."""

from __future__ import annotations

import logging
import math
import os
import time
from pathlib import Path

import torch
from torch.utils.data import DataLoader, Dataset

from pean.core.config import ModelConfig, RunConfig
from pean.core.errors import CheckpointError, TrainingDivergedError
from pean.core.runtime import make_generator
from pean.core.types import Stage
from pean.data.dataset import collate_pairs
from pean.recognizer.ctc import ctc_loss
from pean.recognizer.model import CRNN, build_recognizer
from pean.srnet.model import bicubic_upsample
from pean.trainer.checkpoint import FINAL_NAME, Checkpoint, load_checkpoint, save_checkpoint
from pean.trainer.log import JsonlLogger

logger = logging.getLogger(__name__)


def train_recognizer(
    dataset: Dataset,
    config: RunConfig,
    epochs: int | None = None,
    seed: int | None = None,
    *,
    run_dir: str | os.PathLike[str] | None = None,
) -> Checkpoint:
    """
    Train a fresh recognizer on HR crops and 2x-bicubic-upsampled LR crops.

    Writes ``{run_dir}/recognizer/final.pt`` and a JSONL step log. A
    non-finite loss aborts with TrainingDivergedError.
    """
    cfg = config.train
    epochs = cfg.recognizer_epochs if epochs is None else epochs
    seed = cfg.seed if seed is None else seed
    stage_dir = Path(run_dir or cfg.run_dir) / Stage.RECOGNIZER.value

    torch.manual_seed(seed)
    model = build_recognizer(config.model)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    step = 0

    def snapshot() -> Checkpoint:
        return Checkpoint(
            stage=Stage.RECOGNIZER,
            model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
            config=config.echo(),
            step=step,
            epoch=epoch,
            optimizer_state=optimizer.state_dict(),
        )

    epoch = 0
    with JsonlLogger(stage_dir / "train.jsonl", header={"stage": Stage.RECOGNIZER.value, "config": config.echo()}) as log:
        for epoch in range(epochs):
            order = torch.randperm(len(dataset), generator=make_generator(seed + epoch)).tolist()
            batches = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
            loader = DataLoader(dataset, batch_sampler=batches, num_workers=0 if cfg.deterministic else cfg.workers, collate_fn=collate_pairs)
            model.train()
            for batch in loader:
                t0 = time.monotonic()
                images = torch.cat([batch["hr"], bicubic_upsample(batch["lr"])], dim=0)
                labels = batch["label"] + batch["label"]
                loss = ctc_loss(model(images), labels)
                if not math.isfinite(float(loss)):
                    path = save_checkpoint(snapshot(), stage_dir / f"last_good_step_{step:08d}.pt")
                    raise TrainingDivergedError(
                        f"Recognizer loss became {float(loss)} at step {step}", last_good_checkpoint=str(path)
                    )
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                norm = float(torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip))
                if math.isfinite(norm):
                    optimizer.step()
                else:
                    logger.warning("Recognizer step %d: non-finite gradient norm, update skipped", step)
                log.log(
                    {
                        "step": step,
                        "stage": Stage.RECOGNIZER.value,
                        "epoch": epoch,
                        "total": float(loss),
                        "grad_norm": norm if math.isfinite(norm) else str(norm),
                        "skipped": not math.isfinite(norm),
                        "wall_time_ms": round((time.monotonic() - t0) * 1000, 3),
                    }
                )
                step += 1
            logger.info("recognizer epoch %d done at step %d", epoch, step)

    final = snapshot()
    save_checkpoint(final, stage_dir / FINAL_NAME)
    return final


def recognizer_from_checkpoint(ckpt: Checkpoint) -> CRNN:
    """Rebuild a frozen, eval-mode recognizer from its checkpoint."""
    model_cfg = ModelConfig.model_validate(ckpt.config.get("model", {}))
    model = build_recognizer(model_cfg)
    try:
        model.load_state_dict(ckpt.model_state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"Recognizer checkpoint does not match its config: {exc}") from None
    for p in model.parameters():
        p.requires_grad_(False)
    return model.eval()


def load_recognizer(path: str | os.PathLike[str]) -> CRNN:
    return recognizer_from_checkpoint(load_checkpoint(path, Stage.RECOGNIZER))
