"""Two-stage optimization of the SR network: TP-HR pretraining, then ETP finetuning."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
from torch.utils.data import DataLoader, Dataset

from pean.core.config import RunConfig
from pean.core.errors import ConfigError, LossError, TrainingDivergedError
from pean.core.runtime import make_generator
from pean.core.types import PriorSource, Stage
from pean.data.dataset import collate_pairs
from pean.losses.image import image_terms
from pean.losses.total import LossReport, total_loss
from pean.recognizer.ctc import ctc_loss
from pean.srnet.model import PeanModel
from pean.tpem.loss import denoiser_training_terms
from pean.trainer.checkpoint import (
    FINAL_NAME,
    Checkpoint,
    find_latest_checkpoint,
    load_checkpoint,
    save_checkpoint,
    state_hash,
    step_path,
)
from pean.trainer.log import JsonlLogger

logger = logging.getLogger(__name__)

DENOISER_PREFIX = "denoiser."


def step_seed(seed: int, step: int) -> int:
    """Per-step seed for x_T and diffusion draws; a pure function of (seed, step)."""
    return (seed * 1_000_003 + step) % (2**63 - 1)


@dataclass
class StepResult:
    step: int
    report: LossReport
    grad_norm: float
    skipped: bool
    wall_time_ms: float

    def to_record(self, stage: Stage, epoch: int) -> dict[str, Any]:
        return {
            "step": self.step,
            "stage": stage.value,
            "epoch": epoch,
            **self.report.to_dict(),
            "grad_norm": self.grad_norm if math.isfinite(self.grad_norm) else str(self.grad_norm),
            "skipped": self.skipped,
            "wall_time_ms": round(self.wall_time_ms, 3),
        }


class Trainer:
    """
    Optimizes a PeanModel for one stage.

    Pretraining conditions on the HR prior and optimizes image + text terms.
    Finetuning conditions on the enhanced prior (sampled with a per-step seed)
    and adds the denoiser objective. Everything random in a step derives from
    ``(train.seed, step)``, so a restored checkpoint continues bit-exactly.
    """

    def __init__(
        self,
        model: PeanModel,
        config: RunConfig,
        stage: Stage,
        run_dir: str | os.PathLike[str] | None = None,
    ) -> None:
        if stage not in (Stage.PRETRAIN, Stage.FINETUNE):
            raise ConfigError(f"Trainer handles pretrain and finetune, not {stage.value}")
        if stage == Stage.FINETUNE and not model.with_tpem:
            raise ConfigError("Finetuning needs a model built with the TPEM")
        if stage == Stage.PRETRAIN and model.with_tpem:
            raise ConfigError("Pretraining runs without the TPEM; build the model with with_tpem=False")
        self._model = model
        self._config = config
        self._stage = stage
        self._params = [p for p in model.parameters() if p.requires_grad]
        self._optimizer = torch.optim.AdamW(
            self._params, lr=config.train.lr, weight_decay=config.train.weight_decay
        )
        self.stage_dir = Path(run_dir or config.train.run_dir) / stage.value
        self.step = 0
        self.epoch = 0
        self.batch_in_epoch = 0

    @property
    def model(self) -> PeanModel:
        return self._model

    @property
    def prior_source(self) -> PriorSource:
        return PriorSource.TP_HR if self._stage == Stage.PRETRAIN else PriorSource.ETP

    # ------------------------------------------------------------------
    # One step
    # ------------------------------------------------------------------

    def compute_loss(self, batch: dict[str, Any], seed: int) -> LossReport:
        dtype = next(self._model.parameters()).dtype
        lr = batch["lr"].to(dtype)
        hr = batch["hr"].to(dtype)
        labels = batch["label"]
        out = self._model(lr, self.prior_source, hr=hr, seed=seed)
        img = image_terms(out.sr, hr)
        txt = ctc_loss(self._model.arm_logits(out.arm_feature), labels)
        diff = None
        if self._stage == Stage.FINETUNE:
            assert self._model.denoiser is not None
            diff = denoiser_training_terms(
                self._model.denoiser,
                out.p_l,
                self._model.text_prior(hr),
                labels,
                self._model.schedule,
                make_generator(seed + 1),
                self._config.schedule.paradigm,
            )
        return total_loss(diff, img, txt, self._config.weights)

    def train_step(self, batch: dict[str, Any]) -> StepResult:
        """Forward, backward, clip to ``train.grad_clip``, update; non-finite gradients skip the update."""
        t0 = time.monotonic()
        self._model.train()
        self._optimizer.zero_grad(set_to_none=True)
        seed = step_seed(self._config.train.seed, self.step)
        try:
            report = self.compute_loss(batch, seed)
        except LossError as exc:
            path = self.save(self.stage_dir / f"last_good_step_{self.step:08d}.pt")
            raise TrainingDivergedError(
                f"{self._stage.value} diverged at step {self.step}: {exc}",
                last_good_checkpoint=str(path),
            ) from None

        assert report.tensor is not None
        report.tensor.backward()
        norm = float(torch.nn.utils.clip_grad_norm_(self._params, self._config.train.grad_clip))
        skipped = not math.isfinite(norm)
        if skipped:
            logger.warning("Step %d: non-finite gradient norm, update skipped", self.step)
            self._optimizer.zero_grad(set_to_none=True)
        else:
            self._optimizer.step()
        result = StepResult(
            step=self.step,
            report=report,
            grad_norm=norm,
            skipped=skipped,
            wall_time_ms=(time.monotonic() - t0) * 1000,
        )
        self.step += 1
        return result

    # ------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------

    def state(self) -> Checkpoint:
        return Checkpoint(
            stage=self._stage,
            model_state={k: v.detach().clone() for k, v in self._model.trainable_state_dict().items()},
            config=self._config.echo(),
            step=self.step,
            epoch=self.epoch,
            batch_in_epoch=self.batch_in_epoch,
            optimizer_state=self._optimizer.state_dict(),
            rng_state=torch.get_rng_state(),
            schedule=self._model.schedule.to_dict() | {"S": self._config.schedule.S},
            extra={"with_tpem": self._model.with_tpem, "tpg_hash": state_hash(self._model.tpg.state_dict())},
        )

    def save(self, path: str | os.PathLike[str] | None = None) -> Path:
        return save_checkpoint(self.state(), path or step_path(self.stage_dir, self.step))

    def restore(self, ckpt: Checkpoint) -> None:
        self._model.load_trainable_state(ckpt.model_state)
        if ckpt.optimizer_state is not None:
            self._optimizer.load_state_dict(ckpt.optimizer_state)
        if ckpt.rng_state is not None:
            torch.set_rng_state(ckpt.rng_state)
        self.step = ckpt.step
        self.epoch = ckpt.epoch
        self.batch_in_epoch = ckpt.batch_in_epoch

    # ------------------------------------------------------------------
    # Epochs
    # ------------------------------------------------------------------

    def fit(
        self,
        dataset: Dataset,
        epochs: int | None = None,
        *,
        resume: bool = False,
        max_steps: int | None = None,
    ) -> Checkpoint:
        """
        Train for ``epochs`` (default ``train.epochs``) and write ``final.pt``.

        ``max_steps`` stops early after a periodic checkpoint, which is how a
        run is interrupted for resumption.
        """
        cfg = self._config.train
        epochs = cfg.epochs if epochs is None else epochs
        if resume:
            latest = find_latest_checkpoint(self.stage_dir)
            if latest is not None:
                self.restore(load_checkpoint(latest, self._stage))
                logger.info("Resumed %s from %s at step %d", self._stage.value, latest, self.step)

        workers = 0 if cfg.deterministic else cfg.workers
        log = JsonlLogger(
            self.stage_dir / "train.jsonl",
            header={"stage": self._stage.value, "config": self._config.echo()},
            append=resume,
        )
        try:
            while self.epoch < epochs:
                order = torch.randperm(len(dataset), generator=make_generator(cfg.seed + self.epoch)).tolist()
                batches = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
                loader = DataLoader(
                    dataset,
                    batch_sampler=batches[self.batch_in_epoch :],
                    num_workers=workers,
                    collate_fn=collate_pairs,
                )
                for batch in loader:
                    result = self.train_step(batch)
                    self.batch_in_epoch += 1
                    log.log(result.to_record(self._stage, self.epoch))
                    if result.step % cfg.log_every == 0:
                        logger.info(
                            "%s step %d epoch %d loss %.4f grad_norm %.3f",
                            self._stage.value, result.step, self.epoch, result.report.total, result.grad_norm,
                        )
                    if cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                        self.save()
                    if max_steps is not None and self.step >= max_steps:
                        self.save()
                        return self.state()
                self.epoch += 1
                self.batch_in_epoch = 0
                self.save()
        finally:
            log.close()

        final = self.state()
        save_checkpoint(final, self.stage_dir / FINAL_NAME)
        logger.info("%s finished after %d steps; wrote %s", self._stage.value, self.step, final.path)
        return final


def pretrain(
    model: PeanModel,
    dataset: Dataset,
    config: RunConfig,
    *,
    run_dir: str | os.PathLike[str] | None = None,
    resume: bool = False,
    max_steps: int | None = None,
) -> Checkpoint:
    """Stage A: no TPEM, TP-HR prior, image + text terms."""
    return Trainer(model, config, Stage.PRETRAIN, run_dir).fit(dataset, resume=resume, max_steps=max_steps)


def finetune(
    model: PeanModel,
    pretrain_ckpt: Checkpoint | str | os.PathLike[str] | None,
    dataset: Dataset,
    config: RunConfig,
    *,
    run_dir: str | os.PathLike[str] | None = None,
    resume: bool = False,
    max_steps: int | None = None,
) -> Checkpoint:
    """
    Stage B: initialize from the pretrained weights (the denoiser starts fresh)
    and optimize the full objective with the enhanced prior. ``pretrain_ckpt``
    None trains from scratch.
    """
    if pretrain_ckpt is not None:
        ckpt = pretrain_ckpt if isinstance(pretrain_ckpt, Checkpoint) else load_checkpoint(pretrain_ckpt, Stage.PRETRAIN)
        loaded = model.load_trainable_state(ckpt.model_state, allow_missing=(DENOISER_PREFIX,))
        logger.info("Initialized finetuning from %d pretrained tensors", len(loaded))
    return Trainer(model, config, Stage.FINETUNE, run_dir).fit(dataset, resume=resume, max_steps=max_steps)
