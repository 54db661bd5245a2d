"""Stage orchestration from a RunConfig: locate prerequisites, build models, run."""

from __future__ import annotations

import logging
import os
from pathlib import Path

from pean.core.config import RunConfig
from pean.core.errors import ConfigError, MissingPrerequisiteError
from pean.core.runtime import seed_everything, set_deterministic
from pean.core.types import Split, Stage
from pean.data.dataset import PairDataset, load_manifest
from pean.recognizer.model import CRNN
from pean.srnet.model import PeanModel, build_model
from pean.trainer.checkpoint import FINAL_NAME, Checkpoint, load_checkpoint, state_hash
from pean.trainer.loop import finetune, pretrain
from pean.trainer.recognizer import load_recognizer, train_recognizer

logger = logging.getLogger(__name__)


def stage_dir(config: RunConfig, stage: Stage, run_dir: str | os.PathLike[str] | None = None) -> Path:
    return Path(run_dir or config.train.run_dir) / stage.value


def final_checkpoint_path(config: RunConfig, stage: Stage, run_dir: str | os.PathLike[str] | None = None) -> Path:
    return stage_dir(config, stage, run_dir) / FINAL_NAME


def require_checkpoint(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingPrerequisiteError(f"Missing prerequisite checkpoint {str(path)!r}; {hint}")
    return path


def load_tpg(config: RunConfig, run_dir: str | os.PathLike[str] | None = None) -> CRNN:
    path = require_checkpoint(
        final_checkpoint_path(config, Stage.RECOGNIZER, run_dir),
        "run `pean train --stage recognizer` first",
    )
    return load_recognizer(path)


def model_from_checkpoint(ckpt: Checkpoint, tpg: CRNN) -> PeanModel:
    """Rebuild the SR network recorded in ``ckpt`` around a frozen ``tpg``."""
    cfg = RunConfig.model_validate(ckpt.config)
    model = build_model(cfg.model, cfg.schedule, tpg, with_tpem=bool(ckpt.extra.get("with_tpem", True)))
    expected = ckpt.extra.get("tpg_hash")
    if expected is not None and expected != state_hash(tpg.state_dict()):
        logger.warning("Recognizer differs from the one %s was trained with", ckpt.path)
    model.load_trainable_state(ckpt.model_state)
    return model.eval()


def load_pean(path: str | os.PathLike[str], tpg: CRNN) -> PeanModel:
    return model_from_checkpoint(load_checkpoint(path), tpg)


def _prepare(config: RunConfig) -> None:
    set_deterministic(config.train.deterministic)
    seed_everything(config.train.seed)


def run_stage(
    config: RunConfig,
    stage: Stage,
    *,
    data_root: str | os.PathLike[str] | None = None,
    run_dir: str | os.PathLike[str] | None = None,
    resume: bool = False,
    from_scratch: bool = False,
    max_steps: int | None = None,
) -> Checkpoint:
    """
    Run one training stage against the dataset at ``data_root``
    (default ``data.out_dir``). Pretraining needs the recognizer; finetuning
    also needs the pretrained checkpoint unless ``from_scratch``. The recognizer
    stage always trains from the start, so ``resume`` and ``max_steps`` are
    rejected there, as is ``from_scratch`` outside finetuning.
    """
    if stage == Stage.RECOGNIZER and (resume or max_steps is not None):
        raise ConfigError("The recognizer stage does not support resume or max_steps")
    if from_scratch and stage != Stage.FINETUNE:
        raise ConfigError("from_scratch only applies to the finetune stage")
    _prepare(config)
    manifest = load_manifest(data_root or config.data.out_dir)
    train_set = PairDataset(manifest, Split.TRAIN)
    logger.info("Stage %s on %d training pairs", stage.value, len(train_set))

    if stage == Stage.RECOGNIZER:
        return train_recognizer(train_set, config, run_dir=run_dir)

    tpg = load_tpg(config, run_dir)
    if stage == Stage.PRETRAIN:
        model = build_model(config.model, config.schedule, tpg, with_tpem=False)
        return pretrain(model, train_set, config, run_dir=run_dir, resume=resume, max_steps=max_steps)

    if stage == Stage.FINETUNE:
        pre: Path | None = None
        if not from_scratch:
            pre = require_checkpoint(
                final_checkpoint_path(config, Stage.PRETRAIN, run_dir),
                "run `pean train --stage pretrain` first",
            )
        model = build_model(config.model, config.schedule, tpg, with_tpem=True)
        return finetune(model, pre, train_set, config, run_dir=run_dir, resume=resume, max_steps=max_steps)

    raise ConfigError(f"Stage {stage.value} is not a training stage")
