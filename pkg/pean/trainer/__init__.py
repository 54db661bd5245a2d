"""Training: recognizer, two-stage SR optimization, checkpoints and run logs."""

from pean.trainer.checkpoint import (
    CHECKPOINT_VERSION,
    Checkpoint,
    find_latest_checkpoint,
    load_checkpoint,
    save_checkpoint,
    state_hash,
)
from pean.trainer.log import JsonlLogger, read_jsonl, step_records
from pean.trainer.loop import StepResult, Trainer, finetune, pretrain, step_seed
from pean.trainer.pipeline import (
    final_checkpoint_path,
    load_pean,
    load_tpg,
    model_from_checkpoint,
    run_stage,
)
from pean.trainer.recognizer import load_recognizer, recognizer_from_checkpoint, train_recognizer

__all__ = [
    "CHECKPOINT_VERSION",
    "Checkpoint",
    "JsonlLogger",
    "StepResult",
    "Trainer",
    "final_checkpoint_path",
    "find_latest_checkpoint",
    "finetune",
    "load_checkpoint",
    "load_pean",
    "load_recognizer",
    "load_tpg",
    "model_from_checkpoint",
    "pretrain",
    "read_jsonl",
    "recognizer_from_checkpoint",
    "run_stage",
    "save_checkpoint",
    "state_hash",
    "step_records",
    "step_seed",
    "train_recognizer",
]
