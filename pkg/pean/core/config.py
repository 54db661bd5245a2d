"""Run configuration: one YAML file, validated by pydantic, overridable from the CLI."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from pean.core.errors import ConfigError
from pean.core.types import Sampler, TpemParadigm

# Toy profile caps (one workstation, under an hour end to end)
_TOY_MAX_TRAIN = 500
_TOY_MAX_TEST_PER_DIFFICULTY = 50
_TOY_MAX_EPOCHS = 10


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DataConfig(_Strict):
    n_train: int = Field(500, ge=1)
    n_test_per_difficulty: int = Field(50, ge=0)
    min_len: int = Field(2, ge=1, le=25)
    max_len: int = Field(8, ge=1, le=25)
    workers: int = Field(4, ge=1)
    seed: int = 0
    out_dir: str = "data/toy"

    @model_validator(mode="after")
    def _check_lengths(self) -> DataConfig:
        if self.min_len > self.max_len:
            raise ValueError(f"min_len {self.min_len} exceeds max_len {self.max_len}")
        return self


class ModelConfig(_Strict):
    channels: int = Field(64, ge=1)
    num_blocks: int = Field(6, ge=1)
    ffn_ratio: int = Field(4, ge=1)
    gam_qk_dim: int = Field(256, ge=1)
    fam_dim: int = Field(64, ge=1)
    srm_depth: int = Field(4, ge=1)
    use_lam: bool = True
    use_gam: bool = True
    arm_block: int | None = None  # 1-based; None means the last block
    zero_init_residual: bool = True
    recognizer_channels: tuple[int, int, int] = (32, 64, 128)
    lstm_hidden: int = Field(128, ge=1)

    @model_validator(mode="after")
    def _check_arm_block(self) -> ModelConfig:
        if self.arm_block is not None and not 1 <= self.arm_block <= self.num_blocks:
            raise ValueError(f"arm_block must be in 1..{self.num_blocks}, got {self.arm_block}")
        return self


class ScheduleConfig(_Strict):
    T: int = Field(1000, ge=1)
    beta_min: float = Field(1e-4, gt=0.0, lt=1.0)
    beta_max: float = Field(0.02, gt=0.0, lt=1.0)
    S: int = Field(1, ge=1)
    sampler: Sampler = Sampler.DDIM
    eta: float = Field(0.0, ge=0.0, le=1.0)
    paradigm: TpemParadigm = TpemParadigm.DIFFUSION

    @model_validator(mode="after")
    def _check_ranges(self) -> ScheduleConfig:
        if self.beta_min > self.beta_max:
            raise ValueError("beta_min must not exceed beta_max")
        if self.S > self.T:
            raise ValueError(f"S={self.S} exceeds T={self.T}")
        return self


class LossWeights(_Strict):
    """Multi-task weights: diffusion MAE, diffusion CTC, MSE, stroke proxy, ARM CTC."""

    lambda1: float = Field(1.0, ge=0.0)
    lambda2: float = Field(1.0, ge=0.0)
    lambda3: float = Field(0.8, ge=0.0)
    lambda4: float = Field(75.0, ge=0.0)
    lambda5: float = Field(1.0, ge=0.0)


class TrainConfig(_Strict):
    epochs: int = Field(10, ge=0)
    recognizer_epochs: int = Field(15, ge=0)
    lr: float = Field(1e-3, ge=0.0)
    batch_size: int = Field(32, ge=1)
    weight_decay: float = Field(1e-2, ge=0.0)
    grad_clip: float = Field(5.0, gt=0.0)
    seed: int = 0
    deterministic: bool = False
    workers: int = Field(0, ge=0)
    log_every: int = Field(10, ge=1)
    checkpoint_every: int = Field(0, ge=0)  # steps; 0 = end of each epoch only
    run_dir: str = "runs/toy"


class RunConfig(_Strict):
    profile: Literal["toy", "full"] = "toy"
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    weights: LossWeights = Field(default_factory=LossWeights)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def _apply_profile(self) -> RunConfig:
        if self.profile == "toy":
            if self.data.n_train > _TOY_MAX_TRAIN:
                raise ValueError(f"toy profile caps n_train at {_TOY_MAX_TRAIN}")
            if self.data.n_test_per_difficulty > _TOY_MAX_TEST_PER_DIFFICULTY:
                raise ValueError(
                    f"toy profile caps n_test_per_difficulty at {_TOY_MAX_TEST_PER_DIFFICULTY}"
                )
            if self.train.epochs > _TOY_MAX_EPOCHS:
                raise ValueError(f"toy profile caps epochs at {_TOY_MAX_EPOCHS}")
        return self

    def echo(self) -> dict[str, Any]:
        """JSON-safe dump embedded in every artifact."""
        return self.model_dump(mode="json")


def _set_dotted(tree: dict[str, Any], dotted: str, value: Any) -> None:
    node = tree
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"Override {dotted!r} descends into non-section {part!r}")
        node = child
    node[parts[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    """Parse ``section.key=value``; the value is read as YAML (numbers, bools, lists)."""
    if "=" not in item:
        raise ConfigError(f"Override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load_run_config(
    path: str | os.PathLike[str] | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """
    Load a RunConfig from a YAML file (optional) and apply dotted overrides.

    Unknown keys anywhere in the tree are rejected. PEAN_DETERMINISTIC=1 in the
    environment forces ``train.deterministic``.
    """
    tree: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            loaded = yaml.safe_load(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"Config file {str(p)!r} not found") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"Config file {str(p)!r} is not valid YAML: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"Config file {str(p)!r} must hold a mapping at top level")
        tree = loaded or {}

    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(tree, key, value)

    if os.environ.get("PEAN_DETERMINISTIC") == "1":
        _set_dotted(tree, "train.deterministic", True)

    try:
        return RunConfig.model_validate(tree)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration:\n{exc}") from None
