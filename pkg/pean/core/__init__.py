from pean.core.config import (
    DataConfig,
    LossWeights,
    ModelConfig,
    RunConfig,
    ScheduleConfig,
    TrainConfig,
    load_run_config,
    parse_override,
)
from pean.core.errors import (
    ArmUnavailableError,
    CharsetError,
    CheckpointError,
    ConfigError,
    CTCError,
    DatasetError,
    GradCheckError,
    LossError,
    MetricError,
    MissingPrerequisiteError,
    PeanError,
    PriorSourceError,
    ScheduleError,
    ShapeError,
    TrainingDivergedError,
)
from pean.core.types import (
    CHARSET,
    HR_SIZE,
    LR_SIZE,
    NUM_CLASSES,
    SEQ_LEN,
    Charset,
    Difficulty,
    Manifest,
    ManifestEntry,
    PriorSource,
    Sampler,
    Split,
    Stage,
    TextImagePair,
    TpemParadigm,
)

__all__ = [
    "CHARSET",
    "HR_SIZE",
    "LR_SIZE",
    "NUM_CLASSES",
    "SEQ_LEN",
    "ArmUnavailableError",
    "CTCError",
    "Charset",
    "CharsetError",
    "CheckpointError",
    "ConfigError",
    "DataConfig",
    "DatasetError",
    "Difficulty",
    "GradCheckError",
    "LossError",
    "LossWeights",
    "Manifest",
    "ManifestEntry",
    "MetricError",
    "MissingPrerequisiteError",
    "ModelConfig",
    "PeanError",
    "PriorSource",
    "PriorSourceError",
    "RunConfig",
    "Sampler",
    "ScheduleConfig",
    "ScheduleError",
    "ShapeError",
    "Split",
    "Stage",
    "TextImagePair",
    "TpemParadigm",
    "TrainConfig",
    "TrainingDivergedError",
    "load_run_config",
    "parse_override",
]
