from pean.core.config import RunConfig, load_run_config
from pean.core.errors import PeanError
from pean.core.types import (
    CHARSET,
    HR_SIZE,
    LR_SIZE,
    Difficulty,
    PriorSource,
    Split,
    Stage,
    TextImagePair,
)
from pean.srnet.model import PeanModel, PeanOutput, build_model
from pean.recognizer.model import CRNN, build_recognizer, recognize
from pean.evalkit.accuracy import EvalReport
from pean.evalkit.study import CkaMatrix

__all__ = [
    "CHARSET",
    "HR_SIZE",
    "LR_SIZE",
    "Difficulty",
    "PeanError",
    "PriorSource",
    "RunConfig",
    "Split",
    "Stage",
    "TextImagePair",
    "load_run_config",
    # Networks
    "CRNN",
    "PeanModel",
    "PeanOutput",
    "build_model",
    "build_recognizer",
    "recognize",
    # Evaluation
    "CkaMatrix",
    "EvalReport",
]
