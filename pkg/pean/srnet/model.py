"""The full super-resolution network and its prior plumbing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from pean.amm.block import AttentionModulation
from pean.amm.fam import FeatureAlignment
from pean.core.config import ModelConfig, ScheduleConfig
from pean.core.errors import ArmUnavailableError, PriorSourceError, ShapeError
from pean.core.types import LR_SIZE, PriorSource
from pean.nn.functional import pixel_shuffle
from pean.nn.layers import Conv2d, ConvBnMish, to_nchw, to_nhwc
from pean.recognizer.model import CRNN, build_recognizer, recognize
from pean.srnet.compat import compatibility_report, raise_on_problems
from pean.tpem.denoiser import DenoiserMLP
from pean.tpem.sampling import sample_prior
from pean.tpem.schedule import make_schedule

logger = logging.getLogger(__name__)

TPG_PREFIX = "tpg."


class SuperResolutionHead(nn.Module):
    """``depth`` conv+BN+Mish layers, conv to ``C*r*r``, pixel shuffle, 3x3 conv + sigmoid."""

    def __init__(self, channels: int, depth: int = 4, scale: int = 2) -> None:
        super().__init__()
        self.scale = scale
        self.refine = nn.ModuleList(ConvBnMish(channels, channels) for _ in range(depth))
        self.expand = Conv2d(channels, channels * scale * scale, kernel_size=3)
        self.output = Conv2d(channels, 3, kernel_size=3)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Returns the SR image and ``2 * depth + 2`` taps."""
        taps: list[torch.Tensor] = []
        for layer in self.refine:
            x, normed = layer.forward_tapped(x)
            taps.extend([normed, x])
        x = pixel_shuffle(self.expand(x), self.scale)
        taps.append(x)
        sr = torch.sigmoid(self.output(x))
        taps.append(sr)
        return sr, taps


@dataclass
class PeanOutput:
    sr: torch.Tensor  # [B, 32, 128, 3] in [0, 1]
    taps: list[torch.Tensor]  # AMM taps then SRM taps
    prior: torch.Tensor  # row-stochastic prior handed to FAM
    p_l: torch.Tensor  # TPG output on the LR input
    arm_feature: torch.Tensor  # output of the block feeding the ARM
    raw_prior: torch.Tensor | None = None  # unnormalized x0 estimate (ETP only)
    shallow: torch.Tensor | None = field(default=None, repr=False)


class PeanModel(nn.Module):
    """
    Shallow conv, FAM, AMM stack and SR head conditioned on a text prior.

    The text prior generator (``tpg``) is held frozen and always in eval mode.
    ``with_tpem`` adds the denoiser that turns ``P^l`` into the enhanced prior.
    The auxiliary recognition head is only callable in training mode.
    """

    def __init__(
        self,
        model_cfg: ModelConfig,
        schedule_cfg: ScheduleConfig,
        tpg: CRNN,
        with_tpem: bool = True,
    ) -> None:
        super().__init__()
        c = model_cfg.channels
        self.model_cfg = model_cfg
        self.schedule_cfg = schedule_cfg
        self.schedule = make_schedule(schedule_cfg.T, schedule_cfg.beta_min, schedule_cfg.beta_max)

        self.shallow = Conv2d(3, c, kernel_size=3)
        self.fam = FeatureAlignment(c, model_cfg.fam_dim, zero_init=model_cfg.zero_init_residual)
        self.amm = AttentionModulation(
            c,
            num_blocks=model_cfg.num_blocks,
            ffn_ratio=model_cfg.ffn_ratio,
            qk_dim=model_cfg.gam_qk_dim,
            use_lam=model_cfg.use_lam,
            use_gam=model_cfg.use_gam,
            zero_init=model_cfg.zero_init_residual,
        )
        self.srm = SuperResolutionHead(c, depth=model_cfg.srm_depth)
        self.arm = build_recognizer(model_cfg, in_channels=c, stem=False)
        self.denoiser = DenoiserMLP() if with_tpem else None
        self.arm_index = (model_cfg.arm_block or model_cfg.num_blocks) - 1
        self.arm_calls = 0

        self.tpg = tpg
        for p in self.tpg.parameters():
            p.requires_grad_(False)
        self.tpg.eval()

    @property
    def with_tpem(self) -> bool:
        return self.denoiser is not None

    def train(self, mode: bool = True) -> PeanModel:
        super().train(mode)
        self.tpg.eval()
        return self

    # ------------------------------------------------------------------
    # Pieces
    # ------------------------------------------------------------------

    def shallow_extract(self, lr: torch.Tensor) -> torch.Tensor:
        if lr.dim() != 4 or tuple(lr.shape[1:]) != (*LR_SIZE, 3):
            raise ShapeError(f"Expected LR batch [B, {LR_SIZE[0]}, {LR_SIZE[1]}, 3], got {tuple(lr.shape)}")
        return self.shallow(lr)

    def text_prior(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return recognize(self.tpg, images)

    def select_prior(
        self,
        lr: torch.Tensor,
        prior_source: PriorSource,
        hr: torch.Tensor | None = None,
        seed: int = 0,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor | None]:
        """Returns ``(prior, P^l, raw)`` where ``raw`` is the denoiser output for ETP."""
        p_l = self.text_prior(lr)
        if prior_source == PriorSource.TP_LR:
            return p_l, p_l, None
        if prior_source == PriorSource.TP_HR:
            if hr is None:
                raise PriorSourceError("Prior source tp_hr needs the paired HR image")
            return self.text_prior(hr), p_l, None
        if self.denoiser is None:
            raise PriorSourceError("Prior source etp needs a model built with the TPEM")
        raw = sample_prior(self.denoiser, p_l, self.schedule, self.schedule_cfg, seed)
        return torch.softmax(raw, dim=-1), p_l, raw

    def arm_logits(self, feature: torch.Tensor) -> torch.Tensor:
        if not self.training:
            raise ArmUnavailableError("The auxiliary recognition head is training-only")
        self.arm_calls += 1
        return self.arm(feature)

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def forward(  # type: ignore[override]
        self,
        lr: torch.Tensor,
        prior_source: PriorSource | str = PriorSource.ETP,
        hr: torch.Tensor | None = None,
        seed: int = 0,
    ) -> PeanOutput:
        source = PriorSource.parse(prior_source)
        f_s = self.shallow_extract(lr)
        prior, p_l, raw = self.select_prior(lr, source, hr, seed)
        f_a = self.fam(f_s, prior.to(f_s.dtype))
        out, amm_taps, outputs = self.amm(f_a)
        sr, srm_taps = self.srm(out)
        return PeanOutput(
            sr=sr,
            taps=amm_taps + srm_taps,
            prior=prior,
            p_l=p_l,
            arm_feature=outputs[self.arm_index],
            raw_prior=raw,
            shallow=f_s,
        )

    # ------------------------------------------------------------------
    # State
    # ------------------------------------------------------------------

    def trainable_state_dict(self) -> dict[str, torch.Tensor]:
        """Everything except the frozen text prior generator."""
        return {k: v for k, v in self.state_dict().items() if not k.startswith(TPG_PREFIX)}

    def load_trainable_state(
        self,
        state: dict[str, torch.Tensor],
        allow_missing: tuple[str, ...] = (),
    ) -> list[str]:
        """
        Load a trainable state after a per-parameter compatibility check.

        Every name in ``state`` must exist here with the same shape. Names of
        this model absent from ``state`` are allowed only under one of the
        ``allow_missing`` prefixes. Returns the loaded names.
        """
        problems = compatibility_report(self.trainable_state_dict(), state, allow_missing)
        raise_on_problems(problems)
        self.load_state_dict(state, strict=False)
        logger.info("Loaded %d tensors into the model", len(state))
        return sorted(state)


def bicubic_upsample(lr: torch.Tensor, scale: int = 2) -> torch.Tensor:
    """Baseline upscaler on channel-last batches, clamped to [0, 1]."""
    up = F.interpolate(to_nchw(lr), scale_factor=scale, mode="bicubic", align_corners=False)
    return to_nhwc(up).clamp(0.0, 1.0)


def build_model(
    model_cfg: ModelConfig,
    schedule_cfg: ScheduleConfig,
    tpg: CRNN,
    with_tpem: bool = True,
) -> PeanModel:
    return PeanModel(model_cfg, schedule_cfg, tpg, with_tpem=with_tpem)


def shallow_extract(model: PeanModel, lr: torch.Tensor) -> torch.Tensor:
    return model.shallow_extract(lr)


def arm_logits(model: PeanModel, feature: torch.Tensor) -> torch.Tensor:
    return model.arm_logits(feature)
