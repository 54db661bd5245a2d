"""CNN-BiLSTM recognizer emitting a fixed 26-frame CTC sequence."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from pean.core.config import ModelConfig
from pean.core.errors import ShapeError
from pean.core.types import HR_SIZE, LR_SIZE, NUM_CLASSES, SEQ_LEN
from pean.nn.layers import Mish


def _conv_bn_mish(in_ch: int, out_ch: int, kernel: int | tuple[int, int] = 3, padding: int | tuple[int, int] = 1) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(in_ch, out_ch, kernel, padding=padding), nn.BatchNorm2d(out_ch), Mish())


class CRNN(nn.Module):
    """
    Six conv+BN+Mish layers, a 2-layer bidirectional LSTM and a linear head.

    The pooling schedule takes a 16x64 map to one row of 32 columns; the last
    conv (kernel 1x7, no padding) trims that to exactly 26 frames. 32x128
    inputs go through a 2x average-pool stem first. With ``stem=False`` the
    network reads a 16x64 feature map of ``in_channels`` channels, which is
    how the auxiliary recognition head reuses this template.
    """

    def __init__(
        self,
        in_channels: int = 3,
        channels: tuple[int, int, int] = (32, 64, 128),
        lstm_hidden: int = 128,
        num_classes: int = NUM_CLASSES,
        stem: bool = True,
    ) -> None:
        super().__init__()
        c1, c2, c3 = channels
        self._stem = stem
        self.in_channels = in_channels
        self.features = nn.Sequential(
            _conv_bn_mish(in_channels, c1),
            nn.AvgPool2d(2),  # 8 x 32
            _conv_bn_mish(c1, c2),
            nn.AvgPool2d((2, 1)),  # 4 x 32
            _conv_bn_mish(c2, c3),
            _conv_bn_mish(c3, c3),
            nn.AvgPool2d((2, 1)),  # 2 x 32
            _conv_bn_mish(c3, c3),
            nn.AvgPool2d((2, 1)),  # 1 x 32
            _conv_bn_mish(c3, c3, kernel=(1, 7), padding=0),  # 1 x 26
        )
        self.rnn = nn.LSTM(c3, lstm_hidden, num_layers=2, bidirectional=True, batch_first=True)
        self.head = nn.Linear(2 * lstm_hidden, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """``x``: [B, H, W, C] channel-last -> logits [B, 26, num_classes]."""
        if x.dim() != 4 or x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"Recognizer expects [B, H, W, {self.in_channels}] input, got {tuple(x.shape)}"
            )
        size = tuple(x.shape[1:3])
        x = x.permute(0, 3, 1, 2)
        if self._stem and size == HR_SIZE:
            x = nn.functional.avg_pool2d(x, 2)
        elif size != LR_SIZE:
            raise ShapeError(f"Unsupported recognizer input size {size}")
        feats = self.features(x)  # [B, C, 1, 26]
        seq = feats.squeeze(2).transpose(1, 2)  # [B, 26, C]
        out, _ = self.rnn(seq)
        logits = self.head(out)
        if logits.shape[1] != SEQ_LEN:
            raise ShapeError(f"Recognizer produced {logits.shape[1]} frames, expected {SEQ_LEN}")
        return logits


def recognize(model: CRNN, images: torch.Tensor | np.ndarray) -> torch.Tensor:
    """
    Row-stochastic prior sequence ``softmax(model(images))``.

    Accepts one image ``[H, W, 3]`` or a batch; returns ``[26, 37]`` or
    ``[B, 26, 37]`` accordingly. The model's train/eval mode is left untouched.
    """
    x = torch.as_tensor(images)
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    param = next(model.parameters())
    probs = torch.softmax(model(x.to(dtype=param.dtype)), dim=-1)
    return probs[0] if single else probs


def build_recognizer(cfg: ModelConfig, in_channels: int = 3, stem: bool = True) -> CRNN:
    return CRNN(
        in_channels=in_channels,
        channels=tuple(cfg.recognizer_channels),  # type: ignore[arg-type]
        lstm_hidden=cfg.lstm_hidden,
        stem=stem,
    )
