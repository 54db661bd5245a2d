"""Deterministic rendering of paired HR/LR word crops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from pean.core.types import CHARSET, HR_SIZE, Difficulty, TextImagePair
from pean.data.font import GLYPH_HEIGHT, text_mask

# (blur sigma, noise std) per difficulty tier
DEGRADATION: dict[Difficulty, tuple[float, float]] = {
    Difficulty.EASY: (0.5, 0.01),
    Difficulty.MEDIUM: (1.0, 0.02),
    Difficulty.HARD: (1.8, 0.04),
}

_MARGIN = 2  # px kept clear on each side of the HR canvas


@dataclass
class RenderStyle:
    """How a word is drawn and degraded. ``None`` overrides fall back to the tier."""

    difficulty: Difficulty = Difficulty.EASY
    font_scale: float = 0.6  # glyph height as a fraction of the HR height
    fg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bg: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shear: float = 0.0
    blur_sigma: float | None = None
    noise_std: float | None = None

    @property
    def sigma(self) -> float:
        return DEGRADATION[self.difficulty][0] if self.blur_sigma is None else self.blur_sigma

    @property
    def noise(self) -> float:
        return DEGRADATION[self.difficulty][1] if self.noise_std is None else self.noise_std


def sample_text(rng: np.random.Generator, min_len: int, max_len: int) -> str:
    """
    Uniform length, then uniform symbols over the non-blank charset.

    Draws that would not fit the CTC frames (too many repeated pairs) are redrawn.
    """
    symbols = [s for i, s in enumerate(CHARSET.symbols) if i != CHARSET.blank_index]
    while True:
        n = int(rng.integers(min_len, max_len + 1))
        text = "".join(symbols[int(i)] for i in rng.integers(0, len(symbols), size=n))
        if CHARSET.is_valid(text):
            return text


def _luminance(rgb: tuple[float, float, float]) -> float:
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


def sample_style(rng: np.random.Generator, difficulty: Difficulty) -> RenderStyle:
    """Random colors with at least 0.4 luminance contrast, random scale, mild shear."""
    while True:
        fg = tuple(float(v) for v in rng.uniform(0.0, 1.0, size=3))
        bg = tuple(float(v) for v in rng.uniform(0.0, 1.0, size=3))
        if abs(_luminance(fg) - _luminance(bg)) >= 0.4:  # type: ignore[arg-type]
            break
    return RenderStyle(
        difficulty=difficulty,
        font_scale=float(rng.uniform(0.45, 0.75)),
        fg=fg,  # type: ignore[arg-type]
        bg=bg,  # type: ignore[arg-type]
        shear=float(rng.uniform(-0.15, 0.15)),
    )


def _coverage(text: str, style: RenderStyle) -> np.ndarray:
    """Anti-aliased ink coverage on the HR canvas, float32 in [0, 1]."""
    h_canvas, w_canvas = HR_SIZE
    mask = text_mask(text)
    scale = min(
        style.font_scale * h_canvas / GLYPH_HEIGHT,
        (w_canvas - 2 * _MARGIN) / mask.shape[1],
    )
    gh = max(1, round(mask.shape[0] * scale))
    gw = max(1, round(mask.shape[1] * scale))
    glyphs = Image.fromarray(mask * 255).resize((gw, gh), Image.Resampling.BILINEAR)

    canvas = Image.new("L", (w_canvas, h_canvas), 0)
    canvas.paste(glyphs, ((w_canvas - gw) // 2, (h_canvas - gh) // 2))
    if style.shear:
        # x_src = x + shear * (y - h/2): slants about the horizontal midline
        canvas = canvas.transform(
            canvas.size,
            Image.Transform.AFFINE,
            (1.0, style.shear, -style.shear * h_canvas / 2, 0.0, 1.0, 0.0),
            resample=Image.Resampling.BILINEAR,
        )
    return np.asarray(canvas, dtype=np.float32) / 255.0


def box_downsample(img: np.ndarray, factor: int = 2) -> np.ndarray:
    """Mean over non-overlapping ``factor x factor`` cells of an [H, W, C] image."""
    h, w, c = img.shape
    return img.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))


def degrade(hr: np.ndarray, sigma: float, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian blur, 2x box downsampling, additive Gaussian noise, clip to [0, 1]."""
    blurred = hr
    if sigma > 0:
        blurred = np.stack(
            [gaussian_filter(hr[..., c], sigma=sigma, mode="reflect") for c in range(hr.shape[-1])],
            axis=-1,
        ).astype(np.float32)
    lr = box_downsample(blurred)
    if noise_std > 0:
        lr = lr + rng.normal(0.0, noise_std, size=lr.shape).astype(np.float32)
    return np.clip(lr, 0.0, 1.0).astype(np.float32)


def render_pair(text: str, style: RenderStyle, seed: int) -> TextImagePair:
    """
    Render ``text`` crisply at 32x128 and derive its degraded 16x64 counterpart.

    The output depends only on ``(text, style, seed)``; the seed drives the
    noise draw of the degradation.
    """
    CHARSET.encode(text)

    ink = _coverage(text, style)[..., None]
    fg = np.asarray(style.fg, dtype=np.float32)
    bg = np.asarray(style.bg, dtype=np.float32)
    hr = (bg * (1.0 - ink) + fg * ink).astype(np.float32)

    rng = np.random.default_rng(seed)
    lr = degrade(hr, style.sigma, style.noise, rng)
    return TextImagePair(lr=lr, hr=hr, text=text, difficulty=style.difficulty)
