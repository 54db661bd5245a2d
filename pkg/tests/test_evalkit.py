"""Unit tests for image metrics, word accuracy, CKA and split evaluation."""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch
from PIL import Image

from pean.core.config import ModelConfig, ScheduleConfig
from pean.core.errors import MetricError
from pean.core.types import Difficulty
from pean.data import PairListDataset, render_pair, sample_style
from pean.evalkit import (
    CkaMatrix,
    EvalReport,
    accuracy,
    cka_matrix,
    cka_study,
    evaluate_split,
    flatten_activation,
    linear_cka,
    normalize_text,
    psnr,
    save_cka_heatmap,
    save_comparison_grid,
    ssim,
    to_gray,
    weighted_average,
)
from pean.recognizer.model import CRNN
from pean.srnet.model import PeanModel, build_model


def naive_ssim(x: np.ndarray, y: np.ndarray, radius: int = 5, sigma: float = 1.5) -> float:
    """Mean SSIM over every window that fits entirely inside the image."""
    offsets = np.arange(-radius, radius + 1)
    g = np.exp(-(offsets**2) / (2 * sigma**2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = 0.01**2, 0.03**2
    h, wd = x.shape
    scores = []
    for i in range(radius, h - radius):
        for j in range(radius, wd - radius):
            px = x[i - radius : i + radius + 1, j - radius : j + radius + 1]
            py = y[i - radius : i + radius + 1, j - radius : j + radius + 1]
            mx, my = (w * px).sum(), (w * py).sum()
            vx = (w * px * px).sum() - mx * mx
            vy = (w * py * py).sum() - my * my
            cxy = (w * px * py).sum() - mx * my
            scores.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


def hsic_cka(x: np.ndarray, y: np.ndarray) -> float:
    """``tr(K H L H)`` form with an explicit centering matrix."""
    n = x.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    k, l = x @ x.T, y @ y.T

    def hsic(a, b):
        return np.trace(a @ h @ b @ h)

    return hsic(k, l) / math.sqrt(hsic(k, k) * hsic(l, l))


def make_model_cfg(**kw) -> ModelConfig:
    defaults = dict(
        channels=4,
        num_blocks=2,
        ffn_ratio=1,
        gam_qk_dim=8,
        fam_dim=8,
        srm_depth=1,
        recognizer_channels=(4, 4, 4),
        lstm_hidden=4,
        zero_init_residual=False,
    )
    defaults.update(kw)
    return ModelConfig(**defaults)


def make_tpg() -> CRNN:
    torch.manual_seed(7)
    return CRNN(channels=(4, 4, 4), lstm_hidden=4).eval()


def make_model(with_tpem: bool = False, **kw) -> PeanModel:
    torch.manual_seed(0)
    return build_model(make_model_cfg(**kw), ScheduleConfig(T=10, S=1), make_tpg(), with_tpem=with_tpem).eval()


def make_dataset(n: int = 5) -> PairListDataset:
    rng = np.random.default_rng(0)
    words = ["cat", "dog", "sun", "map", "red", "fox", "pen", "owl"]
    tiers = list(Difficulty)
    pairs = []
    for i in range(n):
        tier = tiers[i % len(tiers)]
        pair = render_pair(words[i % len(words)], sample_style(rng, tier), seed=i)
        pair.difficulty = tier
        pairs.append(pair)
    return PairListDataset(pairs)


# ------------------------------------------------------------------ image metrics


class TestPsnr:
    def test_identical_is_infinite(self):
        img = np.random.default_rng(0).random((32, 128, 3))
        assert psnr(img, img) == float("inf")

    def test_known_value(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0)

    def test_accepts_tensors(self):
        a = torch.zeros(4, 4, 3)
        b = torch.full((4, 4, 3), 0.5)
        assert psnr(a, b) == pytest.approx(10 * math.log10(4.0))

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestSsim:
    def test_identical_is_one(self):
        img = np.random.default_rng(0).random((32, 128, 3))
        assert ssim(img, img) == pytest.approx(1.0)

    def test_matches_naive_windows(self):
        rng = np.random.default_rng(1)
        x = rng.random((16, 20))
        y = np.clip(x + 0.1 * rng.standard_normal((16, 20)), 0, 1)
        assert ssim(x, y) == pytest.approx(naive_ssim(x, y), abs=1e-6)

    def test_color_uses_luma(self):
        rng = np.random.default_rng(2)
        x, y = rng.random((16, 20, 3)), rng.random((16, 20, 3))
        assert ssim(x, y) == pytest.approx(naive_ssim(to_gray(x), to_gray(y)), abs=1e-6)

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        x, y = rng.random((16, 20)), rng.random((16, 20))
        assert ssim(x, y) == pytest.approx(ssim(y, x))

    def test_too_small(self):
        with pytest.raises(MetricError):
            ssim(np.zeros((8, 64)), np.zeros((8, 64)))


# ------------------------------------------------------------------ accuracy


class TestAccuracy:
    def test_normalize(self):
        assert normalize_text("Shop!") == "shop"
        assert normalize_text("A-1 b") == "a1b"

    def test_case_and_punctuation_insensitive(self):
        report = accuracy(["SHOP", "x"], ["shop.", "y"], ["easy", "easy"])
        assert report.accuracy["easy"] == 50.0

    def test_per_tier_and_weighted(self):
        preds = ["a", "b", "c", "x", "e", "f"]
        labels = ["a", "b", "c", "d", "e", "z"]
        tiers = [Difficulty.EASY, Difficulty.EASY, Difficulty.MEDIUM, Difficulty.MEDIUM, Difficulty.HARD, Difficulty.HARD]
        report = accuracy(preds, labels, tiers)
        assert report.accuracy == {"easy": 100.0, "medium": 50.0, "hard": 50.0}
        assert report.counts == {"easy": 2, "medium": 2, "hard": 2}
        assert report.weighted_average == pytest.approx(400.0 / 6)

    def test_weighted_average_published_counts(self):
        acc = {"easy": 84.5, "medium": 71.4, "hard": 52.9}
        counts = {"easy": 1619, "medium": 1411, "hard": 1343}
        assert weighted_average(acc, counts) == pytest.approx(70.6, abs=0.05)

    def test_empty_tier_excluded(self):
        report = accuracy(["a"], ["a"], ["hard"])
        assert report.counts["easy"] == 0
        assert report.weighted_average == 100.0

    def test_errors(self):
        with pytest.raises(MetricError):
            accuracy(["a"], ["a", "b"], ["easy"])
        with pytest.raises(MetricError):
            weighted_average({"easy": 1.0}, {"easy": 0})

    def test_report_dict(self):
        report = EvalReport({"easy": 1.0}, {"easy": 1}, 1.0, psnr=float("inf"), ssim=0.5, extra={"method": "hr"})
        d = report.to_dict()
        assert d["psnr"] == "inf"
        assert d["ssim"] == 0.5
        assert d["method"] == "hr"


# ------------------------------------------------------------------ CKA


class TestLinearCka:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.x = rng.standard_normal((20, 7))
        self.y = rng.standard_normal((20, 5))

    def test_self_is_one(self):
        assert linear_cka(self.x, self.x) == pytest.approx(1.0)

    def test_matches_hsic_form(self):
        assert linear_cka(self.x, self.y) == pytest.approx(hsic_cka(self.x, self.y))

    def test_matches_feature_space_form(self):
        a = self.x - self.x.mean(0)
        b = self.y - self.y.mean(0)
        expected = np.linalg.norm(b.T @ a) ** 2 / (np.linalg.norm(a.T @ a) * np.linalg.norm(b.T @ b))
        assert linear_cka(self.x, self.y) == pytest.approx(expected)

    def test_invariances(self):
        q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((7, 7)))
        base = linear_cka(self.x, self.y)
        assert linear_cka(self.x @ q, self.y) == pytest.approx(base)
        assert linear_cka(3.5 * self.x, self.y) == pytest.approx(base)
        assert linear_cka(self.x + 2.0, self.y) == pytest.approx(base)

    def test_bounded(self):
        assert 0.0 <= linear_cka(self.x, self.y) <= 1.0 + 1e-12

    def test_errors(self):
        with pytest.raises(MetricError):
            linear_cka(self.x, self.y[:10])
        with pytest.raises(MetricError):
            linear_cka(self.x[:1], self.y[:1])
        with pytest.raises(MetricError):
            linear_cka(np.ones((5, 3)), self.y[:5])

    def test_matrix_marks_undefined_entries(self):
        layers = [self.x, np.zeros((20, 4)), self.y]
        m = cka_matrix(layers, layers)
        assert m.shape == (3, 3)
        assert np.isnan(m[1]).all() and np.isnan(m[:, 1]).all()
        assert m[0, 0] == pytest.approx(1.0)
        assert m[0, 2] == pytest.approx(m[2, 0])

    def test_flatten_pools_large_layers(self):
        small = torch.randn(2, 16, 64, 4)
        large = torch.randn(2, 16, 64, 16)
        assert flatten_activation(small).shape == (2, 4096)
        pooled = flatten_activation(large)
        assert pooled.shape == (2, 16)
        assert torch.allclose(pooled, large.mean(dim=(1, 2)))


class TestCkaMatrix:
    def test_groups_and_dict(self):
        matrix = np.array([[1.0, 0.2, 0.1], [0.3, np.nan, 0.4], [0.1, 0.2, 0.5]])
        cka = CkaMatrix(matrix, n=10, amm_taps=2, prior_modes=("etp", "tp-lr"))
        means = cka.group_means()
        assert means["amm"] == pytest.approx(1.0)
        assert means["srm"] == pytest.approx(0.5)
        assert means["all"] == pytest.approx(0.75)
        d = cka.to_dict()
        assert d["diagonal"] == [1.0, None, 0.5]
        assert d["amm_layers"] == [0, 1]
        assert d["srm_layers"] == [2, 2]
        assert d["prior_modes"] == ["etp", "tp-lr"]


# ------------------------------------------------------------------ split evaluation


class TestEvaluateSplit:
    def setup_method(self):
        self.dataset = make_dataset(5)
        self.evaluator = make_tpg()

    def test_hr_ceiling(self):
        report, samples = evaluate_split(self.evaluator, self.dataset, method="hr", batch_size=2, keep=3)
        assert report.psnr == float("inf")
        assert report.ssim == pytest.approx(1.0)
        assert report.extra == {"method": "hr", "n": 5}
        assert sum(report.counts.values()) == 5
        assert len(samples.sr) == 3
        assert samples.labels == ["cat", "dog", "sun"]

    def test_bicubic_baseline(self):
        report, samples = evaluate_split(self.evaluator, self.dataset, method="bicubic")
        assert math.isfinite(report.psnr)
        assert samples.sr[0].shape == (32, 128, 3)

    def test_sr_is_seeded(self):
        model = make_model(with_tpem=True)
        a, _ = evaluate_split(self.evaluator, self.dataset, model=model, prior_source="etp", seed=3, batch_size=2)
        b, _ = evaluate_split(self.evaluator, self.dataset, model=model, prior_source="etp", seed=3, batch_size=2)
        assert a.psnr == b.psnr
        assert a.extra == {"method": "sr", "n": 5, "prior": "etp", "seed": 3}

    def test_bad_method(self):
        with pytest.raises(MetricError):
            evaluate_split(self.evaluator, self.dataset, method="nearest")
        with pytest.raises(MetricError):
            evaluate_split(self.evaluator, self.dataset, method="sr")


class TestCkaStudy:
    def setup_method(self):
        self.dataset = make_dataset(5)

    def test_self_comparison_diagonal(self):
        model = make_model()
        result = cka_study(model, model, self.dataset, prior_modes=("tp-lr", "tp-lr"), batch_size=2)
        assert result.matrix.shape == (8, 8)
        assert result.amm_taps == 4
        assert result.n == 5
        assert np.nanmax(np.abs(result.diagonal - 1.0)) < 1e-6

    def test_subsample_is_seeded(self):
        model_a, model_b = make_model(), make_model(zero_init_residual=True)
        a = cka_study(model_a, model_b, self.dataset, prior_modes=("tp-lr", "tp-lr"), n=3, seed=1)
        b = cka_study(model_a, model_b, self.dataset, prior_modes=("tp-lr", "tp-lr"), n=3, seed=1)
        assert a.n == 3
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_tap_count_mismatch(self):
        with pytest.raises(MetricError):
            cka_study(make_model(), make_model(num_blocks=3), self.dataset, prior_modes=("tp-lr", "tp-lr"))

    def test_needs_two_samples(self):
        with pytest.raises(MetricError):
            cka_study(make_model(), make_model(), make_dataset(1), prior_modes=("tp-lr", "tp-lr"))


# ------------------------------------------------------------------ plots


class TestPlots:
    def test_heatmap_written(self, tmp_path):
        matrix = np.eye(4)
        matrix[1, 1] = np.nan
        path = save_cka_heatmap(matrix, tmp_path / "sub" / "cka.png", split=2)
        with Image.open(path) as im:
            assert im.format == "PNG"

    def test_grid_written(self, tmp_path):
        rng = np.random.default_rng(0)
        lr = [rng.random((16, 64, 3)) for _ in range(3)]
        hr = [rng.random((32, 128, 3)) for _ in range(3)]
        path = save_comparison_grid(lr, hr, hr, tmp_path / "grid.png", labels=["a", "b", "c"], preds=["a", "b", "d"], max_items=2)
        with Image.open(path) as im:
            assert im.format == "PNG"
