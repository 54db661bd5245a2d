"""Unit tests for CTC, greedy decoding and the CRNN recognizer."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from pean.core.config import ModelConfig
from pean.core.errors import CTCError, ShapeError
from pean.core.types import CHARSET
from pean.nn import grad_check
from pean.recognizer import (
    CRNN,
    batch_greedy_decode,
    build_recognizer,
    ctc_greedy_decode,
    ctc_loss,
    recognize,
)


def collapse(path) -> tuple[int, ...]:
    out = []
    prev = None
    for s in path:
        if s != prev and s != 0:
            out.append(s)
        prev = s
    return tuple(out)


def brute_force_ctc(log_probs: np.ndarray, label: list[int]) -> float:
    """-log sum over every frame path that collapses to ``label``."""
    seq_len, alphabet = log_probs.shape
    target = tuple(label)
    total = 0.0
    for path in itertools.product(range(alphabet), repeat=seq_len):
        if collapse(path) == target:
            total += math.exp(sum(log_probs[t, s] for t, s in enumerate(path)))
    return -math.log(total)


def make_recognizer(**kw) -> CRNN:
    torch.manual_seed(0)
    defaults = dict(channels=(8, 8, 8), lstm_hidden=8)
    defaults.update(kw)
    return CRNN(**defaults)


def one_hot_frames(indices: list[int], num_classes: int = 37) -> torch.Tensor:
    return F.one_hot(torch.tensor(indices), num_classes).double()


# ------------------------------------------------------------------ CTC loss


class TestCtcLoss:
    def test_single_frame(self):
        logits = torch.tensor([[0.3, 1.2, -0.5]], dtype=torch.float64)
        expected = -torch.log_softmax(logits, dim=-1)[0, 1]
        assert ctc_loss(logits, [1]).item() == pytest.approx(expected.item(), abs=1e-9)

    def test_two_frames_by_hand(self):
        logits = torch.tensor([[0.1, 0.7], [0.4, -0.2]], dtype=torch.float64)
        p = torch.softmax(logits, dim=-1)
        likelihood = p[0, 1] * p[1, 1] + p[0, 0] * p[1, 1] + p[0, 1] * p[1, 0]
        assert ctc_loss(logits, [1]).item() == pytest.approx(-math.log(likelihood.item()), abs=1e-9)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 1000:
            seq_len = int(rng.integers(1, 7))
            alphabet = int(rng.integers(2, 5))
            label = [int(v) for v in rng.integers(1, alphabet, size=int(rng.integers(1, 4)))]
            if sum(1 for a, b in zip(label, label[1:]) if a == b) + len(label) > seq_len:
                continue
            logits = torch.from_numpy(rng.normal(size=(seq_len, alphabet)))
            ours = ctc_loss(logits, label).item()
            oracle = brute_force_ctc(torch.log_softmax(logits, dim=-1).numpy(), label)
            assert ours == pytest.approx(oracle, abs=1e-6)
            checked += 1

    def test_batch_is_mean(self):
        logits = torch.randn(2, 5, 4, dtype=torch.float64)
        labels = [[1, 2], [3]]
        batch = ctc_loss(logits, labels).item()
        singles = [ctc_loss(logits[i], labels[i]).item() for i in range(2)]
        assert batch == pytest.approx(sum(singles) / 2)

    def test_gradient(self):
        logits = torch.randn(6, 4, dtype=torch.float64, requires_grad=True)
        report = grad_check(lambda: ctc_loss(logits, [1, 1, 2]), [logits])
        assert report.passed, report.worst

    def test_label_too_long_for_frames(self):
        with pytest.raises(CTCError):
            ctc_loss(torch.randn(3, 4), [1, 1, 2])

    def test_blank_in_label(self):
        with pytest.raises(CTCError):
            ctc_loss(torch.randn(4, 4), [1, 0])

    def test_empty_label(self):
        with pytest.raises(CTCError):
            ctc_loss(torch.randn(4, 4), [])

    def test_index_out_of_range(self):
        with pytest.raises(CTCError):
            ctc_loss(torch.randn(4, 4), [5])


# ------------------------------------------------------------------ decoding


class TestGreedyDecode:
    def test_collapse_rule(self):
        a = CHARSET.index("a")
        assert ctc_greedy_decode(one_hot_frames([a, a, 0, a])) == "aa"

    def test_all_blank(self):
        assert ctc_greedy_decode(one_hot_frames([0] * 26)) == ""

    def test_interleaved_word(self):
        c, a, t = (CHARSET.index(ch) for ch in "cat")
        assert ctc_greedy_decode(one_hot_frames([0, c, c, 0, a, 0, 0, t, t])) == "cat"

    def test_batch(self):
        a, b = CHARSET.index("a"), CHARSET.index("b")
        probs = torch.stack([one_hot_frames([a, 0, b]), one_hot_frames([b, b, b])])
        assert batch_greedy_decode(probs) == ["ab", "b"]

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            ctc_greedy_decode(torch.zeros(2, 3, 4))


# ------------------------------------------------------------------ network


class TestCrnn:
    def setup_method(self):
        self.model = make_recognizer().eval()

    def test_output_shape_lr_and_hr(self):
        assert self.model(torch.rand(2, 16, 64, 3)).shape == (2, 26, 37)
        assert self.model(torch.rand(2, 32, 128, 3)).shape == (2, 26, 37)

    def test_hr_stem_is_average_pool(self):
        hr = torch.rand(1, 32, 128, 3)
        pooled = F.avg_pool2d(hr.permute(0, 3, 1, 2), 2).permute(0, 2, 3, 1)
        assert torch.allclose(self.model(hr), self.model(pooled), atol=1e-6)

    def test_rejects_other_sizes(self):
        with pytest.raises(ShapeError):
            self.model(torch.rand(1, 20, 64, 3))
        with pytest.raises(ShapeError):
            make_recognizer(stem=False)(torch.rand(1, 32, 128, 3))

    def test_rows_are_distributions(self):
        probs = recognize(self.model, torch.rand(3, 16, 64, 3))
        assert torch.allclose(probs.sum(dim=-1), torch.ones(3, 26), atol=1e-5)

    def test_single_image(self):
        assert recognize(self.model, np.random.rand(16, 64, 3).astype(np.float32)).shape == (26, 37)

    def test_eval_deterministic(self):
        x = torch.rand(2, 16, 64, 3)
        assert torch.equal(recognize(self.model, x), recognize(self.model, x))

    def test_batch_permutation_equivariant(self):
        x = torch.rand(4, 16, 64, 3)
        perm = torch.tensor([2, 0, 3, 1])
        assert torch.allclose(recognize(self.model, x)[perm], recognize(self.model, x[perm]), atol=1e-6)

    def test_recognize_keeps_mode(self):
        model = make_recognizer().train()
        recognize(model, torch.rand(2, 16, 64, 3))
        assert model.training

    def test_build_from_config(self):
        cfg = ModelConfig(recognizer_channels=(4, 6, 8), lstm_hidden=5)
        model = build_recognizer(cfg, in_channels=7, stem=False)
        assert model(torch.rand(1, 16, 64, 7)).shape == (1, 26, 37)


class TestAuxiliaryHeadGradient:
    def test_arm_with_ctc_loss(self):
        torch.manual_seed(0)
        arm = CRNN(in_channels=2, channels=(2, 2, 2), lstm_hidden=2, stem=False).double().train()
        feature = torch.randn(2, 16, 64, 2, dtype=torch.float64)
        labels = [CHARSET.encode("ab"), CHARSET.encode("7")]
        report = grad_check(lambda: ctc_loss(arm(feature), labels), arm, max_entries_per_param=3)
        assert report.passed, report.worst
