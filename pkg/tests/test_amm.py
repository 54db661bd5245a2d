"""Unit tests for prior alignment, strip attention and the AMM stack."""

from __future__ import annotations

import math

import pytest
import torch

from pean.amm import (
    AmmBlock,
    AttentionModulation,
    FeatureAlignment,
    GlobalAttention,
    LocalAttention,
    MergedAxisAttention,
    amm_forward,
    fam_align,
)
from pean.core.errors import ConfigError, ShapeError
from pean.nn import attention, grad_check


def masked_strip_attention(strip, x: torch.Tensor, same_strip: torch.Tensor) -> torch.Tensor:
    """Full attention over all H*W positions with cross-strip scores masked out."""
    b, h, w, c = x.shape
    tokens = x.reshape(b, h * w, c)
    q, k, v = strip.q(tokens), strip.k(tokens), strip.v(tokens)
    scores = q @ k.transpose(1, 2) / math.sqrt(q.shape[-1])
    scores = scores.masked_fill(~same_strip, float("-inf"))
    out = torch.softmax(scores, dim=-1) @ v
    return strip.out(out).reshape(b, h, w, c)


def strip_masks(h: int, w: int) -> tuple[torch.Tensor, torch.Tensor]:
    rows = torch.arange(h).repeat_interleave(w)
    cols = torch.arange(w).repeat(h)
    return rows[:, None] == rows[None, :], cols[:, None] == cols[None, :]


def naive_merged_attention(module: MergedAxisAttention, tokens: torch.Tensor) -> torch.Tensor:
    """Explicit loops over tokens: softmax(q_i . k_j / sqrt(d)) weighted sum of merged values."""
    n, t, s, c = tokens.shape
    merged = tokens.reshape(n, t, s * c)
    q, k = module.q(merged), module.k(merged)
    values = module.v(tokens).reshape(n, t, s * c)
    out = torch.zeros_like(values)
    for b in range(n):
        for i in range(t):
            scores = torch.stack([q[b, i] @ k[b, j] for j in range(t)]) / math.sqrt(q.shape[-1])
            weights = torch.softmax(scores, dim=0)
            out[b, i] = sum(weights[j] * values[b, j] for j in range(t))
    return module.out(out.reshape(n, t, s, c))


def make_prior(batch: int, dtype=torch.float32) -> torch.Tensor:
    return torch.softmax(torch.randn(batch, 26, 37, dtype=dtype), dim=-1)


# ------------------------------------------------------------------ FAM


class TestFeatureAlignment:
    def test_shape(self):
        fam = FeatureAlignment(8, dim=16, zero_init=False)
        f_s = torch.randn(2, 16, 64, 8)
        assert fam_align(fam, f_s, make_prior(2)).shape == f_s.shape

    def test_zero_value_projection_is_identity(self):
        fam = FeatureAlignment(8, dim=16, zero_init=True)
        f_s = torch.randn(2, 16, 64, 8)
        assert torch.equal(fam(f_s, make_prior(2)), f_s)

    def test_batch_permutation(self):
        torch.manual_seed(0)
        fam = FeatureAlignment(4, dim=8, zero_init=False)
        f_s, prior = torch.randn(3, 16, 64, 4), make_prior(3)
        perm = torch.tensor([2, 0, 1])
        assert torch.allclose(fam(f_s, prior)[perm], fam(f_s[perm], prior[perm]), atol=1e-6)

    def test_prior_changes_output(self):
        torch.manual_seed(0)
        fam = FeatureAlignment(4, dim=8, zero_init=False)
        f_s = torch.randn(1, 16, 64, 4)
        assert not torch.allclose(fam(f_s, make_prior(1)), fam(f_s, make_prior(1)))

    def test_rejects_bad_prior(self):
        fam = FeatureAlignment(4, dim=8)
        with pytest.raises(ShapeError):
            fam(torch.randn(1, 16, 64, 4), torch.randn(1, 25, 37))
        with pytest.raises(ShapeError):
            fam(torch.randn(1, 8, 64, 4), make_prior(1))


# ------------------------------------------------------------------ LAM


class TestLocalAttention:
    def setup_method(self):
        torch.manual_seed(0)
        self.lam = LocalAttention(8, ffn_ratio=2, zero_init=False).double()

    def test_branches_match_masked_full_attention(self):
        same_row, same_col = strip_masks(4, 6)
        g = torch.Generator().manual_seed(1)
        for _ in range(200):
            x = torch.randn(1, 4, 6, 8, generator=g, dtype=torch.float64)
            with torch.no_grad():
                h = self.lam.horizontal_branch(x)
                v = self.lam.vertical_branch(x)
                assert torch.allclose(h, masked_strip_attention(self.lam.horizontal, x, same_row), atol=1e-5)
                assert torch.allclose(v, masked_strip_attention(self.lam.vertical, x, same_col), atol=1e-5)

    def test_single_row_is_full_attention(self):
        x = torch.randn(2, 1, 6, 8, dtype=torch.float64)
        strip = self.lam.horizontal
        tokens = x[:, 0]
        expected = strip.out(attention(strip.q(tokens), strip.k(tokens), strip.v(tokens)))
        assert torch.allclose(self.lam.horizontal_branch(x)[:, 0], expected)

    def test_row_locality(self):
        x = torch.randn(1, 4, 6, 8, dtype=torch.float64)
        probe = x.clone()
        probe[:, 2] = 0.0
        before, after = self.lam.horizontal_branch(x), self.lam.horizontal_branch(probe)
        changed = (before - after).abs().amax(dim=(0, 2, 3)) > 0
        assert changed.tolist() == [False, False, True, False]

    def test_zero_init_is_identity(self):
        lam = LocalAttention(8, zero_init=True)
        x = torch.randn(2, 4, 6, 8)
        assert torch.equal(lam(x), x)

    def test_shape(self):
        assert self.lam(torch.randn(2, 4, 6, 8, dtype=torch.float64)).shape == (2, 4, 6, 8)
        with pytest.raises(ShapeError):
            self.lam(torch.randn(2, 4, 6, 7, dtype=torch.float64))


# ------------------------------------------------------------------ GAM


class TestGlobalAttention:
    def setup_method(self):
        torch.manual_seed(0)
        self.gam = GlobalAttention(8, size=(4, 6), qk_dim=16, ffn_ratio=2, zero_init=False).double()

    def test_horizontal_matches_naive_reshape(self):
        g = torch.Generator().manual_seed(2)
        for _ in range(200):
            x = torch.randn(1, 4, 6, 8, generator=g, dtype=torch.float64)
            with torch.no_grad():
                got = self.gam.horizontal_branch(x)
                expected = naive_merged_attention(self.gam.horizontal, x)
            assert torch.allclose(got, expected, atol=1e-5)

    def test_vertical_matches_naive_reshape(self):
        x = torch.randn(2, 4, 6, 8, dtype=torch.float64)
        with torch.no_grad():
            got = self.gam.vertical_branch(x)
            expected = naive_merged_attention(self.gam.vertical, x.permute(0, 2, 1, 3)).permute(0, 2, 1, 3)
        assert torch.allclose(got, expected, atol=1e-5)

    def test_single_token_passes_values(self):
        module = MergedAxisAttention(8, span=6, qk_dim=4).double()
        x = torch.randn(2, 1, 6, 8, dtype=torch.float64)
        assert torch.allclose(module(x), module.out(module.v(x)))

    def test_zero_init_is_identity(self):
        gam = GlobalAttention(8, size=(4, 6), qk_dim=16, zero_init=True)
        x = torch.randn(2, 4, 6, 8)
        assert torch.equal(gam(x), x)

    def test_rejects_wrong_size(self):
        with pytest.raises(ShapeError):
            self.gam(torch.randn(1, 4, 5, 8, dtype=torch.float64))


# ------------------------------------------------------------------ AMM stack


def make_stack(num_blocks: int = 2, zero_init: bool = False, **kw) -> AttentionModulation:
    torch.manual_seed(0)
    return AttentionModulation(
        4, num_blocks=num_blocks, size=(4, 6), ffn_ratio=1, qk_dim=8, zero_init=zero_init, **kw
    )


class TestAttentionModulation:
    def test_taps_two_per_block(self):
        stack = make_stack(3)
        out, taps, outputs = stack(torch.randn(2, 4, 6, 4))
        assert len(taps) == 6
        assert len(outputs) == 3
        assert out.shape == (2, 4, 6, 4)
        assert torch.equal(taps[-1], out)

    def test_single_block_matches_manual(self):
        stack = make_stack(1)
        f_a = torch.randn(1, 4, 6, 4)
        manual, _ = stack.blocks[0](f_a, f_a)
        out, _, _ = stack(f_a)
        assert torch.equal(out, manual)

    def test_block_count_checked(self):
        stack = make_stack(2)
        f_a = torch.randn(1, 4, 6, 4)
        with pytest.raises(ConfigError):
            amm_forward(f_a, f_a, list(stack.blocks), expected_blocks=3)

    def test_disabled_modules_are_identity(self):
        torch.manual_seed(0)
        block = AmmBlock(4, size=(4, 6), qk_dim=8, use_lam=False, use_gam=False)
        f_a = torch.randn(1, 4, 6, 4)
        out, taps = block(f_a, f_a)
        projected = block.project(torch.cat([f_a, f_a], dim=-1))
        assert torch.equal(out, projected)
        assert len(taps) == 2

    def test_zero_init_block_is_projection(self):
        torch.manual_seed(0)
        block = AmmBlock(4, size=(4, 6), qk_dim=8, zero_init=True)
        f_a, f_prev = torch.randn(1, 4, 6, 4), torch.randn(1, 4, 6, 4)
        out, _ = block(f_prev, f_a)
        assert torch.equal(out, block.project(torch.cat([f_prev, f_a], dim=-1)))

    def test_two_block_gradient(self):
        stack = make_stack(2).double()
        f_a = torch.randn(1, 4, 6, 4, dtype=torch.float64)
        report = grad_check(lambda: stack(f_a)[0].pow(2).mean(), stack, max_entries_per_param=3)
        assert report.passed, report.worst
