"""Prior alignment and the attention-based modulation stack."""

from pean.amm.block import AmmBlock, AttentionModulation, amm_forward
from pean.amm.fam import FeatureAlignment, fam_align
from pean.amm.gam import GlobalAttention, MergedAxisAttention
from pean.amm.lam import LocalAttention, StripAttention

__all__ = [
    "AmmBlock",
    "AttentionModulation",
    "FeatureAlignment",
    "GlobalAttention",
    "LocalAttention",
    "MergedAxisAttention",
    "StripAttention",
    "amm_forward",
    "fam_align",
]
