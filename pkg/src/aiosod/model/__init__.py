from aiosod.model.attention import Attention, Block, TokenTransformer, scaled_dot_attention
from aiosod.model.backbone import T2TBackbone
from aiosod.model.fusion import (CBAM, DualConv, FeatureFusionModule, MultiLevelFusion,
                                 PredictionHead, TokenFusionModule)
from aiosod.model.network import AiOSOD, model_forward
from aiosod.model.norms import batchnorm_apply, interference_metric, layernorm_apply
from aiosod.model.tokens import TokenSequence, reduce_channels, soft_split, split_batch

__all__ = [
    "AiOSOD", "Attention", "Block", "CBAM", "DualConv", "FeatureFusionModule", "MultiLevelFusion",
    "PredictionHead", "T2TBackbone", "TokenFusionModule", "TokenSequence", "TokenTransformer",
    "batchnorm_apply", "interference_metric", "layernorm_apply", "model_forward", "reduce_channels",
    "scaled_dot_attention", "soft_split", "split_batch",
]
