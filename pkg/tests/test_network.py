from dataclasses import replace

import numpy as np
import pytest
import torch

from aiosod.config import ABLATIONS, ModelConfig
from aiosod.data.loading import PairedBatch
from aiosod.metrics.cost import count_params
from aiosod.model.network import AiOSOD, model_forward


@pytest.fixture(scope="module")
def desk_model():
    from aiosod.config import desk_scale
    return AiOSOD.build(desk_scale().model, dtype=torch.float64).eval()


def rand(b, s, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(b, 3, s, s, generator=g, dtype=torch.float64)


def test_output_shape_and_range(desk_model):
    s = desk_model.config.input_size
    with torch.no_grad():
        y = desk_model(rand(2, s), rand(2, s, 1))
    assert y.shape == (2, 1, s, s)
    assert ((y > 0) & (y < 1)).all()


def test_fast_path_equals_duplicated_pair(desk_model):
    s = desk_model.config.input_size
    x = rand(3, s)
    with torch.no_grad():
        fast = desk_model(x)
        paired = desk_model(x, x.clone())
    assert torch.allclose(fast, paired, rtol=0, atol=1e-12)


def test_pairs_do_not_interact(desk_model):
    s = desk_model.config.input_size
    x, a = rand(2, s), rand(2, s, 1)
    with torch.no_grad():
        both = desk_model(x, a)
        first = desk_model(x[:1], a[:1])
    assert torch.allclose(both[:1], first, atol=1e-12)


def test_model_forward_checks_layout(desk_model):
    s = desk_model.config.input_size
    x = rand(2, s).numpy()
    gts = np.zeros((2, 1, s, s), np.float32)
    ok = PairedBatch(np.concatenate([x, x]), gts, "rgb", ["a", "b"])
    assert model_forward(desk_model, ok).shape == (2, 1, s, s)
    bad = PairedBatch(np.concatenate([x, x[::-1]]), gts, "rgb", ["a", "b"])
    with pytest.raises(ValueError, match="duplicate"):
        model_forward(desk_model, bad)
    with pytest.raises(ValueError, match="pairs"):
        model_forward(desk_model, PairedBatch(np.concatenate([x, x]), gts, "rgbd", ["a"]))
    with pytest.raises(ValueError, match="modality"):
        model_forward(desk_model, PairedBatch(np.concatenate([x, x]), gts, "rgbx", ["a", "b"]))


def test_seeded_build_is_reproducible(desk):
    a, b = AiOSOD.build(desk.model), AiOSOD.build(desk.model)
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    c = AiOSOD.build(replace(desk.model, seed=1))
    assert not all(torch.equal(p, q) for p, q in zip(a.parameters(), c.parameters()))


def test_default_parameter_breakdown():
    counts = count_params(AiOSOD(ModelConfig()))
    assert counts["backbone"] == 5_473_558
    assert counts["tfm"] == 290_240
    assert [counts[f"decoder.{i}"] for i in range(3)] == [74_466] * 3
    assert counts["mffm"] == 141_568
    assert counts["total"] == 6_151_549
    parts = ("backbone", "reduce", "tfm", "decoder", "mffm", "head")
    assert sum(counts[k] for k in parts) == counts["total"]


def test_ablation_ladder_is_increasing():
    totals = [count_params(AiOSOD(replace(ModelConfig(), **flags)))["total"] for flags in ABLATIONS.values()]
    assert totals == sorted(totals) and len(set(totals)) == 4


def test_batch_norm_variant_runs(desk):
    m = AiOSOD.build(replace(desk.model, norm="batch")).train()
    s = desk.model.input_size
    assert m(rand(2, s).float(), rand(2, s, 1).float()).shape == (2, 1, s, s)
