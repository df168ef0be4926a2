import pytest
import torch

from bridge.splits import (
    SplitConfigError,
    build_split,
    candidate_split_layers,
    composed_logits,
    full_logits,
    resolve_add_by_fraction,
)


def test_vgg16_edge_fraction_matches_protocol():
    split = build_split("vgg16", "block4_pool")
    assert abs(100 * split.edge_param_fraction - 5.52) <= 0.1


def test_resnet34_edge_fraction_matches_protocol():
    split = build_split("resnet34", "add_7")
    assert abs(100 * split.edge_param_fraction - 6.19) <= 0.1


def test_add_7_is_the_fraction_nearest_addition():
    assert resolve_add_by_fraction("resnet34", 0.0619) == "add_7"


@pytest.mark.parametrize("model,layer", [("vgg16", "block4_pool"), ("resnet34", "add_7")])
def test_split_consistency(model, layer):
    split = build_split(model, layer, init_seed=3)
    torch.manual_seed(1)
    batch = torch.randn(2, 3, 224, 224)
    full = full_logits(split, batch)
    comp = composed_logits(split, batch)
    rel = (full - comp).abs().max().item() / full.abs().max().item()
    assert rel <= 1e-4


def test_edge_output_shapes():
    torch.manual_seed(0)
    batch = torch.randn(1, 3, 224, 224)
    with torch.no_grad():
        vgg = build_split("vgg16", "block4_pool").edge(batch)
        res = build_split("resnet34", "add_7").edge(batch)
    assert tuple(vgg.shape) == (1, 512, 14, 14)
    assert tuple(res.shape) == (1, 128, 28, 28)


def test_unknown_layer_lists_candidates():
    with pytest.raises(SplitConfigError) as err:
        build_split("vgg16", "block9_pool")
    assert "block4_pool" in str(err.value)
    with pytest.raises(SplitConfigError) as err:
        build_split("resnet34", "add_99")
    assert "add_7" in str(err.value)


def test_unknown_model_rejected():
    with pytest.raises(SplitConfigError):
        build_split("alexnet", "features")
    with pytest.raises(SplitConfigError):
        candidate_split_layers("alexnet")


def test_resnet_candidates_cover_all_blocks():
    assert candidate_split_layers("resnet34") == [f"add_{k}" for k in range(1, 17)]


def test_seeded_init_is_reproducible():
    a = build_split("resnet34", "add_7", init_seed=5)
    b = build_split("resnet34", "add_7", init_seed=5)
    pa = next(iter(a.full.parameters()))
    pb = next(iter(b.full.parameters()))
    assert torch.equal(pa, pb)
