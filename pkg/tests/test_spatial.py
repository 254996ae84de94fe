import numpy as np
import pytest

from dscx.errors import ShapeMismatch
from dscx.heatmap import Detection, render_heatmap
from dscx.nn import Tensor
from dscx.nn import functional as F
from dscx.nn.gradcheck import check_gradients
from dscx.spatial import SpatialConfig, SpatialExtractor, extract_spatial
from helpers import jitter

MINI = SpatialConfig(width=16, height=9, stem_channels=(2, 3, 4), branch_channels=2)


def test_default_grid_is_32_by_18():
    assert SpatialConfig().grid == (32, 18)
    assert SpatialConfig().feature_size == 576
    assert MINI.grid == (2, 2)


def test_feature_shape_default_resolution():
    ext = SpatialExtractor(SpatialConfig(), np.random.default_rng(0))
    hm = render_heatmap([Detection(10, 20, 120, 100, "pedestrian")])
    assert extract_spatial(hm, ext).shape == (1, 32, 18)


def test_batched_forward_matches_single():
    ext = SpatialExtractor(MINI, np.random.default_rng(1))
    maps = np.random.default_rng(2).uniform(0, 5, size=(3, 1, 9, 16))
    batched = ext(maps).data
    assert batched.shape == (3, 1, 2, 2)
    for i in range(3):
        np.testing.assert_allclose(batched[i], ext(maps[i]).data, rtol=1e-12, atol=1e-12)


def test_zero_map_with_zero_biases_gives_zero_feature():
    ext = SpatialExtractor(SpatialConfig(), np.random.default_rng(0))
    out = ext(np.zeros((144, 256))).data
    np.testing.assert_array_equal(out, np.zeros((1, 32, 18)))


def test_stem_is_linear_in_input_before_relu():
    ext = SpatialExtractor(MINI, np.random.default_rng(3))
    x = np.random.default_rng(4).uniform(0, 3, size=(9, 16))
    first = ext.stem_preactivations(x)[0].data
    doubled = ext.stem_preactivations(2 * x)[0].data
    np.testing.assert_array_equal(doubled, 2 * first)


def test_wrong_resolution_rejected():
    ext = SpatialExtractor(MINI, np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        ext(np.zeros((10, 16)))
    with pytest.raises(ShapeMismatch):
        extract_spatial(np.zeros((2, 9, 16)), ext)


def test_gradcheck_miniature_spatial():
    ext = jitter(SpatialExtractor(MINI, np.random.default_rng(5)), seed=6)
    x = Tensor(np.random.default_rng(7).uniform(0, 4, size=(2, 1, 9, 16)))
    proj = np.random.default_rng(8).normal(size=(2, 1, 2, 2))
    result = check_gradients(lambda: F.sum(F.mul(ext(x), proj)), [x] + ext.parameters(), h=1e-5)
    assert result.passed(1e-4), result


def test_parameter_names_are_stable():
    names = [n for n, _ in SpatialExtractor(MINI, np.random.default_rng(0)).named_parameters()]
    assert names[0] == "stem.0.weight"
    assert "blocks.1.branches.3.weight" in names
    assert names[-1] == "head.bias"
