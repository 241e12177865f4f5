import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from stillmotion.losses import (
    appearance_total_loss,
    content_loss,
    motion_total_loss,
    photometric_l2,
    spatial_pyramid_loss,
    style_loss,
    weighted_tv_loss,
)
from stillmotion.networks import FeatureExtractor, gram_features


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def oracle_weighted_tv(field: np.ndarray, guide: np.ndarray, sigma: float) -> float:
    """Literal double loop over pixels and their right/above neighbors."""
    h, w = field.shape[:2]
    total = 0.0
    for i in range(h):
        for j in range(w):
            for qi, qj in ((i, j + 1), (i - 1, j)):
                if 0 <= qi < h and 0 <= qj < w:
                    wt = math.exp(-np.abs(guide[i, j] - guide[qi, qj]).sum() / sigma)
                    total += wt * np.abs(field[i, j] - field[qi, qj]).sum()
    return total


def oracle_spatial_pyramid(a: np.ndarray, b: np.ndarray, grid: int = 32) -> float:
    """Per-cell channel means computed with explicit slicing."""
    h, w, c = a.shape
    total = 0.0
    for gi in range(grid):
        for gj in range(grid):
            r0, r1 = gi * h // grid, (gi + 1) * h // grid
            c0, c1 = gj * w // grid, (gj + 1) * w // grid
            ma = a[r0:r1, c0:c1].mean(axis=(0, 1))
            mb = b[r0:r1, c0:c1].mean(axis=(0, 1))
            total += ((ma - mb) ** 2).sum()
    return total


def toy_extractor(size: int = 16, seed: int = 0) -> FeatureExtractor:
    """Tiny fixed two-tap conv stack standing in for the pretrained net."""
    gen = torch.Generator().manual_seed(seed)
    features = nn.Sequential(
        nn.Conv2d(3, 4, 3, 1, 1),
        nn.ReLU(),
        nn.Conv2d(4, 6, 3, 2, 1),
        nn.ReLU(),
    )
    for m in features:
        if isinstance(m, nn.Conv2d):
            nn.init.normal_(m.weight, 0.0, 0.3, generator=gen)
            nn.init.zeros_(m.bias)
    return FeatureExtractor(features, {"tap_a": 1, "tap_b": 3}, input_size=size)


# ---------------------------------------------------------------------------
# photometric
# ---------------------------------------------------------------------------

class TestPhotometric:
    def test_identical_is_zero(self):
        img = torch.rand(4, 4, 3)
        assert photometric_l2(img, img).item() == 0.0

    def test_single_pixel_difference(self):
        a = torch.zeros(4, 4, 3)
        b = a.clone()
        b[1, 2, 0] = 0.1
        assert photometric_l2(a, b).item() == pytest.approx(0.01, rel=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = torch.tensor(rng.uniform(-1, 1, (5, 5, 3)))
        b = torch.tensor(rng.uniform(-1, 1, (5, 5, 3)))
        assert photometric_l2(a, b).item() == pytest.approx(photometric_l2(b, a).item())

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            photometric_l2(torch.zeros(3, 3, 3), torch.zeros(3, 4, 3))


# ---------------------------------------------------------------------------
# weighted TV
# ---------------------------------------------------------------------------

class TestWeightedTV:
    def test_constant_field_is_zero(self):
        field = torch.full((6, 6, 2), 0.3)
        guide = torch.rand(6, 6, 3)
        assert weighted_tv_loss(field, guide, 0.1).item() == 0.0

    def test_two_pixel_hand_value(self):
        field = torch.tensor([[[0.1], [0.3]]])  # 1×2×1
        guide = torch.zeros(1, 2, 3)  # constant -> weight 1
        loss = weighted_tv_loss(field, guide, 0.1)
        assert loss.item() == pytest.approx(0.2, rel=1e-6)

    def test_strong_guide_edge_kills_contribution(self):
        field = torch.tensor([[[0.0], [1.0]]])
        guide = torch.zeros(1, 2, 3)
        guide[0, 1] = 1.0
        guide[0, 0] = -1.0  # ||x-y||_1 = 6
        loss = weighted_tv_loss(field, guide, 0.1)
        assert loss.item() == pytest.approx(math.exp(-60.0), abs=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        field = rng.uniform(-1, 1, (8, 8, 2))
        guide = rng.uniform(-1, 1, (8, 8, 3))
        expected = oracle_weighted_tv(field, guide, 0.1)
        loss = weighted_tv_loss(torch.tensor(field), torch.tensor(guide), 0.1)
        assert loss.item() == pytest.approx(expected, abs=1e-6)

    def test_six_channel_map_against_oracle(self):
        rng = np.random.default_rng(2)
        field = rng.uniform(-1, 1, (5, 7, 6))
        guide = rng.uniform(-1, 1, (5, 7, 3))
        expected = oracle_weighted_tv(field, guide, 0.1)
        loss = weighted_tv_loss(torch.tensor(field), torch.tensor(guide), 0.1)
        assert loss.item() == pytest.approx(expected, abs=1e-6)

    def test_non_positive_sigma_raises(self):
        with pytest.raises(ValueError):
            weighted_tv_loss(torch.zeros(3, 3, 2), torch.zeros(3, 3, 3), 0.0)


class TestMotionTotal:
    def test_zero_components(self):
        assert motion_total_loss(torch.tensor(0.0), torch.tensor(0.0)).item() == 0.0

    def test_weighted_sum(self):
        total = motion_total_loss(torch.tensor(0.5), torch.tensor(0.25), 1.0, 1.0)
        assert total.item() == pytest.approx(0.75)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        flow = torch.tensor(rng.uniform(-0.5, 0.5, (4, 4, 2)), requires_grad=True)
        guide = torch.tensor(rng.uniform(-1, 1, (4, 4, 3)))
        target = torch.tensor(rng.uniform(-1, 1, (4, 4, 3)))
        pred = torch.tensor(rng.uniform(-1, 1, (4, 4, 3)))

        def f(fl):
            return motion_total_loss(
                photometric_l2(pred + fl.sum(-1, keepdim=True), target),
                weighted_tv_loss(fl, guide, 0.1),
            )

        loss = f(flow)
        loss.backward()
        h = 1e-4
        for idx in [(0, 0, 0), (1, 2, 1), (3, 3, 0)]:
            fp = flow.detach().clone()
            fm = flow.detach().clone()
            fp[idx] += h
            fm[idx] -= h
            fd = (f(fp) - f(fm)).item() / (2 * h)
            an = flow.grad[idx].item()
            assert an == pytest.approx(fd, rel=1e-3, abs=1e-6)


# ---------------------------------------------------------------------------
# spatial pyramid
# ---------------------------------------------------------------------------

class TestSpatialPyramid:
    def test_identical_is_zero(self):
        img = torch.rand(64, 64, 3)
        assert spatial_pyramid_loss(img, img).item() == 0.0

    def test_constant_images_closed_form(self):
        a = torch.full((64, 64, 3), 0.4)
        b = torch.full((64, 64, 3), 0.1)
        loss = spatial_pyramid_loss(a, b)
        assert loss.item() == pytest.approx(32 * 32 * 3 * 0.3**2, rel=1e-5)

    def test_permutation_within_cell_invariant(self):
        rng = np.random.default_rng(4)
        img = torch.tensor(rng.uniform(-1, 1, (64, 64, 3)), dtype=torch.float32)
        other = torch.tensor(rng.uniform(-1, 1, (64, 64, 3)), dtype=torch.float32)
        shuffled = img.clone()
        # swap the two pixels of one 2×2 cell's first row
        shuffled[0, 0], shuffled[0, 1] = img[0, 1], img[0, 0]
        a = spatial_pyramid_loss(img, other).item()
        b = spatial_pyramid_loss(shuffled, other).item()
        assert a == pytest.approx(b, rel=1e-6)

    def test_matches_cell_mean_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(-1, 1, (64, 64, 3))
        b = rng.uniform(-1, 1, (64, 64, 3))
        expected = oracle_spatial_pyramid(a, b)
        loss = spatial_pyramid_loss(torch.tensor(a), torch.tensor(b))
        assert loss.item() == pytest.approx(expected, abs=1e-6)

    def test_image_smaller_than_grid_raises(self):
        with pytest.raises(ValueError):
            spatial_pyramid_loss(torch.zeros(16, 16, 3), torch.zeros(16, 16, 3))


# ---------------------------------------------------------------------------
# style / content (toy extractor)
# ---------------------------------------------------------------------------

class TestStyleContent:
    def test_style_zero_on_identical(self):
        fx = toy_extractor()
        img = torch.rand(16, 16, 3) * 2 - 1
        loss = style_loss(fx, img, img, layers=("tap_a", "tap_b"))
        assert loss.item() == 0.0

    def test_style_matches_gram_difference_oracle(self):
        fx = toy_extractor()
        rng = np.random.default_rng(6)
        a = torch.tensor(rng.uniform(-1, 1, (16, 16, 3)), dtype=torch.float32)
        b = torch.tensor(rng.uniform(-1, 1, (16, 16, 3)), dtype=torch.float32)
        layers = ("tap_a", "tap_b")
        ga = gram_features(fx, a, layers)
        gb = gram_features(fx, b, layers)
        expected = sum(((gb[n] - ga[n]) ** 2).sum().item() for n in layers)
        loss = style_loss(fx, a, b, layers=layers)
        assert loss.item() == pytest.approx(expected, rel=1e-6)

    def test_content_zero_on_identical(self):
        fx = toy_extractor()
        img = torch.rand(16, 16, 3) * 2 - 1
        assert content_loss(fx, img, img, layers=("tap_a",)).item() == 0.0

    def test_content_positive_for_high_frequency_change(self):
        fx = toy_extractor()
        rng = np.random.default_rng(7)
        src = torch.tensor(rng.uniform(-1, 1, (16, 16, 3)), dtype=torch.float32)
        out = src.clone()
        out[::2, ::2] += 0.3  # high-frequency perturbation
        assert content_loss(fx, out, src, layers=("tap_a",)).item() > 0.0

    def test_content_is_defined_against_source_argument(self):
        # regression: swapping output/source must change which image anchors
        # the loss, so a perturbed output scores the same in either slot only
        # if the loss were symmetric by accident; the wiring check is that a
        # perfect output against the source gives 0 regardless of a third frame
        fx = toy_extractor()
        rng = np.random.default_rng(8)
        src = torch.tensor(rng.uniform(-1, 1, (16, 16, 3)), dtype=torch.float32)
        other = torch.tensor(rng.uniform(-1, 1, (16, 16, 3)), dtype=torch.float32)
        assert content_loss(fx, src, src, layers=("tap_a",)).item() == 0.0
        assert content_loss(fx, src, other, layers=("tap_a",)).item() > 0.0


class TestAppearanceTotal:
    def test_zero_components(self):
        z = torch.tensor(0.0)
        assert appearance_total_loss(z, z, z, z).item() == 0.0

    def test_published_weights_on_unit_components(self):
        one = torch.tensor(1.0, dtype=torch.float64)
        total = appearance_total_loss(one, one, one, one)
        assert total.item() == pytest.approx(1 + 0.01 + 1e-5 + 0.1, rel=1e-9)

    def test_gradient_matches_finite_differences(self):
        fx = toy_extractor(size=4, seed=9)
        rng = np.random.default_rng(9)
        src = torch.tensor(rng.uniform(-0.5, 0.5, (4, 4, 3)))
        target = torch.tensor(rng.uniform(-0.5, 0.5, (4, 4, 3)))
        maps = torch.tensor(rng.uniform(-0.5, 0.5, (4, 4, 6)), requires_grad=True)

        def f(m):
            out = torch.tanh(m[..., :3] * src + m[..., 3:])
            fx64 = fx.double()
            return appearance_total_loss(
                style_loss(fx64, out, target, layers=("tap_a", "tap_b")),
                spatial_pyramid_loss(out, target, grid=4),
                content_loss(fx64, out, src, layers=("tap_a",)),
                weighted_tv_loss(m, src, 0.1),
            )

        loss = f(maps)
        loss.backward()
        h = 1e-4
        for idx in [(0, 0, 0), (2, 1, 4), (3, 3, 5)]:
            mp = maps.detach().clone()
            mm = maps.detach().clone()
            mp[idx] += h
            mm[idx] -= h
            fd = (f(mp) - f(mm)).item() / (2 * h)
            an = maps.grad[idx].item()
            assert an == pytest.approx(fd, rel=1e-3, abs=1e-8)
