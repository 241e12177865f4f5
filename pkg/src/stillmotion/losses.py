"""Training losses for the motion and appearance predictors.

All losses use summed (not averaged) reductions; the published loss weights
were tuned under that convention.  Inputs are channels-last tensors, with
an optional leading batch dimension (batch items are summed as well, which
matches per-minibatch loss accumulation).
"""

from __future__ import annotations

import torch

from .imageops import as_tensor


def photometric_l2(predicted, target) -> torch.Tensor:
    """Sum of squared differences between two frames."""
    p = as_tensor(predicted)
    t = as_tensor(target, dtype=p.dtype)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
    return ((t - p) ** 2).sum()


def weighted_tv_loss(field, guide, sigma: float) -> torch.Tensor:
    """Edge-aware total variation over right and above neighbor pairs.

    For each pixel p and neighbor q the pair contributes
    w(guide(p), guide(q)) * ||field(p) - field(q)||_1 with
    w(x, y) = exp(-||x - y||_1 / sigma): differences across strong guide
    edges are cheap, differences in flat guide regions are expensive.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    f = as_tensor(field)
    g = as_tensor(guide, dtype=f.dtype)
    if f.shape[:-1] != g.shape[:-1]:
        raise ValueError(
            f"field {tuple(f.shape)} and guide {tuple(g.shape)} must share spatial shape"
        )
    # horizontal: p and its right neighbor
    wh = torch.exp(-(g[..., :, :-1, :] - g[..., :, 1:, :]).abs().sum(dim=-1) / sigma)
    dh = (f[..., :, :-1, :] - f[..., :, 1:, :]).abs().sum(dim=-1)
    # vertical: p and its above neighbor
    wv = torch.exp(-(g[..., 1:, :, :] - g[..., :-1, :, :]).abs().sum(dim=-1) / sigma)
    dv = (f[..., 1:, :, :] - f[..., :-1, :, :]).abs().sum(dim=-1)
    return (wh * dh).sum() + (wv * dv).sum()


def motion_total_loss(
    photometric: torch.Tensor,
    tv: torch.Tensor,
    lambda_p: float = 1.0,
    lambda_tv: float = 1.0,
) -> torch.Tensor:
    """Weighted sum of the reconstruction and smoothness terms."""
    return lambda_p * photometric + lambda_tv * tv


def spatial_pyramid_loss(output, target, grid: int = 32) -> torch.Tensor:
    """L2 distance between per-cell channel means over a grid of cells.

    The image is divided into a grid x grid lattice (near-equal integer
    partitions when the size is not a multiple) and each cell is average
    pooled, giving a coarse spatial color layout to match.
    """
    o = as_tensor(output)
    t = as_tensor(target, dtype=o.dtype)
    if o.shape != t.shape:
        raise ValueError(f"shape mismatch: {tuple(o.shape)} vs {tuple(t.shape)}")
    h, w = o.shape[-3], o.shape[-2]
    if h < grid or w < grid:
        raise ValueError(f"image {h}×{w} smaller than the {grid}×{grid} pooling grid")

    def pool(x: torch.Tensor) -> torch.Tensor:
        batched = x.ndim == 4
        nchw = x.permute(0, 3, 1, 2) if batched else x.permute(2, 0, 1).unsqueeze(0)
        out = torch.nn.functional.adaptive_avg_pool2d(nchw, grid)
        return out

    return ((pool(t) - pool(o)) ** 2).sum()


def style_loss(extractor, output, target, layers=("relu2_2", "relu3_3", "relu4_3")) -> torch.Tensor:
    """Sum over layers of squared Gram-matrix distances between two images."""
    from .networks import gram_features

    go = gram_features(extractor, output, layers)
    gt = gram_features(extractor, target, layers)
    total = None
    for name in layers:
        term = ((gt[name] - go[name]) ** 2).sum()
        total = term if total is None else total + term
    return total


def content_loss(extractor, output, source, layers=("relu1_2",)) -> torch.Tensor:
    """Squared feature distance against the source image (structure keeper)."""
    fo = extractor(output, layers)
    fs = extractor(source, layers)
    total = None
    for name in layers:
        term = ((fs[name] - fo[name]) ** 2).sum()
        total = term if total is None else total + term
    return total


def appearance_total_loss(
    style: torch.Tensor,
    spatial: torch.Tensor,
    content: torch.Tensor,
    tv: torch.Tensor,
    lambda_s: float = 1.0,
    lambda_sp: float = 1e-2,
    lambda_c: float = 1e-5,
    lambda_tv: float = 0.1,
) -> torch.Tensor:
    """Weighted sum of the four appearance terms."""
    return lambda_s * style + lambda_sp * spatial + lambda_c * content + lambda_tv * tv
