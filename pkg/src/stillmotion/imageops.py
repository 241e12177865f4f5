"""Array primitives shared by every pipeline stage.

Conventions used throughout the package:

- Images are channels-last float32 tensors of shape (H, W, 3) with values
  in [-1, 1].  8-bit data maps through v = 2*(u/255) - 1.
- Flow fields are (H, W, 2) tensors of backward displacements expressed in
  normalized coordinates: the image domain is [-1, 1]^2 with pixel centers
  at the endpoints (align-corners convention), channel 0 along x (width),
  channel 1 along y (height).  Because coordinates are normalized,
  resizing a flow field never rescales its values.
- Color transfer maps are pairs of (H, W, 3) tensors in [-1, 1].

All functions are pure and differentiable where it matters (warping and
flow composition back-propagate into both operands).  Batched variants
accept a leading batch dimension.
"""

from __future__ import annotations

import numpy as np
import torch


def as_tensor(arr, dtype: torch.dtype | None = None) -> torch.Tensor:
    """Convert numpy/torch input to a float tensor.

    Floating inputs keep their dtype (so float64 oracles stay float64);
    integer inputs become float32 unless a dtype is given.
    """
    t = arr if isinstance(arr, torch.Tensor) else torch.as_tensor(np.asarray(arr))
    if dtype is None:
        dtype = t.dtype if t.is_floating_point() else torch.float32
    return t.to(dtype)


def normalize_image(raw) -> torch.Tensor:
    """Map an 8-bit H×W×3 image to a float tensor in [-1, 1].

    Each channel value u becomes 2*(u/255) - 1, so 0 -> -1 and 255 -> +1.
    """
    arr = as_tensor(raw)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected an H×W×3 image, got shape {tuple(arr.shape)}")
    return arr * (2.0 / 255.0) - 1.0


def denormalize_image(img) -> np.ndarray:
    """Inverse of normalize_image: clamp to [-1, 1], then quantize to uint8.

    Clamping comes first because tanh outputs may touch ±1 exactly and
    accumulated float error may push values slightly past the endpoints.
    """
    arr = as_tensor(img).clamp(-1.0, 1.0)
    u = torch.round((arr + 1.0) * (255.0 / 2.0))
    return u.to(torch.uint8).cpu().numpy()


def _channels_last_to_nchw(arr: torch.Tensor) -> tuple[torch.Tensor, bool]:
    """(H,W,C) or (B,H,W,C) -> (B,C,H,W); returns (tensor, had_batch)."""
    if arr.ndim == 3:
        return arr.permute(2, 0, 1).unsqueeze(0), False
    if arr.ndim == 4:
        return arr.permute(0, 3, 1, 2), True
    raise ValueError(f"expected rank 3 or 4 channels-last array, got shape {tuple(arr.shape)}")


def _nchw_to_channels_last(arr: torch.Tensor, had_batch: bool) -> torch.Tensor:
    out = arr.permute(0, 2, 3, 1)
    return out if had_batch else out.squeeze(0)


def resize(arr, target_h: int, target_w: int) -> torch.Tensor:
    """Bilinearly resample a channels-last array to (target_h, target_w).

    Uses the align-corners grid so that corner pixels map to corner pixels;
    this keeps flow values meaningful across resolutions.  Flow magnitudes
    are not rescaled: displacements live in normalized coordinates.
    """
    if target_h <= 0 or target_w <= 0:
        raise ValueError(f"target size must be positive, got {target_h}×{target_w}")
    t = as_tensor(arr)
    nchw, had_batch = _channels_last_to_nchw(t)
    if nchw.shape[2] == target_h and nchw.shape[3] == target_w:
        return t
    out = torch.nn.functional.interpolate(
        nchw, size=(target_h, target_w), mode="bilinear", align_corners=True
    )
    return _nchw_to_channels_last(out, had_batch)


def reflect_pad(arr, margin: int) -> torch.Tensor:
    """Mirror-pad the two spatial dims by `margin` without repeating the edge.

    A 1-D row [a, b, c] padded by one becomes [b, a, b, c, b].
    """
    t = as_tensor(arr)
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if t.ndim == 3:
        h, w = t.shape[0], t.shape[1]
    elif t.ndim == 4:
        h, w = t.shape[1], t.shape[2]
    else:
        raise ValueError(f"expected rank 3 or 4 channels-last array, got shape {tuple(t.shape)}")
    if margin >= min(h, w):
        raise ValueError(f"margin {margin} too large for a {h}×{w} array")
    if margin == 0:
        return t
    nchw, had_batch = _channels_last_to_nchw(t)
    out = torch.nn.functional.pad(nchw, (margin, margin, margin, margin), mode="reflect")
    return _nchw_to_channels_last(out, had_batch)


def base_grid(height: int, width: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Normalized pixel-center coordinates, shape (H, W, 2), x then y."""
    if width > 1:
        xs = torch.linspace(-1.0, 1.0, width, dtype=dtype, device=device)
    else:
        xs = torch.zeros(1, dtype=dtype, device=device)
    if height > 1:
        ys = torch.linspace(-1.0, 1.0, height, dtype=dtype, device=device)
    else:
        ys = torch.zeros(1, dtype=dtype, device=device)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


def _reflect_index(pos: torch.Tensor, size: int) -> torch.Tensor:
    """Fold continuous pixel indices into [0, size-1] by mirror reflection.

    Equivalent to sampling a reflect-padded array of any sufficient margin;
    differentiable almost everywhere (the fold flips the local gradient
    sign, which is exactly what mirroring should do).
    """
    if size == 1:
        return torch.zeros_like(pos)
    period = 2.0 * (size - 1)
    pos = torch.remainder(pos, period)
    return torch.where(pos > (size - 1), period - pos, pos)


def _sample_at_pixels(source: torch.Tensor, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Bilinear gather at continuous pixel positions with mirror folding.

    source: (B, H, W, C); x, y: (B, h, w) in pixel units.  Keeping the
    positions in pixel units lets integer positions sample exactly (the
    zero-flow warp is bit-faithful up to float rounding of the values
    themselves, not of the coordinates).
    """
    b, h, w, _ = source.shape
    x = _reflect_index(x, w)
    y = _reflect_index(y, h)

    x0 = x.detach().floor().long().clamp(0, w - 1)
    y0 = y.detach().floor().long().clamp(0, h - 1)
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)
    wx = (x - x0.to(x.dtype)).unsqueeze(-1)
    wy = (y - y0.to(y.dtype)).unsqueeze(-1)

    bi = torch.arange(b, device=source.device).view(b, 1, 1).expand_as(x0)
    v00 = source[bi, y0, x0]
    v01 = source[bi, y0, x1]
    v10 = source[bi, y1, x0]
    v11 = source[bi, y1, x1]

    top = v00 + wx * (v01 - v00)
    bottom = v10 + wx * (v11 - v10)
    return top + wy * (bottom - top)


def _with_batch(arr: torch.Tensor, rank: int) -> tuple[torch.Tensor, bool]:
    if arr.ndim == rank:
        return arr.unsqueeze(0), False
    if arr.ndim == rank + 1:
        return arr, True
    raise ValueError(f"expected rank {rank} or {rank + 1}, got shape {tuple(arr.shape)}")


def bilinear_sample(source, coords) -> torch.Tensor:
    """Sample `source` at normalized positions `coords` with bilinear weights.

    source: (H, W, C) or (B, H, W, C); coords: (..., h, w, 2) matching the
    batch shape, x/y in the [-1, 1] align-corners convention.  Positions
    outside the domain resolve against the mirror-extended source.
    """
    src = as_tensor(source)
    pts = as_tensor(coords, dtype=src.dtype)
    src, batched = _with_batch(src, 3)
    pts, _ = _with_batch(pts, 3)
    if pts.shape[-1] != 2:
        raise ValueError("coords must have 2 components in the last dimension")
    if src.shape[0] != pts.shape[0]:
        raise ValueError(f"batch mismatch: source {src.shape[0]} vs coords {pts.shape[0]}")
    h, w = src.shape[1], src.shape[2]
    x = (pts[..., 0] + 1.0) * 0.5 * (w - 1)
    y = (pts[..., 1] + 1.0) * 0.5 * (h - 1)
    out = _sample_at_pixels(src, x, y)
    return out if batched else out.squeeze(0)


def _pixel_positions(flow: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Integer pixel grid displaced by a normalized flow, in pixel units."""
    b, h, w, _ = flow.shape
    ix = torch.arange(w, dtype=flow.dtype, device=flow.device).view(1, 1, w)
    iy = torch.arange(h, dtype=flow.dtype, device=flow.device).view(1, h, 1)
    x = ix + flow[..., 0] * ((w - 1) * 0.5)
    y = iy + flow[..., 1] * ((h - 1) * 0.5)
    return x, y


def warp(source, flow) -> torch.Tensor:
    """Reconstruct an image by sampling `source` at p + flow(p) per pixel p.

    Backward warping: the flow at an output pixel points to where that
    pixel's value lives in the source.  Out-of-range positions reflect.
    """
    src = as_tensor(source)
    flo = as_tensor(flow, dtype=src.dtype)
    if src.shape[:-1] != flo.shape[:-1] or flo.shape[-1] != 2:
        raise ValueError(
            f"source {tuple(src.shape)} and flow {tuple(flo.shape)} must share spatial shape"
        )
    src_b, batched = _with_batch(src, 3)
    flo_b, _ = _with_batch(flo, 3)
    x, y = _pixel_positions(flo_b)
    out = _sample_at_pixels(src_b, x, y)
    return out if batched else out.squeeze(0)


def compose_flows(accumulated, new_step) -> torch.Tensor:
    """Chain backward flows: result(p) = new_step(p) + accumulated(p + new_step(p)).

    Warping once by the result is equivalent (up to resampling error) to
    warping by `accumulated` and then by `new_step`.  The accumulated field
    is sampled bilinearly with the same reflection handling as images.
    """
    acc = as_tensor(accumulated)
    step = as_tensor(new_step, dtype=acc.dtype)
    if acc.shape != step.shape or acc.shape[-1] != 2:
        raise ValueError(
            f"flow shapes must match, got {tuple(acc.shape)} and {tuple(step.shape)}"
        )
    acc_b, batched = _with_batch(acc, 3)
    step_b, _ = _with_batch(step, 3)
    x, y = _pixel_positions(step_b)
    out = step_b + _sample_at_pixels(acc_b, x, y)
    return out if batched else out.squeeze(0)


def restrict_flow(raw, beta: float, *, allow_unrestricted: bool = False) -> torch.Tensor:
    """Divide a raw tanh flow by beta, bounding each component to [-1/beta, 1/beta].

    beta must exceed 1; beta == 1 disables the restriction and is accepted
    only with allow_unrestricted=True (ablation runs).
    """
    if beta < 1.0 or (beta == 1.0 and not allow_unrestricted):
        raise ValueError(f"beta must be > 1 (got {beta}); pass allow_unrestricted=True for beta=1")
    t = as_tensor(raw)
    if t.shape[-1] != 2:
        raise ValueError(f"expected a flow field with 2 channels, got shape {tuple(t.shape)}")
    return t / beta
