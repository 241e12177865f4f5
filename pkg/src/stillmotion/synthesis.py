"""End-to-end video generation from a single image.

The pipeline: roll the motion predictor forward to get warped frames, fold
the sequence into a seamless loop by cross-fading head and tail, then
recolor each loop frame with the appearance predictor while latent codes
interpolate along the output timeline.  Per output frame the input image's
colors are sampled exactly once (one warp, one color transfer), so length
never degrades quality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import imageio.v3 as iio
import numpy as np
import torch

from .appearance import predict_appearance_frame
from .dataset import Codebook
from .errors import ConfigurationError, MissingArtifactError
from .imageops import as_tensor, denormalize_image, resize
from .motion import predict_motion_sequence
from .networks import PredictorNet

log = logging.getLogger(__name__)


@dataclass
class SynthesisConfig:
    frame_count: int = 64
    loop_enabled: bool = True
    crossfade_window: int | None = None  # None -> 25% of frame_count
    motion_speed_scale: float = 1.0
    loop_repeats_per_appearance_cycle: int = 1
    motion_code: object = None  # 8-vector, codebook clip id, or None (seeded pick)
    appearance_codes: object = None  # list of 8-vectors, clip id, or None
    output_resolution: tuple[int, int] | None = None  # (height, width)
    beta: float = 64.0
    seed: int = 0

    def __post_init__(self):
        if self.frame_count < 1:
            raise ConfigurationError("frame_count must be >= 1")
        if self.loop_repeats_per_appearance_cycle < 1:
            raise ConfigurationError("loop_repeats_per_appearance_cycle must be >= 1")
        if self.crossfade_window is not None and self.crossfade_window >= self.frame_count:
            raise ConfigurationError("crossfade_window must be smaller than frame_count")

    def resolved_window(self) -> int:
        if self.crossfade_window is not None:
            return self.crossfade_window
        return max(1, round(0.25 * self.frame_count))


def generate_loop(frames: list[torch.Tensor], window: int) -> list[torch.Tensor]:
    """Cross-fade the tail of a rollout onto its head to close the cycle.

    Output length is len(frames) - window.  For i < window,
    out[i] = (1 - a_i) * frames[i] + a_i * frames[len - window + i] with
    a_i = (i + 1) / (window + 1); later frames pass through unchanged.
    """
    if window < 0:
        raise ValueError("window must be non-negative")
    if window >= len(frames):
        raise ValueError(f"window {window} must be smaller than frame count {len(frames)}")
    if window == 0:
        return list(frames)
    n = len(frames)
    out = []
    for i in range(n - window):
        if i < window:
            alpha = (i + 1) / (window + 1)
            out.append((1.0 - alpha) * frames[i] + alpha * frames[n - window + i])
        else:
            out.append(frames[i])
    return out


def interpolate_latent_sequence(keys, total_frames: int, cyclic: bool = False) -> list[torch.Tensor]:
    """Piecewise-linear latent path through equally spaced key codes.

    With cyclic=True the final segment returns to the first key, so frame 0
    and frame total_frames share a continuous cycle.
    """
    keys = [as_tensor(k) for k in keys]
    if not keys:
        raise ValueError("need at least one key code")
    if total_frames < 1:
        raise ValueError("total_frames must be >= 1")
    if len(keys) == 1:
        return [keys[0].clone() for _ in range(total_frames)]
    if total_frames < len(keys):
        raise ValueError("total_frames must be at least the number of keys")

    if cyclic:
        pts = keys + [keys[0]]
        positions = [i * len(keys) / total_frames for i in range(total_frames)]
    else:
        pts = keys
        positions = [
            i * (len(keys) - 1) / (total_frames - 1) for i in range(total_frames)
        ]
    out = []
    for pos in positions:
        lo = min(int(np.floor(pos)), len(pts) - 2)
        frac = pos - lo
        out.append((1.0 - frac) * pts[lo] + frac * pts[lo + 1])
    return out


def _resolve_motion_code(cfg: SynthesisConfig, codebook: Codebook | None,
                         rng: np.random.Generator) -> torch.Tensor:
    code = cfg.motion_code
    if code is None:
        if codebook is None or len(codebook) == 0:
            raise ConfigurationError("no motion code given and no codebook to draw from")
        clip_id = codebook.ids()[int(rng.integers(0, len(codebook)))]
        return codebook.entries[clip_id]
    if isinstance(code, str):
        if codebook is None or code not in codebook.entries:
            raise MissingArtifactError(f"motion codebook entry {code!r} not found")
        return codebook.entries[code]
    return as_tensor(code)


def _resolve_appearance_keys(cfg: SynthesisConfig, codebook: Codebook | None,
                             rng: np.random.Generator) -> list[torch.Tensor]:
    codes = cfg.appearance_codes
    if codes is None:
        if codebook is None or len(codebook) == 0:
            raise ConfigurationError("no appearance codes given and no codebook to draw from")
        clip_id = codebook.ids()[int(rng.integers(0, len(codebook)))]
        return list(codebook.entries[clip_id])
    if isinstance(codes, str):
        if codebook is None or codes not in codebook.entries:
            raise MissingArtifactError(f"appearance codebook entry {codes!r} not found")
        return list(codebook.entries[codes])
    return [as_tensor(c) for c in codes]


def _fit_key_count(keys: list[torch.Tensor], total: int) -> list[torch.Tensor]:
    """Evenly subsample key codes when more keys exist than output frames."""
    if len(keys) <= total:
        return keys
    if total == 1:
        return [keys[0]]
    idx = [round(i * (len(keys) - 1) / (total - 1)) for i in range(total)]
    return [keys[i] for i in idx]


def synthesize(
    input_image,
    cfg: SynthesisConfig,
    motion_predictor: PredictorNet,
    appearance_predictor: PredictorNet,
    motion_codebook: Codebook | None = None,
    appearance_codebook: Codebook | None = None,
) -> list[torch.Tensor]:
    """Generate an animation from one image.

    Loop mode: the motion rollout is extended by the cross-fade window so
    the looped sequence has exactly cfg.frame_count frames, and the output
    runs loop_repeats_per_appearance_cycle times through it while the
    appearance codes complete one cyclic interpolation.  Non-loop mode
    emits cfg.frame_count frames (the input frame first).
    """
    rng = np.random.default_rng(cfg.seed)
    img = as_tensor(input_image)
    if cfg.output_resolution is not None:
        img = resize(img, cfg.output_resolution[0], cfg.output_resolution[1])

    z_motion = _resolve_motion_code(cfg, motion_codebook, rng)
    keys = _resolve_appearance_keys(cfg, appearance_codebook, rng)

    if cfg.loop_enabled:
        window = cfg.resolved_window()
        rollout_steps = cfg.frame_count + window - 1
        frames, _ = predict_motion_sequence(
            img, z_motion, motion_predictor, rollout_steps,
            beta=cfg.beta, speed_scale=cfg.motion_speed_scale,
        )
        base_frames = generate_loop(frames, window)
        total = cfg.frame_count * cfg.loop_repeats_per_appearance_cycle
        codes = interpolate_latent_sequence(_fit_key_count(keys, total), total, cyclic=True)
    else:
        if cfg.frame_count == 1:
            base_frames = [img]
        else:
            frames, _ = predict_motion_sequence(
                img, z_motion, motion_predictor, cfg.frame_count - 1,
                beta=cfg.beta, speed_scale=cfg.motion_speed_scale,
            )
            base_frames = frames
        codes = interpolate_latent_sequence(
            _fit_key_count(keys, cfg.frame_count), cfg.frame_count, cyclic=False
        )

    out = []
    for i, z in enumerate(codes):
        base = base_frames[i % len(base_frames)]
        frame, _ = predict_appearance_frame(base, z, appearance_predictor)
        out.append(frame)
    return out


def evaluate_sequence(generated, reference, perceptual=None):
    """Per-frame RMSE (normalized units) plus optional injected scorer.

    Returns (rmse_list, perceptual_list or None).  The perceptual callable
    receives (generated_frame, reference_frame) channels-last tensors.
    """
    if len(generated) != len(reference):
        raise ValueError(
            f"sequence lengths differ: {len(generated)} vs {len(reference)}"
        )
    rmse = []
    scores = [] if perceptual is not None else None
    for gen, ref in zip(generated, reference):
        g = as_tensor(gen)
        r = as_tensor(ref, dtype=g.dtype)
        if g.shape != r.shape:
            raise ValueError(f"frame shapes differ: {tuple(g.shape)} vs {tuple(r.shape)}")
        rmse.append(torch.sqrt(((g - r) ** 2).mean()).item())
        if scores is not None:
            scores.append(float(perceptual(g, r)))
    return rmse, scores


def write_frame_sequence(frames, out_dir) -> list[Path]:
    """Write frames as zero-padded lossless PNGs; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        p = out_dir / f"frame_{i:06d}.png"
        iio.imwrite(p, denormalize_image(frame))
        paths.append(p)
    return paths


def encode_video(frames, path, fps: int = 30) -> None:
    """Encode frames into a video container via imageio's ffmpeg backend."""
    data = np.stack([denormalize_image(f) for f in frames])
    try:
        iio.imwrite(path, data, fps=fps)
    except Exception as exc:
        raise ConfigurationError(
            f"video encoding failed ({exc}); install an ffmpeg-enabled imageio backend "
            "or use write_frame_sequence for a lossless PNG directory"
        ) from exc
