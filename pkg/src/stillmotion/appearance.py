"""Training and inference of the color-transfer appearance predictor.

Appearance is modeled as a per-pixel affine recoloring of the input image:
the predictor emits a weight map and a bias map, and the output frame is
tanh(weight * input + bias).  No recurrence is involved; every output
frame samples the input image's colors exactly once, so long sequences
cannot accumulate color drift.

Training pairs any two frames of a clip (source t, target tau, either
order, possibly equal): the predictor recolors the source toward the
target while a content loss anchors the scene structure to the source and
an edge-aware smoothness loss keeps the maps simple.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import torch

from .dataset import Codebook
from .imageops import as_tensor, resize
from .losses import (
    appearance_total_loss,
    content_loss,
    spatial_pyramid_loss,
    style_loss,
    weighted_tv_loss,
)
from .networks import (
    ENCODER_INPUT_SIZE,
    EncoderNet,
    FeatureExtractor,
    PredictorNet,
    predictor_forward,
)

log = logging.getLogger(__name__)

STYLE_LAYERS = ("relu2_2", "relu3_3", "relu4_3")
CONTENT_LAYERS = ("relu1_2",)


class ColorTransferMap(NamedTuple):
    """Multiplicative and additive recoloring maps, each H×W×3 in [-1, 1]."""

    weight: torch.Tensor
    bias: torch.Tensor


@dataclass
class AppearanceHyperParams:
    lambda_s: float = 1.0
    lambda_sp: float = 1e-2
    lambda_c: float = 1e-5
    lambda_tv: float = 0.1
    sigma: float = 0.1
    learning_rate: float = 1e-4
    adam_betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 8
    epochs: int = 5000
    sp_grid: int = 32
    style_layers: tuple[str, ...] = STYLE_LAYERS
    content_layers: tuple[str, ...] = CONTENT_LAYERS
    direct_output: bool = False  # ablation: predictor emits RGB frames directly

    def __post_init__(self):
        for name in ("sigma", "learning_rate", "batch_size", "epochs", "sp_grid"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # zero disables a term (ablation); negatives are never meaningful
        for name in ("lambda_s", "lambda_sp", "lambda_c", "lambda_tv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class AppearanceTrainingResult:
    predictor: PredictorNet
    encoder: EncoderNet
    codebook: Codebook
    history: list[dict] = field(default_factory=list)


def split_transfer_map(raw) -> ColorTransferMap:
    """Split a 6-channel predictor output into weight and bias maps."""
    t = as_tensor(raw)
    if t.shape[-1] != 6:
        raise ValueError(f"expected 6 channels, got {t.shape[-1]}")
    return ColorTransferMap(weight=t[..., :3], bias=t[..., 3:])


def color_transfer(cmap: ColorTransferMap, image) -> torch.Tensor:
    """Apply tanh(weight ∘ image + bias); output stays within (-1, 1)."""
    img = as_tensor(image)
    w = as_tensor(cmap.weight, dtype=img.dtype)
    b = as_tensor(cmap.bias, dtype=img.dtype)
    if w.shape != img.shape or b.shape != img.shape:
        raise ValueError(
            f"map shape {tuple(w.shape)} must match image shape {tuple(img.shape)}"
        )
    return torch.tanh(w * img + b)


def train_appearance(
    clips,
    predictor: PredictorNet,
    encoder: EncoderNet,
    extractor: FeatureExtractor,
    hp: AppearanceHyperParams,
    *,
    rng: np.random.Generator | None = None,
    log_fn=None,
) -> AppearanceTrainingResult:
    """Train the appearance predictor and encoder over arbitrary frame pairs.

    After training, each clip's codebook entry is the encoder's code for
    every sampled frame, in time order, so a clip of T frames yields a
    sequence of T codes.
    """
    rng = rng or np.random.default_rng(0)
    usable = [clip for clip in clips if len(clip) >= 1]
    for clip in clips:
        if len(clip) < 1:
            log.warning("skipping empty clip %s", clip.clip_id)
    if not usable:
        raise ValueError("no non-empty clips")

    size = predictor.input_size
    frames_small = [
        torch.stack([resize(f, size, size) for f in clip.frames]) for clip in usable
    ]
    frames_enc = [
        torch.stack([resize(f, ENCODER_INPUT_SIZE, ENCODER_INPUT_SIZE) for f in clip.frames])
        for clip in usable
    ]

    opt_p = torch.optim.Adam(predictor.parameters(), lr=hp.learning_rate, betas=hp.adam_betas)
    opt_e = torch.optim.Adam(encoder.parameters(), lr=hp.learning_rate, betas=hp.adam_betas)
    predictor.train()
    encoder.train()

    history: list[dict] = []
    start = time.time()
    for epoch in range(hp.epochs):
        order = rng.permutation(len(usable))
        totals = {"loss": 0.0, "loss_s": 0.0, "loss_sp": 0.0, "loss_c": 0.0, "loss_tv": 0.0}
        for chunk_start in range(0, len(order), hp.batch_size):
            batch = order[chunk_start : chunk_start + hp.batch_size]
            sources, targets, enc_in = [], [], []
            for idx in batch:
                t = int(rng.integers(0, len(usable[idx])))
                tau = int(rng.integers(0, len(usable[idx])))
                sources.append(frames_small[idx][t])
                targets.append(frames_small[idx][tau])
                enc_in.append(frames_enc[idx][tau])
            src = torch.stack(sources)
            tgt = torch.stack(targets)
            z = encoder(torch.stack(enc_in).permute(0, 3, 1, 2))
            raw = predictor(src.permute(0, 3, 1, 2).contiguous(), z).permute(0, 2, 3, 1)
            if hp.direct_output:
                out = raw
                tv_subject = raw
            else:
                cmap = split_transfer_map(raw)
                out = torch.tanh(cmap.weight * src + cmap.bias)
                tv_subject = raw

            loss_s = style_loss(extractor, out, tgt, layers=hp.style_layers)
            loss_sp = spatial_pyramid_loss(out, tgt, grid=hp.sp_grid)
            loss_c = content_loss(extractor, out, src, layers=hp.content_layers)
            loss_tv = weighted_tv_loss(tv_subject, src, hp.sigma)
            loss = appearance_total_loss(
                loss_s, loss_sp, loss_c, loss_tv,
                hp.lambda_s, hp.lambda_sp, hp.lambda_c, hp.lambda_tv,
            )
            opt_p.zero_grad(set_to_none=True)
            opt_e.zero_grad(set_to_none=True)
            loss.backward()
            opt_p.step()
            opt_e.step()

            totals["loss"] += loss.item()
            totals["loss_s"] += loss_s.item()
            totals["loss_sp"] += loss_sp.item()
            totals["loss_c"] += loss_c.item()
            totals["loss_tv"] += loss_tv.item()
        record = {"epoch": epoch, **{k: round(v, 6) for k, v in totals.items()},
                  "elapsed_s": round(time.time() - start, 3)}
        if log_fn is not None:
            log_fn(record)
        history.append(record)

    codebook = Codebook(kind="appearance")
    predictor.eval()
    encoder.eval()
    with torch.no_grad():
        for i, clip in enumerate(usable):
            codes = encoder(frames_enc[i].permute(0, 3, 1, 2))
            codebook.entries[clip.clip_id] = [codes[k] for k in range(codes.shape[0])]
    predictor.trained = True
    encoder.trained = True
    return AppearanceTrainingResult(predictor, encoder, codebook, history)


def predict_appearance_frame(
    input_image,
    z,
    predictor: PredictorNet,
) -> tuple[torch.Tensor, ColorTransferMap]:
    """Infer a color transfer map for one frame and apply it.

    The map is predicted at the training resolution, resized to the
    frame's native resolution, and applied there, so output sharpness is
    limited only by the input.
    """
    if not getattr(predictor, "trained", False):
        log.warning("appearance predictor has not been trained; output will be arbitrary")
    img = as_tensor(input_image)
    h, w = img.shape[0], img.shape[1]
    size = predictor.input_size
    predictor.eval()
    with torch.no_grad():
        raw = predictor_forward(predictor, resize(img, size, size), z)
        full = resize(raw, h, w)
        cmap = split_transfer_map(full)
        out = color_transfer(cmap, img)
    return out, cmap
