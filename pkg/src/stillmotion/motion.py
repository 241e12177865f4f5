"""Self-supervised training of the motion predictor and recurrent rollout.

Training needs no ground-truth flow: the predictor infers a backward flow
between consecutive frames, the previous frame is warped by it, and the
photometric difference to the actual next frame is the supervision signal.
Flow magnitudes are restricted to [-1/beta, 1/beta] per axis so the
correspondence search cannot jump to distant false matches.

Each clip keeps a *common motion field*: the most recently inferred flow
for that clip, re-used across epochs as the motion encoder's input.  It
starts as zeros (there is nothing to encode before the first epoch) and
after training it is what the encoder compresses into the clip's latent
code.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .dataset import Clip, Codebook
from .imageops import as_tensor, compose_flows, resize, restrict_flow, warp
from .losses import motion_total_loss, photometric_l2, weighted_tv_loss
from .networks import ENCODER_INPUT_SIZE, EncoderNet, PredictorNet, predictor_forward

log = logging.getLogger(__name__)


@dataclass
class MotionHyperParams:
    lambda_p: float = 1.0
    lambda_tv: float = 1.0
    sigma: float = 0.1
    beta: float = 64.0
    learning_rate: float = 1e-4
    adam_betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 8
    epochs: int = 5000
    allow_unrestricted: bool = False  # permits beta == 1 ablation runs

    def __post_init__(self):
        for name in ("lambda_p", "lambda_tv", "sigma", "learning_rate", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.beta <= 1.0 and not (self.beta == 1.0 and self.allow_unrestricted):
            raise ValueError("beta must exceed 1 unless allow_unrestricted is set for beta=1")


@dataclass
class MotionTrainingResult:
    predictor: PredictorNet
    encoder: EncoderNet
    codebook: Codebook
    common_fields: dict[str, torch.Tensor]
    history: list[dict] = field(default_factory=list)


def _usable_clips(clips) -> list[Clip]:
    usable = []
    for clip in clips:
        if len(clip) < 2:
            log.warning("skipping clip %s: fewer than 2 frames", clip.clip_id)
            continue
        usable.append(clip)
    if not usable:
        raise ValueError("no clip with at least 2 frames")
    return usable


def _stack_nchw(frames: list[torch.Tensor]) -> torch.Tensor:
    return torch.stack([f.permute(2, 0, 1) for f in frames])


def train_motion(
    clips,
    predictor: PredictorNet,
    encoder: EncoderNet,
    hp: MotionHyperParams,
    *,
    rng: np.random.Generator | None = None,
    target_rmse: float | None = None,
    eval_every: int = 50,
    log_fn=None,
) -> MotionTrainingResult:
    """Train predictor and encoder jointly over consecutive-frame pairs.

    Per epoch, each clip contributes one randomly sampled (t, t+1) pair;
    clips are grouped into minibatches and both networks take one optimizer
    step per minibatch.  After every pair the clip's common motion field is
    replaced by the restricted flow just inferred.  When `target_rmse` is
    given, training stops early once the full-dataset reconstruction RMSE
    (checked every `eval_every` epochs, pre-screened by the running
    training RMSE) falls below it.
    """
    rng = rng or np.random.default_rng(0)
    usable = _usable_clips(clips)
    size = predictor.input_size

    frames_small = [
        torch.stack([resize(f, size, size) for f in clip.frames]) for clip in usable
    ]
    fields = {
        clip.clip_id: torch.zeros(ENCODER_INPUT_SIZE, ENCODER_INPUT_SIZE, 2)
        for clip in usable
    }

    opt_p = torch.optim.Adam(predictor.parameters(), lr=hp.learning_rate, betas=hp.adam_betas)
    opt_e = torch.optim.Adam(encoder.parameters(), lr=hp.learning_rate, betas=hp.adam_betas)
    predictor.train()
    encoder.train()

    history: list[dict] = []
    running_rmse = float("inf")
    start = time.time()
    for epoch in range(hp.epochs):
        order = rng.permutation(len(usable))
        epoch_loss = epoch_p = epoch_tv = 0.0
        sq_err_sum = 0.0
        sq_err_count = 0
        for chunk_start in range(0, len(order), hp.batch_size):
            batch = order[chunk_start : chunk_start + hp.batch_size]
            imgs, targets, encoder_in = [], [], []
            for idx in batch:
                t = int(rng.integers(0, len(usable[idx]) - 1))
                imgs.append(frames_small[idx][t])
                targets.append(frames_small[idx][t + 1])
                encoder_in.append(fields[usable[idx].clip_id])
            imgs_t = torch.stack(imgs)
            targets_t = torch.stack(targets)
            z = encoder(_stack_nchw(encoder_in))
            raw = predictor(_stack_nchw(imgs).contiguous(), z)
            flow = restrict_flow(
                raw.permute(0, 2, 3, 1), hp.beta, allow_unrestricted=hp.allow_unrestricted
            )
            warped = warp(imgs_t, flow)
            loss_p = photometric_l2(warped, targets_t)
            loss_tv = weighted_tv_loss(flow, targets_t, hp.sigma)
            loss = motion_total_loss(loss_p, loss_tv, hp.lambda_p, hp.lambda_tv)
            opt_p.zero_grad(set_to_none=True)
            opt_e.zero_grad(set_to_none=True)
            loss.backward()
            opt_p.step()
            opt_e.step()

            with torch.no_grad():
                for row, idx in enumerate(batch):
                    fields[usable[idx].clip_id] = resize(
                        flow[row].detach(), ENCODER_INPUT_SIZE, ENCODER_INPUT_SIZE
                    )
            epoch_loss += loss.item()
            epoch_p += loss_p.item()
            epoch_tv += loss_tv.item()
            sq_err_sum += loss_p.item()
            sq_err_count += targets_t.numel()

        train_rmse = math.sqrt(sq_err_sum / sq_err_count)
        running_rmse = train_rmse if epoch == 0 else 0.8 * running_rmse + 0.2 * train_rmse
        record = {
            "epoch": epoch,
            "loss": epoch_loss,
            "loss_p": epoch_p,
            "loss_tv": epoch_tv,
            "train_rmse": train_rmse,
            "elapsed_s": round(time.time() - start, 3),
        }
        if log_fn is not None:
            log_fn(record)
        history.append(record)

        if (
            target_rmse is not None
            and running_rmse < target_rmse
            and (epoch + 1) % eval_every == 0
        ):
            full = motion_reconstruction_rmse(usable, predictor, encoder, fields, hp)
            record["eval_rmse"] = full
            if full < target_rmse:
                log.info("early stop at epoch %d: eval RMSE %.4f", epoch, full)
                break

    codebook = Codebook(kind="motion")
    encoder.eval()
    predictor.eval()
    with torch.no_grad():
        for clip in usable:
            codebook.entries[clip.clip_id] = encoder(
                fields[clip.clip_id].permute(2, 0, 1).unsqueeze(0)
            ).squeeze(0)
    predictor.trained = True
    encoder.trained = True
    return MotionTrainingResult(predictor, encoder, codebook, fields, history)


def motion_reconstruction_rmse(
    clips,
    predictor: PredictorNet,
    encoder: EncoderNet,
    fields: dict[str, torch.Tensor],
    hp: MotionHyperParams,
) -> float:
    """Mean next-frame reconstruction RMSE over every consecutive pair."""
    size = predictor.input_size
    rmses = []
    with torch.no_grad():
        for clip in clips:
            z = encoder(fields[clip.clip_id].permute(2, 0, 1).unsqueeze(0)).squeeze(0)
            for t in range(len(clip) - 1):
                img = resize(clip.frames[t], size, size)
                target = resize(clip.frames[t + 1], size, size)
                raw = predictor_forward(predictor, img, z)
                flow = restrict_flow(raw, hp.beta, allow_unrestricted=hp.allow_unrestricted)
                recon = warp(img, flow)
                rmses.append(torch.sqrt(((recon - target) ** 2).mean()).item())
    return float(np.mean(rmses))


def predict_motion_sequence(
    input_image,
    z,
    predictor: PredictorNet,
    frames: int,
    *,
    beta: float = 64.0,
    speed_scale: float = 1.0,
    allow_unrestricted: bool = False,
) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
    """Recurrent motion rollout from a single image.

    Returns (frames, flows) where frames[0] is the input and frames[k] for
    k >= 1 is reconstructed by warping the *input* image with flows[k-1],
    the composed backward flow from step k to the start.  The predictor
    sees each previous output resized to its training resolution; inferred
    per-step flows are scaled by `speed_scale`, resized to the native
    resolution, and composed there.
    """
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    img = as_tensor(input_image)
    h, w = img.shape[0], img.shape[1]
    size = predictor.input_size
    code = as_tensor(z)

    out_frames = [img]
    flows: list[torch.Tensor] = []
    composed = torch.zeros(h, w, 2, dtype=img.dtype)
    current = img
    predictor.eval()
    with torch.no_grad():
        for _ in range(frames):
            raw = predictor_forward(predictor, resize(current, size, size), code)
            step = restrict_flow(raw, beta, allow_unrestricted=allow_unrestricted)
            step = step * speed_scale
            step = resize(step, h, w)
            composed = compose_flows(composed, step)
            current = warp(img, composed)
            out_frames.append(current)
            flows.append(composed)
    return out_frames, flows
