"""Indirect control: turn sparse user annotations into latent codes.

The user never touches the 8-dim latent space directly.  Arrows sketched
over the image say "make the flow point this way here"; color patches say
"make this region look like that".  Each becomes a small optimization over
the latent code with the network weights frozen, mirroring how training
found the codes in the first place.

Also houses the LSTM that predicts appearance-code sequences so inference
can run without the codebook.
"""

from __future__ import annotations

import base64
import io
import json
import logging
from dataclasses import dataclass, field

import imageio.v3 as iio
import numpy as np
import torch

from .appearance import color_transfer, split_transfer_map
from .dataset import Codebook
from .imageops import as_tensor, normalize_image, resize
from .networks import ENCODER_INPUT_SIZE, EncoderNet, LatentLSTM, PredictorNet

log = logging.getLogger(__name__)

ANNOTATION_SCHEMA_VERSION = 1
DEFAULT_MARGIN = 0.5
ARROW_BRUSH_RADIUS = 1.5  # half of the 3-pixel stroke width


@dataclass
class Arrow:
    x: float
    y: float
    dx: float
    dy: float

    def __post_init__(self):
        if self.dx == 0 and self.dy == 0:
            raise ValueError("arrow direction must be non-zero")


@dataclass
class Patch:
    x: int
    y: int
    image: torch.Tensor  # (h, w, 3) normalized

    def __post_init__(self):
        self.image = as_tensor(self.image)
        if self.image.ndim != 3 or self.image.shape[-1] != 3:
            raise ValueError("patch image must be h×w×3")


@dataclass
class MotionAnnotation:
    """Sparse arrows over a height×width canvas."""

    height: int
    width: int
    arrows: list[Arrow] = field(default_factory=list)

    def rasterize(self, beta: float = 64.0, out_h: int | None = None,
                  out_w: int | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        """Paint arrows into a flow map and mask at the target resolution.

        Each arrow paints its unit direction, scaled to 1/beta magnitude,
        as a 3-pixel-wide stroke anchored at its position.  The stroke
        length is a fixed fraction of the raster size, NOT the drawn arrow
        length: only direction carries meaning, so re-scaling an arrow must
        leave the rasterization (and hence the control objective) unchanged.
        """
        if not self.arrows:
            raise ValueError("annotation has no arrows")
        out_h = out_h or self.height
        out_w = out_w or self.width
        sx = (out_w - 1) / max(1, self.width - 1)
        sy = (out_h - 1) / max(1, self.height - 1)
        target = torch.zeros(out_h, out_w, 2)
        mask = torch.zeros(out_h, out_w)
        radius = int(np.ceil(ARROW_BRUSH_RADIUS - 0.5))
        stroke_px = max(3.0, 0.08 * min(out_h, out_w))
        for arrow in self.arrows:
            length = float(np.hypot(arrow.dx, arrow.dy))
            ux, uy = arrow.dx / length, arrow.dy / length
            vec = torch.tensor([ux / beta, uy / beta])
            x0, y0 = arrow.x * sx, arrow.y * sy
            x1, y1 = x0 + ux * stroke_px, y0 + uy * stroke_px
            steps = max(2, int(stroke_px * 2) + 1)
            for t in np.linspace(0.0, 1.0, steps):
                cx, cy = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
                px, py = int(round(cx)), int(round(cy))
                for oy in range(-radius, radius + 1):
                    for ox in range(-radius, radius + 1):
                        qx, qy = px + ox, py + oy
                        if 0 <= qx < out_w and 0 <= qy < out_h:
                            target[qy, qx] = vec
                            mask[qy, qx] = 1.0
        return target, mask


@dataclass
class AppearanceAnnotation:
    """Color swatches placed over a height×width canvas."""

    height: int
    width: int
    patches: list[Patch] = field(default_factory=list)

    def __post_init__(self):
        for patch in self.patches:
            ph, pw = patch.image.shape[0], patch.image.shape[1]
            if patch.x < 0 or patch.y < 0 or patch.x + pw > self.width or patch.y + ph > self.height:
                raise ValueError(
                    f"patch at ({patch.x},{patch.y}) size {pw}×{ph} exceeds "
                    f"{self.width}×{self.height} canvas"
                )

    def rasterize(self, out_h: int | None = None,
                  out_w: int | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        """Place patch pixels into a color map and mask at the target size."""
        if not self.patches:
            raise ValueError("annotation has no patches")
        out_h = out_h or self.height
        out_w = out_w or self.width
        sx = out_w / self.width
        sy = out_h / self.height
        target = torch.zeros(out_h, out_w, 3)
        mask = torch.zeros(out_h, out_w)
        for patch in self.patches:
            ph, pw = patch.image.shape[0], patch.image.shape[1]
            y0, x0 = int(round(patch.y * sy)), int(round(patch.x * sx))
            y1 = min(out_h, max(y0 + 1, int(round((patch.y + ph) * sy))))
            x1 = min(out_w, max(x0 + 1, int(round((patch.x + pw) * sx))))
            target[y0:y1, x0:x1] = resize(patch.image, y1 - y0, x1 - x0)
            mask[y0:y1, x0:x1] = 1.0
        return target, mask


# ---------------------------------------------------------------------------
# objectives and latent-code search
# ---------------------------------------------------------------------------

def flow_cosine_map(annotated: torch.Tensor, predicted: torch.Tensor,
                    eps: float = 1e-8) -> torch.Tensor:
    """Per-pixel cosine between two flow fields; 0 where either vanishes."""
    dot = (annotated * predicted).sum(dim=-1)
    denom = (annotated.norm(dim=-1) * predicted.norm(dim=-1)).clamp_min(eps)
    return dot / denom


def motion_annotation_objective(raw_flow, target_flow, mask,
                                margin: float = DEFAULT_MARGIN) -> torch.Tensor:
    """Hinge on direction agreement: annotated pixels whose predicted flow
    reaches cosine >= 1 - margin contribute nothing; everything below is
    penalized quadratically."""
    d = flow_cosine_map(target_flow, raw_flow)
    hinge = torch.clamp(mask * (1.0 - d - margin), min=0.0)
    return (hinge ** 2).sum()


def appearance_annotation_objective(transfer_out, target_colors, mask) -> torch.Tensor:
    """Masked squared error between annotated colors and the recolored image."""
    diff = (target_colors - transfer_out) * mask.unsqueeze(-1)
    return (diff ** 2).sum()


@dataclass
class ControlResult:
    code: torch.Tensor
    objective_trace: list[float]
    best_step: int
    best_objective: float


def _initial_codes(codebook: Codebook | None, restarts: int, seed: int,
                   latent_dim: int) -> list[torch.Tensor]:
    """Search starts: the codebook mean plus seeded restarts from entries."""
    rng = np.random.default_rng(seed)
    if codebook is not None and len(codebook) > 0:
        entries = []
        for value in codebook.entries.values():
            entries.append(torch.stack(list(value)).mean(dim=0) if isinstance(value, list)
                           else value)
        stacked = torch.stack(entries)
        inits = [stacked.mean(dim=0)]
        for _ in range(restarts):
            inits.append(stacked[int(rng.integers(0, len(entries)))].clone())
        return inits
    inits = [torch.zeros(latent_dim)]
    for _ in range(restarts):
        inits.append(torch.tensor(rng.standard_normal(latent_dim), dtype=torch.float32))
    return inits


def _freeze_params(net: torch.nn.Module):
    flags = [(p, p.requires_grad) for p in net.parameters()]
    for p, _ in flags:
        p.requires_grad_(False)
    return flags


def _restore_params(flags):
    for p, flag in flags:
        p.requires_grad_(flag)


def _optimize_code(objective_fn, inits: list[torch.Tensor], steps: int, lr: float,
                   time_budget_s: float | None = None) -> ControlResult:
    import time as _time

    deadline = None if time_budget_s is None else _time.monotonic() + time_budget_s
    best: ControlResult | None = None
    for z0 in inits:
        z = z0.clone().detach().requires_grad_(True)
        opt = torch.optim.Adam([z], lr=lr)
        trace: list[float] = []
        run_best_val = float("inf")
        run_best_z = z0.clone()
        run_best_step = 0
        for step in range(steps):
            obj = objective_fn(z)
            trace.append(obj.item())
            if obj.item() < run_best_val:
                run_best_val = obj.item()
                run_best_z = z.detach().clone()
                run_best_step = step
            if obj.item() == 0.0:
                break
            if deadline is not None and _time.monotonic() > deadline:
                break
            opt.zero_grad(set_to_none=True)
            obj.backward()
            opt.step()
        candidate = ControlResult(run_best_z, trace, run_best_step, run_best_val)
        if best is None or candidate.best_objective < best.best_objective:
            best = candidate
        if deadline is not None and _time.monotonic() > deadline:
            break
    return best


def optimize_motion_code(
    input_image,
    annotation: MotionAnnotation,
    predictor: PredictorNet,
    *,
    steps: int = 200,
    lr: float = 1e-2,
    beta: float = 64.0,
    margin: float = DEFAULT_MARGIN,
    codebook: Codebook | None = None,
    restarts: int = 3,
    seed: int = 0,
    init_codes: list | None = None,
    time_budget_s: float | None = None,
) -> ControlResult:
    """Search the latent space for a code whose flow follows the arrows.

    Only the code moves; the predictor stays frozen.  Runs from the
    codebook mean plus seeded restarts and returns the best-objective
    iterate with its per-step trace.  A time budget, when set, cuts the
    search short and returns the best code found so far.
    """
    img = as_tensor(input_image)
    size = predictor.input_size
    small = resize(img, size, size).permute(2, 0, 1).unsqueeze(0)
    target, mask = annotation.rasterize(beta=beta, out_h=size, out_w=size)
    if torch.all(mask == 0):
        raise ValueError("annotation mask is empty after rasterization")

    inits = ([as_tensor(c) for c in init_codes] if init_codes
             else _initial_codes(codebook, restarts, seed, predictor.latent_dim))
    flags = _freeze_params(predictor)
    predictor.eval()
    try:
        def objective(z):
            raw = predictor(small, z.reshape(1, -1)).squeeze(0).permute(1, 2, 0)
            return motion_annotation_objective(raw, target, mask, margin)

        return _optimize_code(objective, inits, steps, lr, time_budget_s)
    finally:
        _restore_params(flags)


def optimize_appearance_code(
    input_image,
    annotation: AppearanceAnnotation,
    predictor: PredictorNet,
    *,
    steps: int = 200,
    lr: float = 1e-2,
    codebook: Codebook | None = None,
    restarts: int = 3,
    seed: int = 0,
    init_codes: list | None = None,
    time_budget_s: float | None = None,
) -> ControlResult:
    """Search for a code whose color transfer reproduces the placed patches."""
    img = as_tensor(input_image)
    size = predictor.input_size
    small_hwc = resize(img, size, size)
    small = small_hwc.permute(2, 0, 1).unsqueeze(0)
    target, mask = annotation.rasterize(out_h=size, out_w=size)
    if torch.all(mask == 0):
        raise ValueError("annotation mask is empty after rasterization")

    inits = ([as_tensor(c) for c in init_codes] if init_codes
             else _initial_codes(codebook, restarts, seed, predictor.latent_dim))
    flags = _freeze_params(predictor)
    predictor.eval()
    try:
        def objective(z):
            raw = predictor(small, z.reshape(1, -1)).squeeze(0).permute(1, 2, 0)
            out = color_transfer(split_transfer_map(raw), small_hwc)
            return appearance_annotation_objective(out, target, mask)

        return _optimize_code(objective, inits, steps, lr, time_budget_s)
    finally:
        _restore_params(flags)


# ---------------------------------------------------------------------------
# LSTM latent prediction
# ---------------------------------------------------------------------------

def train_latent_lstm(
    codebook: Codebook,
    net: LatentLSTM,
    *,
    epochs: int = 500,
    lr: float = 1e-3,
    log_fn=None,
) -> LatentLSTM:
    """Teacher-forced next-code regression over codebook sequences."""
    sequences = [
        torch.stack(list(seq))
        for seq in codebook.entries.values()
        if isinstance(seq, (list, tuple)) and len(seq) >= 2
    ]
    if not sequences:
        raise ValueError("codebook holds no sequence of length >= 2")
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    net.train()
    for epoch in range(epochs):
        total = 0.0
        for seq in sequences:
            pred = net(seq[:-1])
            loss = ((pred - seq[1:]) ** 2).sum()
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            total += loss.item()
        if log_fn is not None:
            log_fn({"epoch": epoch, "loss": total})
    net.eval()
    return net


def predict_code_sequence(
    seed_image,
    encoder: EncoderNet,
    lstm: LatentLSTM,
    length: int,
) -> list[torch.Tensor]:
    """Encode the seed frame, then free-run the LSTM for successor codes."""
    if length < 1:
        raise ValueError("length must be >= 1")
    img = as_tensor(seed_image)
    small = resize(img, ENCODER_INPUT_SIZE, ENCODER_INPUT_SIZE)
    encoder.eval()
    lstm.eval()
    with torch.no_grad():
        code = encoder(small.permute(2, 0, 1).unsqueeze(0))
        codes = [code.squeeze(0)]
        state = None
        current = code
        for _ in range(length - 1):
            current, state = lstm.step(current, state)
            codes.append(current.squeeze(0))
    return codes


# ---------------------------------------------------------------------------
# annotation interchange documents
# ---------------------------------------------------------------------------

def _encode_patch_image(img: torch.Tensor) -> str:
    from .imageops import denormalize_image

    buf = io.BytesIO()
    iio.imwrite(buf, denormalize_image(img), extension=".png")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_patch_image(rec: dict) -> torch.Tensor:
    if "image_data" in rec:
        raw = iio.imread(io.BytesIO(base64.b64decode(rec["image_data"])))
    elif "image_file" in rec:
        raw = iio.imread(rec["image_file"])
    else:
        raise ValueError("patch record needs image_data or image_file")
    return normalize_image(raw[..., :3])


def annotation_to_document(ann: MotionAnnotation | AppearanceAnnotation) -> dict:
    """Serialize an annotation into the interchange schema."""
    doc = {
        "version": ANNOTATION_SCHEMA_VERSION,
        "width": ann.width,
        "height": ann.height,
        "arrows": [],
        "patches": [],
    }
    if isinstance(ann, MotionAnnotation):
        doc["arrows"] = [
            {"x": a.x, "y": a.y, "dx": a.dx, "dy": a.dy} for a in ann.arrows
        ]
    else:
        for p in ann.patches:
            doc["patches"].append({
                "x": p.x,
                "y": p.y,
                "width": int(p.image.shape[1]),
                "height": int(p.image.shape[0]),
                "image_data": _encode_patch_image(p.image),
            })
    return doc


def _as_document(doc) -> dict:
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise ValueError("annotation document must be a JSON object")
    version = doc.get("version")
    if version != ANNOTATION_SCHEMA_VERSION:
        raise ValueError(f"unsupported annotation schema version {version!r}")
    return doc


def motion_annotation_from_document(doc) -> MotionAnnotation:
    doc = _as_document(doc)
    arrows = [Arrow(a["x"], a["y"], a["dx"], a["dy"]) for a in doc.get("arrows", [])]
    if not arrows:
        raise ValueError("document contains no arrows")
    return MotionAnnotation(height=doc["height"], width=doc["width"], arrows=arrows)


def appearance_annotation_from_document(doc) -> AppearanceAnnotation:
    doc = _as_document(doc)
    patches = []
    for rec in doc.get("patches", []):
        patches.append(Patch(x=rec["x"], y=rec["y"], image=_decode_patch_image(rec)))
    if not patches:
        raise ValueError("document contains no patches")
    return AppearanceAnnotation(height=doc["height"], width=doc["width"], patches=patches)
