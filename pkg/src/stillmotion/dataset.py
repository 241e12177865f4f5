"""Time-lapse ingestion, frame-sampling heuristics, and codebook persistence.

Clips are held as lists of normalized (H, W, 3) float tensors.  Ingestion
applies the redundancy filters that keep training pairs informative:

- motion clips keep every other frame, then drop consecutive pairs whose
  mean absolute pixel difference falls below a threshold (default 0.02 in
  normalized units); dropping a pair splits the clip so the surviving
  segments stay strictly consecutive;
- appearance clips are decimated to roughly ten real-world minutes between
  frames, then adjacent frames are dropped while the summed per-channel
  mean color change stays below a threshold (default 0.3).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import imageio.v3 as iio
import numpy as np
import torch

from .errors import CodebookFormatError, ConfigurationError
from .imageops import as_tensor, denormalize_image, normalize_image

log = logging.getLogger(__name__)

MOTION_DIFF_THRESHOLD = 0.02
APPEARANCE_COLOR_THRESHOLD = 0.3
CODEBOOK_VERSION = 1


@dataclass
class Clip:
    """One training clip: time-ordered normalized frames plus provenance."""

    clip_id: str
    frames: list[torch.Tensor]
    kind: str = "motion"
    source: str = ""

    def __post_init__(self):
        self.frames = [as_tensor(f) for f in self.frames]
        for f in self.frames:
            if f.ndim != 3 or f.shape[-1] != 3:
                raise ValueError(f"clip {self.clip_id}: frames must be H×W×3")

    @property
    def native_resolution(self) -> tuple[int, int]:
        return tuple(self.frames[0].shape[:2]) if self.frames else (0, 0)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class ClipStore:
    """Ordered collection of clips of one kind."""

    kind: str
    clips: dict[str, Clip] = field(default_factory=dict)

    def add(self, clip: Clip) -> None:
        if clip.clip_id in self.clips:
            raise ValueError(f"duplicate clip id {clip.clip_id!r}")
        self.clips[clip.clip_id] = clip

    def __len__(self) -> int:
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips.values())

    def save_to(self, root) -> None:
        """One directory per clip, frames as zero-padded PNGs plus an index."""
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        index = {"kind": self.kind, "clips": []}
        for clip in self:
            clip_dir = root / clip.clip_id
            clip_dir.mkdir(parents=True, exist_ok=True)
            for i, frame in enumerate(clip.frames):
                iio.imwrite(clip_dir / f"{i:06d}.png", denormalize_image(frame))
            index["clips"].append({
                "id": clip.clip_id,
                "frames": len(clip.frames),
                "source": clip.source,
            })
        (root / "index.json").write_text(json.dumps(index, indent=2))

    @classmethod
    def load_from(cls, root) -> "ClipStore":
        root = Path(root)
        index = json.loads((root / "index.json").read_text())
        store = cls(kind=index["kind"])
        for rec in index["clips"]:
            clip_dir = root / rec["id"]
            frames = [
                normalize_image(iio.imread(p))
                for p in sorted(clip_dir.glob("*.png"))
            ]
            store.add(Clip(rec["id"], frames, kind=index["kind"], source=rec.get("source", "")))
        return store


def _frames_from_source(source) -> list[torch.Tensor]:
    """Accept a frame list, a directory of images, or a video file path."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.is_dir():
            files = sorted(
                p for p in path.iterdir()
                if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
            )
            return [normalize_image(iio.imread(p)) for p in files]
        return [normalize_image(frame[..., :3]) for frame in iio.imiter(path)]
    frames = []
    for f in source:
        t = as_tensor(f)
        if not isinstance(f, torch.Tensor) and np.asarray(f).dtype == np.uint8:
            t = normalize_image(f)
        frames.append(t)
    return frames


def mean_abs_difference(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean over pixels and channels of |a-b| in normalized units."""
    return (a - b).abs().mean().item()


def mean_color_change(a: torch.Tensor, b: torch.Tensor) -> float:
    """Sum over RGB of the absolute difference of per-channel mean values."""
    return (a.mean(dim=(0, 1)) - b.mean(dim=(0, 1))).abs().sum().item()


def ingest_motion_clips(
    sources,
    *,
    diff_threshold: float = MOTION_DIFF_THRESHOLD,
    take_every: int = 2,
) -> ClipStore:
    """Build the motion training store from raw videos.

    Each source is (clip_id, frames-or-path).  Every `take_every`-th frame
    is kept, then consecutive pairs with mean absolute difference below
    `diff_threshold` are dropped; dropping splits a clip into segments so
    remaining neighbors are genuine consecutive pairs.  Undecodable sources
    are skipped with a report; segments shorter than two frames are
    discarded.
    """
    store = ClipStore(kind="motion")
    if not sources:
        raise ValueError("no sources given")
    for clip_id, source in sources:
        try:
            frames = _frames_from_source(source)
        except Exception as exc:  # undecodable input is reported, not fatal
            log.warning("skipping clip %s: %s", clip_id, exc)
            continue
        sampled = frames[::take_every]
        segments: list[list[torch.Tensor]] = [[]]
        for i, frame in enumerate(sampled):
            segments[-1].append(frame)
            if i + 1 < len(sampled):
                if mean_abs_difference(sampled[i + 1], frame) < diff_threshold:
                    segments.append([])  # split: the (i, i+1) pair is dropped
        kept = [seg for seg in segments if len(seg) >= 2]
        for n, seg in enumerate(kept):
            seg_id = clip_id if len(kept) == 1 else f"{clip_id}_s{n}"
            store.add(Clip(seg_id, seg, kind="motion", source=str(source)[:120]))
        log.info(
            "motion ingest %s: %d raw -> %d sampled -> %d segments kept",
            clip_id, len(frames), len(sampled), len(kept),
        )
    return store


def ingest_appearance_clips(
    sources,
    *,
    minutes_per_frame: float | None = None,
    sample_interval_minutes: float = 10.0,
    color_threshold: float = APPEARANCE_COLOR_THRESHOLD,
) -> ClipStore:
    """Build the appearance training store from one-day videos.

    Frames are first decimated to about `sample_interval_minutes` of
    real-world time apart, which requires knowing the real minutes spanned
    by one source frame: pass `minutes_per_frame`, or provide it per source
    as (clip_id, frames, minutes_per_frame).  Then adjacent frames are
    dropped while their summed mean color change stays below
    `color_threshold`, collapsing static stretches.
    """
    store = ClipStore(kind="appearance")
    if not sources:
        raise ValueError("no sources given")
    for entry in sources:
        if len(entry) == 3:
            clip_id, source, mpf = entry
        else:
            clip_id, source = entry
            mpf = minutes_per_frame
        if mpf is None or mpf <= 0:
            raise ConfigurationError(
                f"clip {clip_id}: minutes_per_frame missing; pass per-source timing "
                "metadata or a global minutes_per_frame"
            )
        try:
            frames = _frames_from_source(source)
        except Exception as exc:
            log.warning("skipping clip %s: %s", clip_id, exc)
            continue
        if not frames:
            log.warning("skipping clip %s: empty", clip_id)
            continue
        stride = max(1, round(sample_interval_minutes / mpf))
        sampled = frames[::stride]
        kept = [sampled[0]]
        for frame in sampled[1:]:
            if mean_color_change(frame, kept[-1]) < color_threshold:
                continue
            kept.append(frame)
        store.add(Clip(clip_id, kept, kind="appearance", source=str(source)[:120]))
        log.info(
            "appearance ingest %s: %d raw -> %d sampled -> %d kept",
            clip_id, len(frames), len(sampled), len(kept),
        )
    return store


# ---------------------------------------------------------------------------
# codebooks
# ---------------------------------------------------------------------------

@dataclass
class Codebook:
    """Latent codes extracted during training, keyed by clip id.

    Motion codebooks hold one 8-dim code per clip; appearance codebooks
    hold a time-ordered code sequence per clip.
    """

    kind: str
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("motion", "appearance"):
            raise ValueError(f"codebook kind must be motion or appearance, got {self.kind!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return list(self.entries.keys())


def _code_to_list(code: torch.Tensor) -> list[float]:
    # float32 -> double is exact, and json round-trips doubles exactly
    return [float(v) for v in as_tensor(code).reshape(-1).tolist()]


def save_codebook(path, codebook: Codebook) -> None:
    """Write a codebook as versioned JSON with lossless float encoding."""
    entries = []
    for clip_id, value in codebook.entries.items():
        if codebook.kind == "motion":
            entries.append({"clip_id": clip_id, "code": _code_to_list(value)})
        else:
            entries.append({
                "clip_id": clip_id,
                "code_sequence": [_code_to_list(c) for c in value],
            })
    payload = {"version": CODEBOOK_VERSION, "kind": codebook.kind, "entries": entries}
    Path(path).write_text(json.dumps(payload))


def missing_codebook_references(codebook: Codebook, store: ClipStore) -> list[str]:
    """Clip ids present in the codebook but absent from the store."""
    return [clip_id for clip_id in codebook.entries if clip_id not in store.clips]


def load_codebook(path) -> Codebook:
    """Read a codebook written by save_codebook; bit-identical round trip."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CodebookFormatError(f"corrupt codebook file {path}: {exc}") from exc
    version = payload.get("version")
    if version != CODEBOOK_VERSION:
        raise CodebookFormatError(
            f"codebook version {version!r} not supported (expected {CODEBOOK_VERSION}); "
            "regenerate or migrate the file"
        )
    kind = payload.get("kind")
    book = Codebook(kind=kind)
    for rec in payload.get("entries", []):
        if kind == "motion":
            book.entries[rec["clip_id"]] = torch.tensor(rec["code"], dtype=torch.float32)
        else:
            book.entries[rec["clip_id"]] = [
                torch.tensor(c, dtype=torch.float32) for c in rec["code_sequence"]
            ]
    return book
