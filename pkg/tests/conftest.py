"""Shared synthetic fixtures: procedurally animated clips and briefly
trained networks.  Training here is about mechanics and determinism, not
visual quality, so epoch counts are small and resolutions tiny."""

import numpy as np
import pytest
import torch

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

from stillmotion.appearance import AppearanceHyperParams, train_appearance
from stillmotion.dataset import Clip
from stillmotion.motion import MotionHyperParams, train_motion
from stillmotion.networks import EncoderNet, PredictorNet, vgg16_features


def sinusoid_pattern(xs: np.ndarray, ys: np.ndarray, seed: int = 0) -> np.ndarray:
    """Smooth multi-frequency pattern evaluated at float pixel coords.

    Returns values in roughly [-1, 1]; analytic, so translated frames are
    exact (no resampling error in the fixture itself).
    """
    rng = np.random.default_rng(seed)
    h, w = ys.shape[0], xs.shape[0]
    gx, gy = np.meshgrid(xs, ys)
    out = np.zeros((h, w, 3))
    for c in range(3):
        img = np.zeros((h, w))
        for freq, amp in ((0.05, 0.5), (0.11, 0.3), (0.23, 0.2)):
            phix, phiy = rng.uniform(0, 2 * np.pi, 2)
            ang = rng.uniform(0, np.pi)
            k = freq * 2 * np.pi
            img += amp * np.sin(k * (np.cos(ang) * gx + np.sin(ang) * gy) + phix + 0.3 * phiy)
        out[..., c] = img
    return np.clip(out, -1.0, 1.0)


def translating_clip(
    clip_id: str,
    h: int = 64,
    w: int = 64,
    n_frames: int = 6,
    dx: float = 0.35,
    dy: float = 0.0,
    seed: int = 0,
) -> Clip:
    """Clip whose content translates by (dx, dy) pixels per frame.

    Keep |(dx, dy)| under (h-1)/128 pixels: the restricted flow range is
    1/64 of the normalized span, so larger per-frame motion is not
    representable by a single predictor step at this resolution.
    """
    frames = []
    ys = np.arange(h, dtype=np.float64)
    for k in range(n_frames):
        xs = np.arange(w, dtype=np.float64)
        gx = xs - k * dx
        gy = ys - k * dy
        frames.append(torch.tensor(sinusoid_pattern(gx, gy, seed=seed), dtype=torch.float32))
    return Clip(clip_id, frames, kind="motion")


def tinted_clip(
    clip_id: str,
    h: int = 64,
    w: int = 64,
    n_frames: int = 5,
    seed: int = 0,
    swing: float = 0.8,
) -> Clip:
    """Clip with a fixed scene whose global tint sweeps over time."""
    base = sinusoid_pattern(np.arange(w, dtype=float), np.arange(h, dtype=float), seed=seed)
    frames = []
    for k in range(n_frames):
        phase = k / max(1, n_frames - 1)
        tint = np.array([
            swing * (phase - 0.5),
            swing * (0.5 - phase) * 0.6,
            swing * np.sin(np.pi * phase) * 0.8,
        ])
        frame = np.clip(base * (1.0 - 0.5 * phase) + tint, -1.0, 1.0)
        frames.append(torch.tensor(frame, dtype=torch.float32))
    return Clip(clip_id, frames, kind="appearance")


@pytest.fixture(scope="session")
def motion_rig():
    """Two tiny clips plus briefly trained motion nets and codebook."""
    torch.manual_seed(1234)
    clips = [
        translating_clip("east", dx=0.35, seed=3),
        translating_clip("west", dx=-0.35, seed=4),
    ]
    predictor = PredictorNet(out_channels=2, input_size=64)
    encoder = EncoderNet(in_channels=2)
    hp = MotionHyperParams(epochs=30, beta=64.0)
    result = train_motion(clips, predictor, encoder, hp, rng=np.random.default_rng(0))
    return {"clips": clips, "result": result, "hp": hp}


def state_checksum(module: torch.nn.Module) -> str:
    import hashlib

    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


@pytest.fixture(scope="session")
def appearance_rig():
    """Two tinted clips plus briefly trained appearance nets and codebook."""
    torch.manual_seed(4321)
    clips = [
        tinted_clip("day_a", seed=5),
        tinted_clip("day_b", seed=6, n_frames=4),
    ]
    predictor = PredictorNet(out_channels=6, input_size=64)
    encoder = EncoderNet(in_channels=3)
    with pytest.warns(UserWarning):
        extractor = vgg16_features(None, seed=0, input_size=64)
    extractor_checksum_before = state_checksum(extractor)
    hp = AppearanceHyperParams(epochs=60, learning_rate=1e-3)
    result = train_appearance(
        clips, predictor, encoder, extractor, hp, rng=np.random.default_rng(1)
    )
    return {
        "clips": clips,
        "result": result,
        "hp": hp,
        "extractor": extractor,
        "extractor_checksum_before": extractor_checksum_before,
    }
