"""Network definitions: predictors, encoders, latent LSTM, feature taps.

The motion and appearance predictors share one fully-convolutional
encoder-decoder body; they differ only in output channels (2 flow channels
vs 6 color-transfer channels).  Latent codes are tiled over the spatial
grid and concatenated before each downsampling conv, so the whole net
stays convolutional and accepts any input whose sides are multiples of 8.

Encoders compress a 128×128 flow field (2ch) or image (3ch) into an 8-dim
latent code through strided/pooled residual blocks.
"""

from __future__ import annotations

import warnings

import torch
import torch.nn as nn
import torch.nn.functional as F

from .imageops import as_tensor

LATENT_DIM = 8
ENCODER_INPUT_SIZE = 128

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)

CHECKPOINT_VERSION = 1


def init_weights(module: nn.Module) -> None:
    """Gaussian(0, 0.02) init for conv layers, applied recursively."""
    classname = module.__class__.__name__
    if classname.find("Conv") != -1 and hasattr(module, "weight"):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class PredictorResBlock(nn.Module):
    """512-channel residual block: conv-norm-act-conv-norm plus identity."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm2 = nn.InstanceNorm2d(channels)
        self.act = nn.LeakyReLU(0.1)

    def forward(self, x):
        y = self.act(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return x + y


class PredictorNet(nn.Module):
    """Latent-conditioned encoder-decoder that maps an image to a field.

    Three stride-2 downsampling convs (128/256/512 channels, the latent
    code concatenated per pixel before each), five residual blocks, then
    three nearest-neighbor upsampling stages with skip concatenation from
    the matching downsampling outputs.  Final tanh bounds outputs to
    (-1, 1); out_channels is 2 for flow, 6 for color transfer maps.
    """

    def __init__(self, out_channels: int, in_channels: int = 3,
                 latent_dim: int = LATENT_DIM, input_size: int = 256,
                 trained: bool = False):
        super().__init__()
        self.out_channels = out_channels
        self.in_channels = in_channels
        self.latent_dim = latent_dim
        self.input_size = input_size
        self.trained = trained

        zc = latent_dim
        self.conv1 = nn.Conv2d(in_channels + zc, 128, 5, 2, 2)
        self.conv2 = nn.Conv2d(128 + zc, 256, 3, 2, 1)
        self.norm2 = nn.InstanceNorm2d(256)
        self.conv3 = nn.Conv2d(256 + zc, 512, 3, 2, 1)
        self.norm3 = nn.InstanceNorm2d(512)
        self.res = nn.Sequential(*[PredictorResBlock(512) for _ in range(5)])
        self.upconv1 = nn.Conv2d(512 + 512, 256, 3, 1, 1)
        self.upnorm1 = nn.InstanceNorm2d(256)
        self.upconv2 = nn.Conv2d(256 + 256, 128, 3, 1, 1)
        self.upnorm2 = nn.InstanceNorm2d(128)
        self.upconv3 = nn.Conv2d(128 + 128, out_channels, 5, 1, 2)
        self.act = nn.LeakyReLU(0.1)

        self.apply(init_weights)

    def config(self) -> dict:
        return {
            "out_channels": self.out_channels,
            "in_channels": self.in_channels,
            "latent_dim": self.latent_dim,
            "input_size": self.input_size,
            "trained": self.trained,
        }

    @staticmethod
    def _tile(z: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        b, _, h, w = like.shape
        return z.view(b, -1, 1, 1).expand(b, z.shape[1], h, w)

    def forward(self, x: torch.Tensor, z: torch.Tensor, *, skips: bool = True) -> torch.Tensor:
        if x.ndim != 4:
            raise ValueError(f"expected NCHW input, got shape {tuple(x.shape)}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ValueError(f"input sides must be divisible by 8, got {x.shape[2]}×{x.shape[3]}")
        if z.ndim != 2 or z.shape[0] != x.shape[0] or z.shape[1] != self.latent_dim:
            raise ValueError(
                f"latent must be (batch, {self.latent_dim}), got {tuple(z.shape)}"
            )
        d1 = self.act(self.conv1(torch.cat([x, self._tile(z, x)], dim=1)))
        d2 = self.act(self.norm2(self.conv2(torch.cat([d1, self._tile(z, d1)], dim=1))))
        d3 = self.act(self.norm3(self.conv3(torch.cat([d2, self._tile(z, d2)], dim=1))))
        y = self.res(d3)

        gain = 1.0 if skips else 0.0
        y = torch.cat([y, d3 * gain], dim=1)
        y = F.interpolate(y, scale_factor=2, mode="nearest")
        y = self.act(self.upnorm1(self.upconv1(y)))
        y = torch.cat([y, d2 * gain], dim=1)
        y = F.interpolate(y, scale_factor=2, mode="nearest")
        y = self.act(self.upnorm2(self.upconv2(y)))
        y = torch.cat([y, d1 * gain], dim=1)
        y = F.interpolate(y, scale_factor=2, mode="nearest")
        return torch.tanh(self.upconv3(y))


class EncoderResBlock(nn.Module):
    """Pre-activation residual block with mean-pool downsampling."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, in_channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(in_channels, out_channels, 3, 1, 1)
        self.shortcut = nn.Conv2d(in_channels, out_channels, 1, 1, 0)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x):
        y = self.conv1(self.act(x))
        y = self.conv2(self.act(y))
        y = F.avg_pool2d(y, 2)
        s = self.shortcut(F.avg_pool2d(x, 2))
        return y + s


class EncoderNet(nn.Module):
    """Compresses a 128×128 input into an 8-dim latent code.

    One stride-2 conv to 64 channels, three downsampling residual blocks
    (128/192/256), LeakyReLU + 8×8 average pooling, then a linear layer.
    """

    def __init__(self, in_channels: int, latent_dim: int = LATENT_DIM, trained: bool = False):
        super().__init__()
        self.in_channels = in_channels
        self.latent_dim = latent_dim
        self.trained = trained
        self.conv1 = nn.Conv2d(in_channels, 64, 4, 2, 1)
        self.res1 = EncoderResBlock(64, 128)
        self.res2 = EncoderResBlock(128, 192)
        self.res3 = EncoderResBlock(192, 256)
        self.act = nn.LeakyReLU(0.2)
        self.pool = nn.AvgPool2d(8)
        self.fc = nn.Linear(256, latent_dim)
        self.apply(init_weights)

    def config(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "latent_dim": self.latent_dim,
            "trained": self.trained,
        }

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (batch, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        y = self.conv1(x)
        y = self.res3(self.res2(self.res1(y)))
        y = self.pool(self.act(y))
        return self.fc(y.flatten(1))


class LatentLSTM(nn.Module):
    """Next-code predictor over 8-dim latent sequences (128-wide cell)."""

    def __init__(self, latent_dim: int = LATENT_DIM, hidden: int = 128):
        super().__init__()
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.fc_in = nn.Linear(latent_dim, hidden)
        self.cell = nn.LSTMCell(hidden, hidden)
        self.fc_out = nn.Linear(hidden, latent_dim)

    def config(self) -> dict:
        return {"latent_dim": self.latent_dim, "hidden": self.hidden}

    def step(self, code: torch.Tensor, state=None):
        """One recurrent step: (B, 8) code -> (next code, new state)."""
        h, c = self.cell(self.fc_in(code), state)
        return self.fc_out(h), (h, c)

    def forward(self, sequence: torch.Tensor) -> torch.Tensor:
        """Teacher-forced pass: (T, 8) inputs -> (T, 8) next-code predictions."""
        state = None
        outputs = []
        for t in range(sequence.shape[0]):
            out, state = self.step(sequence[t : t + 1], state)
            outputs.append(out)
        return torch.cat(outputs, dim=0)


class FeatureExtractor(nn.Module):
    """Fixed convolutional feature taps for perceptual losses.

    Wraps a sequential conv stack and exposes named activations.  The
    wrapped parameters are frozen: gradients flow through to the input but
    the weights never update.  Inputs are channels-last images in [-1, 1];
    they are resized to `input_size` and re-normalized to the wrapped
    network's pretraining statistics before the forward pass.
    """

    def __init__(self, features: nn.Sequential, taps: dict[str, int],
                 input_size: int = 256, mean=_IMAGENET_MEAN, std=_IMAGENET_STD):
        super().__init__()
        self.features = features
        self.taps = dict(taps)
        self.input_size = input_size
        self.register_buffer("mean", torch.tensor(mean).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(std).view(1, 3, 1, 1))
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        # stays frozen regardless of surrounding train()/eval() toggles
        return super().train(False)

    def _prepare(self, img: torch.Tensor) -> torch.Tensor:
        t = as_tensor(img)
        if t.ndim == 3:
            t = t.unsqueeze(0)
        if t.ndim != 4 or t.shape[-1] != 3:
            raise ValueError(f"expected (..., H, W, 3) image, got {tuple(t.shape)}")
        x = t.permute(0, 3, 1, 2)
        if x.shape[2] != self.input_size or x.shape[3] != self.input_size:
            x = F.interpolate(x, size=(self.input_size, self.input_size),
                              mode="bilinear", align_corners=True)
        x = (x + 1.0) * 0.5
        return (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)

    def forward(self, img, layers) -> dict[str, torch.Tensor]:
        for name in layers:
            if name not in self.taps:
                raise ValueError(f"unknown feature tap {name!r}; have {sorted(self.taps)}")
        wanted = {self.taps[name]: name for name in layers}
        x = self._prepare(img)
        out: dict[str, torch.Tensor] = {}
        for idx, layer in enumerate(self.features):
            x = layer(x)
            if idx in wanted:
                out[wanted[idx]] = x
            if idx >= max(wanted):
                break
        return out


_VGG16_LAYOUT = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M")
VGG16_TAPS = {"relu1_2": 3, "relu2_2": 8, "relu3_3": 15, "relu4_3": 22}


def vgg16_features(weights_path: str | None = None, *, seed: int = 0,
                   input_size: int = 256) -> FeatureExtractor:
    """Build a VGG16 conv stack with the standard perceptual-loss taps.

    `weights_path` should point to a torch state dict in the usual
    torchvision layout (keys `features.N.weight` or bare `N.weight`).
    Without weights the stack is seeded-random: deterministic and usable
    for smoke training, but not perceptually meaningful.
    """
    layers: list[nn.Module] = []
    in_ch = 3
    for spec in _VGG16_LAYOUT:
        if spec == "M":
            layers.append(nn.MaxPool2d(2, 2))
        else:
            layers.append(nn.Conv2d(in_ch, spec, 3, 1, 1))
            layers.append(nn.ReLU(inplace=False))
            in_ch = spec
    features = nn.Sequential(*layers)

    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        if any(k.startswith("features.") for k in state):
            state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}
        features.load_state_dict(state)
    else:
        warnings.warn(
            "no pretrained weights supplied; using a seeded random feature stack",
            stacklevel=2,
        )
        gen = torch.Generator().manual_seed(seed)
        for m in features:
            if isinstance(m, nn.Conv2d):
                nn.init.normal_(m.weight, 0.0, 0.05, generator=gen)
                nn.init.zeros_(m.bias)
    return FeatureExtractor(features, VGG16_TAPS, input_size=input_size)


def gram_matrix(features: torch.Tensor) -> torch.Tensor:
    """Channel-by-channel correlation of a feature map.

    Accepts (C, H, W) or (B, C, H, W); returns (C, C) or (B, C, C),
    normalized by channels × positions to keep scales comparable across
    layers.
    """
    batched = features.ndim == 4
    f = features if batched else features.unsqueeze(0)
    b, c, h, w = f.shape
    flat = f.reshape(b, c, h * w)
    g = torch.bmm(flat, flat.transpose(1, 2)) / float(c * h * w)
    return g if batched else g.squeeze(0)


def gram_features(extractor: FeatureExtractor, img, layers) -> dict[str, torch.Tensor]:
    """Per-layer Gram matrices of the extractor's activations for an image."""
    feats = extractor(img, layers)
    return {name: gram_matrix(feat) for name, feat in feats.items()}


# ---------------------------------------------------------------------------
# single-sample forward helpers (channels-last boundary)
# ---------------------------------------------------------------------------

def predictor_forward(net: PredictorNet, img, z) -> torch.Tensor:
    """Run the predictor on one channels-last image, returning a H×W×C map."""
    t = as_tensor(img)
    code = as_tensor(z)
    if code.numel() != net.latent_dim:
        raise ValueError(f"latent code must have {net.latent_dim} values, got {code.numel()}")
    x = t.permute(2, 0, 1).unsqueeze(0)
    out = net(x, code.reshape(1, -1).to(t.dtype))
    return out.squeeze(0).permute(1, 2, 0)


def encoder_forward(net: EncoderNet, inp) -> torch.Tensor:
    """Encode one channels-last 128×128 input into an 8-dim code."""
    t = as_tensor(inp)
    x = t.permute(2, 0, 1).unsqueeze(0)
    return net(x).squeeze(0)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, nets: dict[str, nn.Module], extra: dict | None = None) -> None:
    """Persist named networks with their architecture configs and a version."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "arch": {name: {"class": net.__class__.__name__, "config": net.config()}
                 for name, net in nets.items()},
        "state": {name: net.state_dict() for name, net in nets.items()},
        "extra": extra or {},
    }
    torch.save(payload, path)


_NET_CLASSES = {"PredictorNet": PredictorNet, "EncoderNet": EncoderNet, "LatentLSTM": LatentLSTM}


def load_checkpoint(path) -> dict[str, nn.Module | dict]:
    """Rebuild the networks stored by save_checkpoint.

    Returns {"nets": {name: module}, "extra": dict}.
    """
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    nets: dict[str, nn.Module] = {}
    for name, arch in payload["arch"].items():
        cls = _NET_CLASSES.get(arch["class"])
        if cls is None:
            raise ValueError(f"unknown network class {arch['class']!r} in checkpoint")
        net = cls(**arch["config"])
        net.load_state_dict(payload["state"][name])
        nets[name] = net
    return {"nets": nets, "extra": payload.get("extra", {})}
