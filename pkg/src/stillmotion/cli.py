"""Command-line entry points.

Everything nontrivial reads a structured config file (YAML or JSON) so a
run is reproducible from one artifact; quick knobs are also exposed as
flags.  Exit codes: 0 success, 2 configuration error, 3 missing artifact
(checkpoint, codebook, dataset, or input file).
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click
import imageio.v3 as iio
import numpy as np
import torch
import yaml

from .appearance import AppearanceHyperParams, train_appearance
from .control import (
    appearance_annotation_from_document,
    motion_annotation_from_document,
    optimize_appearance_code,
    optimize_motion_code,
    train_latent_lstm,
)
from .dataset import ClipStore, load_codebook, save_codebook
from .errors import ConfigurationError, MissingArtifactError
from .imageops import normalize_image
from .motion import MotionHyperParams, train_motion
from .networks import (
    EncoderNet,
    LatentLSTM,
    PredictorNet,
    load_checkpoint,
    save_checkpoint,
    vgg16_features,
)
from .synthesis import SynthesisConfig, encode_video, evaluate_sequence, synthesize, write_frame_sequence


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"{what} not found: {p}")
    return p


def _load_config(path) -> dict:
    p = _require_file(path, "config file")
    try:
        cfg = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"config {p} must be a mapping")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    section = cfg.get(name)
    if not isinstance(section, dict):
        raise ConfigurationError(f"config is missing the {name!r} section")
    return section


def _hyperparams(cls, section: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in section.items() if k in names}
    if "adam_betas" in kwargs:
        kwargs["adam_betas"] = tuple(kwargs["adam_betas"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad hyperparameters: {exc}") from exc


def _echo_record(record: dict) -> None:
    click.echo(json.dumps(record))


def _load_image(path) -> torch.Tensor:
    p = _require_file(path, "input image")
    return normalize_image(iio.imread(p)[..., :3])


def _load_nets(checkpoint_path, expect_kind: str):
    p = _require_file(checkpoint_path, f"{expect_kind} checkpoint")
    loaded = load_checkpoint(p)
    nets = loaded["nets"]
    if "predictor" not in nets:
        raise ConfigurationError(f"checkpoint {p} holds no predictor network")
    kind = loaded["extra"].get("kind")
    if kind is not None and kind != expect_kind:
        raise ConfigurationError(f"checkpoint {p} is a {kind} model, expected {expect_kind}")
    return loaded


def cli_errors(fn):
    """Map domain errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(2)
        except (MissingArtifactError, FileNotFoundError) as exc:
            click.echo(f"missing artifact: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
def main():
    """Looping landscape animation from a single photo."""


@main.command("train-motion")
@click.option("--config", "config_path", required=True, type=click.Path())
@cli_errors
def cmd_train_motion(config_path):
    """Train the motion predictor/encoder and extract the codebook."""
    cfg = _load_config(config_path)
    section = _section(cfg, "motion")
    store = ClipStore.load_from(_require_file(section.get("dataset", ""), "motion dataset"))
    hp = _hyperparams(MotionHyperParams, section)
    torch.manual_seed(int(cfg.get("seed", 0)))
    predictor = PredictorNet(out_channels=2, input_size=int(section.get("predictor_size", 256)))
    encoder = EncoderNet(in_channels=2)
    result = train_motion(
        list(store), predictor, encoder, hp,
        rng=np.random.default_rng(int(cfg.get("seed", 0))),
        target_rmse=section.get("target_rmse"),
        log_fn=_echo_record,
    )
    ckpt = section.get("checkpoint_out", "motion.ckpt")
    save_checkpoint(ckpt, {"predictor": result.predictor, "encoder": result.encoder},
                    extra={"kind": "motion", "beta": hp.beta})
    book = section.get("codebook_out", "motion_codebook.json")
    save_codebook(book, result.codebook)
    _echo_record({"checkpoint": str(ckpt), "codebook": str(book),
                  "clips": len(result.codebook)})


@main.command("train-appearance")
@click.option("--config", "config_path", required=True, type=click.Path())
@cli_errors
def cmd_train_appearance(config_path):
    """Train the appearance predictor/encoder and extract the codebook."""
    cfg = _load_config(config_path)
    section = _section(cfg, "appearance")
    store = ClipStore.load_from(_require_file(section.get("dataset", ""), "appearance dataset"))
    hp = _hyperparams(AppearanceHyperParams, section)
    torch.manual_seed(int(cfg.get("seed", 0)))
    out_channels = 3 if hp.direct_output else 6
    predictor = PredictorNet(out_channels=out_channels,
                             input_size=int(section.get("predictor_size", 256)))
    encoder = EncoderNet(in_channels=3)
    weights = section.get("vgg_weights")
    if weights is not None:
        _require_file(weights, "feature extractor weights")
    extractor = vgg16_features(weights, seed=int(cfg.get("seed", 0)))
    result = train_appearance(
        list(store), predictor, encoder, extractor, hp,
        rng=np.random.default_rng(int(cfg.get("seed", 0))),
        log_fn=_echo_record,
    )
    ckpt = section.get("checkpoint_out", "appearance.ckpt")
    save_checkpoint(ckpt, {"predictor": result.predictor, "encoder": result.encoder},
                    extra={"kind": "appearance"})
    book = section.get("codebook_out", "appearance_codebook.json")
    save_codebook(book, result.codebook)
    lstm_out = section.get("lstm_out")
    if lstm_out:
        lstm = train_latent_lstm(result.codebook, LatentLSTM(),
                                 epochs=int(section.get("lstm_epochs", 500)))
        save_checkpoint(lstm_out, {"lstm": lstm}, extra={"kind": "latent-lstm"})
    _echo_record({"checkpoint": str(ckpt), "codebook": str(book),
                  "clips": len(result.codebook)})


def _synthesis_config(section: dict) -> SynthesisConfig:
    names = {f.name for f in dataclasses.fields(SynthesisConfig)}
    kwargs = {k: v for k, v in section.items() if k in names}
    if "output_resolution" in kwargs and kwargs["output_resolution"] is not None:
        kwargs["output_resolution"] = tuple(kwargs["output_resolution"])
    try:
        return SynthesisConfig(**kwargs)
    except (TypeError, ConfigurationError) as exc:
        raise ConfigurationError(f"bad synthesis settings: {exc}") from exc


@main.command("synthesize")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--input", "input_path", default=None, type=click.Path(),
              help="Overrides the input image from the config.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Overrides the output frame directory.")
@click.option("--frames", "frame_count", default=None, type=int,
              help="Overrides frame_count.")
@click.option("--loop/--no-loop", "loop_enabled", default=None,
              help="Overrides loop_enabled.")
@click.option("--speed", "motion_speed_scale", default=None, type=float,
              help="Overrides motion_speed_scale.")
@click.option("--seed", default=None, type=int, help="Overrides the codebook pick seed.")
@cli_errors
def cmd_synthesize(config_path, input_path, out_dir, frame_count, loop_enabled,
                   motion_speed_scale, seed):
    """Generate an animation from a single image (rollout, loop, recolor)."""
    cfg = _load_config(config_path)
    section = dict(_section(cfg, "synthesize"))
    for key, value in (("frame_count", frame_count), ("loop_enabled", loop_enabled),
                       ("motion_speed_scale", motion_speed_scale), ("seed", seed)):
        if value is not None:
            section[key] = value
    img = _load_image(input_path or section.get("input_image", ""))
    motion = _load_nets(section.get("motion_checkpoint", ""), "motion")
    appearance = _load_nets(section.get("appearance_checkpoint", ""), "appearance")
    motion_book = load_codebook(
        _require_file(section.get("motion_codebook", ""), "motion codebook"))
    appearance_book = load_codebook(
        _require_file(section.get("appearance_codebook", ""), "appearance codebook"))
    syn_cfg = _synthesis_config(section)
    frames = synthesize(img, syn_cfg, motion["nets"]["predictor"],
                        appearance["nets"]["predictor"], motion_book, appearance_book)
    target = Path(out_dir or section.get("out_dir", "frames"))
    paths = write_frame_sequence(frames, target)
    video = section.get("video_out")
    if video:
        encode_video(frames, video, fps=int(section.get("fps", 30)))
    _echo_record({"frames": len(paths), "out_dir": str(target),
                  "video": video, "height": int(frames[0].shape[0]),
                  "width": int(frames[0].shape[1])})


@main.command("control-motion")
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--annotations", "annotations_path", required=True, type=click.Path())
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", default=None, type=click.Path())
@click.option("--steps", default=200, show_default=True)
@click.option("--lr", default=1e-2, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@cli_errors
def cmd_control_motion(image_path, annotations_path, checkpoint_path, codebook_path,
                       steps, lr, out_path):
    """Optimize a motion latent code from arrow annotations."""
    img = _load_image(image_path)
    doc = _require_file(annotations_path, "annotation document").read_text()
    try:
        annotation = motion_annotation_from_document(doc)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    loaded = _load_nets(checkpoint_path, "motion")
    book = load_codebook(_require_file(codebook_path, "codebook")) if codebook_path else None
    beta = float(loaded["extra"].get("beta", 64.0))
    result = optimize_motion_code(img, annotation, loaded["nets"]["predictor"],
                                  steps=steps, lr=lr, beta=beta, codebook=book)
    payload = {"code": [float(v) for v in result.code],
               "objective_trace": result.objective_trace,
               "best_step": result.best_step,
               "best_objective": result.best_objective}
    if out_path:
        Path(out_path).write_text(json.dumps(payload))
    _echo_record(payload)


@main.command("control-appearance")
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--annotations", "annotations_path", required=True, type=click.Path())
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", default=None, type=click.Path())
@click.option("--steps", default=200, show_default=True)
@click.option("--lr", default=1e-2, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@cli_errors
def cmd_control_appearance(image_path, annotations_path, checkpoint_path, codebook_path,
                           steps, lr, out_path):
    """Optimize an appearance latent code from color patches."""
    img = _load_image(image_path)
    doc = _require_file(annotations_path, "annotation document").read_text()
    try:
        annotation = appearance_annotation_from_document(doc)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    loaded = _load_nets(checkpoint_path, "appearance")
    book = load_codebook(_require_file(codebook_path, "codebook")) if codebook_path else None
    result = optimize_appearance_code(img, annotation, loaded["nets"]["predictor"],
                                      steps=steps, lr=lr, codebook=book)
    payload = {"code": [float(v) for v in result.code],
               "objective_trace": result.objective_trace,
               "best_step": result.best_step,
               "best_objective": result.best_objective}
    if out_path:
        Path(out_path).write_text(json.dumps(payload))
    _echo_record(payload)


def _read_frame_dir(path) -> list:
    p = _require_file(path, "frame directory")
    files = sorted(p.glob("*.png"))
    if not files:
        raise MissingArtifactError(f"no PNG frames in {p}")
    return [normalize_image(iio.imread(f)[..., :3]) for f in files]


@main.command("evaluate")
@click.option("--generated", required=True, type=click.Path())
@click.option("--reference", required=True, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
@cli_errors
def cmd_evaluate(generated, reference, out_path):
    """Per-frame RMSE between a generated and a reference sequence."""
    gen = _read_frame_dir(generated)
    ref = _read_frame_dir(reference)
    try:
        rmse, _ = evaluate_sequence(gen, ref)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    payload = {"rmse": rmse, "mean_rmse": float(np.mean(rmse)), "frames": len(rmse)}
    if out_path:
        Path(out_path).write_text(json.dumps(payload))
    _echo_record(payload)


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@cli_errors
def cmd_serve(config_path, host, port):
    """Run the interactive editing service."""
    import uvicorn

    from .service import EditEngine, create_app

    cfg = _load_config(config_path)
    section = _section(cfg, "serve")
    motion = _load_nets(section.get("motion_checkpoint", ""), "motion")
    appearance = _load_nets(section.get("appearance_checkpoint", ""), "appearance")
    engine = EditEngine(
        motion_predictor=motion["nets"]["predictor"],
        appearance_predictor=appearance["nets"]["predictor"],
        motion_codebook=load_codebook(
            _require_file(section.get("motion_codebook", ""), "motion codebook")),
        appearance_codebook=load_codebook(
            _require_file(section.get("appearance_codebook", ""), "appearance codebook")),
        beta=float(motion["extra"].get("beta", 64.0)),
        preview_frame_count=int(section.get("preview_frame_count", 16)),
        optimize_steps=int(section.get("optimize_steps", 200)),
        optimize_time_budget_s=float(section.get("optimize_time_budget_s", 30.0)),
        seed=int(cfg.get("seed", 0)),
    )
    uvicorn.run(create_app(engine), host=host, port=port)


if __name__ == "__main__":
    main()
