"""
Zero-shot training on a single clip and inference with the trained weights.

Training runs two epoch groups: a zero feedback group (`pretrain_epochs`)
followed by a group with temporal feedback (`epochs`). Every epoch visits
the frames in time order starting from the zero state, and takes one
optimizer step per frame on the three subnetworks jointly. Feedback is a
constant of the step.
"""
import logging
import random
from dataclasses import dataclass, field, fields
from typing import List

import numpy as np
import torch

from retivid.framework import config
from retivid.video import constants, defaults
from retivid.video.checkpoint import Checkpoint
from retivid.video.exceptions import (
    ConfigMismatch, DegenerateInput, NonFiniteLoss, UnknownConfigKey,
)
from retivid.video.flow import FlowCache, build_backend
from retivid.video.losses import LossReport, compute_coefficients, total_loss
from retivid.video.media import Clip
from retivid.video.networks import RetinexNets
from retivid.video.retinex import (
    RetinexPair, enhance_frame, frame_to_tensor, ld_denoise, tensor_to_array,
)
from retivid.video.temporal import TemporalFeedback

log = logging.getLogger(__name__)

STAGE_PRETRAIN = 'pretrain'
STAGE_FEEDBACK = 'feedback'


def _default_loss_weights():
    return {name: 1.0 for name in constants.LOSS_NAMES}


@dataclass
class TrainConfig:
    """
    Hyperparameters of one training run. Field names are the keys of the
    TRAIN config section and of a flat train --config file.
    """
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    weight_decay: float = 3e-4
    epochs: int = 5
    pretrain_epochs: int = 5
    mode: str = constants.MODE_STANDARD
    seed: int = 0
    flow_scale: int = 3
    target_brightness: float = None
    freeze_temporal: bool = False
    crop: int = None
    device: str = 'cpu'
    loss_weights: dict = field(default_factory=_default_loss_weights)

    def __post_init__(self):
        # YAML 1.1 reads "1e-4" as a string
        for name in ('lr', 'adam_beta1', 'adam_beta2', 'weight_decay'):
            setattr(self, name, float(getattr(self, name)))
        for name in ('epochs', 'pretrain_epochs', 'seed', 'flow_scale'):
            setattr(self, name, int(getattr(self, name)))
        if self.target_brightness is not None:
            self.target_brightness = float(self.target_brightness)
        if self.crop is not None:
            self.crop = int(self.crop)
        self.freeze_temporal = bool(self.freeze_temporal)
        weights = _default_loss_weights()
        unknown = set(self.loss_weights or {}) - set(weights)
        if unknown:
            raise UnknownConfigKey(
                [f"loss_weights.{key}" for key in unknown],
                [f"loss_weights.{key}" for key in weights],
            )
        weights.update(self.loss_weights or {})
        self.loss_weights = {k: float(v) for k, v in weights.items()}
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError(
                f"lr must be positive and weight_decay non negative, got "
                f"{self.lr} and {self.weight_decay}"
            )
        for beta in (self.adam_beta1, self.adam_beta2):
            if not 0 < beta < 1:
                raise ValueError(f"Adam betas must lie in (0, 1), got {beta}")
        if self.epochs < 1 or self.pretrain_epochs < 0:
            raise ValueError(
                f"epochs must be >= 1 and pretrain_epochs >= 0, got "
                f"{self.epochs} and {self.pretrain_epochs}"
            )
        if self.mode not in constants.MODES:
            raise ValueError(
                f"mode must be one of {constants.MODES}, got {self.mode}"
            )
        if self.flow_scale < 1:
            raise ValueError(f"flow_scale must be >= 1, got {self.flow_scale}")
        if self.crop is not None and self.crop < 2:
            raise ValueError(f"crop must be >= 2, got {self.crop}")
        if self.target_brightness is not None and self.target_brightness <= 0:
            raise ValueError(
                f"target_brightness must be positive, got "
                f"{self.target_brightness}"
            )

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, values):
        """
        Build a config from flat key/value pairs, missing keys keep their
        defaults

        Raises:
            UnknownConfigKey: for keys which are not fields

        """
        values = dict(values or {})
        unknown = set(values) - set(cls.field_names())
        if unknown:
            raise UnknownConfigKey(unknown, cls.field_names())
        return cls(**values)

    @classmethod
    def from_config(cls):
        """
        TrainConfig of the TRAIN section of the global config
        """
        return cls.from_dict(config.TRAIN)

    @property
    def resolved_target_brightness(self):
        if self.target_brightness is None:
            return defaults.TARGET_BRIGHTNESS[self.mode]
        return self.target_brightness


@dataclass
class EpochSummary:
    epoch: int
    stage: str
    steps: int
    mean_total: float


@dataclass
class TrainRun:
    """
    Result of train().

    Attributes:
        history (list): LossReport of every step
        epochs (list): EpochSummary of every epoch
        checkpoint (Checkpoint): final weights
        outputs (Clip): enhanced clip of an inference pass with the final
            weights

    """
    history: List[LossReport] = field(default_factory=list)
    epochs: List[EpochSummary] = field(default_factory=list)
    checkpoint: Checkpoint = None
    outputs: Clip = None

    def totals(self):
        return [report.total for report in self.history]


def seed_everything(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _model_cfg(model_cfg):
    return dict(config.MODEL if model_cfg is None else model_cfg)


def _flow_cfg(flow_cfg):
    return dict(config.FLOW if flow_cfg is None else flow_cfg)


def _load_nets(model_cfg, ckpt, expected_hash, device):
    nets = RetinexNets.from_config(model_cfg)
    if ckpt is not None:
        if ckpt.config_hash != expected_hash:
            raise ConfigMismatch(expected_hash, ckpt.config_hash)
        nets.load_state_dicts(ckpt.weights)
    return nets.to(device)


def crop_arrays(arrays, size, rng):
    """
    Crop every frame at one random position

    Args:
        arrays (list): H x W x 3 frames
        size (int): side of the square crop, clamped to the frame
        rng (np.random.Generator): position source

    Returns:
        list: cropped frames

    """
    height, width = arrays[0].shape[:2]
    crop_h, crop_w = min(size, height), min(size, width)
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    return [a[top:top + crop_h, left:left + crop_w] for a in arrays]


def train_step(nets, optimizer, I, state, cfg, model_cfg, step=0):
    """
    One forward pass, loss evaluation and optimizer step on one frame

    Args:
        nets (RetinexNets): networks being trained
        optimizer (torch.optim.Optimizer): optimizer of nets
        I (torch.Tensor): 1 x 3 x H x W frame
        state: feedback of the frame, TemporalState or None
        cfg (TrainConfig): hyperparameters
        model_cfg (dict): MODEL section
        step (int): global step, used in diagnostics

    Returns:
        tuple: (LossReport, RetinexPair of the detached outputs)

    Raises:
        NonFiniteLoss: if any loss term is not finite

    """
    R_RD, pair, bundle = enhance_frame(
        I, state, nets, model_cfg.get('s_min', defaults.S_MIN)
    )
    coeffs = compute_coefficients(
        bundle.I_LP, cfg.mode, cfg.resolved_target_brightness,
        model_cfg.get('y_min', defaults.Y_MIN),
        model_cfg.get('s_min', defaults.S_MIN),
    )
    report = total_loss(bundle, coeffs, weights=cfg.loss_weights)
    if not report.is_finite():
        log.error(f"Loss report of step {step}: {report.as_dict()}")
        raise NonFiniteLoss(step, report.as_dict())
    optimizer.zero_grad()
    report.graph.backward()
    optimizer.step()
    log.debug(f"step {step}: total {report.total:.6f}")
    return report, RetinexPair(pair.R.detach(), pair.S.detach())


def _denoised(I, nets):
    with torch.no_grad():
        return ld_denoise(I, nets.ld)


def train(clip, cfg, init=None, model_cfg=None, flow_cfg=None,
          flow_cache=None):
    """
    Train the three subnetworks on one clip.

    Args:
        clip (Clip): input clip
        cfg (TrainConfig): hyperparameters
        init (Checkpoint): weights to start from; the zero feedback epoch
            group is skipped when given
        model_cfg (dict): MODEL section (default: global config)
        flow_cfg (dict): FLOW section (default: global config)
        flow_cache (str): directory of precomputed flows

    Returns:
        TrainRun: loss history, epoch summaries, final checkpoint and the
            enhanced clip

    Raises:
        DegenerateInput: empty clip
        ConfigMismatch: init was trained with another configuration
        NonFiniteLoss: a loss became NaN or infinite

    """
    if not len(clip):
        raise DegenerateInput("Cannot train on an empty clip")
    model_cfg, flow_cfg = _model_cfg(model_cfg), _flow_cfg(flow_cfg)
    config_hash = config.model_hash(cfg.mode, model_cfg)
    seed_everything(cfg.seed)
    device = torch.device(cfg.device)
    nets = _load_nets(model_cfg, init, config_hash, device)
    nets.train()
    optimizer = torch.optim.AdamW(
        nets.parameters(), lr=cfg.lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        weight_decay=cfg.weight_decay,
    )
    backend = build_backend(flow_cfg)
    cache = FlowCache(flow_cache) if flow_cache else None
    if cache is not None and cfg.crop:
        log.warning("Flow cache is ignored when training on crops")
        cache = None
    rng = np.random.default_rng(cfg.seed)

    pretrain_epochs = 0 if init is not None else cfg.pretrain_epochs
    schedule = (
        [(STAGE_PRETRAIN, False)] * pretrain_epochs
        + [(STAGE_FEEDBACK, not cfg.freeze_temporal)] * cfg.epochs
    )
    log.info(
        f"Training on {clip.source_id} ({len(clip)} frames): "
        f"{pretrain_epochs} zero feedback + {cfg.epochs} feedback epochs, "
        f"mode {cfg.mode}"
    )

    run = TrainRun()
    step = 0
    for epoch, (stage, feedback_on) in enumerate(schedule, start=1):
        arrays = clip.arrays()
        if cfg.crop:
            arrays = crop_arrays(arrays, cfg.crop, rng)
        feedback = TemporalFeedback(
            backend, cfg.flow_scale, enabled=feedback_on, cache=cache,
            clip_id=clip.source_id,
        )
        totals = []
        for time_index, pixels in enumerate(arrays):
            I = frame_to_tensor(pixels, device=device)
            state = feedback.state_for(time_index, _denoised(I, nets))
            report, pair = train_step(
                nets, optimizer, I, state, cfg, model_cfg, step
            )
            feedback.complete(time_index, pair, pair.R)
            run.history.append(report)
            totals.append(report.total)
            step += 1
        summary = EpochSummary(epoch, stage, len(totals), float(np.mean(totals)))
        run.epochs.append(summary)
        log.info(
            f"epoch {epoch}/{len(schedule)} ({stage}): mean total loss "
            f"{summary.mean_total:.6f}"
        )

    start_epoch = init.epoch if init is not None else 0
    run.checkpoint = Checkpoint(
        weights=nets.state_dicts(), epoch=start_epoch + len(schedule),
        config_hash=config_hash,
    )
    run.outputs = _infer(
        nets, clip, cfg, backend, cache, not cfg.freeze_temporal
    )
    return run


def _infer(nets, clip, cfg, backend, cache, use_feedback):
    nets.eval()
    device = next(nets.parameters()).device
    s_min = nets.ie.s_min
    feedback = TemporalFeedback(
        backend, cfg.flow_scale, enabled=use_feedback, cache=cache,
        clip_id=clip.source_id,
    )
    outputs = []
    with torch.no_grad():
        for frame in clip:
            I = frame_to_tensor(frame, device=device)
            state = feedback.state_for(
                frame.time_index, ld_denoise(I, nets.ld)
            )
            R_RD, pair, _ = enhance_frame(I, state, nets, s_min)
            feedback.complete(frame.time_index, pair, R_RD)
            outputs.append(np.clip(tensor_to_array(R_RD), 0.0, 1.0))
    return Clip.from_arrays(outputs, fps=clip.fps, source_id=clip.source_id)


def enhance_clip(clip, ckpt, cfg, model_cfg=None, flow_cfg=None,
                 flow_cache=None, use_feedback=None):
    """
    Inference pass over a clip with trained weights, no weight updates.

    Args:
        clip (Clip): input clip
        ckpt (Checkpoint): trained weights
        cfg (TrainConfig): mode, flow scale and device
        model_cfg (dict): MODEL section (default: global config)
        flow_cfg (dict): FLOW section (default: global config)
        flow_cache (str): directory of precomputed flows
        use_feedback (bool): temporal feedback on or off, defaults to
            `not cfg.freeze_temporal`

    Returns:
        Clip: enhanced frames R_RD

    Raises:
        ConfigMismatch: ckpt was trained with another configuration

    """
    if not len(clip):
        raise DegenerateInput("Cannot enhance an empty clip")
    model_cfg, flow_cfg = _model_cfg(model_cfg), _flow_cfg(flow_cfg)
    config_hash = config.model_hash(cfg.mode, model_cfg)
    nets = _load_nets(model_cfg, ckpt, config_hash, torch.device(cfg.device))
    if use_feedback is None:
        use_feedback = not cfg.freeze_temporal
    cache = FlowCache(flow_cache) if flow_cache else None
    log.info(
        f"Enhancing {clip.source_id} ({len(clip)} frames), feedback "
        f"{'on' if use_feedback else 'off'}"
    )
    return _infer(
        nets, clip, cfg, build_backend(flow_cfg), cache, use_feedback
    )
