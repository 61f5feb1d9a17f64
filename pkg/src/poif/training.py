"""Batch sampling and the contrastive training loop.

Batches hold a fixed number of identities with a fixed number of segments
each, and no two segments in a batch may come from the same video: within
one video the recording conditions are shared, so same-video pairs would
hand the loss a shortcut that does not transfer to unseen clips.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoder import EncoderConfig, EncoderParams, init_encoder, loss_and_param_grads
from .exceptions import ConfigError, DataError
from .losses import LossReport
from .optim import OptimState, adamw_step, init_optim_state
from .records import SegmentRecord
from .utils import as_rng


@dataclass
class TrainConfig:
    """Optimizer and schedule settings.

    The defaults mirror the full-scale recipe (constant learning rate
    1e-4, decoupled weight decay 0.01, temperature 0.01, 8 identities x 8
    segments, 12 epochs of 2304 batches); desk-scale runs override the
    schedule fields.
    """

    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    tau: float = 0.01
    joint_weight: float = 1.0
    epochs: int = 12
    batches_per_epoch: int = 2304
    identities_per_batch: int = 8
    segments_per_identity: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.joint_weight < 0:
            raise ConfigError(f"joint_weight must be non-negative, got {self.joint_weight}")
        if self.epochs < 0 or self.batches_per_epoch < 1:
            raise ConfigError(
                f"bad schedule: epochs={self.epochs}, batches_per_epoch={self.batches_per_epoch}"
            )
        if self.identities_per_batch < 2:
            raise ConfigError(
                f"identities_per_batch must be >= 2, got {self.identities_per_batch}"
            )
        if self.segments_per_identity < 2:
            raise ConfigError(
                f"segments_per_identity must be >= 2, got {self.segments_per_identity}"
            )
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.batches_per_epoch


@dataclass(frozen=True)
class TrainStep:
    step: int
    loss: LossReport


@dataclass(eq=False)
class TrainState:
    """Everything needed to continue a run exactly where it stopped."""

    params: EncoderParams
    optim: OptimState
    rng_state: dict
    steps_done: int


@dataclass(eq=False)
class TrainResult:
    params: EncoderParams
    log: list[TrainStep]
    state: TrainState


def sample_batch(
    dataset: Sequence[SegmentRecord],
    identities_per_batch: int,
    segments_per_identity: int,
    rng,
) -> list[SegmentRecord]:
    """Draw identities_per_batch x segments_per_identity segments.

    Each sampled identity contributes segments from distinct videos, one
    segment per chosen video, so no two segments in the batch ever share a
    video id.
    """
    rng = as_rng(rng)
    p, k = identities_per_batch, segments_per_identity

    by_identity: dict[str, dict[str, list[SegmentRecord]]] = {}
    for seg in dataset:
        by_identity.setdefault(seg.identity_id, {}).setdefault(seg.video_id, []).append(seg)

    eligible = [i for i in sorted(by_identity) if len(by_identity[i]) >= k]
    if len(eligible) < p:
        raise DataError(
            f"need at least {p} identities with {k} distinct videos each; "
            f"found {len(eligible)} of {len(by_identity)}"
        )

    batch: list[SegmentRecord] = []
    chosen = rng.choice(len(eligible), size=p, replace=False)
    for idx in chosen:
        videos = sorted(by_identity[eligible[idx]])
        for vidx in rng.choice(len(videos), size=k, replace=False):
            segs = sorted(by_identity[eligible[idx]][videos[vidx]], key=lambda s: s.segment_index)
            batch.append(segs[rng.integers(len(segs))])

    video_ids = [s.video_id for s in batch]
    if len(set(video_ids)) != len(video_ids):
        raise DataError("dataset reuses a video id across identities; batch videos must be distinct")
    return batch


def train(
    dataset: Sequence[SegmentRecord],
    cfg: TrainConfig,
    resume: TrainState | None = None,
) -> TrainResult:
    """Run (or continue) contrastive training over a pristine dataset.

    Training data must be entirely pristine; a single manipulated segment
    aborts the run.  With ``resume``, execution picks up at the recorded
    step with the saved parameters, moments, and sampler stream, so an
    interrupted run reproduces an uninterrupted one bit for bit.
    """
    if not dataset:
        raise DataError("empty training dataset")
    for seg in dataset:
        if seg.flags.is_fake:
            raise DataError(
                f"training data must be pristine; found manipulated segment {seg.key}"
            )
    audio_dim = dataset[0].audio.shape[0]
    video_dim = dataset[0].video.shape[0]

    if resume is None:
        rng = np.random.default_rng(cfg.seed)
        params = init_encoder(audio_dim, video_dim, cfg.encoder, rng)
        optim = init_optim_state(params)
        start = 0
    else:
        params, optim = resume.params, resume.optim
        rng = np.random.default_rng(0)
        rng.bit_generator.state = resume.rng_state
        start = resume.steps_done
        if start > cfg.total_steps:
            raise ConfigError(
                f"resume state is at step {start}, beyond the configured {cfg.total_steps}"
            )

    log: list[TrainStep] = []
    for step in range(start, cfg.total_steps):
        batch = sample_batch(
            dataset, cfg.identities_per_batch, cfg.segments_per_identity, rng
        )
        grads, report = loss_and_param_grads(params, batch, cfg.tau, cfg.joint_weight)
        params, optim = adamw_step(params, optim, grads, cfg)
        log.append(TrainStep(step=step + 1, loss=report))

    state = TrainState(
        params=params,
        optim=optim,
        rng_state=rng.bit_generator.state,
        steps_done=cfg.total_steps,
    )
    return TrainResult(params=params, log=log, state=state)
