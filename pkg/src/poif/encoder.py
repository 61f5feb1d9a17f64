"""Per-modality feed-forward encoders with hand-rolled backprop.

Each modality has its own independent stack of affine layers with tanh
between layers and a linear output.  An empty stack is the identity map,
which is occasionally useful for isolating the scoring machinery from the
learned representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, DataError
from .losses import loss_and_embedding_grads, positive_sets
from .records import EmbeddingPair, SegmentRecord
from .utils import as_rng


@dataclass
class EncoderConfig:
    """Architecture of one modality encoder (both modalities share it)."""

    hidden_layers: int = 2
    hidden_width: int = 64
    embedding_dim: int = 32

    def __post_init__(self):
        if self.hidden_layers < 0:
            raise ConfigError(f"hidden_layers must be >= 0, got {self.hidden_layers}")
        if self.hidden_width < 1:
            raise ConfigError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {self.embedding_dim}")


@dataclass(eq=False)
class Mlp:
    """Affine layer stack; also reused as the container for its gradients.

    weights[i] has shape (out, in), biases[i] shape (out,).  An empty
    stack passes inputs through unchanged.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError(
                f"{len(self.weights)} weight matrices but {len(self.biases)} bias vectors"
            )

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass(eq=False)
class EncoderParams:
    """Independent parameter sets for the audio and the video encoder."""

    audio: Mlp
    video: Mlp


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def init_mlp(in_dim: int, cfg: EncoderConfig, rng) -> Mlp:
    """Seeded uniform init in +-sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = as_rng(rng)
    dims = [in_dim] + [cfg.hidden_width] * cfg.hidden_layers + [cfg.embedding_dim]
    weights = [glorot_uniform(rng, dims[i + 1], dims[i]) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
    return Mlp(weights, biases)


def init_encoder(audio_dim: int, video_dim: int, cfg: EncoderConfig, rng) -> EncoderParams:
    """Draw both encoders from one stream, audio first."""
    rng = as_rng(rng)
    return EncoderParams(audio=init_mlp(audio_dim, cfg, rng), video=init_mlp(video_dim, cfg, rng))


def identity_encoder() -> EncoderParams:
    return EncoderParams(audio=Mlp([], []), video=Mlp([], []))


def mlp_forward(mlp: Mlp, x: np.ndarray, name: str = "encoder"):
    """Forward pass over a (n, dim) batch, returning output and activations.

    The cache holds the input followed by every layer's post-activation
    output, which is all the backward pass needs.
    """
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError(f"{name}: expected a (n, dim) feature matrix, got shape {h.shape}")
    cache = [h]
    last = mlp.n_layers - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        if h.shape[1] != w.shape[1]:
            raise ValueError(
                f"{name} layer {i}: input dim {h.shape[1]} does not match weight dim {w.shape[1]}"
            )
        z = h @ w.T + b
        h = np.tanh(z) if i < last else z
        if not np.all(np.isfinite(h)):
            raise ValueError(f"{name} layer {i}: non-finite activation")
        cache.append(h)
    return h, cache


def mlp_backward(mlp: Mlp, cache: list[np.ndarray], d_out: np.ndarray) -> Mlp:
    """Backprop d_out through the cached forward pass; returns param grads."""
    d_h = np.asarray(d_out, dtype=np.float64)
    last = mlp.n_layers - 1
    d_weights: list[np.ndarray] = [None] * mlp.n_layers
    d_biases: list[np.ndarray] = [None] * mlp.n_layers
    for i in range(last, -1, -1):
        h_in, h_out = cache[i], cache[i + 1]
        d_z = d_h if i == last else d_h * (1.0 - h_out * h_out)
        d_weights[i] = d_z.T @ h_in
        d_biases[i] = d_z.sum(axis=0)
        d_h = d_z @ mlp.weights[i]
    return Mlp(d_weights, d_biases)


def _stack_features(segments: Sequence[SegmentRecord]):
    if not segments:
        raise ValueError("empty segment batch")
    audio_dims = {s.audio.shape[0] for s in segments}
    video_dims = {s.video.shape[0] for s in segments}
    if len(audio_dims) > 1 or len(video_dims) > 1:
        raise DataError(
            f"inconsistent feature dims in batch: audio {sorted(audio_dims)}, video {sorted(video_dims)}"
        )
    return (
        np.stack([s.audio for s in segments]),
        np.stack([s.video for s in segments]),
    )


def encode(params: EncoderParams, seg: SegmentRecord) -> EmbeddingPair:
    """Embed one segment through both modality encoders."""
    a, _ = mlp_forward(params.audio, seg.audio[None, :], name="audio encoder")
    v, _ = mlp_forward(params.video, seg.video[None, :], name="video encoder")
    return EmbeddingPair(audio=a[0], video=v[0])


def encode_batch(params: EncoderParams, segments: Sequence[SegmentRecord]):
    """Embed a batch in segment order; returns (n, d) matrices per modality."""
    f_audio, f_video = _stack_features(segments)
    x_audio, _ = mlp_forward(params.audio, f_audio, name="audio encoder")
    x_video, _ = mlp_forward(params.video, f_video, name="video encoder")
    return x_audio, x_video


def loss_and_param_grads(
    params: EncoderParams,
    batch: Sequence[SegmentRecord],
    tau: float,
    joint_weight: float,
):
    """One fused forward/backward pass: loss report and parameter gradients."""
    pos = positive_sets(batch)
    f_audio, f_video = _stack_features(batch)
    x_audio, cache_a = mlp_forward(params.audio, f_audio, name="audio encoder")
    x_video, cache_v = mlp_forward(params.video, f_video, name="video encoder")
    report, d_xa, d_xv = loss_and_embedding_grads(
        x_audio, x_video, pos.mask(), tau, joint_weight
    )
    grads = EncoderParams(
        audio=mlp_backward(params.audio, cache_a, d_xa),
        video=mlp_backward(params.video, cache_v, d_xv),
    )
    return grads, report


def backward(
    params: EncoderParams,
    batch: Sequence[SegmentRecord],
    tau: float,
    joint_weight: float,
) -> EncoderParams:
    """Parameter gradients of the total loss for one batch."""
    grads, _ = loss_and_param_grads(params, batch, tau, joint_weight)
    return grads
