"""Synthetic audio-visual worlds and manipulated benchmark sets.

Every identity owns one latent vector per modality.  A pristine segment is

    features = identity latent + per-video bias + per-segment noise

so segments of one video share the bias draw, mirroring shared recording
conditions.  Manipulations rewrite a pristine segment in feature space:

* video replacement blends the identity component toward a donor,
  ``video + blend * (donor latent - owner latent)``, which equals
  ``(1 - blend) * owner + blend * donor`` plus the segment's own bias and
  noise.  blend=1 is a full swap, small blends model partial reenactment;
* a real-but-mismatched audio track shifts the audio component fully to
  the donor the same way;
* a synthesized voice adds a fixed cloned-voice offset to the owner's
  audio; all synthesized segments of one person share the offset, the way
  one cloning tool leaves one signature.

Manipulated segments keep the owner's identity_id: a fake claims to be
that person, and the labels carry what was tampered with.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, DataError
from .records import GROUPS, ManipFlags, SegmentRecord, flags_for_group
from .utils import as_rng


@dataclass
class WorldConfig:
    n_identities: int
    n_videos_per_identity: int
    n_segments_per_video: int
    audio_dim: int = 16
    video_dim: int = 16
    identity_scale: float = 1.0
    video_bias_scale: float = 0.1
    segment_noise_scale: float = 0.1
    seed: int = 0
    identity_start: int = 0

    def __post_init__(self):
        for name in ("n_identities", "n_videos_per_identity", "n_segments_per_video"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.audio_dim < 1 or self.video_dim < 1:
            raise ConfigError(
                f"feature dims must be >= 1, got audio {self.audio_dim}, video {self.video_dim}"
            )
        for name in ("identity_scale", "video_bias_scale", "segment_noise_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.identity_start < 0:
            raise ConfigError(f"identity_start must be >= 0, got {self.identity_start}")


@dataclass(eq=False)
class World:
    """Identity latents plus the pristine segments generated from them."""

    cfg: WorldConfig
    identity_ids: tuple[str, ...]
    audio_latents: np.ndarray
    video_latents: np.ndarray
    segments: list[SegmentRecord]

    def identity_row(self, identity_id: str) -> int:
        try:
            return self.identity_ids.index(identity_id)
        except ValueError:
            raise DataError(f"unknown identity {identity_id!r}") from None


def _pristine_video(cfg, rng, identity_id, audio_latent, video_latent, video_id, n_segments):
    bias_a = rng.standard_normal(cfg.audio_dim) * cfg.video_bias_scale
    bias_v = rng.standard_normal(cfg.video_dim) * cfg.video_bias_scale
    segments = []
    for k in range(n_segments):
        noise_a = rng.standard_normal(cfg.audio_dim) * cfg.segment_noise_scale
        noise_v = rng.standard_normal(cfg.video_dim) * cfg.segment_noise_scale
        segments.append(
            SegmentRecord(
                identity_id=identity_id,
                video_id=video_id,
                segment_index=k,
                audio=audio_latent + bias_a + noise_a,
                video=video_latent + bias_v + noise_v,
            )
        )
    return segments


def generate_world(cfg: WorldConfig) -> World:
    """Draw a fully deterministic pristine world from cfg.seed.

    Draw order is fixed: per identity, the two latents, then per video its
    two biases followed by per-segment noise, audio before video
    throughout.
    """
    rng = np.random.default_rng(cfg.seed)
    identity_ids = []
    audio_latents = np.empty((cfg.n_identities, cfg.audio_dim))
    video_latents = np.empty((cfg.n_identities, cfg.video_dim))
    segments: list[SegmentRecord] = []
    for i in range(cfg.n_identities):
        identity_id = f"id{cfg.identity_start + i:04d}"
        identity_ids.append(identity_id)
        audio_latents[i] = rng.standard_normal(cfg.audio_dim) * cfg.identity_scale
        video_latents[i] = rng.standard_normal(cfg.video_dim) * cfg.identity_scale
        for j in range(cfg.n_videos_per_identity):
            segments.extend(
                _pristine_video(
                    cfg, rng, identity_id, audio_latents[i], video_latents[i],
                    video_id=f"{identity_id}_v{j:03d}",
                    n_segments=cfg.n_segments_per_video,
                )
            )
    return World(
        cfg=cfg,
        identity_ids=tuple(identity_ids),
        audio_latents=audio_latents,
        video_latents=video_latents,
        segments=segments,
    )


def sample_identity_videos(
    world: World,
    identity_id: str,
    n_videos: int,
    n_segments: int,
    rng,
    video_prefix: str = "x",
) -> list[SegmentRecord]:
    """Draw extra pristine videos for an existing identity.

    Used to grow reference or probe material beyond what the world was
    generated with; draws come from the provided stream, not the world
    seed.
    """
    rng = as_rng(rng)
    row = world.identity_row(identity_id)
    segments: list[SegmentRecord] = []
    for j in range(n_videos):
        segments.extend(
            _pristine_video(
                world.cfg, rng, identity_id,
                world.audio_latents[row], world.video_latents[row],
                video_id=f"{identity_id}_{video_prefix}{j:03d}",
                n_segments=n_segments,
            )
        )
    return segments


@dataclass(eq=False)
class ManipulationSpec:
    """How to fake one segment: flags, blend fraction, donor, voice offset."""

    flags: ManipFlags
    blend: float = 1.0
    donor_identity: str | None = None
    cloned_voice_offset: np.ndarray | None = None

    def __post_init__(self):
        if not self.flags.is_fake:
            raise DataError("manipulation spec must carry fake flags")
        if self.flags.v and not 0.0 <= self.blend <= 1.0:
            raise DataError(f"blend must lie in [0, 1], got {self.blend}")
        needs_donor = self.flags.v or (self.flags.ai and not self.flags.a)
        if needs_donor and self.donor_identity is None:
            raise DataError("manipulation needs a donor identity")
        if self.flags.a and self.cloned_voice_offset is None:
            raise DataError("synthesized-voice manipulation needs a cloned_voice_offset")


def apply_manipulation(
    seg: SegmentRecord,
    spec: ManipulationSpec,
    world: World,
    new_video_id: str | None = None,
) -> SegmentRecord:
    """Rewrite one pristine segment per the spec; the source is untouched."""
    if seg.flags.is_fake:
        raise DataError(f"cannot manipulate an already-fake segment {seg.key}")
    owner = world.identity_row(seg.identity_id)
    audio = seg.audio
    video = seg.video
    blend = 0.0

    if spec.donor_identity is not None and spec.donor_identity == seg.identity_id:
        raise DataError(f"donor must differ from the claimed identity {seg.identity_id!r}")

    if spec.flags.v:
        donor = world.identity_row(spec.donor_identity)
        video = seg.video + spec.blend * (world.video_latents[donor] - world.video_latents[owner])
        blend = spec.blend
    if spec.flags.a:
        audio = seg.audio + spec.cloned_voice_offset
    elif spec.flags.ai:
        donor = world.identity_row(spec.donor_identity)
        audio = seg.audio + (world.audio_latents[donor] - world.audio_latents[owner])

    return SegmentRecord(
        identity_id=seg.identity_id,
        video_id=new_video_id if new_video_id is not None else seg.video_id,
        segment_index=seg.segment_index,
        audio=audio,
        video=video,
        flags=spec.flags,
        blend=blend,
    )


@dataclass
class NoiseSpec:
    """Additive white perturbation applied to stored features."""

    audio_noise_scale: float = 0.0
    video_noise_scale: float = 0.0

    def __post_init__(self):
        if self.audio_noise_scale < 0 or self.video_noise_scale < 0:
            raise ConfigError("noise scales must be non-negative")


def inject_noise(seg: SegmentRecord, spec: NoiseSpec, rng) -> SegmentRecord:
    """Return a noisy copy of a segment; draws audio noise first."""
    rng = as_rng(rng)
    audio = seg.audio + rng.standard_normal(seg.audio.shape[0]) * spec.audio_noise_scale
    video = seg.video + rng.standard_normal(seg.video.shape[0]) * spec.video_noise_scale
    return SegmentRecord(
        identity_id=seg.identity_id,
        video_id=seg.video_id,
        segment_index=seg.segment_index,
        audio=audio,
        video=video,
        flags=seg.flags,
        blend=seg.blend,
    )


@dataclass(eq=False)
class Benchmark:
    """Labeled evaluation material: references plus real and fake test videos."""

    poi_ids: tuple[str, ...]
    reference: list[SegmentRecord]
    test: list[SegmentRecord]


def generate_benchmark(
    world: World,
    group_counts: Mapping[str, int],
    betas: Sequence[float],
    rng,
    *,
    segments_per_video: int = 10,
    reference_videos: int = 10,
    real_videos: int = 4,
    cloned_voice_scale: float = 0.5,
    train_identity_ids: Sequence[str] | None = None,
) -> Benchmark:
    """Build an evaluation set over every identity in ``world``.

    Each identity gets ``reference_videos`` pristine reference videos,
    ``real_videos`` pristine test videos, and per manipulation group the
    requested number of fake videos.  Fakes are derived from the pristine
    test videos in rotation, so each fake has a genuine counterpart shot
    under the same conditions.  Video-manipulated groups cycle through
    ``betas``; donors are drawn uniformly from the other identities.
    ``train_identity_ids`` guards train/test identity disjointness.
    """
    rng = as_rng(rng)
    if train_identity_ids is not None:
        overlap = sorted(set(train_identity_ids) & set(world.identity_ids))
        if overlap:
            raise DataError(
                f"benchmark identities overlap the training set: {', '.join(overlap)}"
            )
    unknown = sorted(set(group_counts) - set(GROUPS))
    if unknown:
        raise DataError(f"unknown manipulation groups: {', '.join(unknown)}")
    for g, c in group_counts.items():
        if c < 0:
            raise DataError(f"group {g!r} has negative count {c}")
    betas = [float(b) for b in betas]
    if any(not 0.0 <= b <= 1.0 for b in betas):
        raise DataError(f"betas must lie in [0, 1], got {betas}")
    if any(group_counts.get(g, 0) > 0 and "v" in g.split("+") for g in GROUPS) and not betas:
        raise DataError("video-manipulated groups requested but no betas given")
    if len(world.identity_ids) < 2 and any(group_counts.get(g, 0) > 0 for g in GROUPS):
        raise DataError("fakes need at least 2 identities to draw donors from")

    n = len(world.identity_ids)
    voice_offsets = {
        poi: rng.standard_normal(world.cfg.audio_dim) * cloned_voice_scale
        for poi in world.identity_ids
    }

    reference: list[SegmentRecord] = []
    test: list[SegmentRecord] = []
    for poi in world.identity_ids:
        reference.extend(
            sample_identity_videos(
                world, poi, reference_videos, segments_per_video, rng, video_prefix="r"
            )
        )
        real_segments = sample_identity_videos(
            world, poi, real_videos, segments_per_video, rng, video_prefix="t"
        )
        test.extend(real_segments)
        by_video: dict[str, list[SegmentRecord]] = {}
        for seg in real_segments:
            by_video.setdefault(seg.video_id, []).append(seg)
        source_videos = sorted(by_video)

        for gi, group in enumerate(GROUPS):
            flags = flags_for_group(group)
            for j in range(group_counts.get(group, 0)):
                donor_pick = int(rng.integers(n - 1))
                poi_row = world.identity_row(poi)
                donor_row = donor_pick if donor_pick < poi_row else donor_pick + 1
                spec = ManipulationSpec(
                    flags=flags,
                    blend=betas[j % len(betas)] if flags.v else 0.0,
                    donor_identity=world.identity_ids[donor_row],
                    cloned_voice_offset=voice_offsets[poi] if flags.a else None,
                )
                source = by_video[source_videos[j % len(source_videos)]]
                fake_video_id = f"{poi}_g{gi + 1}f{j:02d}"
                test.extend(
                    apply_manipulation(seg, spec, world, new_video_id=fake_video_id)
                    for seg in source
                )

    return Benchmark(poi_ids=world.identity_ids, reference=reference, test=test)
