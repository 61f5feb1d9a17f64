"""Reference-set verification: similarity indices, calibration, decisions.

A claimed identity is checked against a reference set of pristine
segments of that person.  The raw index of a test segment in one modality
is its best (maximum) similarity to any reference segment.  Raw indices
are normalized with mean and spread estimated on the reference itself in
leave-own-video-out fashion: each reference segment is scored against the
other reference videos only, never against its own, because same-video
pairs share recording conditions and would shrink the estimated spread.
Under that normalization, genuine material scores like a standard normal,
so a decision threshold is just a normal quantile at the accepted
false-alarm rate.  The fused statistic is the minimum of the three
normalized indices: a clip is only as trustworthy as its worst channel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from .encoder import EncoderParams, encode_batch
from .exceptions import ConfigError, DataError, DegenerateReferenceError
from .records import ALL_MODALITIES, FAKE, REAL, Modality, SegmentRecord
from .similarity import check_temperature, squared_distance_matrix

FUSED = "fused"
STATISTICS = (Modality.AUDIO, Modality.VIDEO, Modality.AV, FUSED)

SIGMA_FLOOR = 1e-9

_STD_NORMAL = NormalDist()


class SmallReferenceWarning(UserWarning):
    """Reference set is below the nominal 10-video / 100-segment regime."""


def quantile_threshold(p_fa: float) -> float:
    """Standard-normal quantile for an accepted false-alarm rate."""
    p_fa = float(p_fa)
    if not 0.0 < p_fa < 1.0:
        raise ConfigError(f"false-alarm rate must lie in (0, 1), got {p_fa}")
    return _STD_NORMAL.inv_cdf(p_fa)


@dataclass(frozen=True)
class DecisionPolicy:
    """Accepted false-alarm rate and the implied threshold on normalized scores."""

    p_fa: float = 0.1
    threshold: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "threshold", quantile_threshold(self.p_fa))


@dataclass(eq=False)
class ReferenceSet:
    """Embedded pristine segments of one person, with calibration stats.

    mu and sigma are the mean and population spread of the leave-own-video-out
    self-scores per modality; self_scores keeps the per-segment values for
    diagnostics.
    """

    poi_id: str
    video_ids: tuple[str, ...]
    audio: np.ndarray
    video: np.ndarray
    mu: dict[Modality, float]
    sigma: dict[Modality, float]
    self_scores: dict[Modality, np.ndarray]

    def __len__(self) -> int:
        return len(self.video_ids)

    @property
    def n_videos(self) -> int:
        return len(set(self.video_ids))


def _similarity_rows(x_audio, x_video, ref_audio, ref_video, tau):
    """Test-versus-reference similarities per modality; joint = audio + video."""
    s_a = -(squared_distance_matrix(x_audio, ref_audio) / tau)
    s_v = -(squared_distance_matrix(x_video, ref_video) / tau)
    return {Modality.AUDIO: s_a, Modality.VIDEO: s_v, Modality.AV: s_a + s_v}


def build_reference(
    segments: Sequence[SegmentRecord],
    params: EncoderParams,
    tau: float,
    *,
    exclude_same_video: bool = True,
    sigma_floor: float = SIGMA_FLOOR,
) -> ReferenceSet:
    """Embed pristine segments of one person and calibrate their self-scores.

    With ``exclude_same_video`` (the default), at least two distinct
    videos are required and every self-score ignores same-video partners.
    Passing False relaxes the exclusion to the segment itself, which is the
    only usable protocol for a single-video reference; expect optimistic
    spread estimates there.
    """
    tau = check_temperature(tau)
    if not segments:
        raise DataError("empty reference")
    poi_id = segments[0].identity_id
    for seg in segments:
        if seg.identity_id != poi_id:
            raise DataError(
                f"reference mixes identities {poi_id!r} and {seg.identity_id!r}"
            )
        if seg.flags.is_fake:
            raise DataError(f"reference segments must be pristine; found {seg.key}")

    video_ids = tuple(seg.video_id for seg in segments)
    n_videos = len(set(video_ids))
    if exclude_same_video and n_videos < 2:
        raise DataError(
            f"reference needs at least 2 distinct videos for leave-own-video-out "
            f"calibration; got {n_videos}"
        )
    if not exclude_same_video and len(segments) < 2:
        raise DataError("reference needs at least 2 segments")
    if n_videos < 10 or len(segments) < 100:
        warnings.warn(
            f"reference for {poi_id!r} has {n_videos} videos / {len(segments)} segments, "
            f"below the nominal 10-video / 100-segment regime",
            SmallReferenceWarning,
            stacklevel=2,
        )

    x_audio, x_video = encode_batch(params, segments)
    sims = _similarity_rows(x_audio, x_video, x_audio, x_video, tau)

    vids = np.array(video_ids)
    if exclude_same_video:
        allowed = vids[:, None] != vids[None, :]
    else:
        allowed = ~np.eye(len(segments), dtype=bool)

    mu: dict[Modality, float] = {}
    sigma: dict[Modality, float] = {}
    self_scores: dict[Modality, np.ndarray] = {}
    for m in ALL_MODALITIES:
        scores = np.where(allowed, sims[m], -np.inf).max(axis=1)
        mu[m] = float(scores.mean())
        sigma[m] = float(scores.std())
        self_scores[m] = scores
        if sigma[m] < sigma_floor:
            raise DegenerateReferenceError(
                f"reference for {poi_id!r} is degenerate: {m.value} self-scores have "
                f"spread {sigma[m]:.3g} below the floor {sigma_floor:.3g}"
            )

    return ReferenceSet(
        poi_id=poi_id,
        video_ids=video_ids,
        audio=x_audio,
        video=x_video,
        mu=mu,
        sigma=sigma,
        self_scores=self_scores,
    )


def poi_index(test, ref: ReferenceSet, modality: Modality, tau: float) -> float:
    """Best similarity of one embedded test segment to the reference set."""
    tau = check_temperature(tau)
    if len(ref) == 0:
        raise ValueError("empty reference set")
    sims = _similarity_rows(
        test.audio[None, :], test.video[None, :], ref.audio, ref.video, tau
    )
    return float(sims[modality].max())


def normalize_index(raw: float, ref: ReferenceSet, modality: Modality) -> float:
    """Center and scale a raw index by the reference calibration."""
    return (raw - ref.mu[modality]) / ref.sigma[modality]


def fuse(normalized: Mapping[Modality, float]) -> float:
    """Minimum of the three normalized indices."""
    missing = [m.value for m in ALL_MODALITIES if m not in normalized]
    if missing:
        raise ValueError(f"missing normalized indices for: {', '.join(missing)}")
    return min(
        min(normalized[Modality.AUDIO], normalized[Modality.VIDEO]),
        normalized[Modality.AV],
    )


@dataclass(eq=False)
class PoiIndices:
    """Raw and normalized indices per modality plus the fused value."""

    raw: dict[Modality, float]
    normalized: dict[Modality, float]
    fused: float


@dataclass(eq=False)
class VideoVerdict:
    video_id: str
    n_segments: int
    mean_indices: PoiIndices
    decision: str
    statistic_used: str

    @property
    def statistic_value(self) -> float:
        if self.statistic_used == FUSED:
            return self.mean_indices.fused
        return self.mean_indices.normalized[Modality(self.statistic_used)]


def score_video(
    test_segments: Sequence[SegmentRecord],
    ref: ReferenceSet,
    params: EncoderParams,
    tau: float,
    policy: DecisionPolicy,
    statistic: Modality | str = FUSED,
) -> VideoVerdict:
    """Score a clip: per-segment indices, averaged after normalization.

    Segments are scored individually; the per-video statistic is the plain
    mean of the per-segment normalized (or fused) values, so longer clips
    average down the per-segment noise.  The verdict is fake when the
    chosen statistic falls below the policy threshold.
    """
    tau = check_temperature(tau)
    if not test_segments:
        raise DataError("no test segments to score")
    if statistic != FUSED:
        try:
            statistic = Modality(statistic)
        except ValueError:
            raise ConfigError(f"unknown statistic {statistic!r}") from None

    x_audio, x_video = encode_batch(params, test_segments)
    sims = _similarity_rows(x_audio, x_video, ref.audio, ref.video, tau)

    raw = {m: sims[m].max(axis=1) for m in ALL_MODALITIES}
    normalized = {m: (raw[m] - ref.mu[m]) / ref.sigma[m] for m in ALL_MODALITIES}
    fused_per_segment = np.minimum(
        np.minimum(normalized[Modality.AUDIO], normalized[Modality.VIDEO]),
        normalized[Modality.AV],
    )

    mean_indices = PoiIndices(
        raw={m: float(raw[m].mean()) for m in ALL_MODALITIES},
        normalized={m: float(normalized[m].mean()) for m in ALL_MODALITIES},
        fused=float(fused_per_segment.mean()),
    )
    value = mean_indices.fused if statistic == FUSED else mean_indices.normalized[statistic]
    decision = FAKE if value < policy.threshold else REAL
    return VideoVerdict(
        video_id=test_segments[0].video_id,
        n_segments=len(test_segments),
        mean_indices=mean_indices,
        decision=decision,
        statistic_used=FUSED if statistic == FUSED else statistic.value,
    )
