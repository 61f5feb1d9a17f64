import math
import warnings

import numpy as np
import pytest

from oracles import phi, phi_inv, reference_stats_bruteforce
from poif.encoder import EncoderConfig, encode, init_encoder
from poif.exceptions import ConfigError, DataError, DegenerateReferenceError
from poif.records import Modality
from poif.scoring import (
    FUSED,
    DecisionPolicy,
    SmallReferenceWarning,
    build_reference,
    fuse,
    normalize_index,
    poi_index,
    quantile_threshold,
    score_video,
)
from poif.similarity import joint_similarity, similarity
from poif.synthgen import WorldConfig, generate_world, sample_identity_videos


def one_person_segments(seed=0, videos=4, segments=5):
    cfg = WorldConfig(
        n_identities=1, n_videos_per_identity=videos, n_segments_per_video=segments,
        audio_dim=6, video_dim=5, seed=seed,
        segment_noise_scale=0.3, video_bias_scale=0.2,
    )
    return generate_world(cfg).segments


def quiet_reference(segments, params, tau, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallReferenceWarning)
        return build_reference(segments, params, tau, **kwargs)


@pytest.fixture
def params():
    return init_encoder(6, 5, EncoderConfig(1, 8, 4), 7)


def test_reference_stats_match_bruteforce(params):
    segments = one_person_segments()
    ref = quiet_reference(segments, params, tau=0.7)
    oracle = reference_stats_bruteforce(segments, params, 0.7)
    for m in Modality:
        mu, sigma = oracle[m.value]
        assert ref.mu[m] == pytest.approx(mu, abs=1e-12)
        assert ref.sigma[m] == pytest.approx(sigma, abs=1e-12)


def test_normalized_self_scores_are_standardized(params):
    segments = one_person_segments(seed=3)
    ref = quiet_reference(segments, params, tau=0.5)
    for m in Modality:
        z = (ref.self_scores[m] - ref.mu[m]) / ref.sigma[m]
        assert abs(z.mean()) < 1e-12
        assert abs(z.std() - 1.0) < 1e-12


def test_single_video_reference_needs_explicit_opt_out(params):
    segments = one_person_segments(videos=1, segments=8)
    with pytest.raises(DataError):
        quiet_reference(segments, params, tau=0.5)
    ref = quiet_reference(segments, params, tau=0.5, exclude_same_video=False)
    assert ref.n_videos == 1
    assert len(ref) == 8


def test_small_reference_warns():
    segments = one_person_segments(videos=2, segments=3)
    with pytest.warns(SmallReferenceWarning):
        build_reference(segments, init_encoder(6, 5, EncoderConfig(1, 8, 4), 0), 0.5)


def test_degenerate_reference_is_reported(params):
    # two videos whose segments are all feature-identical: every
    # self-score ties and the spread collapses
    base = one_person_segments(videos=2, segments=3)
    flat = [type(s)(identity_id=s.identity_id, video_id=s.video_id,
                    segment_index=s.segment_index,
                    audio=np.ones(6), video=np.ones(5)) for s in base]
    with pytest.raises(DegenerateReferenceError):
        quiet_reference(flat, params, tau=0.5)


def test_reference_rejects_mixed_and_fake_material(params):
    cfg = WorldConfig(n_identities=2, n_videos_per_identity=2,
                      n_segments_per_video=2, audio_dim=6, video_dim=5, seed=0)
    world = generate_world(cfg)
    with pytest.raises(DataError):
        quiet_reference(world.segments, params, tau=0.5)
    with pytest.raises(DataError):
        quiet_reference([], params, tau=0.5)


def test_poi_index_is_max_over_reference(params):
    segments = one_person_segments(seed=5)
    ref = quiet_reference(segments, params, tau=0.9)
    world = generate_world(WorldConfig(
        n_identities=1, n_videos_per_identity=1, n_segments_per_video=1,
        audio_dim=6, video_dim=5, seed=99))
    probe = encode(params, world.segments[0])
    embedded_ref = [encode(params, s) for s in segments]
    for m in (Modality.AUDIO, Modality.VIDEO):
        expected = max(similarity(probe, r, m, 0.9) for r in embedded_ref)
        assert poi_index(probe, ref, m, 0.9) == pytest.approx(expected, rel=1e-15)
    expected_av = max(joint_similarity(probe, r, 0.9) for r in embedded_ref)
    assert poi_index(probe, ref, Modality.AV, 0.9) == pytest.approx(expected_av, rel=1e-13)


def test_normalize_and_fuse():
    segments = one_person_segments(seed=6)
    params = init_encoder(6, 5, EncoderConfig(1, 8, 4), 1)
    ref = quiet_reference(segments, params, tau=0.5)
    raw = ref.mu[Modality.AUDIO] + 2.0 * ref.sigma[Modality.AUDIO]
    assert normalize_index(raw, ref, Modality.AUDIO) == pytest.approx(2.0, rel=1e-12)
    normalized = {Modality.AUDIO: 0.3, Modality.VIDEO: -1.2, Modality.AV: 4.0}
    assert fuse(normalized) == -1.2
    with pytest.raises(ValueError):
        fuse({Modality.AUDIO: 0.0, Modality.VIDEO: 0.0})


def test_quantile_threshold_matches_erf_inverse():
    assert quantile_threshold(0.5) == pytest.approx(0.0, abs=1e-12)
    for p in (0.01, 0.05, 0.1, 0.25, 0.9):
        t = quantile_threshold(p)
        assert t == pytest.approx(phi_inv(p), abs=1e-9)
        assert phi(t) == pytest.approx(p, abs=1e-9)
    with pytest.raises(ConfigError):
        DecisionPolicy(p_fa=0.0)
    with pytest.raises(ConfigError):
        DecisionPolicy(p_fa=1.0)


def test_score_video_averages_per_segment_indices(params):
    ref_segments = one_person_segments(seed=8)
    ref = quiet_reference(ref_segments, params, tau=0.5)
    world = generate_world(WorldConfig(
        n_identities=1, n_videos_per_identity=1, n_segments_per_video=1,
        audio_dim=6, video_dim=5, seed=8))
    test_segments = sample_identity_videos(world, "id0000", 1, 4, np.random.default_rng(3))
    verdict = score_video(test_segments, ref, params, 0.5, DecisionPolicy(p_fa=0.1))
    assert verdict.n_segments == 4
    assert verdict.statistic_used == FUSED

    per_segment = []
    for seg in test_segments:
        probe = encode(params, seg)
        normalized = {
            m: normalize_index(poi_index(probe, ref, m, 0.5), ref, m)
            for m in Modality
        }
        per_segment.append(normalized)
    for m in Modality:
        mean = sum(z[m] for z in per_segment) / len(per_segment)
        assert verdict.mean_indices.normalized[m] == pytest.approx(mean, rel=1e-10)
    fused = sum(min(z.values()) for z in per_segment) / len(per_segment)
    assert verdict.mean_indices.fused == pytest.approx(fused, rel=1e-10)


def test_score_video_decision_follows_threshold(params):
    ref_segments = one_person_segments(seed=9)
    ref = quiet_reference(ref_segments, params, tau=0.5)
    world = generate_world(WorldConfig(
        n_identities=1, n_videos_per_identity=1, n_segments_per_video=1,
        audio_dim=6, video_dim=5, seed=9))
    own = sample_identity_videos(world, "id0000", 1, 6, np.random.default_rng(1))
    verdict = score_video(own, ref, params, 0.5, DecisionPolicy(p_fa=0.1))
    lenient = verdict.statistic_value >= DecisionPolicy(p_fa=0.1).threshold
    assert (verdict.decision == "real") == lenient
    # an absurdly strict policy must flag even genuine material
    strict = score_video(own, ref, params, 0.5, DecisionPolicy(p_fa=0.999999))
    assert strict.decision == "fake"
    with pytest.raises(ConfigError):
        score_video(own, ref, params, 0.5, DecisionPolicy(0.1), statistic="fusion")
    with pytest.raises(DataError):
        score_video([], ref, params, 0.5, DecisionPolicy(0.1))
