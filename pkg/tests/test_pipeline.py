"""Cross-module checks: simulator-generated scenes through NMF features,
with clean per-source oracles from the scene geometry."""

import numpy as np
import pytest

from soundmark.config import config_from_dict
from soundmark.dsp import FeatureVector, stft, window_clip
from soundmark.localize import argmax_ml, likelihood_map
from soundmark.model_io import train_landmark_model, train_localizer
from soundmark.nmf import decompose, extract_features
from soundmark.sim import (
    SceneConfig,
    SceneSource,
    SourceSignature,
    build_dataset,
    render_component,
    render_mixture,
)

SR = 16000
STFT = {"frame_size": 1024, "hop": 512}


def small_config(scene_doc, **overrides):
    doc = {
        "seed": 5,
        "scene": {"sample_rate": SR, "isolated_seconds": 4.0, **scene_doc},
        "stft": STFT,
        "grid": {"resolution": 0.5},
        **overrides,
    }
    return config_from_dict(doc)


def subbands(lo, hi, n):
    edges = np.linspace(lo, hi, n + 1)
    return [[float(a), float(b), 1.0] for a, b in zip(edges[:-1], edges[1:])]


TWO_SOURCES = [
    {"position": [6.0, 9.0], "bands": subbands(600, 1300, 4), "tones": [[900.0, 0.5]]},
    {"position": [24.0, 3.0], "bands": subbands(150, 450, 3)},
]


@pytest.fixture(scope="module")
def two_source_setup():
    cfg = small_config({"sources": TWO_SOURCES, "windows_per_point": 2, "isolated_seconds": 8.0})
    dataset = build_dataset(cfg.scene)
    model = train_landmark_model(dataset, cfg)
    return cfg, dataset, model


class TestSupervisedSeparation:
    def test_single_landmark_mixture_dominates_variance(self, two_source_setup):
        # fresh isolated-length take of landmark 1 alone: >= 90% of the model
        # variance (energy weighted) must land on landmark 1
        cfg, dataset, model = two_source_setup
        clip = render_component(cfg.scene, 0, (7.0, 9.0), cfg.scene.isolated_seconds, seed=999)
        spec = stft(clip, cfg.stft.frame_size, cfg.stft.hop)
        dec = decompose(spec, model, seed=1)
        v = spec.power()
        share = dec.source_variance(1) / dec.total_variance()
        fraction = float(np.sum(v * share) / np.sum(v))
        assert fraction >= 0.9

    def test_equal_rms_pair_has_balanced_features(self, two_source_setup):
        cfg, dataset, model = two_source_setup
        a = render_component(cfg.scene, 0, (15.0, 6.0), 1.0, seed=100).samples
        b = render_component(cfg.scene, 1, (15.0, 6.0), 1.0, seed=100).samples
        a /= np.sqrt(np.mean(a**2))
        b /= np.sqrt(np.mean(b**2))
        from soundmark.dsp import AudioClip

        mix = AudioClip(a + b, SR)
        feats = extract_features(stft(mix, cfg.stft.frame_size, cfg.stft.hop), model, seed=2)
        assert abs(feats.values[0] - feats.values[1]) <= 0.2

    def test_distance_doubling_drops_feature_by_ln2(self):
        # single source, microphones at d and 2d: 1/d attenuation means the
        # extracted log-RMS falls by ln 2
        doc = {"sources": [TWO_SOURCES[0]], "windows_per_point": 2, "isolated_seconds": 8.0}
        cfg = small_config(doc)
        dataset = build_dataset(cfg.scene)
        model = train_landmark_model(dataset, cfg)
        near = render_mixture(cfg.scene, (10.0, 9.0), 1.0, seed=7)   # d = 4
        far = render_mixture(cfg.scene, (14.0, 9.0), 1.0, seed=7)    # d = 8
        f_near = extract_features(stft(near, cfg.stft.frame_size, cfg.stft.hop), model, seed=3)
        f_far = extract_features(stft(far, cfg.stft.frame_size, cfg.stft.hop), model, seed=3)
        assert f_near.values[0] - f_far.values[0] == pytest.approx(np.log(2.0), abs=0.1)

    def test_equidistant_equal_sources_equal_features(self):
        # same signature and power on both sides, microphone in the middle
        sig = {"bands": subbands(500, 1500, 4)}
        doc = {
            "room": [20.0, 8.0],
            "sources": [
                {"position": [6.0, 4.0], **sig},
                {"position": [14.0, 4.0], **sig},
            ],
            "windows_per_point": 2,
        }
        cfg = small_config(doc)
        dataset = build_dataset(cfg.scene)
        model = train_landmark_model(dataset, cfg)
        mix = render_mixture(cfg.scene, (10.0, 4.0), 1.0, seed=8)
        feats = extract_features(stft(mix, cfg.stft.frame_size, cfg.stft.hop), model, seed=4)
        assert abs(feats.values[0] - feats.values[1]) <= 0.2


class TestSymmetricSceneMap:
    def test_two_mirror_peaks_with_similar_height(self):
        # identical sources mirrored about x = 10: the likelihood of any
        # off-axis window must show the mirror peak too, nearly as high
        sig = {"bands": subbands(500, 1500, 4)}
        doc = {
            "room": [20.0, 8.0],
            "grid_spacing": 2.0,
            "sources": [
                {"position": [6.0, 4.0], **sig},
                {"position": [14.0, 4.0], **sig},
            ],
            "windows_per_point": 4,
        }
        cfg = small_config(doc)
        dataset = build_dataset(cfg.scene)
        localizer = train_localizer(dataset, cfg)
        probe = render_mixture(cfg.scene, (4.0, 2.0), 1.0, seed=77)
        feats = extract_features(
            stft(probe, cfg.stft.frame_size, cfg.stft.hop), localizer.nmf, seed=9
        )
        lmap = likelihood_map(feats, localizer.gps, localizer.grid)
        values = lmap.log_values
        spread = values.max() - values.min()
        peak1 = argmax_ml(lmap)
        # a second, separated local maximum nearly as high as the first
        nodes = lmap.grid.node_coords()
        masked = values.ravel().copy()
        masked[np.linalg.norm(nodes - peak1, axis=1) < 3.0] = -np.inf
        second_idx = int(np.argmax(masked))
        assert np.linalg.norm(nodes[second_idx] - peak1) >= 3.0
        assert abs(values.ravel()[second_idx] - values.max()) <= 0.05 * spread
        # and the map respects the scene's mirror symmetry at the peak
        ix = int(round((20.0 - peak1[0]) / lmap.grid.resolution))
        iy = int(round(peak1[1] / lmap.grid.resolution))
        assert values.max() - values[iy, ix] <= 0.05 * spread
