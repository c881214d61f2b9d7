import numpy as np
import pytest

from soundmark.dsp import stft, window_clip
from soundmark.sim import (
    SceneConfig,
    SceneSource,
    SourceSignature,
    build_dataset,
    default_scene,
    load_dataset,
    pink_noise,
    render_component,
    render_mixture,
    save_dataset,
    synthesize_source,
)

SR = 48000


def band_energy_fraction(clip, lo, hi):
    spectrum = np.abs(np.fft.rfft(clip.samples)) ** 2
    freqs = np.fft.rfftfreq(len(clip.samples), 1 / clip.sample_rate)
    inside = spectrum[(freqs >= lo) & (freqs < hi)].sum()
    return inside / spectrum.sum()


class TestSynthesizeSource:
    def test_single_tone_concentrates_energy(self):
        sig = SourceSignature(tones=((1000.0, 1.0),))
        clip = synthesize_source(sig, 1.0, seed=0)
        spec = stft(clip)
        freqs = np.arange(spec.n_freqs) * SR / spec.frame_size
        bin_center = np.argmin(np.abs(freqs - 1000.0))
        power = np.abs(spec.values) ** 2
        peak_bins = power.sum(axis=1).argsort()[-3:]
        assert bin_center in peak_bins

    def test_band_noise_energy_inside_band(self):
        sig = SourceSignature(bands=((1000.0, 2000.0, 1.0),))
        clip = synthesize_source(sig, 1.0, seed=1)
        assert band_energy_fraction(clip, 1000.0, 2000.0) >= 0.9

    def test_unit_rms(self):
        sig = SourceSignature(bands=((100.0, 4000.0, 1.0),), tones=((500.0, 0.3),))
        clip = synthesize_source(sig, 0.5, seed=2)
        assert clip.rms() == pytest.approx(1.0, rel=1e-12)

    def test_deterministic(self):
        sig = SourceSignature(bands=((200.0, 800.0, 1.0),))
        a = synthesize_source(sig, 0.25, seed=3)
        b = synthesize_source(sig, 0.25, seed=3)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_empty_signature_rejected(self):
        with pytest.raises(ValueError, match="band or tone"):
            synthesize_source(SourceSignature(), 1.0, seed=4)

    def test_pink_noise_unit_rms_and_sloped(self):
        clip = pink_noise(1.0, seed=5)
        assert clip.rms() == pytest.approx(1.0, rel=1e-12)
        # equal-width bands: with 1/f power the low band carries ~ln(11)/ln(1.1)
        # times the energy of the high one; assert a conservative factor
        low = band_energy_fraction(clip, 100.0, 1100.0)
        high = band_energy_fraction(clip, 10000.0, 11000.0)
        assert low > 5 * high


class TestRenderMixture:
    def scene(self, **overrides):
        sources = (
            SceneSource((10.0, 6.0), SourceSignature(bands=((500, 1500, 1.0),))),
        )
        return SceneConfig(sources=sources, seed=7, **overrides)

    def test_inverse_distance_rms_ratio(self):
        scene = self.scene()
        near = render_mixture(scene, (12.0, 6.0), 0.5, seed=0)   # d = 2
        far = render_mixture(scene, (14.0, 6.0), 0.5, seed=0)    # d = 4
        assert near.rms() / far.rms() == pytest.approx(2.0, rel=0.01)

    def test_clamp_below_half_meter(self):
        scene = self.scene()
        at_source = render_mixture(scene, (10.0, 6.0), 0.25, seed=1)
        nearby = render_mixture(scene, (10.5, 6.0), 0.25, seed=1)
        assert at_source.rms() == pytest.approx(2.0, rel=1e-9)  # 1/0.5
        assert nearby.rms() == pytest.approx(2.0, rel=1e-9)

    def test_empty_scene_is_silence(self):
        scene = SceneConfig(sources=(), seed=8)
        clip = render_mixture(scene, (1.0, 1.0), 0.1, seed=2)
        assert np.all(clip.samples == 0)

    def test_outside_room_rejected(self):
        with pytest.raises(ValueError, match="outside the room"):
            render_mixture(self.scene(), (31.0, 6.0), 0.1, seed=3)
        with pytest.raises(ValueError, match="outside the room"):
            SceneConfig(sources=(SceneSource((40.0, 6.0), SourceSignature(tones=((1.0, 1.0),))),))

    def test_mixture_linearity(self):
        sources = (
            SceneSource((5.0, 5.0), SourceSignature(bands=((300, 900, 1.0),))),
            SceneSource((25.0, 7.0), SourceSignature(bands=((2000, 4000, 1.0),))),
        )
        scene = SceneConfig(sources=sources, seed=9)
        at = (14.0, 3.0)
        joint = render_mixture(scene, at, 0.25, seed=4)
        parts = sum(
            render_component(scene, k, at, 0.25, seed=4).samples for k in range(2)
        )
        np.testing.assert_allclose(joint.samples, parts, rtol=1e-9, atol=1e-12)

    def test_radial_energy_monotone(self):
        scene = self.scene()
        rms = [
            render_mixture(scene, (10.0 + d, 6.0), 0.25, seed=5).rms()
            for d in (0.0, 0.3, 1.0, 3.0, 7.0, 15.0)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(rms, rms[1:]))

    def test_ambient_bed_added(self):
        silent_scene = SceneConfig(sources=(), ambient_rms=0.25, seed=10)
        clip = render_mixture(silent_scene, (1.0, 1.0), 0.5, seed=6)
        assert clip.rms() == pytest.approx(0.25, rel=1e-9)


class TestBuildDataset:
    def test_default_grid_has_112_nodes(self):
        scene = default_scene()
        locs = scene.grid_locations()
        assert len(locs) == 112
        xs = sorted({x for x, _ in locs})
        ys = sorted({y for _, y in locs})
        assert xs == [float(v) for v in range(0, 31, 2)]
        assert ys == [float(v) for v in range(0, 13, 2)]

    def test_windows_per_node(self):
        scene = default_scene(windows_per_point=30)
        ds = build_dataset(scene)
        entry = ds.manifest.train_entries()[17]
        clip = ds.clip(entry)
        assert len(window_clip(clip, scene.window_seconds)) == 30

    def test_isolated_entries(self):
        scene = default_scene()
        ds = build_dataset(scene)
        isolated = ds.manifest.isolated_entries()
        assert [e.source_id for e in isolated] == [1, 2, 3, 4, 5]
        # isolated takes are recorded 1 m from the source, so rms == power
        clip = ds.clip(isolated[2])
        assert clip.rms() == pytest.approx(scene.sources[2].power, rel=1e-9)

    def test_regeneration_bitwise_identical(self):
        scene = default_scene(windows_per_point=2, isolated_seconds=1.0)
        a, b = build_dataset(scene), build_dataset(scene)
        for ea, eb in zip(a.manifest.entries[:3], b.manifest.entries[:3]):
            np.testing.assert_array_equal(a.clip(ea).samples, b.clip(eb).samples)

    def test_manifest_on_grid(self):
        scene = default_scene()
        ds = build_dataset(scene)
        for e in ds.manifest.train_entries():
            assert e.x % scene.grid_spacing == 0
            assert e.y % scene.grid_spacing == 0

    def test_save_load_roundtrip(self, tmp_path):
        scene = default_scene(windows_per_point=1, isolated_seconds=0.5)
        small = SceneConfig(
            sources=scene.sources[:2], grid_spacing=10.0, windows_per_point=1,
            isolated_seconds=0.5, seed=11,
        )
        ds = build_dataset(small)
        save_dataset(ds, tmp_path / "ds")
        loaded = load_dataset(tmp_path / "ds")
        assert loaded.manifest.sample_rate == SR
        assert len(loaded.manifest.entries) == len(ds.manifest.entries)
        for e_orig, e_load in zip(ds.manifest.entries, loaded.manifest.entries):
            assert (e_orig.key, e_orig.role) == (e_load.key, e_load.role)
            np.testing.assert_allclose(
                loaded.clip(e_load).samples, ds.clip(e_orig).samples, atol=1e-6
            )

    def test_save_deterministic_bytes(self, tmp_path):
        small = SceneConfig(
            sources=default_scene().sources[:1], grid_spacing=15.0,
            windows_per_point=1, isolated_seconds=0.25, seed=12,
        )
        save_dataset(build_dataset(small), tmp_path / "a")
        save_dataset(build_dataset(small), tmp_path / "b")
        for name in ["manifest.json", "node_0000.wav", "isolated_1.wav"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
