"""Synthetic acoustic scenes: landmark sources on a room grid.

Sources are stationary signals with a prescribed long-term spectrum (noise
bands and/or tones), attenuated as 1/distance with a 0.5 m clamp and summed
at the microphone.  No reverberation or directivity is modeled; the spatial
regression downstream only needs a smooth, distance-dependent energy field.

Seeds are derived per (node, source) so datasets rebuild bit-identically,
in any order, serial or parallel.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft

from .dsp import AudioClip, read_wav, write_wav
from .util import derive_seed, derive_rng

DIST_CLAMP = 0.5  # meters; attenuation saturates this close to a source

# real recordings never contain exact spectral zeros; a -60 dB broadband
# floor keeps the scale-invariant IS divergence from blowing up on empty bins
SOURCE_FLOOR_AMPLITUDE = 1e-3

# seed namespaces
_NS_SOURCE = 1
_NS_AMBIENT = 2
_NS_NODE = 3
_NS_ISOLATED = 4

TRAIN_ROLE = "train"
ISOLATED_ROLE = "isolated"


@dataclass(frozen=True)
class SourceSignature:
    """Long-term spectrum spec: noise bands (lo_hz, hi_hz, weight) + tones.

    Each component carries its own slow log-normal amplitude modulation
    (machinery hums are not perfectly constant).  The independent per-band
    gains also give each source a power spectrogram of rank ~ #components,
    which is what lets a trained dictionary beat the free noise basis.
    """

    bands: tuple = ()
    tones: tuple = ()   # (freq_hz, weight)
    mod_depth: float = 0.8       # log-amplitude std of the modulation
    mod_cutoff_hz: float = 2.0   # modulation bandwidth

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(tuple(b) for b in self.bands))
        object.__setattr__(self, "tones", tuple(tuple(t) for t in self.tones))
        if self.mod_depth < 0 or self.mod_cutoff_hz <= 0:
            raise ValueError("invalid modulation parameters")


@dataclass(frozen=True)
class SceneSource:
    position: tuple           # (x, y) meters
    signature: SourceSignature
    power: float = 1.0        # RMS at 1 m


@dataclass(frozen=True)
class SceneConfig:
    room: tuple = (30.0, 12.0)
    sources: tuple = ()
    grid_spacing: float = 2.0
    survey_margin: float = 0.0  # wall clearance of the survey grid
    window_seconds: float = 1.0
    windows_per_point: int = 30
    isolated_seconds: float = 10.0
    sample_rate: int = 48000
    ambient_rms: float = 0.0   # stationary pink-noise bed, 0 disables
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.grid_spacing <= 0:
            raise ValueError("grid_spacing must be positive")
        if self.survey_margin < 0 or 2 * self.survey_margin >= min(self.room):
            raise ValueError("survey_margin must fit inside the room")
        for src in self.sources:
            x, y = src.position
            if not (0 <= x <= self.room[0] and 0 <= y <= self.room[1]):
                raise ValueError(f"source at {src.position} is outside the room")

    def grid_locations(self):
        """Survey nodes spaced ``grid_spacing`` apart, y-major, starting
        ``survey_margin`` in from the walls."""
        m = self.survey_margin
        xs = np.arange(m, self.room[0] - m + 1e-9, self.grid_spacing)
        ys = np.arange(m, self.room[1] - m + 1e-9, self.grid_spacing)
        return [(float(x), float(y)) for y in ys for x in xs]


def _split_band(lo, hi, n, weight=1.0):
    edges = np.linspace(lo, hi, n + 1)
    return tuple((float(a), float(b), weight) for a, b in zip(edges[:-1], edges[1:]))


def default_scene(seed=0, **overrides):
    """Five landmark sources with disjoint spectra (desk-scale stand-in for
    air conditioning, PCs, a projector, a server room and ventilation).

    Every source is a handful of independently modulated subbands, so its
    spectrogram rank matches the dictionary size used to learn it.
    """
    sources = (
        SceneSource((15.0, 11.0), SourceSignature(bands=_split_band(60, 240, 3),
                                                  tones=((120.0, 0.4),)), power=1.2),
        SceneSource((2.0, 2.0), SourceSignature(bands=_split_band(300, 700, 4),
                                                tones=((500.0, 0.4),)), power=0.8),
        SceneSource((6.0, 9.0), SourceSignature(bands=_split_band(900, 1800, 4),
                                                tones=((1200.0, 0.5),)), power=1.0),
        SceneSource((24.0, 10.0), SourceSignature(bands=_split_band(2200, 5200, 5)), power=1.0),
        SceneSource((28.0, 3.0), SourceSignature(bands=_split_band(6500, 11000, 4),
                                                 tones=((8000.0, 0.4),)), power=0.9),
    )
    return SceneConfig(sources=sources, seed=seed, **overrides)


def _smooth_envelope(rng, n, sample_rate, cutoff_hz, depth):
    """Slowly varying positive gain: exp(depth * lowpassed unit noise)."""
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum = rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs))
    spectrum[freqs > cutoff_hz] = 0
    spectrum[0] = 0
    env = scipy.fft.irfft(spectrum, n)
    std = np.std(env)
    if std > 0:
        env /= std
    return np.exp(depth * env)


def synthesize_source(signature, duration, seed, sample_rate=48000):
    """Stationary unit-RMS signal with the requested long-term spectrum.

    Component order is fixed (bands, then tones), so a signature and seed
    pin the waveform exactly.
    """
    if not signature.bands and not signature.tones:
        raise ValueError("signature needs at least one band or tone")
    n = int(round(duration * sample_rate))
    nyquist = sample_rate / 2.0
    rng = derive_rng(seed)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    total = np.zeros(n)
    for lo, hi, weight in signature.bands:
        if not lo < hi:
            raise ValueError(f"band ({lo}, {hi}) is empty")
        if lo >= nyquist:
            raise ValueError(f"band ({lo}, {hi}) lies above the Nyquist frequency")
        mask = (freqs >= lo) & (freqs < hi)
        spectrum = np.zeros(len(freqs), dtype=complex)
        spectrum[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
        component = scipy.fft.irfft(spectrum, n)
        comp_rms = np.sqrt(np.mean(component**2))
        if comp_rms > 0:
            component *= weight / comp_rms
        component *= _smooth_envelope(
            rng, n, sample_rate, signature.mod_cutoff_hz, signature.mod_depth
        )
        total += component
    t = np.arange(n) / sample_rate
    for freq, weight in signature.tones:
        if freq >= nyquist:
            raise ValueError(f"tone at {freq} Hz lies above the Nyquist frequency")
        phase = rng.uniform(0.0, 2.0 * np.pi)
        tone = weight * np.sqrt(2.0) * np.sin(2.0 * np.pi * freq * t + phase)
        tone *= _smooth_envelope(
            rng, n, sample_rate, signature.mod_cutoff_hz, signature.mod_depth
        )
        total += tone
    rms = np.sqrt(np.mean(total**2))
    if rms == 0:
        raise ValueError("signature produced a silent signal")
    total += SOURCE_FLOOR_AMPLITUDE * rms * rng.standard_normal(n)
    rms = np.sqrt(np.mean(total**2))
    return AudioClip(total / rms, sample_rate)


def pink_noise(duration, seed, sample_rate=48000):
    """Unit-RMS pink (1/f power) noise, used as out-of-domain background."""
    n = int(round(duration * sample_rate))
    rng = derive_rng(seed)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    envelope = np.zeros(len(freqs))
    envelope[1:] = 1.0 / np.sqrt(freqs[1:])
    spectrum = envelope * (
        rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs))
    )
    noise = scipy.fft.irfft(spectrum, n)
    return AudioClip(noise / np.sqrt(np.mean(noise**2)), sample_rate)


def attenuation(distance):
    return 1.0 / max(float(distance), DIST_CLAMP)


def render_component(scene, source_index, at, duration, seed):
    """One source's contribution at the microphone position."""
    src = scene.sources[source_index]
    d = float(np.hypot(at[0] - src.position[0], at[1] - src.position[1]))
    clip = synthesize_source(
        src.signature, duration, derive_seed(seed, _NS_SOURCE, source_index),
        scene.sample_rate,
    )
    return AudioClip(attenuation(d) * src.power * clip.samples, scene.sample_rate)


def render_mixture(scene, at, duration, seed):
    """Sum of all source contributions (plus optional ambient bed) at ``at``."""
    x, y = at
    if not (0 <= x <= scene.room[0] and 0 <= y <= scene.room[1]):
        raise ValueError(f"microphone position {at} is outside the room")
    n = int(round(duration * scene.sample_rate))
    total = np.zeros(n)
    for k in range(len(scene.sources)):
        total += render_component(scene, k, at, duration, seed).samples
    if scene.ambient_rms > 0:
        bed = pink_noise(duration, derive_seed(seed, _NS_AMBIENT), scene.sample_rate)
        total += scene.ambient_rms * bed.samples
    return AudioClip(total, scene.sample_rate)


@dataclass(frozen=True)
class ManifestEntry:
    key: str
    x: float
    y: float
    role: str                # train | isolated
    source_id: int = None    # 1-based, only for isolated entries


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    sample_rate: int
    room: tuple = None   # (x, y) extents; search area when known

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.room is not None:
            object.__setattr__(self, "room", (float(self.room[0]), float(self.room[1])))

    def train_entries(self):
        return [e for e in self.entries if e.role == TRAIN_ROLE]

    def isolated_entries(self):
        return sorted(
            (e for e in self.entries if e.role == ISOLATED_ROLE),
            key=lambda e: e.source_id,
        )


class SyntheticDataset:
    """Manifest plus clip access.  Clips are produced lazily: synthetic
    datasets re-render from the scene on demand, loaded datasets read WAVs,
    so a full room survey never has to sit in memory at once."""

    def __init__(self, manifest, loader, scene=None):
        self.manifest = manifest
        self.scene = scene
        self._loader = loader

    def clip(self, entry):
        return self._loader(entry)


def build_dataset(scene):
    """Survey mixtures at every grid node plus per-source isolated takes.

    Node clips last windows_per_point * window_seconds; isolated clips are
    rendered 1 m from their source with every other source silent.
    """
    entries = []
    for i, (x, y) in enumerate(scene.grid_locations()):
        entries.append(ManifestEntry(key=f"node_{i:04d}", x=x, y=y, role=TRAIN_ROLE))
    for k, src in enumerate(scene.sources):
        entries.append(
            ManifestEntry(
                key=f"isolated_{k + 1}",
                x=float(src.position[0]),
                y=float(src.position[1]),
                role=ISOLATED_ROLE,
                source_id=k + 1,
            )
        )
    manifest = DatasetManifest(tuple(entries), scene.sample_rate, room=scene.room)
    node_index = {e.key: i for i, e in enumerate(entries) if e.role == TRAIN_ROLE}

    def loader(entry):
        if entry.role == TRAIN_ROLE:
            duration = scene.windows_per_point * scene.window_seconds
            return render_mixture(
                scene, (entry.x, entry.y), duration,
                derive_seed(scene.seed, _NS_NODE, node_index[entry.key]),
            )
        k = entry.source_id - 1
        src = scene.sources[k]
        clip = synthesize_source(
            src.signature, scene.isolated_seconds,
            derive_seed(scene.seed, _NS_ISOLATED, k), scene.sample_rate,
        )
        return AudioClip(attenuation(1.0) * src.power * clip.samples, scene.sample_rate)

    return SyntheticDataset(manifest, loader, scene=scene)


def save_dataset(dataset, out_dir):
    """Write WAVs (32-bit float) and manifest.json under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for entry in dataset.manifest.entries:
        wav_name = f"{entry.key}.wav"
        write_wav(out_dir / wav_name, dataset.clip(entry))
        record = {"wav_path": wav_name, "x": entry.x, "y": entry.y, "role": entry.role}
        if entry.source_id is not None:
            record["source_id"] = entry.source_id
        records.append(record)
    doc = {"sample_rate": dataset.manifest.sample_rate, "entries": records}
    if dataset.manifest.room is not None:
        doc["room"] = list(dataset.manifest.room)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return out_dir / "manifest.json"


def load_dataset(directory):
    """Load a dataset written by save_dataset (clips read on demand)."""
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        doc = json.load(fh)
    entries = []
    paths = {}
    for rec in doc["entries"]:
        key = Path(rec["wav_path"]).stem
        entry = ManifestEntry(
            key=key, x=float(rec["x"]), y=float(rec["y"]), role=rec["role"],
            source_id=rec.get("source_id"),
        )
        entries.append(entry)
        paths[key] = directory / rec["wav_path"]
    room = tuple(doc["room"]) if "room" in doc else None
    manifest = DatasetManifest(tuple(entries), int(doc["sample_rate"]), room=room)

    def loader(entry):
        clip = read_wav(paths[entry.key])
        if clip.sample_rate != manifest.sample_rate:
            raise ValueError(
                f"{paths[entry.key]}: sample rate {clip.sample_rate} does not match "
                f"manifest rate {manifest.sample_rate} (resampling not supported)"
            )
        return clip

    return SyntheticDataset(manifest, loader)
