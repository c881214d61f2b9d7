"""Per-window feature computation over a dataset's survey grid.

All three feature kinds are produced in one pass per location: the two
NMF-based kinds share a single batched decomposition of the location's
windows, MFCCs come straight from the spectrogram.  Evaluation noise is
mixed in before the STFT (training always uses the clean tables).

Work is parallel over locations with per-(location, window) derived seeds,
so any job count yields the identical table.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dsp, nmf
from .util import derive_rng, derive_seed

_NS_DECOMPOSE = 10
_NS_NOISE_CROP = 11


@dataclass(frozen=True)
class FeatureTable:
    """Window features for every surveyed location.

    ``values[kind]`` has shape (n_locations, n_windows, dim); locations is
    (n_locations, 2) in manifest order.
    """

    locations: np.ndarray
    values: dict

    @property
    def n_locations(self):
        return len(self.locations)

    @property
    def n_windows(self):
        return next(iter(self.values.values())).shape[1]

    def location_means(self, kind):
        """Per-location mean feature vector, the GP training targets."""
        return self.values[kind].mean(axis=1)


def window_powers(clip, window_seconds, frame_size, hop):
    """Power spectrograms of a clip's non-overlapping windows, (B, F, T)."""
    windows = dsp.window_clip(clip, window_seconds)
    return np.stack(
        [dsp.stft(w, frame_size, hop).power() for w in windows]
    ), windows


def _mix_window(window, noise, snr_db, ref_rms, seed, loc_index, win_index):
    """Add noise at an SNR defined against the dataset reference level.

    Scaling the noise per window (against that window's own RMS) would make
    the noise gain encode the local signal loudness, handing the localizer a
    position cue that gets stronger as SNR drops; a fixed reference keeps
    the background level position-independent, like a real noise source.
    """
    if noise.sample_rate != window.sample_rate:
        raise ValueError("noise and signal sample rates differ")
    # crop offset varies per window but not per SNR, so a sweep compares
    # the same noise takes at different levels
    rng = derive_rng(seed, _NS_NOISE_CROP, loc_index, win_index)
    offset = int(rng.integers(0, len(noise.samples) - len(window.samples) + 1))
    segment = noise.samples[offset:offset + len(window.samples)]
    seg_rms = np.sqrt(np.mean(segment**2))
    if seg_rms == 0:
        raise ValueError("noise segment has zero RMS")
    gain = ref_rms / (seg_rms * 10.0 ** (snr_db / 20.0))
    return dsp.AudioClip(window.samples + gain * segment, window.sample_rate)


def reference_rms(dataset, window_seconds, max_entries=8):
    """Mean window RMS over a deterministic subset of survey locations; the
    level against which sweep SNRs are defined."""
    entries = dataset.manifest.train_entries()
    step = max(1, len(entries) // max_entries)
    sampled = entries[::step][:max_entries]
    values = []
    for entry in sampled:
        for window in dsp.window_clip(dataset.clip(entry), window_seconds):
            values.append(np.sqrt(np.mean(window.samples**2)))
    if not values:
        raise ValueError("dataset has no windows to take a reference level from")
    return float(np.mean(values))


def _location_features(clip, kinds, model, loc_index, seed, window_seconds,
                       conditions, noise, ref_rms):
    windows = dsp.window_clip(clip, window_seconds)
    nmf_kinds = [k for k in kinds if k != "mfcc"]
    seeds = [derive_seed(seed, _NS_DECOMPOSE, loc_index, j) for j in range(len(windows))]
    out = {}
    for condition in conditions:
        if condition is None:
            cond_windows = windows
        else:
            cond_windows = [
                _mix_window(w, noise, condition, ref_rms, seed, loc_index, j)
                for j, w in enumerate(windows)
            ]
        specs = [dsp.stft(w, model.frame_size, model.hop) for w in cond_windows]
        features = {}
        if "mfcc" in kinds:
            features["mfcc"] = np.stack([dsp.mfcc(s).values for s in specs])
        if nmf_kinds:
            powers = np.stack([s.power() for s in specs])
            batch = nmf.batch_features(powers, model, seeds)
            for kind in nmf_kinds:
                features[kind] = batch[kind]
        out[condition] = features
    return out


def compute_feature_tables(dataset, model, kinds, seed, window_seconds=1.0,
                           conditions=(None,), noise=None, jobs=1):
    """Feature tables over all train entries, one per noise condition.

    ``conditions`` is a sequence of SNRs in dB (noise mixed into every
    window before feature extraction) and/or None for the clean table.
    Each survey clip is loaded and windowed once for all conditions.
    """
    kinds = tuple(kinds)
    for kind in kinds:
        if kind not in dsp.FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {kind!r}")
    conditions = tuple(conditions)
    if any(c is not None for c in conditions) and noise is None:
        raise ValueError("SNR conditions given without a noise clip")
    entries = dataset.manifest.train_entries()
    if not entries:
        raise ValueError("dataset has no train entries")
    locations = np.array([[e.x, e.y] for e in entries])
    ref_rms = None
    if any(c is not None for c in conditions):
        ref_rms = reference_rms(dataset, window_seconds)

    def work(i):
        clip = dataset.clip(entries[i])
        return _location_features(
            clip, kinds, model, i, seed, window_seconds, conditions, noise, ref_rms
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_loc = list(pool.map(work, range(len(entries))))
    else:
        per_loc = [work(i) for i in range(len(entries))]

    return {
        condition: FeatureTable(
            locations,
            {kind: np.stack([d[condition][kind] for d in per_loc]) for kind in kinds},
        )
        for condition in conditions
    }


def compute_feature_table(dataset, model, kinds, seed, window_seconds=1.0,
                          snr_db=None, noise=None, jobs=1):
    """Single-condition feature table (clean, or noise-mixed at one SNR)."""
    tables = compute_feature_tables(
        dataset, model, kinds, seed, window_seconds,
        conditions=(snr_db,), noise=noise, jobs=jobs,
    )
    return tables[snr_db]
