"""Time-frequency front end: framing, STFT, MFCC baseline, SNR-controlled mixing.

Signals are mono float arrays with an attached sample rate.  The STFT is the
plain non-centered one-sided transform with a Hann window; frame/hop defaults
(2048/1024 at 48 kHz) are suited to stationary environmental sound.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 48000
DEFAULT_FRAME_SIZE = 2048
DEFAULT_HOP = 1024

N_MEL_FILTERS = 40
LOG_FLOOR = 1e-12

FEATURE_KINDS = ("snmf_wf", "snmf_act", "mfcc")


@dataclass(frozen=True)
class AudioClip:
    """Mono audio signal.  Samples must be finite."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip requires a 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def rms(self):
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT matrix, indexed [frequency, frame]."""

    values: np.ndarray
    frame_size: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2:
            raise ValueError("Spectrogram values must be 2-D (freq x time)")
        if values.shape[0] != self.frame_size // 2 + 1:
            raise ValueError("row count must equal frame_size // 2 + 1")
        if values.shape[1] < 1:
            raise ValueError("Spectrogram needs at least one frame")
        if not np.all(np.isfinite(values)):
            raise ValueError("Spectrogram entries must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_freqs(self):
        return self.values.shape[0]

    @property
    def n_frames(self):
        return self.values.shape[1]

    def power(self):
        """Power spectrogram |X|^2 as a real array."""
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class FeatureVector:
    """Per-window feature: log-RMS per landmark source, or averaged MFCCs."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("FeatureVector must be 1-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("FeatureVector entries must be finite")
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def stft(clip, frame_size=DEFAULT_FRAME_SIZE, hop=DEFAULT_HOP):
    """Hann-windowed one-sided STFT without centering or padding.

    Frames start at sample 0 and advance by ``hop``; a trailing remainder
    shorter than ``frame_size`` is dropped, so the frame count is
    ``(len - frame_size) // hop + 1``.
    """
    if not _is_power_of_two(frame_size):
        raise ValueError("frame_size must be a power of two")
    if not 0 < hop <= frame_size:
        raise ValueError("hop must satisfy 0 < hop <= frame_size")
    n = len(clip.samples)
    if n < frame_size:
        raise ValueError(
            f"insufficient samples: clip has {n}, frame_size is {frame_size}"
        )
    n_frames = (n - frame_size) // hop + 1
    idx = np.arange(frame_size)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = clip.samples[idx] * np.hanning(frame_size)[None, :]
    values = scipy.fft.rfft(frames, axis=1).T
    return Spectrogram(values, frame_size=frame_size, hop=hop, sample_rate=clip.sample_rate)


def window_clip(clip, window_seconds=1.0):
    """Cut a clip into consecutive non-overlapping windows; remainder dropped."""
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    win = int(round(window_seconds * clip.sample_rate))
    n_windows = len(clip.samples) // win
    return [
        AudioClip(clip.samples[i * win:(i + 1) * win], clip.sample_rate)
        for i in range(n_windows)
    ]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters, frame_size, sample_rate):
    """Triangular mel filters spanning 0..Nyquist, shape (n_filters, F)."""
    n_freqs = frame_size // 2 + 1
    freqs = np.arange(n_freqs) * sample_rate / frame_size
    mel_points = np.linspace(0.0, _hz_to_mel(sample_rate / 2.0), n_filters + 2)
    hz_points = _mel_to_hz(mel_points)
    bank = np.zeros((n_filters, n_freqs))
    for i in range(n_filters):
        lo, mid, hi = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def mfcc(spec, n_coeffs=20):
    """MFCC feature of a spectrogram, averaged over frames.

    Mel filter energies come from the power spectrogram; silent filters are
    floored before the log so degenerate input yields the floor value in
    coefficient 0 instead of NaN.
    """
    if n_coeffs > N_MEL_FILTERS:
        raise ValueError("n_coeffs cannot exceed the number of mel filters")
    bank = mel_filterbank(N_MEL_FILTERS, spec.frame_size, spec.sample_rate)
    mel_power = bank @ spec.power()
    log_mel = np.log(np.maximum(mel_power, LOG_FLOOR))
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=0)[:n_coeffs]
    return FeatureVector(coeffs.mean(axis=1), kind="mfcc")


def mix_at_snr(signal, noise, snr_db):
    """Add noise to a signal at an exact full-clip RMS signal-to-noise ratio.

    The noise is cropped to the signal length and scaled so that
    20*log10(rms(signal)/rms(scaled noise)) equals ``snr_db``.
    """
    if signal.sample_rate != noise.sample_rate:
        raise ValueError("signal and noise sample rates differ")
    if len(noise.samples) < len(signal.samples):
        raise ValueError("noise must be at least as long as the signal")
    cropped = noise.samples[: len(signal.samples)]
    rms_sig = np.sqrt(np.mean(signal.samples**2))
    rms_noise = np.sqrt(np.mean(cropped**2))
    if rms_sig == 0.0:
        raise ValueError("signal has zero RMS")
    if rms_noise == 0.0:
        raise ValueError("noise has zero RMS")
    gain = rms_sig / (rms_noise * 10.0 ** (snr_db / 20.0))
    return AudioClip(signal.samples + gain * cropped, signal.sample_rate)


def read_wav(path):
    """Read a mono PCM WAV (16/24/32-bit int or 32-bit float) as an AudioClip."""
    sample_rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV files are supported")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return AudioClip(samples, sample_rate)


def write_wav(path, clip):
    """Write an AudioClip as 32-bit float WAV."""
    wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))
