"""Waveform to 10x10x256 spectro-temporal volume.

Pipeline: per-speaker peak normalisation, resampling to 16 kHz, fitting to
2 s, a log-magnitude STFT (512-sample Hann window, 320-sample hop, DC bin
dropped) and a reshape of the 100 frames into 10 blocks of 10.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import get_window

from .errors import DegenerateInputError, DimensionError

SAMPLE_RATE = 16000
SEGMENT_SECONDS = 2.0
SEGMENT_SAMPLES = int(SAMPLE_RATE * SEGMENT_SECONDS)
HOP = 320
WINDOW = 512
N_FFT = 512
N_FRAMES = 100
N_BINS = 256
LONG_STEPS = 10
SHORT_STEPS = 10
LOG_FLOOR = 1e-10
VOLUME_SHAPE = (LONG_STEPS, SHORT_STEPS, N_BINS)


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    speaker_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise DimensionError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise DimensionError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise DegenerateInputError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FeatureVolume:
    values: np.ndarray
    source_utterance: str = ""

    def __post_init__(self):
        if self.values.shape != VOLUME_SHAPE:
            raise DimensionError(f"feature volume must be {VOLUME_SHAPE}, got {self.values.shape}")


def normalize_gain(utterances: Sequence[Waveform]) -> list[Waveform]:
    """Scale all utterances of one speaker so the joint peak |sample| is 1."""
    if not utterances:
        raise DegenerateInputError("normalize_gain needs at least one utterance")
    peak = max((float(np.max(np.abs(w.samples))) if w.samples.size else 0.0) for w in utterances)
    if peak == 0.0:
        raise DegenerateInputError("all utterances of the speaker are silent")
    return [Waveform(w.samples / peak, w.sample_rate, w.speaker_id) for w in utterances]


def normalize_speakers(waveforms: Sequence[Waveform]) -> list[Waveform]:
    """Apply :func:`normalize_gain` per ``speaker_id``, preserving input order."""
    groups: dict[str, list[int]] = {}
    for i, w in enumerate(waveforms):
        groups.setdefault(w.speaker_id, []).append(i)
    out: list = [None] * len(waveforms)
    for idx in groups.values():
        for i, w in zip(idx, normalize_gain([waveforms[i] for i in idx])):
            out[i] = w
    return out


def resample(w: Waveform, rate: int = SAMPLE_RATE) -> Waveform:
    """Linear-interpolation resampling; a no-op at the target rate."""
    if w.sample_rate == rate:
        return w
    n_out = int(round(w.samples.size * rate / w.sample_rate))
    t_out = np.arange(n_out) / rate
    t_in = np.arange(w.samples.size) / w.sample_rate
    return Waveform(np.interp(t_out, t_in, w.samples), rate, w.speaker_id)


def fit_2s(w: Waveform) -> Waveform:
    """Zero-pad at the end or trim to exactly two seconds."""
    n = int(round(SEGMENT_SECONDS * w.sample_rate))
    x = w.samples[:n]
    if x.size < n:
        x = np.concatenate([x, np.zeros(n - x.size)])
    return Waveform(x, w.sample_rate, w.speaker_id)


def segments_2s(w: Waveform) -> list[Waveform]:
    """Non-overlapping two-second segments; the last one is zero-padded."""
    n = int(round(SEGMENT_SECONDS * w.sample_rate))
    count = max(1, -(-w.samples.size // n))
    return [fit_2s(Waveform(w.samples[i * n:(i + 1) * n], w.sample_rate, w.speaker_id))
            for i in range(count)]


def stft_magnitude(w: Waveform) -> np.ndarray:
    """``[100, 256]`` magnitudes of bins 1..256 of a 2 s, 16 kHz waveform."""
    if w.sample_rate != SAMPLE_RATE or w.samples.size != SEGMENT_SAMPLES:
        raise DimensionError(
            f"log_spectrogram expects {SEGMENT_SAMPLES} samples at {SAMPLE_RATE} Hz, "
            f"got {w.samples.size} at {w.sample_rate} Hz")
    tail = (N_FRAMES - 1) * HOP + WINDOW - SEGMENT_SAMPLES
    padded = np.concatenate([w.samples, np.zeros(tail)])
    frames = np.lib.stride_tricks.sliding_window_view(padded, WINDOW)[::HOP][:N_FRAMES]
    window = get_window("hann", WINDOW)
    spectrum = np.fft.rfft(frames * window, n=N_FFT, axis=1)
    return np.abs(spectrum[:, 1:N_BINS + 1])


def log_spectrogram(w: Waveform) -> np.ndarray:
    return np.log(stft_magnitude(w) + LOG_FLOOR)


def compose_volume(spec: np.ndarray, source_utterance: str = "") -> FeatureVolume:
    """Cut 100 frames into 10 consecutive blocks: ``values[l, t] = spec[10 l + t]``."""
    if spec.shape != (N_FRAMES, N_BINS):
        raise DimensionError(f"compose_volume expects {(N_FRAMES, N_BINS)}, got {spec.shape}")
    values = spec.reshape(VOLUME_SHAPE).astype(np.float32)
    return FeatureVolume(values, source_utterance)


def extract_volume(w: Waveform, source_utterance: str = "") -> FeatureVolume:
    """Full pipeline for one (already gain-normalised) waveform."""
    return compose_volume(log_spectrogram(fit_2s(resample(w))), source_utterance)


def extract_volumes(w: Waveform, source_utterance: str = "",
                    multi_segment: bool = False) -> list[FeatureVolume]:
    if not multi_segment:
        return [extract_volume(w, source_utterance)]
    return [compose_volume(log_spectrogram(seg), source_utterance)
            for seg in segments_2s(resample(w))]


def write_spectrogram_csv(spec: np.ndarray, path) -> None:
    """One row per frame, 256 columns, 9 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in spec:
            fh.write(",".join(f"{v:.9g}" for v in row))
            fh.write("\n")


def read_spectrogram_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
