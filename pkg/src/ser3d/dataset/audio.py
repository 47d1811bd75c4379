"""PCM WAV input/output on top of the stdlib ``wave`` module."""

import wave
from pathlib import Path

import numpy as np

from ..dsp import Waveform
from ..errors import DataError


def read_audio(path, speaker_id: str = "") -> Waveform:
    """Decode an 8- or 16-bit PCM WAV file to reals in [-1, 1].

    Multi-channel files contribute their first channel only.  The original
    sample rate is kept; resampling happens in the feature pipeline.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: audio file not found")
    try:
        with wave.open(str(path), "rb") as fh:
            width = fh.getsampwidth()
            channels = fh.getnchannels()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            raw = fh.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    expected = n_frames * width * channels
    if len(raw) < expected:
        raise DataError(f"{path}: data chunk truncated, expected {expected} bytes "
                        f"of samples but found {len(raw)} (short by {expected - len(raw)})")
    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise DataError(f"{path}: unsupported sample width {8 * width} bits (8 or 16 supported)")
    return Waveform(data.reshape(-1, channels)[:, 0].copy(), rate, speaker_id)


def write_wav(path, samples: np.ndarray, sample_rate: int = 16000) -> None:
    """Write mono 16-bit PCM; samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())
