"""Synthetic four-class corpus with class structure in time and frequency.

Each class owns a carrier band and an amplitude-modulation rate.  Speakers
shift all carrier frequencies by a private factor and have their own gain,
and every utterance gets a random length, phase and additive noise.
"""

from pathlib import Path

import numpy as np

from .audio import write_wav
from .labels import CATEGORIES
from .manifest import UtteranceRecord, write_manifest

CARRIER_HZ = {"neutral": 400.0, "happy": 1000.0, "sad": 2200.0, "angry": 4200.0}
AM_RATE_HZ = {"neutral": 3.0, "happy": 6.0, "sad": 1.5, "angry": 10.0}
PARTIALS = (1.0, 1.3, 1.6)


def synth_signal(category: str, rng: np.random.Generator, speaker_shift: float = 1.0,
                 gain: float = 0.5, seconds: float = 2.0, sample_rate: int = 16000,
                 noise: float = 0.02) -> np.ndarray:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    f0 = CARRIER_HZ[category] * speaker_shift
    carrier = sum(np.sin(2 * np.pi * f0 * k * t + rng.uniform(0, 2 * np.pi)) for k in PARTIALS)
    carrier /= len(PARTIALS)
    depth = 0.8
    env = (1 + depth * np.sin(2 * np.pi * AM_RATE_HZ[category] * t + rng.uniform(0, 2 * np.pi)))
    x = gain * carrier * env / (1 + depth) + noise * gain * rng.standard_normal(t.size)
    return np.clip(x, -1.0, 1.0)


def synth_corpus(out_dir, n_speakers: int = 8, n_utt_per_class: int = 25, seed: int = 0,
                 corpus_id: str = "synth", sample_rate: int = 16000,
                 duration_range: tuple[float, float] = (1.4, 2.6)) -> list[UtteranceRecord]:
    """Write WAV files plus ``manifest.csv`` into ``out_dir`` and return the records.

    ``n_utt_per_class`` is per speaker, so the corpus holds
    ``n_speakers * 4 * n_utt_per_class`` utterances.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    records = []
    for s in range(n_speakers):
        speaker = f"spk{s:02d}"
        (out / speaker).mkdir(parents=True, exist_ok=True)
        shift = rng.uniform(0.92, 1.08)
        gain = rng.uniform(0.2, 0.9)
        for cat in CATEGORIES:
            for i in range(n_utt_per_class):
                uid = f"{speaker}_{cat}_{i:03d}"
                secs = rng.uniform(*duration_range)
                x = synth_signal(cat, rng, shift, gain, secs, sample_rate)
                path = out / speaker / f"{uid}.wav"
                write_wav(path, x, sample_rate)
                records.append(UtteranceRecord(uid, path, corpus_id, speaker, label=cat))
    write_manifest(records, out / "manifest.csv")
    return records
