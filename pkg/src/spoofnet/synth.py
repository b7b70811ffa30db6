"""Deterministic synthetic corpora for desk-scale testing.

"Real" items are source-filter voices: a harmonic source with a slowly
modulated f0, shaped by two vocal-tract-like resonators, with a noisy
burst in the middle (so voiced and unvoiced frames both occur) and
silence at the edges (so trimming has work to do). "Fake" items run the
same recipe and then apply deterministic spectral perturbations: ring
modulation plus an inharmonic tone, the kind of stationary artifact a
detector can genuinely learn.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dsp import SAMPLE_RATE, write_wav
from .manifest import Manifest, ManifestEntry, save_manifest


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_real: int = 20
    n_fake: int = 20
    seed: int = 0
    duration_s: float = 2.5
    dataset_tag: str = "synthetic"
    codec_tags: tuple[str, ...] = ()
    ringmod_hz: float = 43.0
    ringmod_depth: float = 0.4
    tone_hz: float = 3937.0
    tone_level: float = 0.2


def _resonator_coeffs(freq_hz: float, bandwidth_hz: float, sr: int):
    r = np.exp(-np.pi * bandwidth_hz / sr)
    theta = 2.0 * np.pi * freq_hz / sr
    return [1.0], [1.0, -2.0 * r * np.cos(theta), r * r]


def _voiced_segment(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """Harmonic source through two formant resonators."""
    t = np.arange(n) / sr
    f0_base = rng.uniform(110.0, 240.0)
    vib_rate = rng.uniform(3.0, 6.0)
    vib_depth = rng.uniform(0.01, 0.03)
    f0 = f0_base * (1.0 + vib_depth * np.sin(2.0 * np.pi * vib_rate * t))
    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    src = np.zeros(n)
    k = 1
    while k * f0_base * 1.05 < 6000.0:
        src += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k
        k += 1
    f1 = rng.uniform(350.0, 750.0)
    f2 = rng.uniform(1100.0, 2200.0)
    b1, a1 = _resonator_coeffs(f1, 80.0, sr)
    b2, a2 = _resonator_coeffs(f2, 120.0, sr)
    voiced = lfilter(b2, a2, lfilter(b1, a1, src))
    return voiced / np.max(np.abs(voiced))


def _noise_burst(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """High-passed noise, fricative-like: energetic but aperiodic."""
    noise = rng.standard_normal(n)
    b, a = _resonator_coeffs(4500.0, 2000.0, sr)
    shaped = lfilter(b, a, noise)
    return 0.35 * shaped / np.max(np.abs(shaped))


def synth_utterance(rng: np.random.Generator, spec: SyntheticCorpusSpec,
                    fake: bool) -> np.ndarray:
    """One deterministic utterance; all randomness comes from rng."""
    sr = SAMPLE_RATE
    n_total = int(spec.duration_s * sr)
    n_edge = int(0.08 * sr)
    n_burst = int(rng.uniform(0.15, 0.3) * sr)
    n_voiced_total = n_total - 2 * n_edge - n_burst
    n_a = int(n_voiced_total * rng.uniform(0.4, 0.6))
    n_b = n_voiced_total - n_a

    x = np.concatenate([
        np.zeros(n_edge),
        _voiced_segment(rng, n_a, sr),
        _noise_burst(rng, n_burst, sr),
        _voiced_segment(rng, n_b, sr),
        np.zeros(n_edge),
    ])
    x = x * rng.uniform(0.3, 0.9)

    if fake:
        t = np.arange(x.size) / sr
        x = x * (1.0 + spec.ringmod_depth * np.sin(2.0 * np.pi * spec.ringmod_hz * t))
        x = x + spec.tone_level * np.max(np.abs(x)) * np.sin(
            2.0 * np.pi * spec.tone_hz * t)
    peak = np.max(np.abs(x))
    return x / peak * 0.9


def generate_synthetic_corpus(spec: SyntheticCorpusSpec, out_dir) -> Manifest:
    """Write WAVs plus a manifest; byte-identical for the same spec."""
    out_dir = Path(out_dir).resolve()
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    entries = []
    jobs = [("real", i) for i in range(spec.n_real)] + \
           [("fake", i) for i in range(spec.n_fake)]
    for j, (label, i) in enumerate(jobs):
        x = synth_utterance(rng, spec, fake=(label == "fake"))
        utt_id = f"synth_{label}_{i:03d}"
        wav_path = audio_dir / f"{utt_id}.wav"
        write_wav(wav_path, x)
        codec = spec.codec_tags[j % len(spec.codec_tags)] if spec.codec_tags else None
        entries.append(ManifestEntry(
            utt_id=utt_id, audio_path=wav_path, label=label,
            dataset_tag=spec.dataset_tag, codec_tag=codec, split="",
        ))
    manifest = Manifest(entries=entries)
    save_manifest(out_dir / "manifest.csv", manifest)
    return manifest
