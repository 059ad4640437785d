"""Desk-scale synthetic speech-like dataset generator.

Both classes share a base recipe: a stack of decaying harmonics on a
randomly drawn fundamental with mild vibrato plus a low white-noise
floor. "Fake" clips add synthesis-style artifacts on top:

* highband profile — a band of tones between 6 and 7.8 kHz plus phase
  resets every 125 ms (waveform discontinuities), i.e. artifacts
  concentrated where a linear-frequency front-end looks;
* split profile — half the fake clips instead carry only low-band
  artifacts (an inharmonic partial at 1.5x the fundamental plus slow
  amplitude modulation), the other half only the high band, so no single
  feature view sees all the evidence.

Generation is fully deterministic per (spec.seed, clip index).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, save_wav

PROFILES = ("highband", "split")

_N_HARMONICS = 6
_HARMONIC_AMP = 0.28
_NOISE_FLOOR = 0.01
_HIGHBAND_TONES = 32
_HIGHBAND_AMP = 0.012
_HIGHBAND_LO = 6000.0
_HIGHBAND_HI = 7800.0
_PHASE_RESET_BLOCKS = 8
_LOWBAND_AMP = 0.12
_TREMOLO_HZ = 3.0
_TREMOLO_DEPTH = 0.5


@dataclass
class SynthTaskSpec:
    n_per_class: int = 50
    sample_rate: int = 16000
    duration: float = 1.0
    seed: int = 0
    profile: str = "highband"
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)

    def __post_init__(self) -> None:
        if self.n_per_class < 1:
            raise ValueError(f"n_per_class must be positive, got {self.n_per_class}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}, expected one of {PROFILES}")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError(f"split_fractions must be 3 values summing to 1, got {self.split_fractions}")


def _harmonic_base(rng: np.random.Generator, t: np.ndarray, reset_phases: bool) -> np.ndarray:
    """Shared harmonic stack; fake clips may re-roll phases per time block."""
    f0 = rng.uniform(110.0, 200.0)
    vibrato = 1.0 + 0.01 * np.sin(2.0 * np.pi * 5.0 * t + rng.uniform(0, 2 * np.pi))
    inst_freq = f0 * vibrato
    # integrate instantaneous frequency at the sample spacing
    phase = 2.0 * np.pi * np.cumsum(inst_freq) * (t[1] - t[0])
    out = np.zeros_like(t)
    for k in range(1, _N_HARMONICS + 1):
        phi = rng.uniform(0, 2 * np.pi)
        if reset_phases:
            block = t.size // _PHASE_RESET_BLOCKS
            comp = np.empty_like(t)
            for b in range(_PHASE_RESET_BLOCKS):
                lo = b * block
                hi = t.size if b == _PHASE_RESET_BLOCKS - 1 else lo + block
                comp[lo:hi] = np.sin(k * phase[lo:hi] + rng.uniform(0, 2 * np.pi))
            out += (_HARMONIC_AMP / k) * comp
        else:
            out += (_HARMONIC_AMP / k) * np.sin(k * phase + phi)
    return out


def _highband_artifact(rng: np.random.Generator, t: np.ndarray) -> np.ndarray:
    freqs = rng.uniform(_HIGHBAND_LO, _HIGHBAND_HI, size=_HIGHBAND_TONES)
    phases = rng.uniform(0, 2 * np.pi, size=_HIGHBAND_TONES)
    return (_HIGHBAND_AMP * np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(axis=0)


def _lowband_artifact(rng: np.random.Generator, t: np.ndarray, base: np.ndarray) -> np.ndarray:
    f0 = rng.uniform(160.0, 300.0)
    partial = _LOWBAND_AMP * np.sin(2 * np.pi * f0 * 1.5 * t + rng.uniform(0, 2 * np.pi))
    tremolo = 1.0 + _TREMOLO_DEPTH * np.sin(2 * np.pi * _TREMOLO_HZ * t + rng.uniform(0, 2 * np.pi))
    return base * (tremolo - 1.0) + partial


def synth_clip(spec: SynthTaskSpec, label: str, index: int) -> AudioClip:
    """Deterministic clip for (seed, class, index)."""
    rng = np.random.default_rng([spec.seed, 1 if label == "fake" else 0, index])
    n = int(round(spec.duration * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate

    if label == "fake":
        highband = spec.profile == "highband" or index % 2 == 1
        base = _harmonic_base(rng, t, reset_phases=highband)
        x = base + _NOISE_FLOOR * rng.standard_normal(n)
        if highband:
            x = x + _highband_artifact(rng, t)
        else:
            x = x + _lowband_artifact(rng, t, base)
    else:
        x = _harmonic_base(rng, t, reset_phases=False) + _NOISE_FLOOR * rng.standard_normal(n)

    return AudioClip(samples=np.clip(x, -1.0, 1.0), sample_rate=spec.sample_rate)


def _split_for_index(index: int, n: int, fractions: tuple[float, float, float]) -> str:
    n_train = int(round(n * fractions[0]))
    n_test = int(round(n * fractions[1]))
    if index < n_train:
        return "train"
    if index < n_train + n_test:
        return "test"
    return "eval"


def generate_dataset(spec: SynthTaskSpec, out_dir) -> list[dict]:
    """Write WAVs under out_dir and return manifest rows.

    Each class is split train/test/eval by index according to
    spec.split_fractions, keeping the classes balanced per split. Files
    are byte-identical across runs with the same spec.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for label in ("real", "fake"):
        for i in range(spec.n_per_class):
            clip = synth_clip(spec, label, i)
            name = f"{label}_{i:04d}.wav"
            save_wav(out_dir / name, clip)
            rows.append({
                "path": str(out_dir / name),
                "label": label,
                "split": _split_for_index(i, spec.n_per_class, spec.split_fractions),
                "source_tag": f"synth_{spec.profile}",
            })
    return rows
