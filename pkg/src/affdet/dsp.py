"""Spectral front-end: framing, radix-2 FFT, triangular filterbanks, DCT-II,
and the MFCC/LFCC extractors.

Everything is implemented directly on numpy arrays in double precision.
The default MFCC geometry (22.05 kHz, FFT 2048, hop 512, centered) yields
a 20x44 coefficient-by-time matrix per 1-second clip; the default LFCC
geometry (16 kHz, FFT 512, 25 ms window, 10 ms hop, non-centered) yields
a 98x13 time-by-coefficient matrix. Alignment of both onto a common grid
happens downstream in affdet.features.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .audio import AudioClip, resample

KIND_MFCC = "mfcc"
KIND_LFCC = "lfcc"

AXIS_COEFFICIENT = "coefficient"
AXIS_TIME = "time"

_WINDOWS = ("hann", "hamming", "rect")
_SCALES = ("mel", "linear")


class ConfigError(ValueError):
    """Invalid DSP configuration (sizes, scales, frequency bounds)."""


class EmptyFrameError(ValueError):
    """Signal too short to produce a single frame in non-centered mode."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class FrameConfig:
    """Short-time analysis geometry.

    centered=True reflect-pads the signal by n_fft/2 so frame k is centered
    at sample k*hop (librosa-style); centered=False starts frame k at
    sample k*hop with no padding.
    """

    n_fft: int
    hop: int
    win_length: int
    window: str = "hann"
    centered: bool = True

    def __post_init__(self) -> None:
        if not _is_power_of_two(self.n_fft):
            raise ConfigError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ConfigError(f"hop must be in (0, n_fft], got {self.hop}")
        if not 0 < self.win_length <= self.n_fft:
            raise ConfigError(f"win_length must be in (0, n_fft], got {self.win_length}")
        if self.window not in _WINDOWS:
            raise ConfigError(f"unknown window {self.window!r}, expected one of {_WINDOWS}")


@dataclass
class Filterbank:
    """Triangular band weights over FFT bins: n_filters x (n_fft/2 + 1)."""

    weights: np.ndarray = field(repr=False)
    scale: str
    fmin: float
    fmax: float


@dataclass
class FeatureMatrix:
    """2-D cepstral feature with a kind tag and explicit axis semantics.

    MFCC defaults to coefficient-major (20x44); LFCC defaults to
    time-major (n_frames x 13). The asymmetry is deliberate: both get
    embedded literally into the shared 136x44 grid downstream.
    """

    values: np.ndarray = field(repr=False)
    kind: str
    axis0: str
    axis1: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"feature values must be 2-D, got shape {self.values.shape}")
        if self.kind not in (KIND_MFCC, KIND_LFCC):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        for ax in (self.axis0, self.axis1):
            if ax not in (AXIS_COEFFICIENT, AXIS_TIME):
                raise ValueError(f"unknown axis tag {ax!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def window_vector(name: str, length: int) -> np.ndarray:
    """Symmetric analysis window (endpoints of hann are exactly 0)."""
    if name not in _WINDOWS:
        raise ConfigError(f"unknown window {name!r}, expected one of {_WINDOWS}")
    if length == 1:
        return np.ones(1)
    n = np.arange(length)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (length - 1))
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))
    return np.ones(length)


def frame_signal(clip: AudioClip, cfg: FrameConfig) -> np.ndarray:
    """Slice a clip into windowed frames zero-padded to n_fft.

    Returns an (n_frames, n_fft) matrix. Centered mode yields
    1 + floor(len/hop) frames; non-centered yields
    1 + floor((len - win_length)/hop).
    """
    x = clip.samples
    n = x.shape[0]
    if n == 0:
        raise EmptyFrameError("cannot frame an empty clip")

    win = window_vector(cfg.window, cfg.win_length)
    if cfg.centered:
        pad = cfg.n_fft // 2
        if n > pad:
            padded = np.pad(x, pad, mode="reflect")
        else:  # too short for reflection; zeros keep the geometry intact
            padded = np.pad(x, pad, mode="constant")
        n_frames = 1 + n // cfg.hop
        # frame k is centered at sample k*hop of the original signal
        first = pad - cfg.win_length // 2
        starts = first + np.arange(n_frames) * cfg.hop
    else:
        if n < cfg.win_length:
            raise EmptyFrameError(
                f"clip of {n} samples is shorter than win_length={cfg.win_length}"
            )
        padded = x
        n_frames = 1 + (n - cfg.win_length) // cfg.hop
        starts = np.arange(n_frames) * cfg.hop

    frames = np.zeros((n_frames, cfg.n_fft))
    idx = starts[:, None] + np.arange(cfg.win_length)[None, :]
    frames[:, : cfg.win_length] = padded[idx] * win
    return frames


@lru_cache(maxsize=16)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(signal: np.ndarray, n: int | None = None) -> np.ndarray:
    """Radix-2 decimation-in-time FFT: X[k] = sum_t x[t] exp(-2*pi*i*k*t/n).

    Accepts a 1-D signal or a 2-D batch of row signals shorter than or
    equal to n; rows are zero-padded to n. Always returns complex128.
    """
    x = np.asarray(signal)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2:
        raise ConfigError(f"fft expects a 1-D or 2-D input, got ndim={x.ndim}")
    if n is None:
        n = x.shape[1]
    if not _is_power_of_two(n):
        raise ConfigError(f"fft size must be a power of two, got {n}")
    if x.shape[1] > n:
        raise ConfigError(f"signal length {x.shape[1]} exceeds fft size {n}")

    a = np.zeros((x.shape[0], n), dtype=np.complex128)
    a[:, : x.shape[1]] = x
    a = a[:, _bit_reversal(n)]

    m = 1
    while m < n:
        step = 2 * m
        tw = np.exp(-2j * np.pi * np.arange(m) / step)
        a = a.reshape(-1, n // step, step)
        even = a[:, :, :m]
        odd = a[:, :, m:] * tw
        a = np.concatenate((even + odd, even - odd), axis=2).reshape(-1, n)
        m = step

    return a[0] if squeeze else a


def power_spectrum(frame: np.ndarray, n_fft: int | None = None) -> np.ndarray:
    """One-sided power spectrum P[k] = |X[k]|^2 for k = 0..n_fft/2."""
    spectrum = fft(frame, n_fft)
    n = spectrum.shape[-1]
    half = spectrum[..., : n // 2 + 1]
    return (half.real**2 + half.imag**2)


def scale_convert(f, scale: str, direction: str = "to_scale"):
    """Map Hz <-> filterbank scale. Mel uses 2595*log10(1 + f/700)."""
    if scale not in _SCALES:
        raise ConfigError(f"unknown scale {scale!r}, expected one of {_SCALES}")
    if direction not in ("to_scale", "to_hz"):
        raise ConfigError(f"unknown direction {direction!r}")
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequencies must be non-negative")
    if scale == "linear":
        out = f.copy()
    elif direction == "to_scale":
        out = 2595.0 * np.log10(1.0 + f / 700.0)
    else:
        out = 700.0 * (10.0 ** (f / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def build_filterbank(
    n_filters: int,
    n_fft: int,
    sample_rate: int,
    fmin: float,
    fmax: float,
    scale: str,
) -> Filterbank:
    """Triangular filters with n_filters+2 breakpoints equispaced on `scale`.

    Filter i rises linearly from breakpoint i to i+1 and falls to i+2,
    evaluated at FFT bin centers k*sample_rate/n_fft. Unit-peak triangles;
    no area normalization.
    """
    if n_filters < 1:
        raise ConfigError(f"need at least one filter, got {n_filters}")
    if not fmin < fmax:
        raise ConfigError(f"fmin must be below fmax, got {fmin} >= {fmax}")
    if fmax > sample_rate / 2:
        raise ConfigError(f"fmax={fmax} exceeds Nyquist {sample_rate / 2}")

    lo = scale_convert(fmin, scale)
    hi = scale_convert(fmax, scale)
    breakpoints = scale_convert(np.linspace(lo, hi, n_filters + 2), scale, "to_hz")

    bin_centers = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    left = breakpoints[:-2, None]
    mid = breakpoints[1:-1, None]
    right = breakpoints[2:, None]
    rising = (bin_centers[None, :] - left) / (mid - left)
    falling = (right - bin_centers[None, :]) / (right - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return Filterbank(weights=weights, scale=scale, fmin=fmin, fmax=fmax)


@lru_cache(maxsize=8)
def _dct2_matrix(n: int, n_out: int) -> np.ndarray:
    k = np.arange(n_out)[:, None]
    j = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * j + 1) / (2 * n))
    mat[0] *= np.sqrt(1.0 / n)
    mat[1:] *= np.sqrt(2.0 / n)
    return mat


def dct2(v: np.ndarray, n_out: int | None = None) -> np.ndarray:
    """Orthonormal DCT-II along the last axis, truncated to n_out terms."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    if n_out is None:
        n_out = n
    if n_out > n:
        raise ConfigError(f"n_out={n_out} exceeds input length {n}")
    return v @ _dct2_matrix(n, n_out).T


@dataclass
class MfccConfig:
    """Default geometry reproduces a 20x44 matrix per 1-second clip."""

    sample_rate: int = 22050
    n_fft: int = 2048
    hop: int = 512
    win_length: int = 2048
    window: str = "hann"
    centered: bool = True
    n_filters: int = 128
    fmin: float = 0.0
    fmax: float = 11025.0
    n_coeffs: int = 20
    log_floor: float = 1e-10

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.n_fft, self.hop, self.win_length, self.window, self.centered)


@dataclass
class LfccConfig:
    """Default geometry: 25 ms window / 10 ms hop at 16 kHz -> 98x13."""

    sample_rate: int = 16000
    n_fft: int = 512
    hop: int = 160
    win_length: int = 400
    window: str = "hamming"
    centered: bool = False
    n_filters: int = 24
    fmin: float = 0.0
    fmax: float = 8000.0
    n_coeffs: int = 13
    log_floor: float = 1e-10

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.n_fft, self.hop, self.win_length, self.window, self.centered)


def _cepstra(clip: AudioClip, cfg, scale: str) -> np.ndarray:
    """Shared frames -> power -> filterbank -> log -> DCT pipeline (time-major)."""
    clip = resample(clip, cfg.sample_rate)
    frames = frame_signal(clip, cfg.frame_config())
    power = power_spectrum(frames, cfg.n_fft)
    fb = build_filterbank(cfg.n_filters, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax, scale)
    energies = power @ fb.weights.T
    log_energies = np.log(np.maximum(energies, cfg.log_floor))
    return dct2(log_energies, cfg.n_coeffs)


def extract_mfcc(clip: AudioClip, cfg: MfccConfig | None = None) -> FeatureMatrix:
    """Mel-filterbank cepstra, returned coefficient-major (n_coeffs x n_frames)."""
    cfg = cfg or MfccConfig()
    coeffs = _cepstra(clip, cfg, "mel")
    return FeatureMatrix(values=coeffs.T, kind=KIND_MFCC, axis0=AXIS_COEFFICIENT, axis1=AXIS_TIME)


def extract_lfcc(clip: AudioClip, cfg: LfccConfig | None = None) -> FeatureMatrix:
    """Linear-filterbank cepstra, returned time-major (n_frames x n_coeffs)."""
    cfg = cfg or LfccConfig()
    coeffs = _cepstra(clip, cfg, "linear")
    return FeatureMatrix(values=coeffs, kind=KIND_LFCC, axis0=AXIS_TIME, axis1=AXIS_COEFFICIENT)
