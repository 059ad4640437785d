"""WAV loading, PCM encoding, resampling, and 1-second segmentation.

Only RIFF/WAVE containers with PCM-16 or IEEE-float-32 payloads are
supported; everything downstream works on mono clips normalized to
[-1, 1]. Clips longer than one second are cut into consecutive
non-overlapping 1-second windows and the sub-second tail is dropped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

PCM_16 = 0x0001
IEEE_FLOAT = 0x0003


class AudioDecodeError(ValueError):
    """Malformed RIFF/WAVE structure; the message names the offending chunk."""


class UnsupportedFormatError(ValueError):
    """Well-formed WAV whose codec or layout we do not decode."""


@dataclass
class AudioClip:
    """Mono waveform with amplitudes in [-1, 1].

    Treated as immutable after construction; operations return new clips.
    """

    samples: np.ndarray = field(repr=False)
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"clip samples must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise AudioDecodeError(f"truncated file while reading {what}")
    return buf


def load_wav(path) -> AudioClip:
    """Decode a RIFF/WAVE file into a mono AudioClip.

    PCM-16 samples map to s/32768; float-32 samples pass through. Stereo
    is downmixed by averaging the two channels.
    """
    with open(path, "rb") as fh:
        riff, _size, wave_id = struct.unpack("<4sI4s", _read_exact(fh, 12, "RIFF header"))
        if riff != b"RIFF":
            raise AudioDecodeError(f"bad RIFF chunk id {riff!r}")
        if wave_id != b"WAVE":
            raise AudioDecodeError(f"bad WAVE form type {wave_id!r}")

        fmt = None
        data = None
        while True:
            head = fh.read(8)
            if len(head) == 0:
                break
            if len(head) < 8:
                raise AudioDecodeError("truncated chunk header")
            chunk_id, chunk_size = struct.unpack("<4sI", head)
            if chunk_id == b"fmt ":
                if chunk_size < 16:
                    raise AudioDecodeError(f"'fmt ' chunk too short ({chunk_size} bytes)")
                fmt = struct.unpack("<HHIIHH", _read_exact(fh, 16, "'fmt ' chunk")[:16])
                fh.seek(chunk_size - 16, 1)
            elif chunk_id == b"data":
                data = _read_exact(fh, chunk_size, "'data' chunk")
            else:
                fh.seek(chunk_size, 1)
            if chunk_size % 2:  # chunks are word-aligned
                fh.seek(1, 1)

        if fmt is None:
            raise AudioDecodeError("missing 'fmt ' chunk")
        if data is None:
            raise AudioDecodeError("missing 'data' chunk")

    audio_format, n_channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if n_channels not in (1, 2):
        raise UnsupportedFormatError(f"{n_channels} channels not supported (mono/stereo only)")

    if audio_format == PCM_16 and bits == 16:
        raw = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"unsupported codec: format tag {audio_format:#06x} with {bits} bits/sample"
        )

    if n_channels == 2:
        if raw.size % 2:
            raise AudioDecodeError("'data' chunk has a dangling half frame")
        raw = raw.reshape(-1, 2).mean(axis=1)

    return AudioClip(samples=np.clip(raw, -1.0, 1.0), sample_rate=sample_rate)


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as mono PCM-16 little-endian WAV.

    Quantization is round(s * 32768) clipped to the int16 range, which
    round-trips through load_wav within 1/32768 per sample.
    """
    pcm = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    sr = clip.sample_rate
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, PCM_16, 1, sr, sr * 2, 2, 16,
        b"data", len(data),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def resample(clip: AudioClip, target_sr: int) -> AudioClip:
    """Resample by linear interpolation to target_sr.

    Output length is round(len * target_sr / source_sr). Identity when
    rates already match.
    """
    if target_sr <= 0:
        raise ValueError(f"target_sr must be positive, got {target_sr}")
    if target_sr == clip.sample_rate:
        return AudioClip(samples=clip.samples.copy(), sample_rate=target_sr)
    n = len(clip)
    out_len = int(round(n * target_sr / clip.sample_rate))
    positions = np.arange(out_len) * (clip.sample_rate / target_sr)
    out = np.interp(positions, np.arange(n), clip.samples)
    return AudioClip(samples=out, sample_rate=target_sr)


def segment_one_second(clip: AudioClip) -> list[AudioClip]:
    """Cut into consecutive 1-second clips; the sub-second tail is dropped."""
    sr = clip.sample_rate
    n_segments = len(clip) // sr
    return [
        AudioClip(samples=clip.samples[i * sr : (i + 1) * sr].copy(), sample_rate=sr)
        for i in range(n_segments)
    ]
