"""Canonical-grid alignment, band masking augmentation, and the "AFFD"
binary feature-file format.

Raw MFCC (20x44) and LFCC (~98x13) matrices are embedded centrally into a
shared 136x44 grid of zeros so the two feature kinds can be fused. Masking
overwrites a contiguous 7%-wide band of rows or columns with each line's
own mean, which preserves line sums and leaves a constant matrix unchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dsp import AXIS_COEFFICIENT, AXIS_TIME, KIND_LFCC, KIND_MFCC, FeatureMatrix

TARGET_ROWS = 136
TARGET_COLS = 44

AXIS_FREQUENCY = "frequency"

FEATURE_MAGIC = b"AFFD"
FEATURE_VERSION = 1
_KIND_CODES = {KIND_MFCC: 0, KIND_LFCC: 1}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_HEADER = struct.Struct("<4sBBHII")  # magic, version, kind, reserved, rows, cols
_MAX_DIM = 1 << 20


class FeatureFileError(ValueError):
    """Feature file cannot be decoded; message states which check failed."""


@dataclass
class PaddedFeature:
    """A raw feature embedded in the 136x44 grid; origin = (row, col) offset."""

    values: np.ndarray = field(repr=False)
    kind: str
    origin: tuple[int, int]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (TARGET_ROWS, TARGET_COLS):
            raise ValueError(
                f"padded feature must be {TARGET_ROWS}x{TARGET_COLS}, got {self.values.shape}"
            )


@dataclass
class MaskSpec:
    """One contiguous masked band: frequency masks rows, time masks columns."""

    axis: str
    fraction: float = 0.07
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.axis not in (AXIS_TIME, AXIS_FREQUENCY):
            raise ValueError(f"mask axis must be 'time' or 'frequency', got {self.axis!r}")
        if not 0.0 <= self.fraction < 1.0:
            raise ValueError(f"mask fraction must be in [0, 1), got {self.fraction}")


def _center_offsets(size: int, target: int) -> tuple[int, int]:
    """(pad_before, crop_before); odd remainders land on the trailing side."""
    if size <= target:
        return (target - size) // 2, 0
    return 0, (size - target) // 2


def pad_center(
    m: FeatureMatrix, target_rows: int = TARGET_ROWS, target_cols: int = TARGET_COLS
) -> PaddedFeature:
    """Embed a raw feature centrally in a zero grid (crop centrally if larger)."""
    values = pad_center_values(m.values, target_rows, target_cols)
    rows, cols = m.values.shape
    row_off, _ = _center_offsets(rows, target_rows)
    col_off, _ = _center_offsets(cols, target_cols)
    return PaddedFeature(values=values, kind=m.kind, origin=(row_off, col_off))


def pad_center_values(
    values: np.ndarray, target_rows: int = TARGET_ROWS, target_cols: int = TARGET_COLS
) -> np.ndarray:
    """pad_center on a bare matrix; returns the (target_rows, target_cols) array."""
    values = np.asarray(values, dtype=np.float64)
    rows, cols = values.shape
    row_pad, row_crop = _center_offsets(rows, target_rows)
    col_pad, col_crop = _center_offsets(cols, target_cols)
    cropped = values[row_crop : row_crop + min(rows, target_rows),
                     col_crop : col_crop + min(cols, target_cols)]
    out = np.zeros((target_rows, target_cols))
    out[row_pad : row_pad + cropped.shape[0], col_pad : col_pad + cropped.shape[1]] = cropped
    return out


def mask_band(values: np.ndarray, axis_index: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Overwrite a random contiguous band of lines with each line's own mean.

    axis_index 0 masks rows, 1 masks columns. Band width is
    floor(fraction * n_lines); width 0 returns an unchanged copy. The band
    start is drawn uniformly from the valid offsets, so the band always
    lies fully inside the matrix.
    """
    out = np.array(values, dtype=np.float64)
    n_lines = out.shape[axis_index]
    width = int(fraction * n_lines)
    if width < 1:
        return out
    start = int(rng.integers(0, n_lines - width + 1))
    if axis_index == 0:
        band = out[start : start + width, :]
        band[:] = band.mean(axis=1, keepdims=True)
    else:
        band = out[:, start : start + width]
        band[:] = band.mean(axis=0, keepdims=True)
    return out


def apply_mask(p: PaddedFeature, spec: MaskSpec) -> PaddedFeature:
    """Mask a padded feature: frequency -> rows, time -> columns."""
    rng = np.random.default_rng(spec.rng_seed)
    axis_index = 0 if spec.axis == AXIS_FREQUENCY else 1
    values = mask_band(p.values, axis_index, spec.fraction, rng)
    return PaddedFeature(values=values, kind=p.kind, origin=p.origin)


def mask_feature_matrix(m: FeatureMatrix, spec: MaskSpec, rng: np.random.Generator | None = None) -> FeatureMatrix:
    """Mask a raw feature, resolving the band direction via the axis tags.

    A time mask hits the axis tagged 'time'; a frequency mask hits the
    axis tagged 'coefficient'. This keeps the augmentation meaningful for
    both the coefficient-major MFCC and the time-major LFCC layouts.
    """
    if rng is None:
        rng = np.random.default_rng(spec.rng_seed)
    want = AXIS_TIME if spec.axis == AXIS_TIME else AXIS_COEFFICIENT
    axis_index = 0 if m.axis0 == want else 1
    values = mask_band(m.values, axis_index, spec.fraction, rng)
    return FeatureMatrix(values=values, kind=m.kind, axis0=m.axis0, axis1=m.axis1)


def write_feature(path, feature) -> None:
    """Serialize a FeatureMatrix or PaddedFeature as an AFFD file.

    Layout: magic "AFFD", version u8, kind u8, reserved u16, rows u32,
    cols u32 (little-endian, 16-byte header), then row-major float-32.
    """
    values = np.asarray(feature.values, dtype="<f4")
    rows, cols = values.shape
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, _KIND_CODES[feature.kind], 0, rows, cols)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())


def read_feature(path) -> FeatureMatrix:
    """Read an AFFD file back into a FeatureMatrix (float-32 payload).

    Axis tags are assigned by kind convention (MFCC coefficient-major,
    LFCC time-major); the file stores only shape and kind.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FeatureFileError(f"{path}: truncated header")
        magic, version, kind_code, _reserved, rows, cols = _HEADER.unpack(header)
        if magic != FEATURE_MAGIC:
            raise FeatureFileError(f"{path}: magic mismatch, got {magic!r}")
        if version != FEATURE_VERSION:
            raise FeatureFileError(f"{path}: unsupported format version {version}")
        if kind_code not in _CODE_KINDS:
            raise FeatureFileError(f"{path}: unknown kind code {kind_code}")
        if rows > _MAX_DIM or cols > _MAX_DIM:
            raise FeatureFileError(f"{path}: dimension overflow ({rows}x{cols})")
        payload = fh.read(rows * cols * 4)
        if len(payload) < rows * cols * 4:
            raise FeatureFileError(f"{path}: truncated payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    kind = _CODE_KINDS[kind_code]
    if kind == KIND_MFCC:
        axis0, axis1 = AXIS_COEFFICIENT, AXIS_TIME
    else:
        axis0, axis1 = AXIS_TIME, AXIS_COEFFICIENT
    return FeatureMatrix(values=values.astype(np.float64), kind=kind, axis0=axis0, axis1=axis1)
