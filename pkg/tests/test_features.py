import numpy as np
import pytest

from affdet.dsp import FeatureMatrix
from affdet.features import (
    FeatureFileError,
    MaskSpec,
    apply_mask,
    mask_feature_matrix,
    pad_center,
    read_feature,
    write_feature,
)


def mfcc_like(rows=20, cols=44, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureMatrix(values=rng.standard_normal((rows, cols)), kind="mfcc",
                         axis0="coefficient", axis1="time")


def lfcc_like(rows=98, cols=13, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureMatrix(values=rng.standard_normal((rows, cols)), kind="lfcc",
                         axis0="time", axis1="coefficient")


# --- padding ---------------------------------------------------------------


def test_pad_mfcc_rows_58_to_77():
    m = mfcc_like()
    p = pad_center(m)
    assert p.values.shape == (136, 44)
    assert p.origin == (58, 0)
    assert np.array_equal(p.values[58:78, :], m.values)
    assert np.all(p.values[:58] == 0)
    assert np.all(p.values[78:] == 0)


def test_pad_lfcc_offsets_19_15_16():
    m = lfcc_like()
    p = pad_center(m)
    assert p.origin == (19, 15)
    assert np.array_equal(p.values[19:117, 15:28], m.values)
    assert np.all(p.values[:, :15] == 0)
    assert np.all(p.values[:, 28:] == 0)  # 16 trailing zero columns
    assert np.all(p.values[:19] == 0)
    assert np.all(p.values[117:] == 0)


def test_pad_full_size_is_identity():
    m = FeatureMatrix(values=np.random.default_rng(1).standard_normal((136, 44)),
                      kind="mfcc", axis0="coefficient", axis1="time")
    p = pad_center(m)
    assert p.origin == (0, 0)
    assert np.array_equal(p.values, m.values)


def test_pad_crops_oversized_input_centrally():
    m = FeatureMatrix(values=np.arange(140 * 50, dtype=float).reshape(140, 50),
                      kind="mfcc", axis0="coefficient", axis1="time")
    p = pad_center(m)
    assert p.values.shape == (136, 44)
    assert np.array_equal(p.values, m.values[2:138, 3:47])


# --- masking ---------------------------------------------------------------


def test_mask_band_width_is_floor_of_fraction():
    p = pad_center(mfcc_like())
    spec = MaskSpec(axis="frequency", fraction=0.07, rng_seed=42)
    masked = apply_mask(p, spec)
    changed_rows = np.nonzero((masked.values != p.values).any(axis=1))[0]
    assert changed_rows.size <= 9  # floor(0.07 * 136)
    # the changed rows form one contiguous band
    if changed_rows.size:
        assert changed_rows[-1] - changed_rows[0] + 1 == changed_rows.size


def test_mask_changes_only_the_band_and_keeps_line_sums():
    rng = np.random.default_rng(3)
    m = FeatureMatrix(values=rng.standard_normal((136, 44)), kind="mfcc",
                      axis0="coefficient", axis1="time")
    p = pad_center(m)
    spec = MaskSpec(axis="frequency", fraction=0.07, rng_seed=7)
    masked = apply_mask(p, spec)

    diff_rows = np.nonzero((masked.values != p.values).any(axis=1))[0]
    assert diff_rows.size == 9
    untouched = np.setdiff1d(np.arange(136), diff_rows)
    assert np.array_equal(masked.values[untouched], p.values[untouched])
    for r in diff_rows:
        before = p.values[r].sum()
        after = masked.values[r].sum()
        assert abs(after - before) <= 1e-5 * max(abs(before), 1.0)
        assert np.ptp(masked.values[r]) < 1e-12  # row collapsed to its mean


def test_mask_time_axis_masks_columns():
    p = pad_center(mfcc_like(seed=5))
    masked = apply_mask(p, MaskSpec(axis="time", fraction=0.07, rng_seed=1))
    changed_cols = np.nonzero((masked.values != p.values).any(axis=0))[0]
    assert changed_cols.size == 3  # floor(0.07 * 44)


def test_mask_constant_matrix_is_fixed_point():
    m = FeatureMatrix(values=np.full((136, 44), 2.5), kind="mfcc",
                      axis0="coefficient", axis1="time")
    p = pad_center(m)
    masked = apply_mask(p, MaskSpec(axis="frequency", fraction=0.07, rng_seed=9))
    assert np.array_equal(masked.values, p.values)


def test_mask_deterministic_and_idempotent_per_seed():
    p = pad_center(mfcc_like(seed=8))
    spec = MaskSpec(axis="frequency", fraction=0.07, rng_seed=11)
    a = apply_mask(p, spec)
    b = apply_mask(p, spec)
    assert np.array_equal(a.values, b.values)
    again = apply_mask(a, spec)
    assert np.array_equal(again.values, a.values)


def test_mask_preserves_global_sum():
    p = pad_center(lfcc_like(seed=4))
    for axis in ("time", "frequency"):
        masked = apply_mask(p, MaskSpec(axis=axis, fraction=0.07, rng_seed=2))
        assert abs(masked.values.sum() - p.values.sum()) < 1e-5 * max(abs(p.values.sum()), 1.0)


def test_mask_zero_fraction_is_identity():
    p = pad_center(mfcc_like(seed=6))
    masked = apply_mask(p, MaskSpec(axis="time", fraction=0.0, rng_seed=0))
    assert np.array_equal(masked.values, p.values)


def test_mask_feature_matrix_resolves_axis_tags():
    # MFCC is coefficient x time: a time mask must hit columns
    m = mfcc_like(seed=10)
    masked = mask_feature_matrix(m, MaskSpec(axis="time", fraction=0.2, rng_seed=3))
    changed_cols = np.nonzero((masked.values != m.values).any(axis=0))[0]
    assert changed_cols.size == int(0.2 * 44)
    # LFCC is time x coefficient: a time mask must hit rows
    l = lfcc_like(seed=10)
    masked = mask_feature_matrix(l, MaskSpec(axis="time", fraction=0.2, rng_seed=3))
    changed_rows = np.nonzero((masked.values != l.values).any(axis=1))[0]
    assert changed_rows.size == int(0.2 * 98)


def test_mask_spec_validation():
    with pytest.raises(ValueError):
        MaskSpec(axis="diagonal")
    with pytest.raises(ValueError):
        MaskSpec(axis="time", fraction=1.0)


# --- feature files -----------------------------------------------------------


def test_feature_file_roundtrip(tmp_path):
    m = mfcc_like(seed=12)
    path = tmp_path / "m.affd"
    write_feature(path, m)
    back = read_feature(path)
    assert back.kind == "mfcc"
    assert back.values.shape == m.values.shape
    assert np.array_equal(back.values, m.values.astype(np.float32).astype(np.float64))


def test_feature_file_size_is_header_plus_payload(tmp_path):
    p = pad_center(mfcc_like())
    path = tmp_path / "p.affd"
    write_feature(path, p)
    assert path.stat().st_size == 16 + 136 * 44 * 4 == 23952


def test_feature_file_bad_magic(tmp_path):
    path = tmp_path / "bad.affd"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(FeatureFileError, match="magic"):
        read_feature(path)


def test_feature_file_truncated_payload(tmp_path):
    m = mfcc_like()
    path = tmp_path / "t.affd"
    write_feature(path, m)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(FeatureFileError, match="truncated"):
        read_feature(path)


def test_feature_file_dimension_overflow(tmp_path):
    import struct

    path = tmp_path / "o.affd"
    header = struct.Struct("<4sBBHII").pack(b"AFFD", 1, 0, 0, 1 << 24, 44)
    path.write_bytes(header)
    with pytest.raises(FeatureFileError, match="overflow"):
        read_feature(path)


def test_lfcc_kind_roundtrip(tmp_path):
    l = lfcc_like(seed=2)
    path = tmp_path / "l.affd"
    write_feature(path, l)
    back = read_feature(path)
    assert back.kind == "lfcc"
    assert (back.axis0, back.axis1) == ("time", "coefficient")
