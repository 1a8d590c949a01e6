import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xmodal.corruption import (
    CorruptionKind,
    CorruptionMask,
    CorruptionScheme,
    CorruptionSpec,
    apply_mask,
    assign_s1_levels,
    assign_s2_levels,
    decode_rle,
    encode_rle,
    eval_mask,
    make_mask,
    pixels_needed,
    policy_train_mask,
    s1_spec,
    s2_spec,
)
from xmodal.errors import ConfigError
from xmodal.harness.rng import derive_rng_stream


def test_zero_target_gives_empty_mask(rng):
    m = make_mask(s1_spec(0.0), 224, 224, rng)
    assert m.achieved_coverage == 0.0
    assert not m.mask.any() and m.patches == []


def test_single_100px_patch_on_224():
    spec = CorruptionSpec(CorruptionKind.S2, 1e-6, 100, 100, fixed_side=100)
    m = make_mask(spec, 224, 224, np.random.default_rng(0))
    assert len(m.patches) == 1
    assert m.achieved_coverage == pytest.approx(10000 / 50176)
    assert m.achieved_coverage == pytest.approx(0.1993, abs=1e-4)


def test_s1_at_half_coverage(rng):
    m = make_mask(s1_spec(0.5), 224, 224, rng)
    assert m.achieved_coverage >= 0.5
    assert all(50 <= s <= 100 for _, _, s in m.patches)


def test_target_outside_unit_interval_rejected(rng):
    with pytest.raises(ConfigError):
        CorruptionSpec(CorruptionKind.EVAL, 1.2, 1, 50)
    with pytest.raises(ConfigError):
        CorruptionSpec(CorruptionKind.EVAL, -0.1, 1, 50)


def test_sides_clamped_to_small_images(rng):
    m = make_mask(s2_spec(0.3), 40, 60, rng)
    assert all(s == 40 for _, _, s in m.patches)
    assert m.achieved_coverage >= 0.3


def test_apply_empty_mask_is_identity(rng):
    d = rng.random((32, 32)).astype(np.float32)
    out = apply_mask(d, CorruptionMask.empty(32, 32))
    assert out.tobytes() == d.tobytes()


def test_apply_full_mask_zeroes_everything(rng):
    d = rng.random((16, 16)) + 0.1
    assert not apply_mask(d, np.ones((16, 16), dtype=bool)).any()


def test_apply_changes_exactly_masked_pixels(rng):
    d = rng.random((64, 64)) + 0.01
    m = eval_mask(64, 64, 0.3, rng)
    out = apply_mask(d, m)
    assert np.count_nonzero(out != d) == int(m.mask.sum())
    assert np.array_equal(out[~m.mask], d[~m.mask])


def test_apply_shape_mismatch(rng):
    with pytest.raises(ConfigError):
        apply_mask(np.zeros((8, 8)), np.zeros((8, 9), dtype=bool))


def test_s1_bucket_sizes_for_100():
    cov = assign_s1_levels(100, np.random.default_rng(3))
    levels, counts = np.unique(cov, return_counts=True)
    assert levels.tolist() == [0.25, 0.30, 0.35, 0.40, 0.45, 0.50]
    assert counts.tolist() == [5, 10, 15, 20, 20, 30]


def test_s1_single_image_goes_to_top_bucket():
    assert assign_s1_levels(1, np.random.default_rng(0)).tolist() == [0.5]


def test_s1_bucket_fractions_for_10000():
    cov = assign_s1_levels(10_000, np.random.default_rng(5))
    for level, pct in ((0.25, 5), (0.30, 10), (0.35, 15), (0.40, 20), (0.45, 20), (0.50, 30)):
        assert abs(np.sum(cov == level) - pct * 100) <= 1


def test_s2_split():
    cov = assign_s2_levels(10, np.random.default_rng(0))
    assert np.sum(cov == 0) == 5 and np.sum(cov > 0) == 5
    assert assign_s2_levels(1, np.random.default_rng(0)).tolist() == [0.0]


def test_s2_coverage_range():
    cov = assign_s2_levels(10_000, np.random.default_rng(9))
    corrupted = cov[cov > 0]
    assert corrupted.size == 5000
    assert corrupted.min() >= 0.2 and corrupted.max() <= 0.5


def test_policy_train_mask_full_resolution():
    for seed in range(20):
        m = policy_train_mask(224, 224, np.random.default_rng(seed))
        assert all(1 <= s <= 30 for _, _, s in m.patches)
        assert 0.5 <= m.achieved_coverage <= 0.5 + 900 / (224 * 224)


def test_policy_train_mask_deterministic():
    a = policy_train_mask(64, 64, derive_rng_stream(4, "m"))
    b = policy_train_mask(64, 64, derive_rng_stream(4, "m"))
    assert np.array_equal(a.mask, b.mask) and a.patches == b.patches


def test_eval_mask_examples():
    assert eval_mask(224, 224, 0.0, np.random.default_rng(0)).achieved_coverage == 0.0
    for cov in (0.2, 0.3, 0.4, 0.5):
        m = eval_mask(224, 224, cov, np.random.default_rng(int(cov * 10)))
        assert all(1 <= s <= 50 for _, _, s in m.patches)
        assert m.achieved_coverage >= cov


@given(st.integers(0, 2**32 - 1))
def test_policy_and_eval_sides_stay_in_pixels_at_desk_size(seed):
    m = policy_train_mask(64, 64, np.random.default_rng(seed))
    sides = [p[2] for p in m.patches]
    assert max(sides) <= 30
    assert 0.5 <= m.achieved_coverage <= 0.5 + 900 / (64 * 64)
    e = eval_mask(64, 64, 0.5, np.random.default_rng(seed))
    assert all(1 <= p[2] <= 50 for p in e.patches)


def test_sides_rescale_with_resolution():
    spec = s1_spec(0.4).scaled(64)
    assert spec.side_range == (14, 29)
    assert s2_spec(0.3).scaled(64).side_range == (29, 29)
    assert s1_spec(0.4).scaled(224) == s1_spec(0.4)


def test_numba_and_numpy_kernels_agree():
    for seed in range(10):
        a = make_mask(s1_spec(0.45), 96, 96, np.random.default_rng(seed), backend="numba")
        b = make_mask(s1_spec(0.45), 96, 96, np.random.default_rng(seed), backend="numpy")
        assert np.array_equal(a.mask, b.mask) and a.patches == b.patches


def test_rle_and_json_round_trip(tmp_path, rng):
    m = eval_mask(37, 53, 0.4, rng)
    assert np.array_equal(decode_rle(encode_rle(m.mask)), m.mask)
    back = CorruptionMask.from_json(m.to_json())
    assert np.array_equal(back.mask, m.mask) and back.patches == m.patches
    full = np.ones((3, 4), dtype=bool)
    assert np.array_equal(decode_rle(encode_rle(full)), full)


def test_none_scheme_has_no_spec():
    with pytest.raises(ConfigError):
        CorruptionScheme.NONE.spec(0.3, 64)
    assert not CorruptionScheme.NONE.assign(7, np.random.default_rng(0)).any()


# ------------------------------------------------------------------ properties


@given(st.floats(0.0, 1.0), st.integers(1, 5000))
def test_pixels_needed_is_the_smallest_reaching_count(target, n):
    k = pixels_needed(target, n)
    assert k / n >= target
    assert k == 0 or (k - 1) / n < target


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5), st.integers(8, 80), st.integers(8, 80))
def test_mask_invariants(seed, target, h, w):
    m = eval_mask(h, w, target, np.random.default_rng(seed))
    lo, hi = 1, min(50, h, w)  # sides are clamped to the frame
    assert m.achieved_coverage == int(m.mask.sum()) / (h * w)
    if target > 0:
        assert m.achieved_coverage >= target
        assert m.achieved_coverage - target <= hi * hi / (h * w) + 1e-12
    rebuilt = np.zeros((h, w), dtype=bool)
    for r, c, s in m.patches:
        assert lo <= s <= hi and 0 <= r <= h - s and 0 <= c <= w - s
        rebuilt[r : r + s, c : c + s] = True
    assert np.array_equal(rebuilt, m.mask)


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.5))
def test_coverage_monotone_while_accumulating(seed, target):
    m = eval_mask(64, 64, target, np.random.default_rng(seed))
    canvas = np.zeros((64, 64), dtype=bool)
    prev = 0
    for r, c, s in m.patches:
        canvas[r : r + s, c : c + s] = True
        now = int(canvas.sum())
        assert now >= prev
        prev = now
    # only the last patch reaches the target
    before_last = np.zeros_like(canvas)
    for r2, c2, s2 in m.patches[:-1]:
        before_last[r2 : r2 + s2, c2 : c2 + s2] = True
    assert before_last.sum() / 4096 < target


@given(st.integers(0, 2**32 - 1))
def test_apply_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    d = rng.random((24, 24))
    m = policy_train_mask(24, 24, rng)
    once = apply_mask(d, m)
    assert np.array_equal(apply_mask(once, m), once)


def test_seed_determines_bit_pattern():
    a = eval_mask(64, 64, 0.35, derive_rng_stream(1, "x", 3))
    b = eval_mask(64, 64, 0.35, derive_rng_stream(1, "x", 3))
    c = eval_mask(64, 64, 0.35, derive_rng_stream(1, "x", 4))
    assert np.array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, c.mask)


def test_s1_side_distribution_is_uniform():
    sides = []
    rng = np.random.default_rng(77)
    while len(sides) < 10_000:
        sides += [s for _, _, s in make_mask(s1_spec(0.5), 224, 224, rng).patches]
    counts = np.bincount(np.array(sides[:10_000]) - 50, minlength=51)
    expected = 10_000 / 51
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    # upper 0.001 tail of chi-square with 50 dof
    assert chi2 < 86.66, chi2
    assert math.isfinite(chi2)
