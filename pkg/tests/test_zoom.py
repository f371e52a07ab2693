import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interseg.raster import Click
from interseg.zoom import (
    AxisMapping,
    FusionSchedule,
    bilinear_resize,
    build_axis_mapping,
    fuse,
    marginalize,
    resize_mask,
    scale_clicks,
    unwarp_logits,
    warp_clicks,
    warp_image,
    warp_mask,
)

from conftest import axis_forward_ref, bilinear_ref


def test_bilinear_matches_reference_2d():
    rng = np.random.default_rng(3)
    arr = rng.random((7, 9))
    got = bilinear_resize(arr, 13, 5)
    assert np.allclose(got, bilinear_ref(arr, 13, 5))


def test_bilinear_matches_reference_3d():
    rng = np.random.default_rng(4)
    arr = rng.random((6, 5, 3))
    got = bilinear_resize(arr, 9, 11)
    assert np.allclose(got, bilinear_ref(arr, 9, 11))


def test_bilinear_identity_same_size():
    rng = np.random.default_rng(5)
    arr = rng.random((8, 8))
    assert np.array_equal(bilinear_resize(arr, 8, 8), arr)


def test_bilinear_corners_align():
    rng = np.random.default_rng(6)
    arr = rng.random((5, 7))
    out = bilinear_resize(arr, 11, 23)
    assert out[0, 0] == pytest.approx(arr[0, 0])
    assert out[-1, -1] == pytest.approx(arr[-1, -1])
    assert out[0, -1] == pytest.approx(arr[0, -1])


def test_resize_mask_thresholds():
    m = np.zeros((16, 16), dtype=bool)
    m[4:12, 4:12] = True
    small = resize_mask(m, 8, 8)
    assert small.dtype == bool
    back = resize_mask(small, 16, 16)
    # A centered square survives a down/up round trip nearly intact.
    assert (back ^ m).sum() <= 16


def test_scale_clicks_formula():
    clicks = [Click(0, 0, True), Click(9, 19, False), Click(5, 10, True)]
    out = scale_clicks(clicks, (10, 20), (5, 40))
    # Corner clicks land on corners, interior ones use the (d-1)/(s-1) ratio.
    assert (out[0].row, out[0].col) == (0, 0)
    assert (out[1].row, out[1].col) == (4, 39)
    assert out[2].row == round(5 * 4 / 9)
    assert out[2].col == round(10 * 39 / 19)
    assert out[1].positive is False


def test_marginalize_shapes_and_sums():
    s = np.arange(12, dtype=float).reshape(3, 4)
    sx, sy = marginalize(s)
    assert sx.shape == (4,)
    assert sy.shape == (3,)
    assert np.allclose(sx, s.sum(axis=0))
    assert np.allclose(sy, s.sum(axis=1))


def test_marginalize_floors_zero_rows():
    s = np.zeros((4, 4))
    s[1, 1] = 8.0
    sx, sy = marginalize(s)
    assert (sx > 0).all() and (sy > 0).all()
    assert sy[0] == pytest.approx(1e-6 * 8.0)


def test_marginalize_rejects_bad_input():
    with pytest.raises(ValueError):
        marginalize(np.full((3, 3), -1.0))
    with pytest.raises(ValueError):
        marginalize(np.full((3, 3), np.nan))
    with pytest.raises(ValueError):
        marginalize(np.zeros((2, 2, 2)))


def test_axis_mapping_matches_scalar_reference():
    rng = np.random.default_rng(7)
    w = rng.random(13) + 0.05
    m = build_axis_mapping(w, target_size=17, sigma=2.0)
    want = axis_forward_ref(w, 17, 2.0)
    assert np.allclose(m.forward, want, atol=1e-12)


def test_axis_mapping_uniform_weights_near_identity():
    m = build_axis_mapping(np.ones(32), target_size=32, sigma=2.0)
    u = np.linspace(0.0, 1.0, 32)
    assert np.abs(m.forward - u).max() < 0.05


@settings(deadline=None, max_examples=40)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_axis_mapping_monotone_and_invertible(seed):
    rng = np.random.default_rng(seed)
    w = rng.random(24) * 5 + 1e-3
    m = build_axis_mapping(w, target_size=48, sigma=2.0)
    assert (np.diff(m.forward) >= 0).all()
    u = np.linspace(0.0, 1.0, 48)
    assert np.abs(m.invert(m.forward) - u).max() <= 2.0 / 48


def test_axis_mapping_densifies_high_weight_region():
    w = np.full(64, 0.05)
    w[40:50] = 10.0
    m = build_axis_mapping(w, target_size=64, sigma=2.0)
    coords = m.source_coords()
    # Count target samples landing inside vs outside the boosted region.
    inside = ((coords >= 40) & (coords <= 49)).sum()
    assert inside > 64 * (10 / 64)  # more than its share of the axis


def test_axis_mapping_input_validation():
    with pytest.raises(ValueError):
        build_axis_mapping(np.array([1.0]), target_size=8)
    with pytest.raises(ValueError):
        build_axis_mapping(np.array([1.0, 0.0, 1.0]), target_size=8)
    with pytest.raises(ValueError):
        build_axis_mapping(np.array([1.0, np.inf, 1.0]), target_size=8)
    with pytest.raises(ValueError):
        build_axis_mapping(np.ones(8), target_size=8, sigma=0.0)
    with pytest.raises(ValueError):
        build_axis_mapping(np.ones(8), target_size=1)


def test_invert_refuses_decreasing_forward():
    m = build_axis_mapping(np.ones(8), target_size=8)
    object.__setattr__(m, "forward", np.linspace(1.0, 0.0, 8))
    with pytest.raises(ValueError):
        m.invert(0.5)


def test_warp_image_constant_preserved():
    sx = build_axis_mapping(np.ones(20), 12)
    sy = build_axis_mapping(np.ones(16), 10)
    img = np.full((16, 20, 3), 0.25)
    out = warp_image(img, sx, sy)
    assert out.shape == (10, 12, 3)
    assert np.allclose(out, 0.25)


def test_warp_image_shape_check():
    sx = build_axis_mapping(np.ones(20), 12)
    sy = build_axis_mapping(np.ones(16), 10)
    with pytest.raises(ValueError):
        warp_image(np.zeros((20, 16)), sx, sy)


def test_warp_mask_is_boolean():
    sx = build_axis_mapping(np.ones(16), 16)
    sy = build_axis_mapping(np.ones(16), 16)
    m = np.zeros((16, 16), dtype=bool)
    m[5:11, 5:11] = True
    out = warp_mask(m, sx, sy)
    assert out.dtype == bool
    assert out.any()


def test_warp_clicks_identity_mapping():
    sx = build_axis_mapping(np.ones(16), 16, sigma=2.0)
    sy = build_axis_mapping(np.ones(16), 16, sigma=2.0)
    clicks = [Click(3, 12, True, round=2), Click(8, 8, False)]
    out = warp_clicks(clicks, sx, sy)
    for before, after in zip(clicks, out):
        assert abs(after.row - before.row) <= 1
        assert abs(after.col - before.col) <= 1
        assert after.positive is before.positive
        assert after.round == before.round


def test_warp_clicks_follow_zoom():
    # Zooming into the right half pushes a right-half click toward the middle
    # of the target grid and stretches its neighbourhood.
    w = np.full(32, 0.05)
    w[20:28] = 10.0
    sx = build_axis_mapping(w, 32)
    sy = build_axis_mapping(np.ones(32), 32)
    [a] = warp_clicks([Click(16, 24, True)], sx, sy)
    [b] = warp_clicks([Click(16, 2, True)], sx, sy)
    assert a.col > b.col
    # The boosted region occupies a wider span of the zoomed axis.
    [left] = warp_clicks([Click(16, 20, True)], sx, sy)
    [right] = warp_clicks([Click(16, 27, True)], sx, sy)
    assert (right.col - left.col) > 7


def test_unwarp_round_trip_recovers_smooth_field():
    yy, xx = np.mgrid[0:48, 0:48] / 47.0
    field = np.sin(3 * xx) + np.cos(2 * yy)
    w = np.full(48, 0.2)
    w[16:32] = 3.0
    sx = build_axis_mapping(w, 96, sigma=2.0)
    sy = build_axis_mapping(np.ones(48), 96, sigma=2.0)
    zoomed = warp_image(field, sx, sy)
    back = unwarp_logits(zoomed, sx, sy, 48, 48)
    assert back.shape == (48, 48)
    xs = np.linspace(0.0, 1.0, 48)
    covered = (
        (xs[None, :] >= sx.forward[0])
        & (xs[None, :] <= sx.forward[-1])
        & (xs[:, None] >= sy.forward[0])
        & (xs[:, None] <= sy.forward[-1])
    )
    assert covered.mean() > 0.8
    assert np.abs(back - field)[covered].max() < 0.2
    assert np.abs(back - field)[covered].mean() < 0.02
    assert (back[~covered] == 0.0).all()


def test_unwarp_shape_check():
    sx = build_axis_mapping(np.ones(16), 8)
    sy = build_axis_mapping(np.ones(16), 8)
    with pytest.raises(ValueError):
        unwarp_logits(np.zeros((9, 8)), sx, sy, 16, 16)


def test_fusion_schedule_boundaries():
    sched = FusionSchedule(budget=20)
    for t in range(1, 10):
        assert sched.weight(t) == 0.0
    assert sched.weight(10) == pytest.approx(0.5)
    assert sched.weight(16) == pytest.approx(0.8)
    assert sched.weight(20) == 1.0
    with pytest.raises(ValueError):
        sched.weight(0)
    with pytest.raises(ValueError):
        sched.weight(21)
    with pytest.raises(ValueError):
        FusionSchedule(budget=0)


def test_fuse_blends_and_copies():
    sched = FusionSchedule(budget=4)
    a = np.zeros((3, 3))
    b = np.ones((3, 3))
    early = fuse(a, b, 1, sched)
    assert np.array_equal(early, a) and early is not a
    late = fuse(a, b, 4, sched)
    assert np.array_equal(late, b) and late is not b
    mid = fuse(a, b, 3, sched)
    assert np.allclose(mid, 0.75)
    with pytest.raises(ValueError):
        fuse(a, np.ones((2, 2)), 2, sched)
