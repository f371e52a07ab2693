import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from interseg.raster import (
    Click,
    boundary_band,
    boundary_iou,
    default_boundary_band,
    edge_map,
    iou,
    largest_connected_component,
    load_mask,
    render_discs,
    save_mask,
)

from conftest import inner_band_ref, iou_ref

small_masks = arrays(np.bool_, (9, 11), elements=st.booleans())


def test_iou_empty_masks_is_one():
    z = np.zeros((5, 5), dtype=bool)
    assert iou(z, z) == 1.0


def test_iou_disjoint_is_zero():
    a = np.zeros((4, 4), dtype=bool)
    b = np.zeros((4, 4), dtype=bool)
    a[0, 0] = True
    b[3, 3] = True
    assert iou(a, b) == 0.0


def test_iou_shape_mismatch_raises():
    with pytest.raises(ValueError):
        iou(np.zeros((3, 3), dtype=bool), np.zeros((3, 4), dtype=bool))


@given(small_masks, small_masks)
def test_iou_matches_loop_reference(a, b):
    assert iou(a, b) == pytest.approx(iou_ref(a, b))


@given(small_masks, small_masks)
def test_iou_symmetric(a, b):
    assert iou(a, b) == iou(b, a)


@settings(deadline=None)
@given(small_masks, st.integers(min_value=1, max_value=4))
def test_boundary_band_matches_enumeration(m, band):
    got = boundary_band(m, band)
    want = inner_band_ref(m, band)
    assert np.array_equal(got, want)


def test_boundary_iou_identical_masks():
    m = np.zeros((20, 20), dtype=bool)
    m[5:15, 5:15] = True
    assert boundary_iou(m, m, band=2) == 1.0


def test_boundary_iou_penalizes_boundary_shift():
    a = np.zeros((30, 30), dtype=bool)
    b = np.zeros((30, 30), dtype=bool)
    a[5:25, 5:25] = True
    b[5:25, 5:27] = True
    # Interiors overlap massively but the right edge moved by 2 px.
    assert boundary_iou(a, b, band=1) < iou(a, b)


def test_default_boundary_band_values():
    assert default_boundary_band(100, 100) == round(0.02 * np.hypot(100, 100))
    assert default_boundary_band(4, 4) == 1  # floor of one pixel


def test_largest_component_picks_biggest():
    m = np.zeros((10, 10), dtype=bool)
    m[0:2, 0:2] = True  # area 4
    m[5:9, 5:9] = True  # area 16
    got = largest_connected_component(m)
    want = np.zeros_like(m)
    want[5:9, 5:9] = True
    assert np.array_equal(got, want)


def test_largest_component_diagonal_not_connected():
    m = np.zeros((4, 4), dtype=bool)
    m[0, 0] = True
    m[1, 1] = True
    got = largest_connected_component(m)
    assert got.sum() == 1


def test_largest_component_empty():
    m = np.zeros((6, 6), dtype=bool)
    assert not largest_connected_component(m).any()


def test_render_discs_center_geometry():
    clicks = [Click(10, 10, True), Click(3, 17, False)]
    d = render_discs(clicks, 21, 21, radius=3)
    assert d.shape == (21, 21, 2)
    # Exact disc membership: squared distance at most radius squared.
    rr, cc = np.mgrid[0:21, 0:21]
    want_pos = (rr - 10) ** 2 + (cc - 10) ** 2 <= 9
    assert np.array_equal(d[..., 0], want_pos)
    want_neg = (rr - 3) ** 2 + (cc - 17) ** 2 <= 9
    assert np.array_equal(d[..., 1], want_neg)


def test_render_discs_clipped_at_border():
    d = render_discs([Click(0, 0, True)], 8, 8, radius=5)
    assert d[0, 0, 0]
    assert d[..., 0].sum() < 1 + 4 * 5 + 4 * 10  # strictly less than full disc


def test_render_discs_no_clicks():
    d = render_discs([], 5, 7)
    assert d.shape == (5, 7, 2)
    assert not d.any()


def test_edge_map_square():
    m = np.zeros((10, 10), dtype=bool)
    m[3:7, 3:7] = True
    e = edge_map(m)
    # Edge pixels are those adjacent (4-neighbourhood) to the other class.
    want = np.zeros_like(m)
    for r in range(10):
        for c in range(10):
            vals = {m[r, c]}
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr2, cc2 = r + dr, c + dc
                if 0 <= rr2 < 10 and 0 <= cc2 < 10:
                    vals.add(m[rr2, cc2])
            want[r, c] = len(vals) > 1
    assert np.array_equal(e, want)


def test_click_json_round_trip():
    c = Click(7, 9, False, round=3)
    back = Click.from_json(c.to_json())
    assert back == c
    assert c.to_json()["polarity"] == "negative"


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.random((17, 23)) > 0.6
    p = tmp_path / "m.png"
    save_mask(m, p)
    back = load_mask(p)
    assert np.array_equal(back, m)
