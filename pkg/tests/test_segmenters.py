import numpy as np
import pytest

from interseg.raster import Click, iou, render_discs
from interseg.segmenters import (
    ConstantSegmenter,
    CropRegion,
    GeodesicSegmenter,
    OracleSegmenter,
    Segmenter,
    SegmenterInput,
    ToyModelParams,
    ToySegmenter,
    ViewTransform,
    geodesic_distance,
    make_segmenter,
    refine_local,
    select_refinement_crop,
    toy_features,
    toy_forward,
)


def make_input(image, clicks, initial_mask=None, view=None, with_clicks=True):
    h, w = image.shape[:2]
    if initial_mask is None:
        initial_mask = np.zeros((h, w), dtype=bool)
    return SegmenterInput(
        image=image,
        discs=render_discs(clicks, h, w),
        initial_mask=initial_mask,
        view=view,
        clicks=tuple(clicks) if with_clicks else None,
    )


def flat_image(h, w, value=0.5):
    return np.full((h, w, 3), value)


def test_input_validation():
    img = flat_image(8, 8)
    with pytest.raises(ValueError):
        SegmenterInput(
            image=img,
            discs=np.zeros((8, 8, 2), dtype=bool),
            initial_mask=np.zeros((8, 9), dtype=bool),
        )
    with pytest.raises(ValueError):
        SegmenterInput(
            image=img,
            discs=np.zeros((8, 8), dtype=bool),
            initial_mask=np.zeros((8, 8), dtype=bool),
        )
    with pytest.raises(ValueError):
        make_input(img, [Click(8, 0, True)])


def test_seed_masks_prefer_exact_clicks():
    img = flat_image(16, 16)
    clicks = [Click(4, 4, True), Click(10, 12, False)]
    inp = make_input(img, clicks)
    pos, neg = inp.seed_masks()
    assert pos.sum() == 1 and pos[4, 4]
    assert neg.sum() == 1 and neg[10, 12]

    blind = make_input(img, clicks, with_clicks=False)
    pos2, neg2 = blind.seed_masks()
    assert np.array_equal(pos2, blind.discs[..., 0])
    assert pos2.sum() > 1


def test_geodesic_distance_flat_image_is_scaled_manhattan():
    img = flat_image(10, 12)
    seeds = np.zeros((10, 12), dtype=bool)
    seeds[3, 4] = True
    d = geodesic_distance(img, seeds)
    rr, cc = np.mgrid[0:10, 0:12]
    want = 1e-3 * (np.abs(rr - 3) + np.abs(cc - 4))
    assert np.allclose(d, want, rtol=1e-9, atol=1e-12)


def test_geodesic_distance_contrast_barrier():
    img = flat_image(9, 21, 0.2)
    img[:, 10, :] = 0.9  # bright full-height stripe
    seeds = np.zeros((9, 21), dtype=bool)
    seeds[4, 2] = True
    d = geodesic_distance(img, seeds)
    # Crossing the stripe costs two color jumps; staying on the left is cheap.
    assert d[4, 18] > d[4, 9] + 1.0


def test_geodesic_distance_empty_seeds():
    with pytest.raises(ValueError):
        geodesic_distance(flat_image(4, 4), np.zeros((4, 4), dtype=bool))


def test_geodesic_segmenter_no_positive_clicks():
    img = flat_image(12, 12)
    seg = GeodesicSegmenter()
    out = seg.coarse_segment(make_input(img, [Click(5, 5, False)]))
    assert np.array_equal(out, np.full((12, 12), -1.0))
    out2 = seg.coarse_segment(make_input(img, []))
    assert np.array_equal(out2, np.full((12, 12), -1.0))


def test_geodesic_segmenter_separates_contrast_regions():
    # Dark square on a bright background, one click per polarity.
    img = flat_image(32, 32, 0.85)
    gt = np.zeros((32, 32), dtype=bool)
    gt[8:24, 8:24] = True
    img[gt] = 0.15
    seg = GeodesicSegmenter()
    inp = make_input(img, [Click(16, 16, True), Click(2, 2, False)], initial_mask=gt)
    pred = seg.coarse_segment(inp) > 0
    assert iou(pred, gt) > 0.8


def test_geodesic_click_clamps():
    img = flat_image(24, 24)
    seg = GeodesicSegmenter()
    inp = make_input(img, [Click(6, 6, True), Click(18, 18, False)])
    out = seg.coarse_segment(inp)
    pos_only = inp.discs[..., 0] & ~inp.discs[..., 1]
    neg_only = inp.discs[..., 1] & ~inp.discs[..., 0]
    assert (out[pos_only] >= 0.5).all()
    assert (out[neg_only] <= -0.5).all()


def test_oracle_segmenter_stays_near_gt(small_scene):
    gt = small_scene.mask
    seg = OracleSegmenter(gt, seed=3)
    inp = make_input(small_scene.image, [], initial_mask=gt)
    pred = seg.coarse_segment(inp) > 0
    assert iou(pred, gt) >= 0.95


def test_oracle_segmenter_deterministic(small_scene):
    gt = small_scene.mask
    seg = OracleSegmenter(gt, seed=3)
    inp = make_input(small_scene.image, [Click(5, 5, True)], initial_mask=gt)
    a = seg.coarse_segment(inp)
    b = seg.coarse_segment(inp)
    assert np.array_equal(a, b)


def test_oracle_segmenter_replays_crop_view(small_scene):
    gt = small_scene.mask
    seg = OracleSegmenter(gt, seed=0, noise_frac=0.0)
    crop = CropRegion(top=8, left=12, height=24, width=20)
    view = ViewTransform(out_h=24, out_w=20, crop=crop)
    img = small_scene.image[crop.slices()]
    inp = make_input(img, [], view=view)
    pred = seg.coarse_segment(inp) > 0
    assert np.array_equal(pred, gt[crop.slices()])


def test_oracle_noise_frac_bound():
    with pytest.raises(ValueError):
        OracleSegmenter(np.zeros((4, 4), dtype=bool), noise_frac=0.03)


def test_oracle_shape_mismatch_without_view(small_scene):
    seg = OracleSegmenter(small_scene.mask)
    inp = make_input(flat_image(8, 8), [])
    with pytest.raises(ValueError):
        seg.coarse_segment(inp)


def test_constant_segmenter():
    seg = ConstantSegmenter(-2.5)
    out = seg.coarse_segment(make_input(flat_image(5, 7), []))
    assert np.array_equal(out, np.full((5, 7), -2.5))


def test_toy_params_round_trips(tmp_path):
    rng = np.random.default_rng(14)
    p = ToyModelParams(weights=rng.normal(size=8), bias=0.3)
    v = p.to_vector()
    assert v.shape == (9,)
    back = ToyModelParams.from_vector(v)
    assert np.array_equal(back.weights, p.weights) and back.bias == p.bias
    path = tmp_path / "params.json"
    p.save(path)
    loaded = ToyModelParams.load(path)
    assert np.allclose(loaded.to_vector(), v)


def test_toy_params_validation():
    with pytest.raises(ValueError):
        ToyModelParams(weights=np.zeros(7), bias=0.0)
    with pytest.raises(ValueError):
        ToyModelParams(weights=np.full(8, np.nan), bias=0.0)
    with pytest.raises(ValueError):
        ToyModelParams.from_vector(np.zeros(8))


def test_toy_forward_is_affine_in_params(small_scene):
    inp = make_input(small_scene.image, [Click(10, 10, True)])
    feats = toy_features(inp)
    assert feats.shape == small_scene.image.shape[:2] + (8,)
    rng = np.random.default_rng(15)
    p = ToyModelParams(weights=rng.normal(size=8), bias=-0.2)
    out = toy_forward(p, inp)
    assert np.allclose(out, feats @ p.weights + p.bias)


def test_toy_feature_channels(small_scene):
    clicks = [Click(10, 10, True), Click(40, 40, False)]
    inp = make_input(small_scene.image, clicks, initial_mask=small_scene.mask)
    feats = toy_features(inp)
    assert np.array_equal(feats[..., 0:3], inp.image)
    assert np.array_equal(feats[..., 3].astype(bool), inp.discs[..., 0])
    assert np.array_equal(feats[..., 5].astype(bool), inp.initial_mask)
    assert feats[..., 6].min() >= 0.0 and feats[..., 6].max() <= 1.0
    assert feats[10, 10, 6] == 0.0  # zero distance at the positive click


def test_make_segmenter_dispatch(tmp_path, small_scene):
    assert isinstance(make_segmenter("geodesic"), GeodesicSegmenter)
    assert isinstance(make_segmenter("empty"), ConstantSegmenter)
    assert isinstance(
        make_segmenter("oracle", gt=small_scene.mask), OracleSegmenter
    )
    with pytest.raises(ValueError):
        make_segmenter("oracle")
    with pytest.raises(ValueError):
        make_segmenter("resnet")
    path = tmp_path / "p.json"
    ToyModelParams.zeros().save(path)
    seg = make_segmenter(f"toy:{path}")
    assert isinstance(seg, ToySegmenter)


def test_crop_region_validation():
    with pytest.raises(ValueError):
        CropRegion(top=0, left=0, height=0, width=4)
    with pytest.raises(ValueError):
        CropRegion(top=-1, left=0, height=4, width=4)
    crop = CropRegion(top=2, left=2, height=4, width=4)
    with pytest.raises(ValueError):
        crop.check_bounds(5, 10)
    assert crop.bottom == 6 and crop.right == 6


def test_select_refinement_crop_none_when_identical():
    m = np.zeros((10, 10), dtype=bool)
    m[2:5, 2:5] = True
    assert select_refinement_crop(m, m) is None


def test_select_refinement_crop_covers_change():
    m0 = np.zeros((40, 40), dtype=bool)
    m1 = m0.copy()
    m1[10:20, 14:22] = True
    crop = select_refinement_crop(m1, m0)
    assert crop.top <= 10 and crop.bottom >= 20
    assert crop.left <= 14 and crop.right >= 22
    crop.check_bounds(40, 40)
    # padding is 40% of the box on each side, clamped
    assert crop.height >= 10 and crop.height <= 10 + 2 * 4


def test_select_refinement_crop_largest_change_wins():
    m0 = np.zeros((40, 40), dtype=bool)
    m1 = m0.copy()
    m1[2:4, 2:4] = True  # 4 px change
    m1[20:32, 20:32] = True  # 144 px change
    crop = select_refinement_crop(m1, m0)
    assert crop.top >= 10  # ignores the small blob near the origin


class SpySegmenter(Segmenter):
    name = "spy"

    def __init__(self):
        self.inputs = []

    def coarse_segment(self, inp):
        self.inputs.append(inp)
        return np.full(inp.shape, 7.0)


def test_refine_local_patches_crop_only():
    img = flat_image(20, 20)
    clicks = [Click(3, 3, True), Click(12, 12, False)]
    inp = make_input(img, clicks)
    coarse = np.zeros((20, 20))
    crop = CropRegion(top=10, left=10, height=6, width=6)
    spy = SpySegmenter()
    out = refine_local(coarse, crop, inp, spy)
    assert (out[10:16, 10:16] == 7.0).all()
    out[10:16, 10:16] = 0.0
    assert not out.any()
    # The spy saw crop-local data with the click shifted into crop coords.
    local = spy.inputs[0]
    assert local.shape == (6, 6)
    assert local.clicks == (Click(2, 2, False),)
    assert local.view.crop.top == 10 and local.view.crop.left == 10


def test_refine_local_offsets_nested_view():
    img = flat_image(12, 12)
    base = ViewTransform(out_h=12, out_w=12, crop=CropRegion(5, 7, 12, 12))
    inp = make_input(img, [], view=base)
    crop = CropRegion(top=2, left=3, height=4, width=4)
    spy = SpySegmenter()
    refine_local(np.zeros((12, 12)), crop, inp, spy)
    nested = spy.inputs[0].view.crop
    assert (nested.top, nested.left) == (7, 10)
