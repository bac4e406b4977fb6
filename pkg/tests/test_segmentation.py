import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pawss.imaging import BoundingBox, PatchGrid, decompose_patches, to_hsv
from pawss.segmentation import (
    ColourQuantizer,
    SegmentationModel,
    init_model,
    pixel_posterior,
    posterior_map,
    posterior_pair,
    ring_mask,
    update_histograms,
    weighted_colour_distribution,
)

RED, GREEN, BLUE, GREY = (1, 0, 0), (0, 1, 0), (0, 0, 1), (0.5, 0.5, 0.5)
Q = ColourQuantizer()


def bin_of(rgb):
    return int(Q(to_hsv(np.array([[rgb]], dtype=float)))[0, 0])


def frame_with(shape, fill, regions=()):
    img = np.empty(shape + (3,))
    img[:] = fill
    for (y0, y1, x0, x1), c in regions:
        img[y0:y1, x0:x1] = c
    return to_hsv(img)


def toy_model(fg, bg, stay=0.8):
    return SegmentationModel(np.asarray(fg, float), np.asarray(bg, float), stay, ColourQuantizer(2))


def test_init_single_colour_regions():
    hsv = frame_with((60, 60), BLUE, [((20, 40, 20, 40), RED)])
    m = init_model(hsv, BoundingBox(20, 20, 20, 20))
    assert m.fg_hist[bin_of(RED)] == 1.0
    assert m.bg_hist[bin_of(BLUE)] == 1.0


def test_init_half_and_half():
    hsv = frame_with((60, 60), BLUE, [((20, 40, 20, 30), RED), ((20, 40, 30, 40), GREEN)])
    m = init_model(hsv, BoundingBox(20, 20, 20, 20))
    assert m.fg_hist[bin_of(RED)] == 0.5 and m.fg_hist[bin_of(GREEN)] == 0.5


def test_init_corner_box_clipped_ring():
    # box 6x6 at the origin of a 20x20 frame: gap 1.2, thickness ~0.96 -> rounded
    # inner [-1, 7), outer [-2, 8); after clipping the ring is row 7 and column 7
    # of the 8x8 corner square: 8 + 8 - 1 = 15 pixels
    box = BoundingBox(0, 0, 6, 6)
    mask = ring_mask((20, 20), box)
    assert mask.sum() == 15
    assert mask[7, :8].all() and mask[:8, 7].all()
    hsv = frame_with((20, 20), GREY, [((0, 6, 0, 6), RED), ((7, 8, 0, 8), BLUE), ((0, 8, 7, 8), BLUE)])
    m = init_model(hsv, box)
    assert m.bg_hist.sum() == pytest.approx(1.0)
    assert m.bg_hist[bin_of(BLUE)] == 1.0


def test_ring_area_matches_box_area_when_unclipped():
    box = BoundingBox(100, 100, 40, 30)
    n = ring_mask((400, 400), box).sum()
    assert abs(n - box.area) / box.area < 0.1


def test_posterior_symmetric_case():
    for prior in (0.1, 0.5, 0.9):
        assert pixel_posterior(toy_model([0.5] * 8, [0.5] * 8, 0.5), 3, prior) == pytest.approx(0.5)


def test_posterior_zero_background_likelihood():
    m = toy_model([0.3] * 8, [0.0] * 8)
    assert pixel_posterior(m, 0, 0.2) == 1.0


def test_posterior_hand_example():
    # predicted prior 0.8*0.6 + 0.2*0.4 = 0.56; posterior 0.168 / (0.168 + 0.044)
    fg, bg = posterior_pair(0.3, 0.1, 0.6, 0.8)
    assert fg == pytest.approx(0.168 / 0.212, abs=1e-12)
    assert fg == pytest.approx(0.7925, abs=1e-4)
    assert fg + bg == pytest.approx(1.0)


def test_posterior_unseen_colour_keeps_prior():
    assert pixel_posterior(toy_model([0.0] * 8, [0.0] * 8), 2, 0.37) == 0.37


@given(
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.5, 1.0)
)
def test_posterior_normalised(lf, lb, prior, stay):
    fg, bg = posterior_pair(lf, lb, prior, stay)
    assert fg + bg == pytest.approx(1.0, abs=1e-9)
    assert 0.0 <= fg <= 1.0


@given(st.floats(1e-3, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.51, 1.0))
def test_posterior_monotone_in_prior(lf, lb, p1, p2, stay):
    lo, hi = sorted((p1, p2))
    assert posterior_pair(lf, lb, lo, stay)[0] <= posterior_pair(lf, lb, hi, stay)[0] + 1e-12


def _two_patch_grid():
    # two 2x2 patches side by side in a 1x2 arrangement is not square; use a 2x2 grid
    # whose lower row has zero weight to emulate the two-patch example
    return PatchGrid(2, np.array([0, 2, 4]), np.array([0, 2, 4]))


def test_weighted_distribution_hand_example():
    # patch 1 (weight 1): 2 of 4 pixels red; patch 2 (weight 0.5): 1 of 4 red
    img = np.empty((4, 4, 3))
    img[:] = BLUE
    img[0, 0] = img[0, 1] = RED
    img[0, 2] = RED
    hsv = to_hsv(img)
    p = weighted_colour_distribution(hsv, _two_patch_grid(), [1.0, 0.5, 0.0, 0.0])
    assert p[bin_of(RED)] == pytest.approx(2.5 / 6)
    assert p.sum() == pytest.approx(1.0)


def test_weighted_distribution_zero_weight_annihilates():
    img = np.empty((4, 4, 3))
    img[:] = BLUE
    img[:2, 2:] = GREEN
    p = weighted_colour_distribution(to_hsv(img), _two_patch_grid(), [1.0, 0.0, 1.0, 1.0])
    assert p[bin_of(GREEN)] == 0.0


def test_weighted_distribution_uniform_equals_histogram(rng):
    hsv = to_hsv(rng.random((30, 30, 3)))
    grid = decompose_patches(BoundingBox(3, 2, 21, 23), 49)
    p = weighted_colour_distribution(hsv, grid, np.ones(49))
    ref = np.bincount(Q(hsv[2:25, 3:24]).ravel(), minlength=Q.total_bins) / (21 * 23)
    np.testing.assert_allclose(p, ref, atol=1e-15)


@given(st.floats(0.01, 100))
def test_weighted_distribution_scale_invariant(c):
    hsv = to_hsv(np.random.default_rng(5).random((20, 20, 3)))
    grid = decompose_patches(BoundingBox(1, 1, 14, 14), 49)
    w = np.random.default_rng(6).random(49)
    np.testing.assert_allclose(
        weighted_colour_distribution(hsv, grid, w), weighted_colour_distribution(hsv, grid, c * w), atol=1e-12
    )


def test_weighted_distribution_weight_count_checked():
    with pytest.raises(ValueError):
        weighted_colour_distribution(np.zeros((4, 4, 3)), _two_patch_grid(), [1.0, 1.0])


@pytest.mark.parametrize("delta", [0.0, 0.1, 1.0])
def test_update_histograms_convex(delta):
    m = toy_model([0.2, 0.8, 0, 0, 0, 0, 0, 0], [0.125] * 8)
    cur = np.array([0.4, 0.6, 0, 0, 0, 0, 0, 0])
    bg = np.array([1.0, 0, 0, 0, 0, 0, 0, 0])
    out = update_histograms(m, cur, delta, bg)
    np.testing.assert_allclose(out.fg_hist, delta * cur + (1 - delta) * m.fg_hist, atol=1e-15)
    np.testing.assert_allclose(out.bg_hist, delta * bg + (1 - delta) * m.bg_hist, atol=1e-15)
    if delta == 0.1:
        assert out.fg_hist[0] == pytest.approx(0.22)


def test_update_histograms_rejects_bad_delta():
    with pytest.raises(ValueError):
        update_histograms(toy_model([1.0] + [0] * 7, [0.125] * 8), np.ones(8) / 8, 1.5)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_histograms_stay_distributions(deltas):
    r = np.random.default_rng(len(deltas))
    m = toy_model(r.dirichlet(np.ones(8)), r.dirichlet(np.ones(8)))
    for d in deltas:
        m = update_histograms(m, r.dirichlet(np.ones(8)), d, r.dirichlet(np.ones(8)))
        for h in (m.fg_hist, m.bg_hist):
            assert h.sum() == pytest.approx(1.0, abs=1e-9) and h.min() >= 0


def test_posterior_map_disjoint_histograms():
    hsv = frame_with((40, 40), BLUE, [((10, 30, 10, 30), RED)])
    m = init_model(hsv, BoundingBox(10, 10, 20, 20))
    post = posterior_map(m, hsv, (0, 0, 40, 40))
    red = np.zeros((40, 40), bool)
    red[10:30, 10:30] = True
    assert np.all(post[red] == 1.0)
    assert np.all(post[~red & (Q(hsv) == bin_of(BLUE))] == 0.0)


def test_posterior_map_identical_histograms():
    hsv = frame_with((10, 10), RED)
    h = np.zeros(Q.total_bins)
    h[bin_of(RED)] = 1.0
    m = SegmentationModel(h, h.copy(), 0.5, Q)
    np.testing.assert_allclose(posterior_map(m, hsv, (0, 0, 10, 10)), 0.5)


def test_posterior_map_recursion_monotone():
    hsv = frame_with((10, 10), RED)
    fg = np.zeros(Q.total_bins)
    fg[bin_of(RED)] = 0.6
    bg = np.full(Q.total_bins, 0.3 / Q.total_bins)
    bg[bin_of(RED)] = 0.3
    m = SegmentationModel(fg, bg, 0.8, Q)
    region = (0, 0, 10, 10)
    p1 = posterior_map(m, hsv, region)
    p2 = posterior_map(m.with_prior(p1, region), hsv, region)
    # first step from 0.5: 0.6*0.5 / (0.6*0.5 + 0.3*0.5) = 2/3
    np.testing.assert_allclose(p1, 2 / 3)
    pred = 0.8 * (2 / 3) + 0.2 * (1 / 3)
    np.testing.assert_allclose(p2, 0.6 * pred / (0.6 * pred + 0.3 * (1 - pred)))
    assert np.all(p2 > p1)


def test_prior_carried_by_absolute_position():
    hsv = frame_with((20, 20), RED)
    fg = np.full(Q.total_bins, 1.0 / Q.total_bins)
    m = SegmentationModel(fg, fg.copy(), 1.0, Q).with_prior(np.full((4, 4), 0.9), (2, 2, 6, 6))
    post = posterior_map(m, hsv, (4, 4, 10, 10))
    # equal likelihoods and stay=1 reproduce the prior: 0.9 on the overlap, 0.5 elsewhere
    np.testing.assert_allclose(post[:2, :2], 0.9)
    np.testing.assert_allclose(post[2:, :], 0.5)
