"""Patch features, the weighted patch descriptor and patch-weight evolution.

Each patch contributes a 133-value block: a 5x5x5 joint HSV histogram and an
8-bin unsigned gradient-orientation histogram weighted by magnitude, each
L1-normalised on its own.  The descriptor of a box is the concatenation of the
blocks in row-major patch order, block ``i`` scaled by the patch weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import gradient_magnitude_orientation, grid_side_for, quantize_hsv

COLOUR_BINS = 5
N_COLOUR = COLOUR_BINS ** 3
N_GRAD = 8
FEATURE_DIM = N_COLOUR + N_GRAD
# patches whose summed gradient magnitude is below this count as flat
FLAT_EPS = 1e-12


@dataclass(frozen=True)
class FrameFeatures:
    """Per-pixel maps needed for patch features, computed once per frame."""

    hsv: np.ndarray
    colour_bin: np.ndarray
    grad_bin: np.ndarray
    magnitude: np.ndarray

    @property
    def shape(self):
        return self.colour_bin.shape


def orientation_bins(orient, n_bins=N_GRAD):
    return np.clip((orient * (n_bins / np.pi)).astype(np.int64), 0, n_bins - 1)


def frame_features(hsv):
    mag, orient = gradient_magnitude_orientation(hsv[..., 2])
    return FrameFeatures(hsv, quantize_hsv(hsv, COLOUR_BINS), orientation_bins(orient), mag)


def patch_edges_exact(boxes, grid_side):
    """Sub-pixel patch boundaries ``x + k * w / g`` for an ``(N, 4)`` array of boxes."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    k = np.arange(grid_side + 1, dtype=np.float64) / grid_side
    return boxes[:, :1] + boxes[:, 2:3] * k, boxes[:, 1:2] + boxes[:, 3:4] * k


def _coverage(edges, lo, hi):
    """Overlap of pixels ``lo..hi-1`` (each ``[j, j+1)``) with each interval between edges."""
    j = np.arange(lo, hi, dtype=np.float64)
    a = np.maximum(edges[:-1, None], j[None, :])
    b = np.minimum(edges[1:, None], j[None, :] + 1.0)
    return np.clip(b - a, 0.0, None)


def _grid_features(ff, ex, ey):
    """``(gy * gx, FEATURE_DIM)`` features for the cells between the given edges.

    Pixels cut by a cell boundary contribute in proportion to the covered area.
    """
    height, width = ff.shape
    ex = np.clip(ex, 0, width)
    ey = np.clip(ey, 0, height)
    gx, gy = len(ex) - 1, len(ey) - 1
    out = np.zeros((gy, gx, FEATURE_DIM))
    x0, x1 = int(np.floor(ex[0])), int(np.ceil(ex[-1]))
    y0, y1 = int(np.floor(ey[0])), int(np.ceil(ey[-1]))
    if x1 <= x0 or y1 <= y0:
        return out.reshape(-1, FEATURE_DIM)
    cx = _coverage(ex, x0, x1)
    cy = _coverage(ey, y0, y1)
    h, w = y1 - y0, x1 - x0
    cb = ff.colour_bin[y0:y1, x0:x1]
    gb = ff.grad_bin[y0:y1, x0:x1]
    mg = ff.magnitude[y0:y1, x0:x1]
    onehot = np.zeros((h, w, FEATURE_DIM))
    ii, jj = np.mgrid[0:h, 0:w]
    onehot[ii, jj, cb] = 1.0
    onehot[ii, jj, N_COLOUR + gb] = mg
    rows = (cy @ onehot.reshape(h, -1)).reshape(gy, w, FEATURE_DIM)
    hist = np.einsum("rjb,cj->rcb", rows, cx)
    area = cy.sum(1)[:, None] * cx.sum(1)[None, :]
    gsum = hist[..., N_COLOUR:].sum(-1)
    nz = area > 0
    out[nz, :N_COLOUR] = hist[nz, :N_COLOUR] / area[nz, None]
    flat = gsum > FLAT_EPS
    out[flat, N_COLOUR:] = hist[flat, N_COLOUR:] / gsum[flat, None]
    return out.reshape(-1, FEATURE_DIM)


def extract_patch_feature(frame_hsv, grad, patch):
    """Feature vector of one patch box; the part outside the frame is ignored."""
    mag, orient = grad
    ff = FrameFeatures(frame_hsv, quantize_hsv(frame_hsv, COLOUR_BINS), orientation_bins(orient), mag)
    ex, ey = patch_edges_exact(patch.as_array(), 1)
    return _grid_features(ff, ex[0], ey[0])[0]


def build_descriptor(features, weights):
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if features.shape[0] != weights.shape[0]:
        raise ValueError(f"{features.shape[0]} patch features but {weights.shape[0]} weights")
    return (features * weights[:, None]).ravel()


def patch_features(ff, box, n_patches):
    """``(n_patches, FEATURE_DIM)`` unweighted features for one box (array or BoundingBox)."""
    g = grid_side_for(n_patches)
    b = box.as_array() if hasattr(box, "as_array") else np.asarray(box, dtype=np.float64)
    ex, ey = patch_edges_exact(b, g)
    return _grid_features(ff, ex[0], ey[0])


def descriptors(ff, boxes, weights):
    """Weighted descriptors, one row per box of an ``(N, 4)`` array."""
    weights = np.asarray(weights, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out = np.empty((len(boxes), weights.size * FEATURE_DIM))
    for k, b in enumerate(boxes):
        out[k] = build_descriptor(patch_features(ff, b, weights.size), weights)
    return out


def _integral(a):
    """Summed-area table with a leading zero row/column on the last two axes."""
    pad = [(0, 0)] * (a.ndim - 2) + [(1, 0), (1, 0)]
    return np.pad(a, pad).cumsum(axis=-2).cumsum(axis=-1)


class _SatSampler:
    """Bilinear lookups into summed-area tables at fractional corners.

    For a piecewise-constant image this gives exact area-weighted sums over
    rectangles with sub-pixel corners.
    """

    def __init__(self, y, x, h, w):
        y = np.clip(y, 0, h)
        x = np.clip(x, 0, w)
        y0 = np.minimum(np.floor(y).astype(np.int64), h - 1)
        x0 = np.minimum(np.floor(x).astype(np.int64), w - 1)
        self.fy, self.fx = y - y0, x - x0
        self.y0, self.x0 = y0, x0

    def __call__(self, sat, idx=None):
        y0, x0, fy, fx = self.y0, self.x0, self.fy, self.fx
        if idx is None:
            a, b, c, d = sat[y0, x0], sat[y0, x0 + 1], sat[y0 + 1, x0], sat[y0 + 1, x0 + 1]
        else:
            a, b, c, d = sat[idx, y0, x0], sat[idx, y0, x0 + 1], sat[idx, y0 + 1, x0], sat[idx, y0 + 1, x0 + 1]
        return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)


def score_boxes(ff, boxes, model_w, weights):
    """Linear scores ``<model_w, descriptor(box)>`` for many boxes at once.

    Equivalent to ``descriptors(ff, boxes, weights) @ model_w`` but computed
    from per-patch projected summed-area tables instead of materialising
    descriptors.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.size
    g = grid_side_for(n)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) == 0:
        return np.zeros(0)
    wm = np.asarray(model_w, dtype=np.float64).reshape(n, FEATURE_DIM)
    height, width = ff.shape
    ex, ey = patch_edges_exact(boxes, g)
    ex = np.clip(ex, 0, width)
    ey = np.clip(ey, 0, height)
    cx0, cx1 = int(np.floor(ex.min())), int(np.ceil(ex.max()))
    cy0, cy1 = int(np.floor(ey.min())), int(np.ceil(ey.max()))
    if cx1 <= cx0 or cy1 <= cy0:
        return np.zeros(len(boxes))
    cb = ff.colour_bin[cy0:cy1, cx0:cx1]
    gb = ff.grad_bin[cy0:cy1, cx0:cx1]
    mg = ff.magnitude[cy0:cy1, cx0:cx1]
    active = np.flatnonzero(weights != 0)
    col_sat = _integral(wm[active, :N_COLOUR][:, cb])
    grad_sat = _integral(wm[active, N_COLOUR:][:, gb] * mg)
    mag_sat = _integral(mg)

    ex = ex - cx0
    ey = ey - cy0
    h, w = cy1 - cy0, cx1 - cx0
    r, c = np.divmod(active, g)
    xa, xb = ex[:, c], ex[:, c + 1]
    ya, yb = ey[:, r], ey[:, r + 1]
    k = np.arange(active.size)[None, :]
    corners = [_SatSampler(yy, xx, h, w) for yy, xx in ((yb, xb), (ya, xb), (yb, xa), (ya, xa))]

    def rect_sum(sat, idx=None):
        s = [cn(sat, idx) for cn in corners]
        return s[0] - s[1] - s[2] + s[3]

    area = (xb - xa) * (yb - ya)
    csum = rect_sum(col_sat, k)
    gsum = rect_sum(grad_sat, k)
    msum = rect_sum(mag_sat)
    colour = np.where(area > 0, csum / np.where(area > 0, area, 1), 0.0)
    grad = np.where(msum > FLAT_EPS, gsum / np.where(msum > FLAT_EPS, msum, 1.0), 0.0)
    return (colour + grad) @ weights[active]


def mean_patch_foreground(posterior, grid, origin=(0, 0)):
    """Mean posterior per patch; ``origin`` is the frame position of ``posterior[0, 0]``.

    Patch pixels outside the posterior map are ignored; an empty patch gets 0.
    """
    ox, oy = origin
    height, width = posterior.shape
    out = np.zeros(grid.n_patches)
    for i, (x0, y0, x1, y1) in enumerate(grid.rects):
        x0, x1 = max(x0 - ox, 0), min(x1 - ox, width)
        y0, y1 = max(y0 - oy, 0), min(y1 - oy, height)
        if x1 > x0 and y1 > y0:
            out[i] = posterior[y0:y1, x0:x1].mean()
    return out


def update_weights(weights, patch_fg, delta):
    """Blend max-normalised patch foreground into the weights.

    Returns the weights unchanged if every patch has zero foreground.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    weights = np.asarray(weights, dtype=np.float64)
    patch_fg = np.asarray(patch_fg, dtype=np.float64)
    peak = patch_fg.max()
    if peak <= 0:
        return weights.copy()
    target = patch_fg / peak
    return np.clip(delta * target + (1.0 - delta) * weights, 0.0, 1.0)
