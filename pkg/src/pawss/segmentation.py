"""Recursive Bayesian colour segmentation of foreground against background.

The model keeps a foreground and a background colour histogram over a joint
HSV quantisation, and a per-pixel foreground posterior that is carried from
frame to frame as the prior of the next frame.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .imaging import BoundingBox, quantize_hsv, round_half_up

RING_GAP = 0.2


@dataclass(frozen=True)
class ColourQuantizer:
    bins_per_channel: int = 16

    @property
    def total_bins(self):
        return self.bins_per_channel ** 3

    def __call__(self, hsv):
        return quantize_hsv(hsv, self.bins_per_channel)


DEFAULT_QUANTIZER = ColourQuantizer()


@dataclass(frozen=True)
class SegmentationModel:
    fg_hist: np.ndarray
    bg_hist: np.ndarray
    transition_stay: float = 0.8
    quantizer: ColourQuantizer = ColourQuantizer()
    # posterior from the previous frame and the integer rect (x0, y0, x1, y1) it covers
    prior_map: np.ndarray | None = None
    prior_rect: tuple | None = None

    def with_prior(self, posterior, rect):
        return replace(self, prior_map=posterior, prior_rect=tuple(int(v) for v in rect))


def _normalise(hist):
    s = hist.sum()
    if s <= 0:
        return np.full(hist.shape, 1.0 / hist.size)
    return hist / s


def _clip_rect(rect, width, height):
    x0, y0, x1, y1 = rect
    return (max(x0, 0), max(y0, 0), min(x1, width), min(y1, height))


def ring_rects(box, gap_fraction=RING_GAP):
    """Inner and outer integer rects of the background ring around ``box``.

    The ring starts ``gap_fraction * max(w, h)`` away from the box and its
    thickness is chosen so that the unclipped ring area equals the box area.
    """
    gap = gap_fraction * max(box.w, box.h)
    iw, ih = box.w + 2 * gap, box.h + 2 * gap
    # (iw + 2t)(ih + 2t) - iw*ih = w*h
    t = (-(iw + ih) + np.sqrt((iw + ih) ** 2 + 4 * box.w * box.h)) / 4.0
    inner = (box.x - gap, box.y - gap, box.x + box.w + gap, box.y + box.h + gap)
    outer = (inner[0] - t, inner[1] - t, inner[2] + t, inner[3] + t)
    return tuple(int(v) for v in round_half_up(inner)), tuple(int(v) for v in round_half_up(outer))


def ring_mask(shape, box, gap_fraction=RING_GAP):
    height, width = shape[:2]
    inner, outer = ring_rects(box, gap_fraction)
    mask = np.zeros((height, width), dtype=bool)
    ox0, oy0, ox1, oy1 = _clip_rect(outer, width, height)
    mask[oy0:oy1, ox0:ox1] = True
    ix0, iy0, ix1, iy1 = _clip_rect(inner, width, height)
    mask[iy0:iy1, ix0:ix1] = False
    return mask


def _box_bins(bins, box):
    height, width = bins.shape
    x0, y0, x1, y1 = _clip_rect(box.integer_rect(), width, height)
    return bins[y0:y1, x0:x1].ravel()


def ring_distribution(frame_hsv, box, quantizer=DEFAULT_QUANTIZER):
    """Unweighted colour distribution of the background ring, or None if empty."""
    bins = quantizer(frame_hsv)
    sel = bins[ring_mask(bins.shape, box)]
    if sel.size == 0:
        return None
    return np.bincount(sel, minlength=quantizer.total_bins) / sel.size


def init_model(frame_hsv, box, transition_stay=0.8, quantizer=DEFAULT_QUANTIZER):
    bins = quantizer(frame_hsv)
    inside = _box_bins(bins, box)
    fg = _normalise(np.bincount(inside, minlength=quantizer.total_bins).astype(np.float64))
    bg = ring_distribution(frame_hsv, box, quantizer)
    if bg is None:
        bg = np.full(quantizer.total_bins, 1.0 / quantizer.total_bins)
    return SegmentationModel(fg, bg, transition_stay, quantizer)


def pixel_posterior(model, bin_index, prior):
    """Foreground posterior for colour bin(s) ``bin_index`` given the prior.

    Vectorised over ``bin_index``/``prior``.  Where both likelihoods vanish the
    prior is returned unchanged.
    """
    fg, _ = posterior_pair(model.fg_hist[bin_index], model.bg_hist[bin_index], prior, model.transition_stay)
    return fg


def posterior_pair(lik_fg, lik_bg, prior, stay):
    """Return ``(p(c=1|y), p(c=0|y))`` for the two-state recursive filter."""
    lik_fg = np.asarray(lik_fg, dtype=np.float64)
    lik_bg = np.asarray(lik_bg, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    pred_fg = stay * prior + (1.0 - stay) * (1.0 - prior)
    pred_bg = stay * (1.0 - prior) + (1.0 - stay) * prior
    a = lik_fg * pred_fg
    b = lik_bg * pred_bg
    z = a + b
    ok = z > 0
    safe = np.where(ok, z, 1.0)
    fg = np.where(ok, a / safe, prior)
    bg = np.where(ok, b / safe, 1.0 - prior)
    if fg.ndim == 0:
        return float(fg), float(bg)
    return fg, bg


def weighted_colour_distribution(frame_hsv, grid, weights, quantizer=DEFAULT_QUANTIZER):
    """Colour distribution inside a box with pixels weighted by their patch weight."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (grid.n_patches,):
        raise ValueError(f"expected {grid.n_patches} weights, got {weights.shape}")
    bins = quantizer(frame_hsv)
    height, width = bins.shape
    num = np.zeros(quantizer.total_bins)
    den = 0.0
    for w, rect in zip(weights, grid.rects):
        if w == 0:
            continue
        x0, y0, x1, y1 = _clip_rect(rect, width, height)
        if x1 <= x0 or y1 <= y0:
            continue
        sel = bins[y0:y1, x0:x1].ravel()
        num += w * np.bincount(sel, minlength=quantizer.total_bins)
        den += w * sel.size
    if den <= 0:
        return np.full(quantizer.total_bins, 1.0 / quantizer.total_bins)
    return num / den


def update_histograms(model, fg_dist, delta, bg_dist=None):
    """Blend the current distributions into the model with update factor ``delta``."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    fg = _normalise(delta * np.asarray(fg_dist) + (1.0 - delta) * model.fg_hist)
    bg = model.bg_hist
    if bg_dist is not None:
        bg = _normalise(delta * np.asarray(bg_dist) + (1.0 - delta) * bg)
    return replace(model, fg_hist=fg, bg_hist=bg)


def search_region(box, width, height, factor=2.0):
    """Integer rect of a region ``factor`` times the box size, centred on it, clipped to the frame."""
    cx, cy = box.center
    r = BoundingBox.from_center(cx, cy, box.w * factor, box.h * factor).integer_rect()
    return _clip_rect(r, width, height)


def _resampled_prior(model, rect):
    x0, y0, x1, y1 = rect
    prior = np.full((y1 - y0, x1 - x0), 0.5)
    if model.prior_map is None or model.prior_rect is None:
        return prior
    px0, py0, px1, py1 = model.prior_rect
    ox0, oy0, ox1, oy1 = max(x0, px0), max(y0, py0), min(x1, px1), min(y1, py1)
    if ox1 > ox0 and oy1 > oy0:
        prior[oy0 - y0:oy1 - y0, ox0 - x0:ox1 - x0] = model.prior_map[oy0 - py0:oy1 - py0, ox0 - px0:ox1 - px0]
    return prior


def posterior_map(model, frame_hsv, region):
    """Per-pixel foreground posterior over the integer ``region`` rect.

    The stored prior is carried over by absolute pixel position; pixels not
    covered by the previous region start from 0.5.
    """
    x0, y0, x1, y1 = (int(v) for v in region)
    bins = model.quantizer(frame_hsv[y0:y1, x0:x1])
    prior = _resampled_prior(model, (x0, y0, x1, y1))
    fg, _ = posterior_pair(model.fg_hist[bins], model.bg_hist[bins], prior, model.transition_stay)
    return np.atleast_2d(fg)
