"""Pyramidal Lucas-Kanade point tracking and the two candidate scale sets.

Point coordinates here are array-index coordinates ``(x, y)``: the centre of
pixel ``(row, col)`` is ``(col, row)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist

LK_LEVELS = 3
LK_WINDOW = 15
LK_ITERS = 20
LK_EPS = 0.01
FB_THRESHOLD = 2.0
MIN_EIG = 1e-6
MIN_RELIABLE = 0.5
MIN_PAIR_DIST = 1.0


@dataclass
class FlowPoints:
    """Points to track, one row per point.

    ``tracked`` is NaN where tracking failed; ``well_tracked`` implies a
    finite ``tracked`` position that passed the forward-backward check.
    """

    positions: np.ndarray
    source_patch: np.ndarray
    tracked: np.ndarray | None = None
    well_tracked: np.ndarray | None = None

    def __len__(self):
        return len(self.positions)


def pick_points(grid, n_pt, seed=0):
    """Sample ``n_pt`` distinct pixels per patch, uniformly, reproducibly."""
    rng = np.random.default_rng(seed)
    pos, src = [], []
    for i, (x0, y0, x1, y1) in enumerate(grid.rects):
        w, h = x1 - x0, y1 - y0
        if w <= 0 or h <= 0:
            continue
        idx = rng.choice(w * h, size=n_pt, replace=n_pt > w * h)
        ys, xs = np.divmod(idx, w)
        # pixel-edge box coords -> index coords of pixel centres
        pos.append(np.stack([x0 + xs, y0 + ys], axis=1).astype(np.float64))
        src.append(np.full(n_pt, i))
    if not pos:
        return FlowPoints(np.zeros((0, 2)), np.zeros(0, dtype=np.int64))
    return FlowPoints(np.concatenate(pos), np.concatenate(src))


def build_pyramid(img, levels=LK_LEVELS):
    pyr = [np.asarray(img, dtype=np.float64)]
    for _ in range(levels - 1):
        prev = pyr[-1]
        if min(prev.shape) < 8:
            break
        pyr.append(ndimage.gaussian_filter(prev, 1.0, mode="nearest")[::2, ::2])
    return pyr


def _sample(img, ys, xs):
    return ndimage.map_coordinates(img, [ys.ravel(), xs.ravel()], order=1, mode="nearest").reshape(ys.shape)


def _inside(ys, xs, h, w):
    return (ys >= 0) & (ys <= h - 1) & (xs >= 0) & (xs <= w - 1)


def _normal_matrix(ix, iy, m):
    return (ix * ix * m).sum(1), (ix * iy * m).sum(1), (iy * iy * m).sum(1)


def lucas_kanade(prev, nxt, pts, levels=LK_LEVELS, window=LK_WINDOW, iters=LK_ITERS, eps=LK_EPS):
    """Track ``(N, 2)`` points from ``prev`` to ``nxt``.

    Returns the tracked positions and a status flag; points whose gradient
    matrix is near singular at full resolution, or that leave the image, get
    status False.  Template samples falling outside the image are left out of
    the normal equations, so border replication cannot pull a point off course.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    out = np.full((n, 2), np.nan)
    status = np.ones(n, dtype=bool)
    if n == 0:
        return out, status
    pyr_p = build_pyramid(prev, levels)
    pyr_n = build_pyramid(nxt, levels)
    nlev = min(len(pyr_p), len(pyr_n))
    half = window // 2
    oy, ox = np.mgrid[-half:half + 1, -half:half + 1]
    oy = oy.ravel()[None, :].astype(np.float64)
    ox = ox.ravel()[None, :].astype(np.float64)
    guess = np.zeros((n, 2))
    for lev in range(nlev - 1, -1, -1):
        ip, inx = pyr_p[lev], pyr_n[lev]
        h, w = ip.shape
        gy, gx = np.gradient(ip)
        p = pts / (2 ** lev)
        wy = p[:, 1:2] + oy
        wx = p[:, 0:1] + ox
        tmpl = _sample(ip, wy, wx)
        ix = _sample(gx, wy, wx)
        iy = _sample(gy, wy, wx)
        # template samples outside the image carry border-replicated values; leave them out
        m = _inside(wy, wx, h, w).astype(np.float64)
        gxx, gxy, gyy = _normal_matrix(ix, iy, m)
        det = gxx * gyy - gxy * gxy
        tr = gxx + gyy
        min_eig = (tr - np.sqrt(np.maximum(tr * tr - 4 * det, 0.0))) / 2.0 / np.maximum(m.sum(1), 1.0)
        textured = min_eig > MIN_EIG
        if lev == 0:
            status &= textured
        # on coarse levels a flat window only skips refinement; the guess carries down
        safe_det = np.where(np.abs(det) > 0, det, 1.0)
        d = guess.copy()
        active = status & textured
        for _ in range(iters):
            if not active.any():
                break
            a = np.flatnonzero(active)
            cur = _sample(inx, wy[a] + d[a, 1:2], wx[a] + d[a, 0:1])
            err = (tmpl[a] - cur) * m[a]
            bx = (err * ix[a]).sum(1)
            by = (err * iy[a]).sum(1)
            dx = (gyy[a] * bx - gxy[a] * by) / safe_det[a]
            dy = (gxx[a] * by - gxy[a] * bx) / safe_det[a]
            d[a, 0] += dx
            d[a, 1] += dy
            active[a[np.hypot(dx, dy) < eps]] = False
        guess = d if lev == 0 else 2.0 * d
    out = pts + guess
    h, w = prev.shape
    inside = (out[:, 0] >= 0) & (out[:, 0] <= w - 1) & (out[:, 1] >= 0) & (out[:, 1] <= h - 1)
    status &= inside & np.isfinite(out).all(axis=1)
    out[~status] = np.nan
    return out, status


def track_points(prev, nxt, points, fb_threshold=FB_THRESHOLD):
    """Forward LK plus a backward check; fills ``tracked`` and ``well_tracked``."""
    if prev.shape != nxt.shape:
        raise ValueError("frames must have the same size")
    fwd, ok_f = lucas_kanade(prev, nxt, points.positions)
    back, ok_b = lucas_kanade(nxt, prev, np.where(ok_f[:, None], fwd, points.positions))
    fb = np.hypot(*(back - points.positions).T)
    good = ok_f & ok_b & (fb < fb_threshold)
    tracked = np.where(ok_f[:, None], fwd, np.nan)
    return FlowPoints(points.positions, points.source_patch, tracked, good)


def lower_median(values):
    """Element at 0-based index ``n // 2`` of the sorted values."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("median of an empty set")
    return float(v[v.size // 2])


def median_pair_ratio(points, min_reliable=MIN_RELIABLE):
    """Median pairwise distance ratio between the two frames.

    Returns ``(s_p, reliable)``; ``s_p`` falls back to 1 when fewer than
    ``min_reliable`` of the points are well tracked or no usable pair exists.
    The median is the lower one (0-based index ``n // 2`` of the sorted ratios).
    """
    if points.well_tracked is None or len(points) == 0:
        return 1.0, False
    good = np.asarray(points.well_tracked, dtype=bool)
    if good.mean() < min_reliable or good.sum() < 2:
        return 1.0, False
    d_prev = pdist(points.positions[good])
    d_next = pdist(points.tracked[good])
    keep = d_prev >= MIN_PAIR_DIST
    if not keep.any():
        return 1.0, False
    return lower_median(d_next[keep] / d_prev[keep]), True


def build_scale_set_r(s_prev, lam, n_r):
    if n_r < 1 or n_r % 2 == 0:
        raise ValueError(f"n_r must be a positive odd count, got {n_r}")
    if lam <= 1.0:
        raise ValueError("lambda must exceed 1")
    half = (n_r - 1) // 2
    return np.array([s_prev * lam ** m for m in range(-half, half + 1)])


def build_scale_set_p(s_prev, s_p, n_p):
    """Evenly spaced factors between 1 and ``s_p``, expressed relative to the first frame."""
    if n_p < 2:
        raise ValueError("n_p must be at least 2")
    if s_p <= 0:
        raise ValueError("s_p must be positive")
    rel = 1.0 + np.arange(n_p) * (s_p - 1.0) / (n_p - 1)
    return s_prev * rel


def fuse_scale_sets(a, b, rtol=1e-9):
    """Sorted union; values within ``rtol`` relative of each other are merged."""
    vals = np.sort(np.concatenate([np.asarray(a, dtype=np.float64).ravel(), np.asarray(b, dtype=np.float64).ravel()]))
    out = []
    for v in vals:
        if out and abs(v - out[-1]) <= rtol * max(abs(v), abs(out[-1])):
            continue
        out.append(v)
    return np.array(out)
