"""Image buffers, colour conversion, gradients and rectangle geometry.

Images are plain numpy arrays with values in [0, 1]: ``(H, W)`` for a single
channel and ``(H, W, 3)`` for colour.  Boxes use pixel-edge coordinates, so
pixel column ``j`` covers ``[j, j + 1)`` and an integer box ``(x, y, w, h)``
covers columns ``x .. x + w - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MIN_SIDE = 32.0


def round_half_up(v):
    """Round to the nearest integer, halves away from -inf (not banker's)."""
    return np.floor(np.asarray(v, dtype=np.float64) + 0.5).astype(np.int64)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box coordinates must be finite")

    @classmethod
    def from_center(cls, cx, cy, w, h):
        return cls(float(cx - w / 2.0), float(cy - h / 2.0), float(w), float(h))

    @classmethod
    def from_array(cls, a):
        x, y, w, h = (float(v) for v in a)
        return cls(x, y, w, h)

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self):
        return self.w * self.h

    def as_array(self):
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def scaled(self, f):
        """Multiply all coordinates by ``f`` (frame rescaling)."""
        return BoundingBox(self.x * f, self.y * f, self.w * f, self.h * f)

    def translated(self, dx, dy):
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def clipped(self, width, height):
        """Intersection with the frame ``[0, width) x [0, height)``.

        A box entirely outside the frame collapses to a 1x1 box at the nearest
        frame corner so the result is always a valid box inside the frame.
        """
        x0 = min(max(self.x, 0.0), width - 1.0)
        y0 = min(max(self.y, 0.0), height - 1.0)
        x1 = max(min(self.x + self.w, float(width)), x0 + 1.0)
        y1 = max(min(self.y + self.h, float(height)), y0 + 1.0)
        x1 = min(x1, float(width))
        y1 = min(y1, float(height))
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def integer_rect(self):
        """Rounded ``(x0, y0, x1, y1)`` pixel rectangle."""
        x0, y0 = round_half_up(self.x), round_half_up(self.y)
        return (int(x0), int(y0), int(x0 + round_half_up(self.w)), int(y0 + round_half_up(self.h)))


@dataclass(frozen=True)
class PatchGrid:
    """Even ``g x g`` decomposition of a box into non-overlapping patches.

    ``edges_x`` and ``edges_y`` hold the ``g + 1`` integer pixel boundaries.
    Patches are enumerated row-major (row ``r``, column ``c`` -> ``r * g + c``).
    """

    grid_side: int
    edges_x: np.ndarray
    edges_y: np.ndarray

    @property
    def n_patches(self):
        return self.grid_side ** 2

    @property
    def rects(self):
        """``(n, 4)`` integer array of ``(x0, y0, x1, y1)`` per patch."""
        g = self.grid_side
        ex, ey = self.edges_x, self.edges_y
        out = np.empty((g * g, 4), dtype=np.int64)
        for r in range(g):
            for c in range(g):
                out[r * g + c] = (ex[c], ey[r], ex[c + 1], ey[r + 1])
        return out

    @property
    def boxes(self):
        return [BoundingBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0)) for x0, y0, x1, y1 in self.rects]

    @property
    def outer(self):
        return BoundingBox(
            float(self.edges_x[0]), float(self.edges_y[0]),
            float(self.edges_x[-1] - self.edges_x[0]), float(self.edges_y[-1] - self.edges_y[0]),
        )


def grid_side_for(n_patches):
    g = math.isqrt(int(n_patches))
    if g < 1 or g * g != n_patches:
        raise ValueError(f"number of patches must be a perfect square, got {n_patches}")
    return g


def patch_edges(boxes, grid_side):
    """Vectorised patch boundaries for an ``(N, 4)`` array of boxes.

    Returns integer arrays ``(N, g + 1)`` for x and y.  Boundaries sit at
    ``round(x) + round(k * w / g)``.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    k = np.arange(grid_side + 1, dtype=np.float64) / grid_side
    ex = round_half_up(boxes[:, :1]) + round_half_up(boxes[:, 2:3] * k)
    ey = round_half_up(boxes[:, 1:2]) + round_half_up(boxes[:, 3:4] * k)
    return ex, ey


def decompose_patches(box, n_patches):
    g = grid_side_for(n_patches)
    if round_half_up(box.w) < g or round_half_up(box.h) < g:
        raise ValueError(f"box {box.w:.2f}x{box.h:.2f} is too small for a {g}x{g} patch grid")
    ex, ey = patch_edges(box.as_array(), g)
    return PatchGrid(g, ex[0], ey[0])


def iou(a, b):
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return min(inter / (a.area + b.area - inter), 1.0)


def iou_many(boxes, ref):
    """IoU of each row of an ``(N, 4)`` array against ``ref`` (array or box)."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    r = ref.as_array() if isinstance(ref, BoundingBox) else np.asarray(ref, dtype=np.float64)
    ix = np.minimum(boxes[:, 0] + boxes[:, 2], r[0] + r[2]) - np.maximum(boxes[:, 0], r[0])
    iy = np.minimum(boxes[:, 1] + boxes[:, 3], r[1] + r[3]) - np.maximum(boxes[:, 1], r[1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    union = boxes[:, 2] * boxes[:, 3] + r[2] * r[3] - inter
    return np.clip(np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0), 0.0, 1.0)


def prescale_for_min_side(first_box, min_side=MIN_SIDE):
    return max(1.0, min_side / min(first_box.w, first_box.h))


def to_hsv(img):
    """RGB -> HSV with all three channels in [0, 1].

    Hue is a fraction of the full turn and wraps circularly; achromatic pixels
    (S = 0) get H = 0.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("channel mismatch: to_hsv expects a 3-channel RGB image")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=2)
    mn = img.min(axis=2)
    c = v - mn
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    safe = np.where(c > 0, c, 1.0)
    h = np.zeros_like(v)
    rmax = (c > 0) & (v == r)
    gmax = (c > 0) & (v == g) & ~rmax
    bmax = (c > 0) & ~rmax & ~gmax
    h = np.where(rmax, ((g - b) / safe) % 6.0, h)
    h = np.where(gmax, (b - r) / safe + 2.0, h)
    h = np.where(bmax, (r - g) / safe + 4.0, h)
    h = (h / 6.0) % 1.0
    return np.stack([h, s, v], axis=2)


def hsv_to_rgb(hsv):
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    h6 = h * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(i, choices_r)
    g = np.choose(i, choices_g)
    b = np.choose(i, choices_b)
    return np.stack([r, g, b], axis=2)


def to_gray(img):
    """Single intensity plane: the V channel for colour input."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img.max(axis=2)


def ensure_rgb(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim == 3 and img.shape[2] == 1:
        return np.repeat(img, 3, axis=2)
    return img


def gradient_magnitude_orientation(gray):
    """Central-difference gradient magnitude and unsigned orientation in [0, pi)."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError("channel mismatch: gradients need a single-channel image")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError("image too small for gradients (need at least 3x3)")
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    orient = np.arctan2(gy, gx) % np.pi
    # arctan2 of -0.0 gives pi after the modulo on some inputs
    orient = np.where(orient >= np.pi, 0.0, orient)
    return mag, orient


def quantize_hsv(hsv, bins):
    """Joint HSV bin index ``h * bins^2 + s * bins + v`` per pixel."""
    q = np.clip((np.asarray(hsv) * bins).astype(np.int64), 0, bins - 1)
    return (q[..., 0] * bins + q[..., 1]) * bins + q[..., 2]


def resize_bilinear(img, factor):
    """Bilinear rescale by ``factor`` (output side = round(side * factor))."""
    img = np.asarray(img, dtype=np.float64)
    if factor == 1.0:
        return img
    h, w = img.shape[:2]
    oh, ow = max(1, int(round_half_up(h * factor))), max(1, int(round_half_up(w * factor)))
    ys = (np.arange(oh) + 0.5) / factor - 0.5
    xs = (np.arange(ow) + 0.5) / factor - 0.5
    yy, xx = np.meshgrid(np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1), indexing="ij")
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")
    return np.stack(
        [ndimage.map_coordinates(img[..., c], [yy, xx], order=1, mode="nearest") for c in range(img.shape[2])],
        axis=2,
    )
