"""Synthetic sequences with exact ground truth.

A smoothly textured warm-coloured target is rendered over a static, cool
coloured background.  The target texture is a continuous function of the
box-normalised coordinates, so it is rendered consistently at any size.
"""

from __future__ import annotations

import numpy as np

from .imaging import hsv_to_rgb

KINDS = ("translate", "grow", "jump", "occlude")
# ground-truth values are snapped to multiples of this so text round trips are exact
GT_QUANTUM = 1.0 / 256.0

DEFAULTS = {
    "translate": dict(frame_size=(200, 240), box=(40.0, 60.0, 40.0, 40.0), dx=1.0, dy=0.5),
    "grow": dict(frame_size=(200, 200), box=(80.0, 80.0, 40.0, 40.0), growth=1.5),
    "jump": dict(frame_size=(200, 200), box=(80.0, 80.0, 40.0, 40.0), factor=1.6, at=50),
    "occlude": dict(frame_size=(200, 240), box=(60.0, 80.0, 40.0, 40.0), dx=0.5, dy=0.0, start=30, length=10),
}


def _snap(v):
    return np.round(np.asarray(v, dtype=np.float64) / GT_QUANTUM) * GT_QUANTUM


class _Texture:
    """Sum of random plane waves; ``__call__`` maps coords to [0, 1]."""

    def __init__(self, rng, n_waves, fmin, fmax):
        ang = rng.uniform(0, np.pi, n_waves)
        freq = rng.uniform(fmin, fmax, n_waves)
        self.kx = freq * np.cos(ang) * 2 * np.pi
        self.ky = freq * np.sin(ang) * 2 * np.pi
        self.phase = rng.uniform(0, 2 * np.pi, n_waves)

    def __call__(self, u, v):
        acc = np.zeros(np.broadcast(u, v).shape)
        for kx, ky, ph in zip(self.kx, self.ky, self.phase):
            acc += np.sin(kx * u + ky * v + ph)
        return 0.5 + 0.5 * acc / len(self.kx)


def _trajectory(kind, n_frames, p):
    x, y, w, h = p["box"]
    t = np.arange(n_frames, dtype=np.float64)
    cx, cy = x + w / 2, y + h / 2
    if kind in ("translate", "occlude"):
        cxs, cys, s = cx + p["dx"] * t, cy + p["dy"] * t, np.ones(n_frames)
    elif kind == "grow":
        cxs, cys = np.full(n_frames, cx), np.full(n_frames, cy)
        s = p["growth"] ** (t / max(n_frames - 1, 1))
    elif kind == "jump":
        cxs, cys = np.full(n_frames, cx), np.full(n_frames, cy)
        s = np.where(t >= p["at"], p["factor"], 1.0)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
    ws, hs = _snap(w * s), _snap(h * s)
    return np.stack([_snap(cxs - ws / 2), _snap(cys - hs / 2), ws, hs], axis=1)


def synth_sequence(kind, n_frames=100, seed=0, **params):
    """Return ``(frames, gt)``: a list of RGB float images and an ``(N, 4)`` box array."""
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
    p = dict(DEFAULTS[kind])
    unknown = set(params) - set(p)
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    p.update(params)
    height, width = p["frame_size"]
    gt = _trajectory(kind, n_frames, p)
    if (gt[:, 0] < 0).any() or (gt[:, 1] < 0).any() or (gt[:, 0] + gt[:, 2] > width).any() or (
        gt[:, 1] + gt[:, 3] > height
    ).any():
        raise ValueError("target leaves the frame; adjust the box, motion or frame size")

    rng = np.random.default_rng(seed)
    fg_tex = [_Texture(rng, 6, 1.5, 4.0) for _ in range(3)]
    bg_tex = [_Texture(rng, 4, 0.004, 0.015) for _ in range(2)]
    yy, xx = np.mgrid[0:height, 0:width] + 0.5
    bg_hsv = np.stack(
        [0.55 + 0.1 * bg_tex[0](xx, yy), 0.45 + 0.3 * bg_tex[1](xx, yy), 0.35 + 0.4 * bg_tex[0](yy, xx)],
        axis=2,
    )
    background = hsv_to_rgb(bg_hsv)

    frames = []
    for k, (x, y, w, h) in enumerate(gt):
        img = background.copy()
        hidden = kind == "occlude" and p["start"] <= k < p["start"] + p["length"]
        if not hidden:
            c0, c1 = int(np.floor(x)), int(np.ceil(x + w))
            r0, r1 = int(np.floor(y)), int(np.ceil(y + h))
            sub_x = xx[r0:r1, c0:c1]
            sub_y = yy[r0:r1, c0:c1]
            inside = (sub_x >= x) & (sub_x < x + w) & (sub_y >= y) & (sub_y < y + h)
            u, v = (sub_x - x) / w, (sub_y - y) / h
            # radial profile gives the target a centre, plus fine texture on top
            r = np.clip(np.hypot(u - 0.5, v - 0.5) / np.sqrt(0.5), 0.0, 1.0)
            hsv = np.stack(
                [
                    0.02 + 0.1 * r + 0.03 * fg_tex[0](u, v),
                    0.65 + 0.35 * fg_tex[1](u, v),
                    0.3 + 0.55 * (1.0 - r) + 0.15 * fg_tex[2](u, v),
                ],
                axis=2,
            )
            patch = img[r0:r1, c0:c1]
            patch[inside] = hsv_to_rgb(hsv)[inside]
        frames.append(np.clip(img, 0.0, 1.0))
    return frames, gt
