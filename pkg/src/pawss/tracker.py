"""Per-frame tracking loop: two-level search, scale sets and ordered model updates."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import flow
from .features import FEATURE_DIM, descriptors, frame_features, mean_patch_foreground, score_boxes, update_weights
from .imaging import BoundingBox, decompose_patches, ensure_rgb, grid_side_for, prescale_for_min_side, resize_bilinear, to_hsv
from .learner import Learner, LearnerConfig, SupportPattern
from .segmentation import (
    ColourQuantizer,
    init_model,
    posterior_map,
    ring_distribution,
    search_region,
    update_histograms,
    weighted_colour_distribution,
)

log = logging.getLogger(__name__)

MODES = ("pawssa", "pawssb")
# relative scales added to each training pattern as scale negatives
SCALE_NEGATIVES = (0.85, 0.92, 1.08, 1.15)


@dataclass(frozen=True)
class Config:
    delta: float = 0.1
    lam: float = 1.003
    n_r: int = 11
    n_p: int = 11
    n_pt: int = 5
    eta: float = 0.3
    n_patches: int = 49
    # r_s, in pre-scaled pixels
    small_radius: int = 5
    # r_w; None means (W + H) / 2 of the pre-scaled first box
    large_radius: float | None = None
    first_level_stride: int = 2
    transition_stay: float = 0.8
    seg_bins: int = 16
    min_side: float = 32.0
    C: float = 100.0
    budget: int = 100
    reprocess_steps: int = 10
    seed: int = 0
    mode: str = "pawssb"

    def __post_init__(self):
        if self.n_r < 1 or self.n_r % 2 == 0:
            raise ValueError("n_r must be odd")
        if not (0 <= self.delta <= 1 and 0 <= self.eta <= 1):
            raise ValueError("delta and eta must lie in [0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.5 < self.transition_stay <= 1.0:
            raise ValueError("transition_stay must lie in (0.5, 1]")
        grid_side_for(self.n_patches)
        for name in ("lam", "n_p", "n_pt", "small_radius", "first_level_stride", "seg_bins", "min_side", "C", "budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def use_flow_scale(self):
        return self.mode == "pawssb"

    def learner_config(self):
        return LearnerConfig(C=self.C, budget=self.budget, reprocess_steps=self.reprocess_steps, seed=self.seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        """Build from string or typed values; unknown keys raise."""
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in known:
                raise KeyError(f"unknown config key {k!r}")
            default = getattr(cls, k) if k != "large_radius" else None
            if isinstance(v, str):
                if v.lower() in ("none", ""):
                    v = None
                elif isinstance(default, bool):
                    v = v.lower() in ("1", "true", "yes", "on")
                elif isinstance(default, int):
                    v = int(v)
                elif isinstance(default, float) or k == "large_radius":
                    v = float(v)
                elif k == "mode":
                    v = v.lower()
            kw[k] = v
        return cls(**kw)


def mode_select(config, mode):
    return replace(config, mode=str(mode).lower())


@dataclass
class FrameResult:
    box: BoundingBox
    scale: float
    score: float
    similarity: float = 1.0
    updated: bool = True
    flow_scale: float = 1.0
    flow_reliable: bool = False
    n_first: int = 0
    n_second: int = 0
    scales: np.ndarray = field(default=None, repr=False)


def select_candidate(scores, rel_scale, dist=None):
    """Index of the best candidate.

    Highest score wins; exact ties go to the candidate whose frame-relative
    scale is closest to 1, then to the one closest to the search centre.
    """
    scores = np.asarray(scores, dtype=np.float64)
    rel = np.abs(np.asarray(rel_scale, dtype=np.float64) - 1.0)
    d = np.zeros_like(scores) if dist is None else np.asarray(dist, dtype=np.float64)
    return int(np.lexsort((d, rel, -scores))[0])


class Tracker:
    def __init__(self, config=None):
        self.config = config or Config()
        self.learner = None

    # -- frame preparation -------------------------------------------------

    def _prepare(self, frame):
        frame = np.asarray(frame)
        if frame.dtype.kind in "ui":
            frame = frame / 255.0
        if self.frame_shape is not None and frame.shape[:2] != self.frame_shape:
            raise ValueError(f"frame size {frame.shape[:2]} differs from the first frame {self.frame_shape}")
        rgb = ensure_rgb(frame)
        if self.prescale != 1.0:
            rgb = np.clip(resize_bilinear(rgb, self.prescale), 0.0, 1.0)
        hsv = to_hsv(rgb)
        return hsv, frame_features(hsv)

    @property
    def size(self):
        return (self.base_w * self.scale, self.base_h * self.scale)

    def _box_at(self, cx, cy, scale):
        return BoundingBox.from_center(cx, cy, self.base_w * scale, self.base_h * scale)

    def report_box(self, box=None):
        box = box or self.box
        h, w = self.frame_shape
        return box.scaled(1.0 / self.prescale).clipped(w, h)

    # -- public API --------------------------------------------------------

    def init(self, frame, box):
        cfg = self.config
        self.frame_shape = None
        frame = np.asarray(frame)
        self.prescale = prescale_for_min_side(box, cfg.min_side)
        hsv, ff = self._prepare(frame)
        self.frame_shape = frame.shape[:2]
        self.box = box.scaled(self.prescale)
        self.base_w, self.base_h = self.box.w, self.box.h
        self.scale = 1.0
        self.r_w = cfg.large_radius if cfg.large_radius is not None else (self.base_w + self.base_h) / 2.0
        self.frame_index = 0
        self.quantizer = ColourQuantizer(cfg.seg_bins)
        decompose_patches(self.box, cfg.n_patches)
        self.seg = init_model(hsv, self.box, cfg.transition_stay, self.quantizer)
        self.weights = np.ones(cfg.n_patches)
        self.learner = Learner(cfg.n_patches * FEATURE_DIM, cfg.learner_config())
        self.prev_gray = hsv[..., 2]
        self.learner.update(self._pattern(ff, self.box))
        return self

    def track(self, frame):
        """Process the next frame and return the reported result."""
        if self.learner is None:
            raise RuntimeError("tracker is not initialised")
        cfg = self.config
        self.frame_index += 1
        hsv, ff = self._prepare(frame)
        gray = hsv[..., 2]

        center_box, n1 = self.first_level_search(ff)

        s_prev = self.scale
        scales = flow.build_scale_set_r(s_prev, cfg.lam, cfg.n_r)
        s_p, reliable = 1.0, False
        if cfg.use_flow_scale:
            s_p, reliable = self.estimate_flow_scale(self.prev_gray, gray)
            scales = flow.fuse_scale_sets(scales, flow.build_scale_set_p(s_prev, s_p, cfg.n_p))

        box, scale, score, n2 = self.second_level_search(ff, center_box, scales)
        self.box, self.scale = box, scale

        height, width = gray.shape
        grid = decompose_patches(box, cfg.n_patches)
        colour = weighted_colour_distribution(hsv, grid, self.weights, self.quantizer)
        region = search_region(box, width, height)
        post = posterior_map(self.seg, hsv, region)
        self.seg = self.seg.with_prior(post, region)
        self.weights = update_weights(self.weights, mean_patch_foreground(post, grid, region[:2]), cfg.delta)
        self.seg = update_histograms(self.seg, colour, cfg.delta, ring_distribution(hsv, box, self.quantizer))

        pattern = self._pattern(ff, box)
        sim = self.learner.positive_similarity(pattern.descriptors[0])
        updated = sim >= cfg.eta
        if updated:
            self.learner.update(pattern)
        self.prev_gray = gray
        log.debug("frame %d scale %.4f score %.4f sim %.3f", self.frame_index, scale, score, sim)
        return FrameResult(self.report_box(), scale, score, sim, updated, s_p, reliable, n1, n2, scales)

    # -- search ------------------------------------------------------------

    def _centres(self, cx, cy, offsets, shape):
        dx, dy = np.meshgrid(offsets, offsets)
        dx, dy = dx.ravel().astype(np.float64), dy.ravel().astype(np.float64)
        px, py = cx + dx, cy + dy
        height, width = shape
        keep = (px >= 0) & (px < width) & (py >= 0) & (py < height)
        return px[keep], py[keep], np.hypot(dx, dy)[keep]

    def first_level_search(self, ff):
        """Coarse fixed-scale search on a stride grid; returns (search centre box, #candidates)."""
        stride = self.config.first_level_stride
        half = int(math.floor(self.r_w / stride))
        offsets = np.arange(-half, half + 1) * stride
        cx, cy = self.box.center
        px, py, dist = self._centres(cx, cy, offsets, ff.shape)
        if len(px) == 0:
            return self.box, 0
        w, h = self.size
        boxes = np.stack([px - w / 2, py - h / 2, np.full_like(px, w), np.full_like(px, h)], axis=1)
        scores = score_boxes(ff, boxes, self.learner.w, self.weights)
        k = select_candidate(scores, np.ones_like(scores), dist)
        return BoundingBox.from_array(boxes[k]), len(boxes)

    def second_level_search(self, ff, center_box, scales):
        """Dense multi-scale search around ``center_box``; returns (box, scale, score, #candidates)."""
        r = int(self.config.small_radius)
        cx, cy = center_box.center
        px, py, dist = self._centres(cx, cy, np.arange(-r, r + 1), ff.shape)
        if len(px) == 0:
            px, py, dist = np.array([cx]), np.array([cy]), np.zeros(1)
        scales = np.asarray(scales, dtype=np.float64)
        S = np.repeat(scales, len(px))
        X = np.tile(px, len(scales))
        Y = np.tile(py, len(scales))
        D = np.tile(dist, len(scales))
        w, h = self.base_w * S, self.base_h * S
        boxes = np.stack([X - w / 2, Y - h / 2, w, h], axis=1)
        scores = score_boxes(ff, boxes, self.learner.w, self.weights)
        k = select_candidate(scores, S / self.scale, D)
        return BoundingBox.from_array(boxes[k]), float(S[k]), float(scores[k]), len(boxes)

    def estimate_flow_scale(self, prev_gray, gray):
        """Frame-to-frame scale from tracked points of the previous box."""
        cfg = self.config
        grid = decompose_patches(self.box, cfg.n_patches)
        height, width = gray.shape
        margin = max(self.box.w, self.box.h)
        x0 = int(max(0, math.floor(self.box.x - margin)))
        y0 = int(max(0, math.floor(self.box.y - margin)))
        x1 = int(min(width, math.ceil(self.box.x + self.box.w + margin)))
        y1 = int(min(height, math.ceil(self.box.y + self.box.h + margin)))
        if x1 - x0 < 8 or y1 - y0 < 8:
            return 1.0, False
        pts = flow.pick_points(grid, cfg.n_pt, seed=cfg.seed + self.frame_index)
        p = pts.positions
        inside = (p[:, 0] >= x0) & (p[:, 0] < x1) & (p[:, 1] >= y0) & (p[:, 1] < y1)
        local = flow.FlowPoints(p - [x0, y0], pts.source_patch)
        tracked = flow.track_points(prev_gray[y0:y1, x0:x1], gray[y0:y1, x0:x1], local)
        # points that fell outside the frame count as lost
        tracked.well_tracked &= inside
        return flow.median_pair_ratio(tracked)

    # -- learning ----------------------------------------------------------

    def pattern_boxes(self, box):
        """Training candidates around ``box``: the true box first.

        Nearby shifts from the fine search window, a few wider scale steps at
        the box centre, and a coarse ring of far shifts out to ``r_w``.  The
        fine scale ladder itself is left out: its boxes overlap the true box
        almost entirely, and training them as negatives pins the scale.
        """
        r = int(self.config.small_radius)
        near = sorted({0, 1, -1, (r + 1) // 2, -((r + 1) // 2), r, -r})
        cx, cy = box.center
        w, h = box.w, box.h
        out = [box.as_array()]
        for dy in near:
            for dx in near:
                if dx or dy:
                    out.append([box.x + dx, box.y + dy, w, h])
        for s in [self.scale * f for f in SCALE_NEGATIVES]:
            out.append(self._box_at(cx, cy, s).as_array())
        for frac in (1 / 3, 2 / 3, 1.0):
            rad = frac * self.r_w
            for a in range(8):
                t = 2 * np.pi * a / 8
                out.append([box.x + rad * np.cos(t), box.y + rad * np.sin(t), w, h])
        out = np.asarray(out, dtype=np.float64)
        _, first = np.unique(np.round(out, 6), axis=0, return_index=True)
        return out[np.sort(first)]

    def _pattern(self, ff, box):
        boxes = self.pattern_boxes(box)
        cx = boxes[:, 0] + boxes[:, 2] / 2
        cy = boxes[:, 1] + boxes[:, 3] / 2
        height, width = ff.shape
        keep = (cx >= 0) & (cx < width) & (cy >= 0) & (cy < height)
        keep[0] = True
        boxes = boxes[keep]
        return SupportPattern(descriptors(ff, boxes, self.weights), boxes, frame_id=self.frame_index)


def run_sequence(frames, init_box, config=None):
    """Track a whole sequence; returns the tracker and the per-frame results (frame 0 included)."""
    tracker = Tracker(config).init(frames[0], init_box)
    first = FrameResult(tracker.report_box(), 1.0, float("nan"))
    results = [first]
    for k in range(1, len(frames)):
        results.append(tracker.track(frames[k]))
    return tracker, results
