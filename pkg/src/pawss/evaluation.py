"""One-pass precision/success metrics and a reinitialising accuracy/failure protocol.

Trajectories are ``(N, 4)`` arrays of ``(x, y, w, h)`` rows.  A row of NaNs
marks a lost prediction, or an absent target in ground truth; frames with an
absent target are left out of every metric.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .imaging import BoundingBox, iou

CENTER_THRESHOLDS = np.arange(0, 51, dtype=np.float64)
OVERLAP_THRESHOLDS = np.round(np.linspace(0.0, 1.0, 21), 10)
PRECISION_AT = 20.0


def as_trajectory(boxes):
    """Stack boxes (BoundingBox, 4-sequences or None for lost) into an ``(N, 4)`` array."""
    rows = []
    for b in boxes:
        if b is None:
            rows.append([np.nan] * 4)
        elif isinstance(b, BoundingBox):
            rows.append(b.as_array())
        else:
            rows.append(np.asarray(b, dtype=np.float64))
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def _pair(traj, gt):
    traj = as_trajectory(traj) if not isinstance(traj, np.ndarray) else np.asarray(traj, dtype=np.float64)
    gt = as_trajectory(gt) if not isinstance(gt, np.ndarray) else np.asarray(gt, dtype=np.float64)
    if traj.shape != gt.shape:
        raise ValueError(f"trajectory length {len(traj)} does not match ground truth length {len(gt)}")
    valid = np.isfinite(gt).all(axis=1) & (gt[:, 2] > 0) & (gt[:, 3] > 0)
    return traj[valid], gt[valid]


def center_errors(traj, gt):
    t, g = _pair(traj, gt)
    tc = t[:, :2] + t[:, 2:] / 2
    gc = g[:, :2] + g[:, 2:] / 2
    err = np.hypot(*(tc - gc).T)
    return np.where(np.isfinite(err), err, np.inf)


def overlaps(traj, gt):
    t, g = _pair(traj, gt)
    ix = np.minimum(t[:, 0] + t[:, 2], g[:, 0] + g[:, 2]) - np.maximum(t[:, 0], g[:, 0])
    iy = np.minimum(t[:, 1] + t[:, 3], g[:, 1] + g[:, 3]) - np.maximum(t[:, 1], g[:, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    union = t[:, 2] * t[:, 3] + g[:, 2] * g[:, 3] - inter
    ov = inter / np.where(union > 0, union, 1.0)
    return np.clip(np.where(np.isfinite(ov) & (union > 0), ov, 0.0), 0.0, 1.0)


def precision_curve(traj, gt, thresholds=CENTER_THRESHOLDS):
    """Fraction of frames with centre error <= each threshold; also returns PR@20."""
    err = center_errors(traj, gt)
    if err.size == 0:
        return np.zeros(len(thresholds)), 0.0
    curve = (err[None, :] <= np.asarray(thresholds)[:, None]).mean(axis=1)
    return curve, float((err <= PRECISION_AT).mean())


def success_curve(traj, gt, thresholds=OVERLAP_THRESHOLDS):
    """Fraction of frames with IoU strictly above each threshold; also returns the AUC."""
    ov = overlaps(traj, gt)
    if ov.size == 0:
        return np.zeros(len(thresholds)), 0.0
    curve = (ov[None, :] > np.asarray(thresholds)[:, None]).mean(axis=1)
    return curve, float(curve.mean())


success_auc = success_curve


def count_failures(ov):
    """Number of times the overlap drops to zero from a non-zero value (or starts at zero)."""
    zero = np.asarray(ov) <= 0
    if zero.size == 0:
        return 0
    return int(zero[0] + np.sum(zero[1:] & ~zero[:-1]))


@dataclass
class MetricReport:
    precision_curve: list
    pr20: float
    success_curve: list
    sr_auc: float
    accuracy: float
    failures: int
    n_frames: int
    center_thresholds: list = field(default_factory=lambda: CENTER_THRESHOLDS.tolist())
    overlap_thresholds: list = field(default_factory=lambda: OVERLAP_THRESHOLDS.tolist())
    mean_iou: float = 0.0
    sequence: str = ""

    def to_dict(self):
        return asdict(self)


def evaluate(traj, gt, failures=None, accuracy=None, sequence=""):
    """Full report for a trajectory; failure/accuracy may come from a reinitialising run."""
    pc, pr20 = precision_curve(traj, gt)
    sc, auc = success_curve(traj, gt)
    ov = overlaps(traj, gt)
    mean_iou = float(ov.mean()) if ov.size else 0.0
    return MetricReport(
        precision_curve=pc.tolist(),
        pr20=pr20,
        success_curve=sc.tolist(),
        sr_auc=auc,
        accuracy=mean_iou if accuracy is None else float(accuracy),
        failures=count_failures(ov) if failures is None else int(failures),
        n_frames=int(ov.size),
        mean_iou=mean_iou,
        sequence=sequence,
    )


@dataclass
class VotResult:
    accuracy: float
    failures: int
    overlaps: list
    trajectory: np.ndarray
    # per frame: "init", "track", "fail" or "skip"
    states: list


def _box_of(result):
    return result.box if hasattr(result, "box") else result


def vot_run(tracker, frames, gt, skip=0, reinit=True):
    """Run ``tracker`` with reinitialisation from ground truth after each failure.

    ``tracker`` needs ``init(frame, box)`` and ``track(frame)``; the latter may
    return a box or an object with a ``box`` attribute.  A failure is a frame
    whose overlap with ground truth is zero; the tracker is restarted from
    ground truth ``skip + 1`` frames later.  Accuracy is the mean overlap over
    tracked frames, excluding failure and (re)initialisation frames.
    """
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 4)
    n = len(frames)
    if len(gt) != n:
        raise ValueError("ground truth needed for every frame")
    traj = np.full((n, 4), np.nan)
    states = ["skip"] * n
    ovs = []
    failures = 0
    k = 0
    need_init = True
    while k < n:
        g = gt[k]
        present = np.isfinite(g).all() and g[2] > 0 and g[3] > 0
        if need_init:
            if not present:
                k += 1
                continue
            box = BoundingBox.from_array(g)
            tracker.init(frames[k], box)
            traj[k] = g
            states[k] = "init"
            need_init = False
            k += 1
            continue
        pred = _box_of(tracker.track(frames[k]))
        traj[k] = pred.as_array() if isinstance(pred, BoundingBox) else np.asarray(pred, dtype=np.float64)
        if not present:
            k += 1
            continue
        ov = iou(BoundingBox.from_array(traj[k]), BoundingBox.from_array(g))
        if ov <= 0 and reinit:
            failures += 1
            states[k] = "fail"
            need_init = True
            k += 1 + skip
            continue
        if ov <= 0 and (not ovs or ovs[-1] > 0):
            failures += 1
        states[k] = "track"
        ovs.append(ov)
        k += 1
    accuracy = float(np.mean(ovs)) if ovs else 0.0
    return VotResult(accuracy, failures, ovs, traj, states)


def perturb_init(box, seed=0, fraction=0.1):
    """Randomly shift the centre and size by up to ``fraction`` of each dimension."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, 4) * fraction
    cx, cy = box.center
    return BoundingBox.from_center(cx + u[0] * box.w, cy + u[1] * box.h, box.w * (1 + u[2]), box.h * (1 + u[3]))
