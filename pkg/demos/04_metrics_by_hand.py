"""
Benchmark metrics on scripted trajectories
==========================================

Precision plots count frames whose centre error is within a pixel threshold;
success plots count frames whose overlap exceeds an IoU threshold.  The
reinitialising protocol restarts the tracker after a zero-overlap frame and
reports accuracy over the frames actually tracked.
"""

import numpy as np

from pawss import BoundingBox
from pawss.evaluation import OVERLAP_THRESHOLDS, precision_curve, success_curve, vot_run

gt = np.tile([50.0, 50.0, 20.0, 20.0], (10, 1))

# A constant 3-4-5 offset: every centre error is exactly 5 px.
curve, pr20 = precision_curve(gt + [3, 4, 0, 0], gt)
print("precision at 0..8 px:", curve[:9], " PR@20 =", pr20)

# A perfect trajectory: every IoU is 1, which is above every threshold except 1.0.
curve, auc = success_curve(gt, gt)
print("success curve (perfect):", curve)
print(f"AUC = {auc:.4f} = 20/21 = {20 / 21:.4f}  (thresholds {OVERLAP_THRESHOLDS[0]}..{OVERLAP_THRESHOLDS[-1]})")


class Scripted:
    """Returns a box with a chosen overlap on each frame (frames are their own indices)."""

    def __init__(self, overlaps):
        self.overlaps = overlaps

    def init(self, frame, box):
        print(f"  (re)initialised on frame {frame}")

    def track(self, frame):
        v = self.overlaps[frame]
        dx = 100.0 if v == 0 else 20 * (1 - v) / (1 + v)
        return BoundingBox(50 + dx, 50, 20, 20)


res = vot_run(Scripted({1: 0.8, 2: 0.5, 3: 0.0, 4: 0.3, 5: 0.9}), list(range(6)), gt[:6])
print("\nframe states:", res.states)
print(f"failures {res.failures}, accuracy {res.accuracy:.4f} (mean of 0.8, 0.5, 0.9 = {np.mean([0.8, 0.5, 0.9]):.4f})")
