"""
Patch weights and overlays
==========================

Each of the 49 patches of the box carries a weight: the running average of
how foreground-like its pixels look to a recursive colour segmentation.  Here
the initial box is deliberately too large, so its outer ring of patches covers
background; their weights decay while the centre stays near 1.  The weights
are drawn as a heat tile (blue = low, red = high) in the corner of each
overlay frame.
"""

import sys
from pathlib import Path

import numpy as np

from pawss import BoundingBox, Config, Tracker
from pawss.io import render_overlay, write_frame
from pawss.synth import synth_sequence

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_overlays")
out.mkdir(exist_ok=True)

frames, gt = synth_sequence("translate", n_frames=25, seed=2)
x, y, w, h = gt[0]
loose = BoundingBox(x - 0.2 * w, y - 0.2 * h, 1.4 * w, 1.4 * h)
tr = Tracker(Config()).init(frames[0], loose)

for k in range(1, len(frames)):
    res = tr.track(frames[k])
    if k % 8 == 0 or k == len(frames) - 1:
        grid = tr.weights.reshape(7, 7)
        print(f"frame {k}: border mean {np.r_[grid[0], grid[-1], grid[1:-1, 0], grid[1:-1, -1]].mean():.3f}  "
              f"centre mean {grid[2:5, 2:5].mean():.3f}")
    write_frame(out / f"{k:04d}.png", render_overlay(frames[k], res.box, tr.weights))

print(f"\noverlays written to {out}/")
print(np.array2string(tr.weights.reshape(7, 7), precision=2))
