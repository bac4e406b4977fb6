"""Patch-weighted, scale-adaptive tracking-by-detection.

A structured-output SVM tracker whose descriptor weights image patches by
how object-like their colours are, and whose candidate scales combine a
geometric ladder with an optical-flow estimate for abrupt changes.
"""

__version__ = "0.1.0"

from .imaging import BoundingBox, iou
from .tracker import Config, FrameResult, Tracker, run_sequence

__all__ = ["BoundingBox", "Config", "FrameResult", "Tracker", "iou", "run_sequence", "__version__"]
