"""Reading sequences and ground truth, writing results, metrics, configs and overlays.

Ground-truth files use the OTB layout: one ``x,y,w,h`` box per line, 1-based,
comma or whitespace separated.  Internally boxes are 0-based.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .tracker import Config

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
RESULTS_HEADER = ("frame", "x", "y", "w", "h", "scale", "score")
_SEP = re.compile(r"[,\s]+")


class SequenceError(ValueError):
    """Raised for unreadable or inconsistent sequence data."""


# -- ground truth -----------------------------------------------------------


def parse_groundtruth(text, source="<groundtruth>"):
    """Parse OTB ground truth into a 0-based ``(N, 4)`` array.

    ``NaN`` values mark frames where the target is absent.  Blank lines are
    not allowed in the middle of the file since they would shift frame indices.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    rows = []
    for lineno, line in enumerate(lines, start=1):
        parts = [p for p in _SEP.split(line.strip()) if p]
        if len(parts) == 8:
            raise SequenceError(
                f"{source}:{lineno}: polygon ground truth is not supported; convert to axis-aligned x,y,w,h first"
            )
        if len(parts) != 4:
            raise SequenceError(f"{source}:{lineno}: expected 4 values, got {len(parts)}: {line!r}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise SequenceError(f"{source}:{lineno}: non-numeric value in {line!r}") from None
        rows.append(vals)
    if not rows:
        raise SequenceError(f"{source}: no ground-truth lines")
    gt = np.asarray(rows, dtype=np.float64)
    gt[:, :2] -= 1.0
    return gt


def load_groundtruth(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SequenceError(f"cannot read ground truth {path}: {exc}") from exc
    return parse_groundtruth(text, str(path))


def format_groundtruth(gt):
    """Text of an OTB ground-truth file (1-based) for a 0-based ``(N, 4)`` array."""
    out = []
    for row in np.asarray(gt, dtype=np.float64).reshape(-1, 4):
        vals = row.copy()
        vals[:2] += 1.0
        out.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(out) + "\n"


def save_groundtruth(path, gt):
    Path(path).write_text(format_groundtruth(gt))


# -- frames -----------------------------------------------------------------


def list_frames(directory):
    """Image files in ``directory``, sorted lexicographically.

    If every stem is numeric the indices must be contiguous; a gap is an error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise SequenceError(f"frames directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise SequenceError(f"no PNG/JPEG frames in {directory}")
    stems = [p.stem for p in files]
    if all(s.isdigit() for s in stems):
        nums = sorted(int(s) for s in stems)
        expected = set(range(nums[0], nums[-1] + 1))
        missing = sorted(expected - set(nums))
        if missing:
            raise SequenceError(f"{directory}: missing frame(s) {missing[:5]}")
    return files


def read_frame(path):
    """Decode one image into an ``(H, W, 3)`` float array in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise SequenceError(f"cannot decode frame {path}: {exc}") from exc
    return arr / 255.0


def write_frame(path, frame):
    arr = np.asarray(frame, dtype=np.float64)
    Image.fromarray(np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)).save(path)


class FrameSequence:
    """Lazily decoded frames; indexable and iterable."""

    def __init__(self, paths):
        self.paths = [Path(p) for p in paths]

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, k):
        return read_frame(self.paths[k])

    def __iter__(self):
        for p in self.paths:
            yield read_frame(p)


@dataclass
class SequenceSpec:
    frames: object  # directory path or list of image paths
    groundtruth: str | None = None
    start: int = 0
    end: int | None = None
    name: str = ""

    @classmethod
    def from_dir(cls, path):
        """OTB layout: ``img/`` (or the directory itself) plus ``groundtruth_rect.txt``."""
        path = Path(path)
        img = path / "img"
        gt = path / "groundtruth_rect.txt"
        return cls(
            frames=str(img if img.is_dir() else path),
            groundtruth=str(gt) if gt.exists() else None,
            name=path.name,
        )


def load_sequence(spec):
    """Return ``(frames, gt)``; ``gt`` is None when no ground-truth file is given."""
    if isinstance(spec.frames, (list, tuple)):
        paths = [Path(p) for p in spec.frames]
        for p in paths:
            if not p.exists():
                raise SequenceError(f"frame {p} does not exist")
    else:
        paths = list_frames(spec.frames)
    end = len(paths) if spec.end is None else spec.end
    if not 0 <= spec.start < end <= len(paths):
        raise SequenceError(f"frame range {spec.start}:{end} invalid for {len(paths)} frames")
    gt = None
    if spec.groundtruth is not None:
        gt = load_groundtruth(spec.groundtruth)
        if len(gt) < len(paths):
            raise SequenceError(f"{spec.groundtruth}: {len(gt)} boxes for {len(paths)} frames")
        gt = gt[spec.start : end]
    return FrameSequence(paths[spec.start : end]), gt


def save_sequence(directory, frames, gt=None, pattern="{:04d}.png"):
    """Write frames as PNGs (1-based numbering) and optionally ``groundtruth_rect.txt``."""
    directory = Path(directory)
    img = directory / "img"
    img.mkdir(parents=True, exist_ok=True)
    for k, f in enumerate(frames, start=1):
        write_frame(img / pattern.format(k), f)
    if gt is not None:
        save_groundtruth(directory / "groundtruth_rect.txt", gt)
    return SequenceSpec.from_dir(directory)


# -- results ------------------------------------------------------------------


def _fmt(v):
    return "nan" if not math.isfinite(v) else f"{v:.4f}"


def write_results_csv(path, boxes, scales, scores):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for k, (b, s, c) in enumerate(zip(boxes, scales, scores)):
            w.writerow([k, *(_fmt(float(v)) for v in b), _fmt(float(s)), _fmt(float(c))])


def read_results_csv(path):
    """Boxes ``(N, 4)`` from a results CSV (frame column must count up from 0)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:5]) != RESULTS_HEADER[:5]:
            raise SequenceError(f"{path}: not a results CSV (header {header})")
        for lineno, row in enumerate(reader, start=2):
            try:
                if int(row[0]) != len(rows):
                    raise ValueError("frame index out of order")
                rows.append([float(v) for v in row[1:5]])
            except (ValueError, IndexError) as exc:
                raise SequenceError(f"{path}:{lineno}: {exc}") from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def write_metrics_json(path, report):
    data = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- configuration ------------------------------------------------------------


def parse_config_text(text, source="<config>"):
    """``key = value`` lines with ``#`` comments into a dict of strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SequenceError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise SequenceError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


@dataclass
class RunConfig:
    tracker: Config = field(default_factory=Config)
    output: str = "out"
    overlay: bool = False
    metrics: tuple = ("ope",)

    @property
    def mode(self):
        return self.tracker.mode

    @property
    def seed(self):
        return self.tracker.seed

    def to_dict(self):
        d = self.tracker.to_dict()
        d.update(output=self.output, overlay=self.overlay, metrics=",".join(self.metrics))
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        run = {}
        if "output" in d:
            run["output"] = str(d.pop("output"))
        if "overlay" in d:
            run["overlay"] = _parse_bool(d.pop("overlay"))
        if "metrics" in d:
            m = d.pop("metrics")
            run["metrics"] = tuple(s for s in _SEP.split(m) if s) if isinstance(m, str) else tuple(m)
            bad = set(run["metrics"]) - {"ope", "vot"}
            if bad:
                raise SequenceError(f"unknown metric set(s) {sorted(bad)}; choose from ope, vot")
        return cls(tracker=Config.from_dict(d), **run)


def _parse_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise SequenceError(f"not a boolean: {v!r}")


def format_config(run):
    lines = [f"{k} = {_format_value(v)}" for k, v in run.to_dict().items()]
    return "\n".join(lines) + "\n"


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SequenceError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(parse_config_text(text, str(path)))


def save_config(path, run):
    Path(path).write_text(format_config(run))


# -- overlays -----------------------------------------------------------------


def heat_colour(v):
    """Blue (cold, 0) through cyan, yellow to red (warm, 1) for values in [0, 1]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    stops = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    pos = v * (len(stops) - 1)
    i = np.minimum(pos.astype(np.int64), len(stops) - 2)
    t = (pos - i)[..., None]
    return stops[i] * (1 - t) + stops[i + 1] * t


def render_overlay(frame, box, weights, cell=6, colour=(1.0, 0.0, 0.0)):
    """Frame with the box outline and a g x g heat tile of patch weights in the top-left corner."""
    img = np.array(frame, dtype=np.float64, copy=True)
    height, width = img.shape[:2]
    x0 = int(np.clip(np.floor(box.x), 0, width - 1))
    y0 = int(np.clip(np.floor(box.y), 0, height - 1))
    x1 = int(np.clip(np.ceil(box.x + box.w) - 1, 0, width - 1))
    y1 = int(np.clip(np.ceil(box.y + box.h) - 1, 0, height - 1))
    img[y0, x0 : x1 + 1] = colour
    img[y1, x0 : x1 + 1] = colour
    img[y0 : y1 + 1, x0] = colour
    img[y0 : y1 + 1, x1] = colour
    weights = np.asarray(weights, dtype=np.float64)
    g = int(round(math.sqrt(weights.size)))
    tile = np.kron(heat_colour(weights.reshape(g, g)), np.ones((cell, cell, 1)))
    th, tw = min(tile.shape[0], height), min(tile.shape[1], width)
    img[:th, :tw] = tile[:th, :tw]
    return img


def config_field_names():
    return [f.name for f in fields(Config)] + ["output", "overlay", "metrics"]

