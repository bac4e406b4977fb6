"""Budgeted online structured-output SVM with a linear kernel.

Training data arrive as *support patterns*: the candidate descriptors of one
frame, row 0 being the box that was selected, with a structured loss
``1 - IoU`` per candidate.  The dual is optimised with SMO steps between pairs
of candidates of the same pattern (ProcessNew / ProcessOld / Optimize) and the
number of support vectors is capped by evicting the one whose removal moves
the weight vector least.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .imaging import iou_many

FORMAT_VERSION = 1
# |beta| below this is treated as zero and the vector dropped
BETA_EPS = 1e-8


@dataclass(frozen=True)
class LearnerConfig:
    C: float = 100.0
    budget: int = 100
    reprocess_steps: int = 10
    optimize_steps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0 or self.budget < 1 or self.reprocess_steps < 0 or self.optimize_steps < 0:
            raise ValueError(f"invalid learner config: {self}")


@dataclass(eq=False)
class SupportPattern:
    """Candidates of one frame.  Row 0 of ``descriptors`` is the true box."""

    descriptors: np.ndarray
    boxes: np.ndarray
    frame_id: int | None = None
    losses: np.ndarray = field(default=None)
    # beta per candidate; zero entries are not support vectors
    beta: np.ndarray = field(default=None)

    def __post_init__(self):
        # float32 storage halves memory; arithmetic upcasts against the float64 weights
        self.descriptors = np.asarray(self.descriptors, dtype=np.float32)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        if len(self.boxes) != len(self.descriptors):
            raise ValueError("one box per descriptor required")
        if self.losses is None:
            self.losses = 1.0 - iou_many(self.boxes, self.boxes[0])
            self.losses[0] = 0.0
        if self.beta is None:
            self.beta = np.zeros(len(self.descriptors))

    @property
    def sv_indices(self):
        return np.flatnonzero(self.beta != 0)


class Learner:
    def __init__(self, dim, config=None):
        self.dim = int(dim)
        self.config = config or LearnerConfig()
        self.patterns: list[SupportPattern] = []
        self.w = np.zeros(self.dim)
        self.rng = np.random.default_rng(self.config.seed)
        self._next_id = 0

    # -- queries -----------------------------------------------------------

    @property
    def n_support_vectors(self):
        return int(sum(len(p.sv_indices) for p in self.patterns))

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"descriptor dimension {x.shape[-1]} does not match model dimension {self.dim}")
        return x

    def score(self, descriptor):
        """Linear score; accepts one descriptor or a stack of them."""
        return self._check(descriptor) @ self.w

    def positive_similarity(self, descriptor):
        """Largest cosine similarity to a positive support vector (1 if there is none)."""
        d = self._check(descriptor)
        pos = [p.descriptors[i] for p in self.patterns for i in p.sv_indices if p.beta[i] > 0]
        if not pos:
            return 1.0
        dn = np.linalg.norm(d)
        if dn == 0:
            return 0.0
        P = np.asarray(pos, dtype=np.float64)
        norms = np.linalg.norm(P, axis=1)
        ok = norms > 0
        if not ok.any():
            return 0.0
        return float(np.max(P[ok] @ d / (norms[ok] * dn)))

    def dual_objective(self):
        lin = sum(float(p.losses @ p.beta) for p in self.patterns)
        return -lin - 0.5 * float(self.w @ self.w)

    def state_hash(self):
        h = hashlib.sha256()
        for p in self.patterns:
            idx = p.sv_indices
            h.update(np.int64(p.frame_id).tobytes())
            h.update(idx.astype(np.int64).tobytes())
            h.update(p.beta[idx].tobytes())
        h.update(self.w.tobytes())
        return h.hexdigest()

    # -- optimisation ------------------------------------------------------

    def _gradients(self, p, idx=None):
        X = p.descriptors if idx is None else p.descriptors[idx]
        L = p.losses if idx is None else p.losses[idx]
        return -L - X @ self.w

    def smo_step(self, p, ip, im):
        """Exact line search moving weight from candidate ``im`` to ``ip`` of pattern ``p``."""
        if ip == im:
            return 0.0
        xp = p.descriptors[ip].astype(np.float64)
        xm = p.descriptors[im].astype(np.float64)
        diff = xp - xm
        curv = float(diff @ diff)
        if curv <= 0:
            return 0.0
        gp = -p.losses[ip] - xp @ self.w
        gm = -p.losses[im] - xm @ self.w
        upper = (self.config.C if ip == 0 else 0.0) - p.beta[ip]
        lam = min(max((gp - gm) / curv, 0.0), max(upper, 0.0))
        if lam == 0.0:
            return 0.0
        p.beta[ip] += lam
        p.beta[im] -= lam
        self.w += lam * diff
        self._tidy(p)
        return lam

    def _tidy(self, p):
        small = (np.abs(p.beta) < BETA_EPS) & (p.beta != 0)
        if not small.any():
            return
        if abs(p.beta[0]) < BETA_EPS:
            # no positive mass left, so every negative is tiny too
            p.beta[:] = 0.0
        else:
            small[0] = False
            p.beta[0] += p.beta[small].sum()
            p.beta[small] = 0.0
        self._refresh_w()

    def _refresh_w(self):
        w = np.zeros(self.dim)
        for p in self.patterns:
            idx = p.sv_indices
            if len(idx):
                w += p.beta[idx] @ p.descriptors[idx].astype(np.float64)
        self.w = w
        self.patterns = [p for p in self.patterns if len(p.sv_indices)]

    def process_new(self, p):
        g = self._gradients(p)
        self.smo_step(p, 0, int(np.argmin(g)))

    def _pick_old(self):
        if not self.patterns:
            return None
        return self.patterns[int(self.rng.integers(len(self.patterns)))]

    def _best_plus(self, p, g_sv, sv):
        bounds = np.where(sv == 0, self.config.C, 0.0)
        ok = p.beta[sv] < bounds
        if not ok.any():
            return None
        return int(sv[ok][np.argmax(g_sv[ok])])

    def process_old(self):
        p = self._pick_old()
        if p is None:
            return
        sv = p.sv_indices
        g = self._gradients(p)
        ip = self._best_plus(p, g[sv], sv)
        if ip is not None:
            self.smo_step(p, ip, int(np.argmin(g)))

    def optimize(self):
        p = self._pick_old()
        if p is None:
            return
        sv = p.sv_indices
        g = self._gradients(p, sv)
        ip = self._best_plus(p, g, sv)
        if ip is not None:
            self.smo_step(p, ip, int(sv[np.argmin(g)]))

    def update(self, pattern):
        """Add a pattern and run one round of online optimisation."""
        if pattern.descriptors.shape[1] != self.dim:
            raise ValueError("pattern dimension does not match model")
        if pattern.frame_id is None:
            pattern.frame_id = self._next_id
        self._next_id = max(self._next_id, pattern.frame_id) + 1
        self.patterns.append(pattern)
        self.process_new(pattern)
        if not len(pattern.sv_indices):
            self.patterns = [q for q in self.patterns if q is not pattern]
        self.budget_maintain()
        for _ in range(self.config.reprocess_steps):
            self.process_old()
            self.budget_maintain()
            for _ in range(self.config.optimize_steps):
                self.optimize()
        self._refresh_w()

    def eviction_costs(self):
        """``[(cost, pattern, index)]`` for every negative support vector."""
        out = []
        for p in self.patterns:
            if p.beta[0] <= 0:
                continue
            x0 = p.descriptors[0].astype(np.float64)
            for i in p.sv_indices:
                if p.beta[i] < 0:
                    d = p.descriptors[i].astype(np.float64) - x0
                    out.append((p.beta[i] ** 2 * float(d @ d), p, int(i)))
        return out

    def budget_maintain(self):
        while self.n_support_vectors > self.config.budget:
            costs = self.eviction_costs()
            if not costs:
                break
            _, p, i = min(costs, key=lambda c: c[0])
            p.beta[0] += p.beta[i]
            p.beta[i] = 0.0
            self._tidy(p)
            self._refresh_w()

    # -- persistence -------------------------------------------------------

    def save(self, path):
        arrays = {"w": self.w, "frame_ids": np.array([p.frame_id for p in self.patterns], dtype=np.int64)}
        for k, p in enumerate(self.patterns):
            arrays[f"p{k}_x"] = p.descriptors
            arrays[f"p{k}_boxes"] = p.boxes
            arrays[f"p{k}_loss"] = p.losses
            arrays[f"p{k}_beta"] = p.beta
        meta = {
            "format_version": FORMAT_VERSION,
            "dim": self.dim,
            "config": asdict(self.config),
            "next_id": self._next_id,
            "rng": self.rng.bit_generator.state,
        }
        np.savez_compressed(path, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported learner dump version {meta.get('format_version')}")
            lr = cls(meta["dim"], LearnerConfig(**meta["config"]))
            lr.rng.bit_generator.state = meta["rng"]
            lr._next_id = meta["next_id"]
            for k, fid in enumerate(z["frame_ids"]):
                lr.patterns.append(
                    SupportPattern(z[f"p{k}_x"], z[f"p{k}_boxes"], int(fid), z[f"p{k}_loss"].copy(), z[f"p{k}_beta"].copy())
                )
            lr.w = z["w"].copy()
        return lr
