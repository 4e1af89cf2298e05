"""Residual k-means quantization of item vectors into hierarchical SIDs.

Level 1 clusters the raw vectors; each deeper level clusters the
residuals left after subtracting the centroids assigned so far. Fitting
runs in float64 for stable, reproducible centroids regardless of the
build-wide training dtype.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from . import checkpoint
from .datatypes import Sid


class QuantizerError(ValueError):
    pass


@dataclass
class QuantizerConfig:
    max_iters: int = 50
    seed: int = 0
    init: str = "kmeans++"  # or "sample"

    def __post_init__(self):
        if self.max_iters < 1:
            raise QuantizerError("max_iters must be >= 1")
        if self.init not in ("kmeans++", "sample"):
            raise QuantizerError(f"unknown init {self.init!r}")


@dataclass
class CodebookHierarchy:
    levels: list  # list[np.ndarray], level l has shape (level_sizes[l], d)
    level_sizes: tuple

    @property
    def L(self) -> int:
        return len(self.levels)

    @property
    def d(self) -> int:
        return self.levels[0].shape[1]

    def reconstruct(self, sid: Sid) -> np.ndarray:
        """Sum of the centroids named by a SID."""
        return sum(self.levels[l][sid[l]] for l in range(self.L))


@dataclass
class QuantizationReport:
    per_level_mse: list
    per_level_token_histogram: list  # list of lists, one count per token
    collision_count: int  # items sharing their full SID with another item

    def to_dict(self) -> dict:
        return {
            "per_level_mse": self.per_level_mse,
            "per_level_token_histogram": self.per_level_token_histogram,
            "collision_count": self.collision_count,
        }


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeding by squared-distance-weighted sampling over data points."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=points.dtype)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all points coincide with chosen centroids; fall back to uniform
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _init_centroids(points, k, cfg: QuantizerConfig, rng) -> np.ndarray:
    if cfg.init == "kmeans++":
        return kmeans_plusplus(points, k, rng)
    picks = rng.choice(points.shape[0], size=k, replace=False)
    return points[np.sort(picks)].copy()


def _assign_with_repair(points, centroids):
    """Nearest-centroid assignment; empty clusters are handed the point
    currently farthest from its centroid, one at a time."""
    k = centroids.shape[0]
    labels, sqd = K.kmeans_assign(points, centroids)
    repaired = False
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        repaired = True
        sqd = sqd.copy()
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(sqd))
            labels[far] = j
            sqd[far] = 0.0
    return labels, float(sqd.sum()), repaired


def lloyd(points: np.ndarray, centroids: np.ndarray, max_iters: int):
    """Plain Lloyd iterations from given centroids.

    Returns (centroids, labels, sse_history, repaired_iters). The
    returned labels always correspond to the returned centroids.
    Assignment SSE is monotone non-increasing across iterations in which
    no empty-cluster repair fired.
    """
    k = centroids.shape[0]
    centroids = centroids.copy()
    prev = None
    sse_history: list[float] = []
    repaired_iters: list[int] = []
    converged = False
    for it in range(max_iters):
        labels, sse, repaired = _assign_with_repair(points, centroids)
        sse_history.append(sse)
        if repaired:
            repaired_iters.append(it)
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        prev = labels
        for j in range(k):
            members = points[labels == j]
            if members.shape[0]:
                centroids[j] = members.mean(axis=0)
    if not converged:
        # last action above was an update; refresh labels to match it
        labels, sse, repaired = _assign_with_repair(points, centroids)
        sse_history.append(sse)
        if repaired:
            repaired_iters.append(len(sse_history) - 1)
    return centroids, labels, sse_history, repaired_iters


def fit(vectors: np.ndarray, level_sizes, config: QuantizerConfig | None = None) -> CodebookHierarchy:
    """Fit one codebook per level over successive residuals.

    Each level draws from its own RNG stream (seed, level) so level
    fits are independent of each other's sampling.
    """
    cfg = config or QuantizerConfig()
    pts = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] < 1:
        raise QuantizerError(f"vectors must be (N,d), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise QuantizerError("non-finite input vectors")
    level_sizes = tuple(int(k) for k in level_sizes)
    if any(k < 1 for k in level_sizes):
        raise QuantizerError("level sizes must be >= 1")
    n = pts.shape[0]
    if n < max(level_sizes):
        raise QuantizerError(f"need N >= max level size, got N={n} sizes={level_sizes}")

    residual = pts.copy()
    levels = []
    prev_mse = None
    for lvl, k in enumerate(level_sizes):
        rng = np.random.default_rng([cfg.seed, lvl])
        init = _init_centroids(residual, k, cfg, rng)
        centroids, labels, sse_history, repaired = lloyd(residual, init, cfg.max_iters)
        # monotone Lloyd objective, checked on adjacent repair-free steps
        for i in range(len(sse_history) - 1):
            if i in repaired or (i + 1) in repaired:
                continue
            a, b = sse_history[i], sse_history[i + 1]
            if b > a + 1e-9 * max(1.0, a):
                raise QuantizerError(f"level {lvl + 1}: assignment SSE increased {a} -> {b}")
        levels.append(centroids)
        residual = residual - centroids[labels]
        mse = float((residual**2).sum(axis=1).mean())
        if prev_mse is not None and mse > prev_mse + 1e-9 * max(1.0, prev_mse):
            raise QuantizerError(f"level {lvl + 1}: residual MSE increased {prev_mse} -> {mse}")
        prev_mse = mse
    return CodebookHierarchy(levels=levels, level_sizes=level_sizes)


def encode(vector: np.ndarray, codebooks: CodebookHierarchy) -> Sid:
    """Greedy per-level nearest-centroid assignment of one vector."""
    return encode_batch(np.asarray(vector, dtype=np.float64)[None, :], codebooks)[0]


def encode_batch(vectors: np.ndarray, codebooks: CodebookHierarchy) -> list:
    pts = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != codebooks.d:
        raise QuantizerError(f"expected (N,{codebooks.d}) vectors, got {pts.shape}")
    residual = pts.copy()
    tokens = []
    for level in codebooks.levels:
        labels, _ = K.kmeans_assign(residual, np.ascontiguousarray(level))
        tokens.append(labels)
        residual -= level[labels]
    return [tuple(int(tokens[l][i]) for l in range(codebooks.L)) for i in range(pts.shape[0])]


def quantization_report(vectors: np.ndarray, codebooks: CodebookHierarchy) -> QuantizationReport:
    pts = np.ascontiguousarray(np.asarray(vectors, dtype=np.float64))
    residual = pts.copy()
    per_level_mse = []
    histograms = []
    all_tokens = []
    for level, k in zip(codebooks.levels, codebooks.level_sizes):
        labels, _ = K.kmeans_assign(residual, np.ascontiguousarray(level))
        residual -= level[labels]
        per_level_mse.append(float((residual**2).sum(axis=1).mean()))
        histograms.append(np.bincount(labels, minlength=k).tolist())
        all_tokens.append(labels)
    sids = list(zip(*[t.tolist() for t in all_tokens]))
    counts: dict[tuple, int] = {}
    for s in sids:
        counts[s] = counts.get(s, 0) + 1
    collisions = sum(c for c in counts.values() if c > 1)
    return QuantizationReport(per_level_mse, histograms, collisions)


# ---------------------------------------------------------------------------
# persistence


def save_codebooks(path, codebooks: CodebookHierarchy) -> None:
    named = {f"level{l + 1}/centroids": codebooks.levels[l] for l in range(codebooks.L)}
    checkpoint.save_tensors(path, named)


def load_codebooks(path) -> CodebookHierarchy:
    named = checkpoint.load_tensors(path)
    levels = []
    for l in range(len(named)):
        key = f"level{l + 1}/centroids"
        if key not in named:
            raise QuantizerError(f"{path}: missing {key}")
        levels.append(np.ascontiguousarray(named[key]))
    return CodebookHierarchy(levels=levels, level_sizes=tuple(c.shape[0] for c in levels))


def write_sid_csv(path, item_ids, sids) -> None:
    """item_id, s1, s2, ... rows for the full corpus."""
    depth = len(sids[0]) if sids else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id"] + [f"s{l + 1}" for l in range(depth)])
        for item_id, sid in zip(item_ids, sids):
            writer.writerow([item_id, *sid])


def read_sid_csv(path) -> list:
    """Returns [(item_id, sid), ...] in file order."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        depth = len(header) - 1
        for row in reader:
            out.append((int(row[0]), tuple(int(row[1 + l]) for l in range(depth))))
    return out
