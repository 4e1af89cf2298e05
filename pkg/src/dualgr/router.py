"""Dual-branch long/short-term routing.

Training: pool level-1 SID embeddings of each window into a summary,
compare both summaries to the target's level-1 embedding by cosine, and
hard-gate to the closer window. The gate carries no gradient — the
similarities appear in no loss term; they only pick which window feeds
the encoder. Inference materializes both branches and decoding runs once
per branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datatypes import UserContext, Window


class RouterError(ValueError):
    pass


@dataclass
class WindowConfig:
    L_long: int = 1000
    L_short: int = 64
    allow_degenerate: bool = False  # tests only: permits L_short == L_long

    def __post_init__(self):
        if self.L_long < 1 or self.L_short < 1:
            raise RouterError("window lengths must be >= 1")
        if self.L_short > self.L_long or (self.L_short == self.L_long and not self.allow_degenerate):
            raise RouterError(f"need L_short < L_long, got {self.L_short} >= {self.L_long}")

    @classmethod
    def desk(cls, **overrides) -> "WindowConfig":
        defaults = dict(L_long=100, L_short=10)
        defaults.update(overrides)
        return cls(**defaults)


@dataclass
class RouteDecision:
    branch: str  # "long" | "short"
    gamma_long: float
    gamma_short: float


def make_windows(history, cfg: WindowConfig):
    """Most recent L_long / L_short actions; the short window is a suffix
    of the long one. Missing actions are padding (tracked by capacity)."""
    long_w = Window(list(history[-cfg.L_long :]), cfg.L_long)
    short_w = Window(list(history[-cfg.L_short :]), cfg.L_short)
    return long_w, short_w


def summarize(window: Window, level1_table: np.ndarray) -> np.ndarray:
    """Mean level-1 embedding over the window's real actions; all-pad
    windows summarize to the zero vector."""
    if not window.actions:
        return np.zeros(level1_table.shape[1], dtype=np.float64)
    ids = np.fromiter((a.sid[0] for a in window.actions), dtype=np.int64)
    return level1_table[ids].astype(np.float64).mean(axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def route(target_s1: int, r_long: np.ndarray, r_short: np.ndarray, level1_table: np.ndarray) -> RouteDecision:
    """Cosine similarities of both summaries to the target's level-1
    embedding; ties go short (recency wins)."""
    if not 0 <= target_s1 < level1_table.shape[0]:
        raise RouterError(f"target token {target_s1} out of range")
    e = level1_table[target_s1].astype(np.float64)
    gamma_long = _cosine(e, r_long)
    gamma_short = _cosine(e, r_short)
    branch = "short" if gamma_short >= gamma_long else "long"
    return RouteDecision(branch=branch, gamma_long=gamma_long, gamma_short=gamma_short)


def routed_window(history, target_s1: int, cfg: WindowConfig, level1_table: np.ndarray):
    """Training-time hard gate: the window whose summary is closer to the
    target. Returns (window, decision)."""
    long_w, short_w = make_windows(history, cfg)
    decision = route(
        target_s1,
        summarize(long_w, level1_table),
        summarize(short_w, level1_table),
        level1_table,
    )
    return (short_w if decision.branch == "short" else long_w), decision


def inference_contexts(user: UserContext, cfg: WindowConfig, model):
    """Both branches encoded; downstream decoding runs once per branch."""
    long_w, short_w = make_windows(user.history, cfg)
    return model.encode_context(user, long_w), model.encode_context(user, short_w)
