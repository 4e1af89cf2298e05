"""Shared record types used across the pipeline.

A semantic ID (SID) is a plain tuple of ints, one token per codebook
level, coarse to fine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

Sid = tuple  # tuple[int, ...] alias; kept loose for ergonomic literals


@dataclass(frozen=True, slots=True)
class ActionRecord:
    """One logged interaction as seen by the model."""

    item_id: int
    sid: Sid
    timestamp: int
    clicked: bool
    watch_time_bucket: int = 0
    tag_ids: tuple = ()


@dataclass(slots=True)
class UserContext:
    """Static user features plus the chronological action history."""

    user_id: int
    static_features: tuple = ()
    history: list = field(default_factory=list)  # list[ActionRecord], time-ordered


@dataclass(frozen=True, slots=True)
class LogRecord:
    """One raw simulator log line (pre-SID)."""

    user_id: int
    item_id: int
    timestamp: int
    clicked: int
    watch_time_bucket: int
    tags: tuple


@dataclass(slots=True)
class Window:
    """A fixed-capacity suffix of a history: real actions plus implicit
    left-padding up to capacity."""

    actions: list  # list[ActionRecord], chronological
    capacity: int

    @property
    def n_pad(self) -> int:
        return self.capacity - len(self.actions)
