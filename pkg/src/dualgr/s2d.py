"""Bucket-filtered history for fine-level decoding.

Once the coarse (level-1) token is fixed, the fine levels condition on
the most recent actions from that same level-1 bucket, searched over the
full action list (long/short windowing does not apply here). An empty
bucket falls back to the most recent actions overall so fine decoding
never runs on statics alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .datatypes import UserContext, Window


class S2DError(ValueError):
    pass


@dataclass
class BucketSearchConfig:
    cap: int = 256  # max in-bucket actions kept
    fallback_cap: int = 64  # most-recent actions used when the bucket is empty

    def __post_init__(self):
        if self.cap < 1:
            raise S2DError("cap must be >= 1")
        if self.fallback_cap < 0 or self.fallback_cap > self.cap:
            raise S2DError("fallback_cap must be in [0, cap]")

    @classmethod
    def desk(cls, **overrides) -> "BucketSearchConfig":
        defaults = dict(cap=32, fallback_cap=8)
        defaults.update(overrides)
        return cls(**defaults)


def search_in_bucket(history, s1: int, cfg: BucketSearchConfig):
    """Most recent <= cap actions whose level-1 token equals s1, order
    preserved."""
    picked = [a for a in history if a.sid[0] == s1]
    return picked[-cfg.cap :]


def fine_context(user: UserContext, history, s1: int, cfg: BucketSearchConfig, model):
    """Encode the bucket-filtered window (fallback: most recent actions
    from the full history when the bucket is empty)."""
    bucket = search_in_bucket(history, s1, cfg)
    if not bucket and cfg.fallback_cap:
        bucket = list(history[-cfg.fallback_cap :])
    return model.encode_context(user, Window(bucket, cfg.cap))
