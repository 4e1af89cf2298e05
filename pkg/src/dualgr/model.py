"""The decoder: an embedding+LayerNorm frontend over user statics and
actions, decoder blocks with causal self-attention over the emitted
prefix and cross-attention over the action memory, and one output head
per SID level.

There is no self-attention across history slots — history enters the
prediction only through cross-attention, which keeps context encoding a
single embedding pass. The level-1 vocabulary table is shared three
ways: history/decoder-input embedding, router summaries, and (tied) the
level-1 output head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .datatypes import UserContext, Window


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    level_sizes: tuple
    d_model: int = 512
    n_blocks: int = 4
    n_heads: int = 8
    d_ffn: int = 1024
    max_history: int = 1000
    static_vocab: int = 8
    n_tags: int = 4
    n_watch_buckets: int = 8
    ln_eps: float = 1e-5

    def __post_init__(self):
        self.level_sizes = tuple(int(k) for k in self.level_sizes)
        if not self.level_sizes:
            raise ModelError("need at least one SID level")
        if self.d_model % self.n_heads != 0:
            raise ModelError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")

    @classmethod
    def desk(cls, level_sizes, **overrides) -> "ModelConfig":
        """Small configuration for single-machine runs."""
        defaults = dict(d_model=64, n_blocks=2, n_heads=4, d_ffn=128, max_history=128)
        defaults.update(overrides)
        return cls(level_sizes=tuple(level_sizes), **defaults)

    @property
    def L(self) -> int:
        return len(self.level_sizes)


@dataclass
class ContextMemory:
    """Encoded cross-attention memory: statics slot + one slot per window
    action, padded to fixed length. Padding slots are exact zeros and are
    masked with a -1e9 additive bias (their attention weight underflows
    to exactly 0)."""

    vectors: "T.Tensor"  # (1 + capacity, d)
    bias_row: np.ndarray  # (1 + capacity,) of 0 / -1e9
    n_real: int

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def cross_bias(self, m: int) -> np.ndarray:
        return np.tile(self.bias_row[None, :], (m, 1))


NEG_BIAS = -1e9


class DecoderModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, T.Tensor] = {}
        rng = np.random.default_rng(seed)
        d = cfg.d_model

        def param(name, shape, std):
            if std == 0.0:
                data = np.zeros(shape, dtype=self.dtype)
            elif std == 1.0 and len(shape) == 1:
                data = np.ones(shape, dtype=self.dtype)
            else:
                data = rng.normal(0.0, std, size=shape).astype(self.dtype)
            self.params[name] = T.parameter(data, name)

        for l, k in enumerate(cfg.level_sizes, start=1):
            param(f"emb/level{l}", (k, d), 0.02)
        param("emb/bos", (1, d), 0.02)
        param("emb/pos", (cfg.max_history, d), 0.02)
        param("emb/dec_pos", (cfg.L, d), 0.02)
        param("emb/tags", (cfg.n_tags, d), 0.02)
        param("emb/watch", (cfg.n_watch_buckets, d), 0.02)
        param("emb/static", (cfg.static_vocab, d), 0.02)
        param("proj/static_W", (d, d), d**-0.5)
        param("proj/static_b", (d,), 0.0)
        param("ln_mem/gain", (d,), 1.0)
        param("ln_mem/bias", (d,), 0.0)
        for b in range(cfg.n_blocks):
            for part in ("self", "cross"):
                for w in ("Wq", "Wk", "Wv", "Wo"):
                    param(f"block{b}/{part}/{w}", (d, d), d**-0.5)
            param(f"block{b}/ffn/W1", (d, cfg.d_ffn), d**-0.5)
            param(f"block{b}/ffn/b1", (cfg.d_ffn,), 0.0)
            param(f"block{b}/ffn/W2", (cfg.d_ffn, d), cfg.d_ffn**-0.5)
            param(f"block{b}/ffn/b2", (d,), 0.0)
            for i in (1, 2, 3):
                param(f"block{b}/ln{i}/gain", (d,), 1.0)
                param(f"block{b}/ln{i}/bias", (d,), 0.0)
        param("ln_f/gain", (d,), 1.0)
        param("ln_f/bias", (d,), 0.0)
        for l, k in enumerate(cfg.level_sizes, start=1):
            if l > 1:
                param(f"head/level{l}/W", (d, k), d**-0.5)
            param(f"head/level{l}/b", (k,), 0.0)

    # -- parameter plumbing ------------------------------------------------

    def level1_table(self) -> np.ndarray:
        """Raw level-1 vocabulary embeddings (shared with the router)."""
        return self.params["emb/level1"].data

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_state_dict(self, named: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in named:
                raise ModelError(f"checkpoint missing parameter {name}")
            arr = np.asarray(named[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ModelError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = np.ascontiguousarray(arr)

    def _ln(self, x, which):
        return T.layer_norm(
            x, self.params[f"{which}/gain"], self.params[f"{which}/bias"], self.cfg.ln_eps
        )

    # -- context encoding --------------------------------------------------

    def encode_context(self, user: UserContext, window: Window) -> ContextMemory:
        cfg = self.cfg
        if window.capacity > cfg.max_history:
            raise ModelError(
                f"window capacity {window.capacity} exceeds max_history {cfg.max_history}"
            )
        if window.n_pad < 0:
            raise ModelError("window overflows its capacity")
        actions = window.actions
        n_real = len(actions)
        d = cfg.d_model

        statics = np.asarray(user.static_features, dtype=np.int64)
        if statics.size:
            stat_sum = T.matmul(
                T.constant(np.ones((1, statics.size), dtype=self.dtype)),
                T.embedding(self.params["emb/static"], statics),
            )
        else:
            stat_sum = T.constant(np.zeros((1, d), dtype=self.dtype))
        stat_slot = T.add_bias(
            T.matmul(stat_sum, self.params["proj/static_W"]), self.params["proj/static_b"]
        )

        rows = [stat_slot]
        if n_real:
            slot = None
            for l in range(cfg.L):
                ids = np.fromiter((a.sid[l] for a in actions), dtype=np.int64, count=n_real)
                e = T.embedding(self.params[f"emb/level{l + 1}"], ids)
                slot = e if slot is None else T.add(slot, e)
            watch = np.fromiter(
                (a.watch_time_bucket for a in actions), dtype=np.int64, count=n_real
            )
            slot = T.add(slot, T.embedding(self.params["emb/watch"], watch))
            # recency-anchored positions: most recent action is position 0
            pos = np.arange(n_real - 1, -1, -1, dtype=np.int64)
            slot = T.add(slot, T.embedding(self.params["emb/pos"], pos))
            tag_ids, owners = [], []
            for i, a in enumerate(actions):
                for t in a.tag_ids:
                    tag_ids.append(t)
                    owners.append(i)
            if tag_ids:
                tag_e = T.embedding(self.params["emb/tags"], np.asarray(tag_ids, dtype=np.int64))
                slot = T.add(slot, T.segment_sum(tag_e, np.asarray(owners, dtype=np.int64), n_real))
            rows.append(slot)

        real = self._ln(T.concat_rows(rows), "ln_mem")
        n_pad = window.n_pad
        if n_pad:
            pad = T.constant(np.zeros((n_pad, d), dtype=self.dtype))
            real = T.concat_rows([real, pad])
        bias_row = np.zeros(1 + window.capacity, dtype=self.dtype)
        bias_row[1 + n_real :] = NEG_BIAS
        return ContextMemory(vectors=real, bias_row=bias_row, n_real=n_real)

    # -- decoding ----------------------------------------------------------

    def _causal_bias(self, m: int) -> np.ndarray:
        bias = np.zeros((m, m), dtype=self.dtype)
        bias[np.triu_indices(m, k=1)] = NEG_BIAS
        return bias

    def decode_states(self, tokens, memory: ContextMemory) -> "T.Tensor":
        """Decoder stack over [BOS, tokens...]; returns one state per
        input position. Position p predicts level p+1."""
        cfg = self.cfg
        if len(tokens) >= cfg.L:
            raise ModelError(f"prefix length {len(tokens)} must be < L={cfg.L}")
        m = 1 + len(tokens)
        rows = [T.embedding(self.params["emb/bos"], np.array([0], dtype=np.int64))]
        for l, tok in enumerate(tokens, start=1):
            rows.append(T.embedding(self.params[f"emb/level{l}"], np.array([tok], dtype=np.int64)))
        x = T.concat_rows(rows) if len(rows) > 1 else rows[0]
        x = T.add(x, T.embedding(self.params["emb/dec_pos"], np.arange(m, dtype=np.int64)))

        causal = self._causal_bias(m)
        cross = memory.cross_bias(m)
        for b in range(cfg.n_blocks):
            h = self._ln(x, f"block{b}/ln1")
            a = T.masked_attention(
                T.matmul(h, self.params[f"block{b}/self/Wq"]),
                T.matmul(h, self.params[f"block{b}/self/Wk"]),
                T.matmul(h, self.params[f"block{b}/self/Wv"]),
                causal,
                cfg.n_heads,
            )
            x = T.add(x, T.matmul(a, self.params[f"block{b}/self/Wo"]))

            h = self._ln(x, f"block{b}/ln2")
            c = T.masked_attention(
                T.matmul(h, self.params[f"block{b}/cross/Wq"]),
                T.matmul(memory.vectors, self.params[f"block{b}/cross/Wk"]),
                T.matmul(memory.vectors, self.params[f"block{b}/cross/Wv"]),
                cross,
                cfg.n_heads,
            )
            x = T.add(x, T.matmul(c, self.params[f"block{b}/cross/Wo"]))

            h = self._ln(x, f"block{b}/ln3")
            f = T.matmul(
                T.relu(T.add_bias(T.matmul(h, self.params[f"block{b}/ffn/W1"]), self.params[f"block{b}/ffn/b1"])),
                self.params[f"block{b}/ffn/W2"],
            )
            x = T.add(x, T.add_bias(f, self.params[f"block{b}/ffn/b2"]))
        return self._ln(x, "ln_f")

    def head(self, level: int, h: "T.Tensor") -> "T.Tensor":
        if level == 1:
            W = T.transpose(self.params["emb/level1"])  # weight tying
        else:
            W = self.params[f"head/level{level}/W"]
        return T.add_bias(T.matmul(h, W), self.params[f"head/level{level}/b"])

    def decode_logits(self, prefix, memory: ContextMemory, level: int) -> "T.Tensor":
        """Unnormalized scores for the level-`level` token given the
        emitted prefix; softmax of the result is the conditional
        distribution at that level."""
        cfg = self.cfg
        if not 1 <= level <= cfg.L:
            raise ModelError(f"level {level} out of range 1..{cfg.L}")
        if len(prefix) != level - 1:
            raise ModelError(f"prefix depth {len(prefix)} != level-1 = {level - 1}")
        for l, tok in enumerate(prefix):
            if not 0 <= tok < cfg.level_sizes[l]:
                raise ModelError(f"prefix token {tok} out of range at level {l + 1}")
        states = self.decode_states(prefix, memory)
        last = T.slice_rows(states, len(prefix), len(prefix) + 1)
        return self.head(level, last)

    def decode_levels_teacher(self, sid, memory: ContextMemory, levels) -> dict:
        """One causal pass over the ground-truth prefix; returns logits
        for each requested level (teacher forcing)."""
        levels = sorted(levels)
        depth = levels[-1] - 1
        states = self.decode_states(tuple(sid[:depth]), memory)
        out = {}
        for level in levels:
            h = T.slice_rows(states, level - 1, level)
            out[level] = self.head(level, h)
        return out
