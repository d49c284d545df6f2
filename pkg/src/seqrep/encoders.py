"""Sequence encoders over embedded transactions.

Both encoders consume the same per-transaction input: the MCC embedding row
concatenated with the transformed amount (width d_emb + 1). The GRU is
strictly causal; the transformer is bidirectional with sinusoidal positions
and a prepended CLS slot. Forward passes run batched on padded arrays, and
record on the active tape only when gradients are required, so the same code
serves training and inference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data.types import ClientSequence
from .nn import (
    Tensor,
    add,
    concat,
    gather,
    layer_norm,
    matmul,
    multiply,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    softmax_op,
    subtract,
    take_slice,
    tanh,
    transpose,
)

__all__ = [
    "EncoderConfig",
    "HiddenSequence",
    "GlobalRepresentation",
    "Linear",
    "GruCore",
    "GruEncoder",
    "TransformerEncoder",
    "build_encoder",
    "embed_batch",
    "gru_cell",
    "encode_sequence",
    "pool_global",
    "pool_batch",
    "POOL_STRATEGIES",
]

POOL_STRATEGIES = ("last", "mean", "max", "first_token")

MASK_SCORE = -1e30


@dataclass
class EncoderConfig:
    n_indices: int
    d_emb: int = 16
    hidden: int = 64
    arch: str = "gru"
    blocks: int = 2
    heads: int = 4
    ff: int = 128
    pool: str = "last"

    def __post_init__(self):
        if self.arch not in ("gru", "transformer"):
            raise ValueError(f"unknown encoder arch {self.arch!r}")
        if self.pool not in POOL_STRATEGIES:
            raise ValueError(f"unknown pooling strategy {self.pool!r}")
        if self.arch == "transformer" and self.hidden % self.heads != 0:
            raise ValueError(
                f"hidden width {self.hidden} not divisible by {self.heads} heads"
            )

    @property
    def input_width(self) -> int:
        return self.d_emb + 1


@dataclass
class HiddenSequence:
    """Per-timestep encoder states for one sequence (no padding)."""

    vectors: np.ndarray
    timestamps: np.ndarray
    cls: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class GlobalRepresentation:
    vector: np.ndarray
    strategy: str


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    """Weight + bias pair applied to the trailing axis."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int,
                 prefix: str):
        self.w = Tensor(_glorot(rng, fan_in, fan_out), requires_grad=True)
        self.b = Tensor(np.zeros(fan_out), requires_grad=True)
        self.prefix = prefix

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.prefix}/w", self.w), (f"{self.prefix}/b", self.b)]


def embed_batch(table: Tensor, mcc_idx: np.ndarray, amounts_t: np.ndarray) -> Tensor:
    """Embedding rows concatenated with the transformed amount scalar.

    mcc_idx and amounts_t are (B, L) arrays; the result is (B, L, d_emb + 1).
    Index 0 stays the zero row by construction, so padding and masked
    positions contribute a zero embedding with whatever amount was set.
    """
    emb = gather(table, mcc_idx)
    amt = Tensor(np.ascontiguousarray(amounts_t, dtype=np.float64)[..., None])
    return concat([emb, amt], axis=-1)


def gru_cell(x: Tensor, h: Tensor, p: dict[str, Tensor]) -> Tensor:
    """One GRU step: h_next = (1 - z) * h + z * h_tilde."""
    z = sigmoid(add(add(matmul(x, p["w_z"]), matmul(h, p["u_z"])), p["b_z"]))
    r = sigmoid(add(add(matmul(x, p["w_r"]), matmul(h, p["u_r"])), p["b_r"]))
    h_tilde = tanh(
        add(add(matmul(x, p["w_h"]), matmul(multiply(r, h), p["u_h"])), p["b_h"])
    )
    one = Tensor(np.ones(()))
    return add(multiply(subtract(one, z), h), multiply(z, h_tilde))


class GruCore:
    """Gate parameters plus the scan over an embedded (B, L, d_in) block."""

    def __init__(self, rng: np.random.Generator, d_in: int, d: int):
        self.d_in = d_in
        self.d = d
        self.gates: dict[str, Tensor] = {}
        for gate in ("z", "r", "h"):
            self.gates[f"w_{gate}"] = Tensor(_glorot(rng, d_in, d), requires_grad=True)
            self.gates[f"u_{gate}"] = Tensor(_glorot(rng, d, d), requires_grad=True)
            self.gates[f"b_{gate}"] = Tensor(np.zeros(d), requires_grad=True)

    def parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}/{name}", self.gates[name]) for name in sorted(self.gates)]

    def scan(self, x: Tensor, h0: Optional[Tensor] = None) -> Tensor:
        """All hidden states for embedded inputs x (B, L, d_in) -> (B, L, d)."""
        b, length, _ = x.shape
        d = self.d
        # Input projections for every step in three batched matmuls.
        xz = add(matmul(x, self.gates["w_z"]), self.gates["b_z"])
        xr = add(matmul(x, self.gates["w_r"]), self.gates["b_r"])
        xh = add(matmul(x, self.gates["w_h"]), self.gates["b_h"])
        h = h0 if h0 is not None else Tensor(np.zeros((b, d)))
        one = Tensor(np.ones(()))
        steps = []
        for t in range(length):
            z = sigmoid(add(take_slice(xz, (slice(None), t)), matmul(h, self.gates["u_z"])))
            r = sigmoid(add(take_slice(xr, (slice(None), t)), matmul(h, self.gates["u_r"])))
            h_tilde = tanh(
                add(take_slice(xh, (slice(None), t)),
                    matmul(multiply(r, h), self.gates["u_h"]))
            )
            h = add(multiply(subtract(one, z), h), multiply(z, h_tilde))
            steps.append(reshape(h, (b, 1, d)))
        return concat(steps, axis=1)


class GruEncoder:
    """Unidirectional GRU over embedded transactions."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        if config.arch != "gru":
            raise ValueError("config.arch must be 'gru'")
        self.config = config
        rng = np.random.default_rng(seed)
        table = rng.normal(0.0, 0.1, size=(config.n_indices, config.d_emb))
        table[0] = 0.0
        self.emb_table = Tensor(table, requires_grad=True)
        self.core = GruCore(rng, config.input_width, config.hidden)
        self.gates = self.core.gates

    @property
    def hidden(self) -> int:
        return self.config.hidden

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [("emb/table", self.emb_table)] + self.core.parameters("gru")

    def zero_pinned_rows(self, grads: dict[str, np.ndarray]) -> None:
        """Keep table row 0 (padding/mask) at exactly zero."""
        g = grads.get("emb/table")
        if g is not None:
            g[0] = 0.0

    def forward(self, mcc_idx: np.ndarray, amounts_t: np.ndarray) -> Tensor:
        """Encode a padded (B, L) batch into hidden states (B, L, d)."""
        x = embed_batch(self.emb_table, mcc_idx, amounts_t)
        return self.core.scan(x)


def _sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / d)
    pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


class TransformerEncoder:
    """Bidirectional self-attention encoder with a CLS slot at position 0."""

    def __init__(self, config: EncoderConfig, seed: int = 0):
        if config.arch != "transformer":
            raise ValueError("config.arch must be 'transformer'")
        self.config = config
        rng = np.random.default_rng(seed)
        d_in, d = config.input_width, config.hidden
        table = rng.normal(0.0, 0.1, size=(config.n_indices, config.d_emb))
        table[0] = 0.0
        self.emb_table = Tensor(table, requires_grad=True)
        self.cls = Tensor(rng.normal(0.0, 0.1, size=(1, d_in)), requires_grad=True)
        self.proj = Linear(rng, d_in, d, "proj")
        self.blocks = []
        for bi in range(config.blocks):
            blk = {
                "wq": Linear(rng, d, d, f"block{bi}/wq"),
                "wk": Linear(rng, d, d, f"block{bi}/wk"),
                "wv": Linear(rng, d, d, f"block{bi}/wv"),
                "wo": Linear(rng, d, d, f"block{bi}/wo"),
                "ff1": Linear(rng, d, config.ff, f"block{bi}/ff1"),
                "ff2": Linear(rng, config.ff, d, f"block{bi}/ff2"),
                "ln1_g": Tensor(np.ones(d), requires_grad=True),
                "ln1_b": Tensor(np.zeros(d), requires_grad=True),
                "ln2_g": Tensor(np.ones(d), requires_grad=True),
                "ln2_b": Tensor(np.zeros(d), requires_grad=True),
            }
            self.blocks.append(blk)

    @property
    def hidden(self) -> int:
        return self.config.hidden

    def parameters(self) -> list[tuple[str, Tensor]]:
        out = [("emb/table", self.emb_table), ("emb/cls", self.cls)]
        out.extend(self.proj.parameters())
        for bi, blk in enumerate(self.blocks):
            for key in ("wq", "wk", "wv", "wo", "ff1", "ff2"):
                out.extend(blk[key].parameters())
            for key in ("ln1_g", "ln1_b", "ln2_g", "ln2_b"):
                out.append((f"block{bi}/{key}", blk[key]))
        return out

    def zero_pinned_rows(self, grads: dict[str, np.ndarray]) -> None:
        g = grads.get("emb/table")
        if g is not None:
            g[0] = 0.0

    def _attention(self, x: Tensor, blk: dict, mask_add: np.ndarray,
                   b: int, s: int) -> Tensor:
        d = self.config.hidden
        n_heads = self.config.heads
        dh = d // n_heads

        def split_heads(t: Tensor) -> Tensor:
            t = reshape(t, (b, s, n_heads, dh))
            t = transpose(t, (0, 2, 1, 3))
            return reshape(t, (b * n_heads, s, dh))

        q = split_heads(blk["wq"](x))
        k = split_heads(blk["wk"](x))
        v = split_heads(blk["wv"](x))
        scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(dh))
        scores = add(scores, Tensor(mask_add))
        weights = softmax_op(scores)
        ctx = matmul(weights, v)
        ctx = reshape(ctx, (b, n_heads, s, dh))
        ctx = transpose(ctx, (0, 2, 1, 3))
        ctx = reshape(ctx, (b, s, d))
        return blk["wo"](ctx)

    def forward(self, mcc_idx: np.ndarray, amounts_t: np.ndarray,
                lengths: np.ndarray) -> tuple[Tensor, Tensor]:
        """Encode a padded (B, L) batch.

        Returns (hidden (B, L, d) for the transaction positions, cls (B, d)).
        Padded positions beyond each row's length are masked out of every
        attention softmax.
        """
        b, length = mcc_idx.shape
        s = length + 1
        d = self.config.hidden

        x = embed_batch(self.emb_table, mcc_idx, amounts_t)
        ones = Tensor(np.ones((b, 1)))
        cls_rows = reshape(matmul(ones, self.cls), (b, 1, self.config.input_width))
        x = concat([cls_rows, x], axis=1)
        x = self.proj(x)
        x = add(x, Tensor(_sinusoidal_positions(s, d)[None, :, :]))

        # Column j+1 is masked for rows whose length <= j; CLS never masked.
        valid = np.zeros((b, 1, s))
        pos = np.arange(length)[None, :]
        pad = pos >= np.asarray(lengths)[:, None]
        valid[:, 0, 1:] = np.where(pad, MASK_SCORE, 0.0)
        mask_add = np.repeat(valid, self.config.heads, axis=0)

        for blk in self.blocks:
            attn = self._attention(x, blk, mask_add, b, s)
            x = layer_norm(add(x, attn))
            x = add(multiply(x, blk["ln1_g"]), blk["ln1_b"])
            ff = blk["ff2"](relu(blk["ff1"](x)))
            x = layer_norm(add(x, ff))
            x = add(multiply(x, blk["ln2_g"]), blk["ln2_b"])

        cls_out = reshape(take_slice(x, (slice(None), 0)), (b, d))
        hidden = take_slice(x, (slice(None), slice(1, s)))
        return hidden, cls_out


def build_encoder(config: EncoderConfig, seed: int = 0):
    if config.arch == "gru":
        return GruEncoder(config, seed)
    return TransformerEncoder(config, seed)


def _forward_single(encoder, seq: ClientSequence) -> tuple[np.ndarray, Optional[np.ndarray]]:
    if seq.mcc_idx is None:
        raise ValueError(
            f"client {seq.client_id}: vocabulary not applied (mcc_idx missing)"
        )
    mcc = seq.mcc_idx[None, :]
    amt = seq.amounts_t[None, :]
    if isinstance(encoder, GruEncoder):
        hidden = encoder.forward(mcc, amt)
        return hidden.data[0], None
    hidden, cls_out = encoder.forward(mcc, amt, np.array([len(seq)]))
    return hidden.data[0], cls_out.data[0]


def encode_sequence(encoder, seq: ClientSequence) -> HiddenSequence:
    """Per-timestep states for one full sequence (inference, no tape)."""
    vectors, cls_vec = _forward_single(encoder, seq)
    return HiddenSequence(vectors=vectors, timestamps=seq.timestamps.copy(), cls=cls_vec)


def pool_global(hidden: HiddenSequence, strategy: str) -> GlobalRepresentation:
    """Collapse per-timestep states into one vector."""
    if strategy not in POOL_STRATEGIES:
        raise ValueError(f"unknown pooling strategy {strategy!r}")
    if len(hidden) == 0:
        raise ValueError("cannot pool an empty hidden sequence")
    v = hidden.vectors
    if strategy == "last":
        out = v[-1]
    elif strategy == "mean":
        out = v.mean(axis=0)
    elif strategy == "max":
        out = v.max(axis=0)
    else:
        out = hidden.cls if hidden.cls is not None else v[0]
    return GlobalRepresentation(vector=np.asarray(out, dtype=np.float64).copy(),
                                strategy=strategy)


def pool_batch(hidden: Tensor, lengths: np.ndarray, strategy: str,
               cls_out: Optional[Tensor] = None) -> Tensor:
    """Tape-side pooling of padded (B, L, d) states into (B, d)."""
    if strategy not in POOL_STRATEGIES:
        raise ValueError(f"unknown pooling strategy {strategy!r}")
    b, length, d = hidden.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1) or np.any(lengths > length):
        raise ValueError("lengths out of range for pooling")
    if strategy == "first_token":
        if cls_out is not None:
            return cls_out
        return reshape(take_slice(hidden, (slice(None), 0)), (b, d))
    if strategy == "last":
        pick = np.zeros((b, 1, length))
        pick[np.arange(b), 0, lengths - 1] = 1.0
        return reshape(matmul(Tensor(pick), hidden), (b, d))
    mask = (np.arange(length)[None, :] < lengths[:, None]).astype(np.float64)
    if strategy == "mean":
        summed = reduce_sum(multiply(hidden, Tensor(mask[:, :, None])), axis=1)
        return multiply(summed, Tensor(1.0 / lengths[:, None]))
    neg = Tensor(np.where(mask[:, :, None] > 0, 0.0, MASK_SCORE))
    return reduce_max(add(hidden, neg), axis=1)
