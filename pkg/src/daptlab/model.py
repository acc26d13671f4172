"""A small post-layer-norm bidirectional encoder with a tied MLM head.

Learned absolute position embeddings, segment embeddings (always segment 0),
exact-erf GELU, and an output projection that shares storage with the token
embedding table. forward() accepts a single sequence [S] or a batch [B, S];
hidden-state tensors mirror that rank.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .autodiff import (Tape, Tensor, add, add_const, dropout, gather_rows, gelu,
                       layer_norm, matmul, reshape, scale, softmax, transpose)
from .tokenizer import Vocab, encode

# Additive score for masked-out key columns; exp() of it underflows to exactly 0.
ATTENTION_MASK_BIAS = -1e9

_CKPT_MAGIC = b"DLABCKP1"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    hidden: int
    num_heads: int
    ffn_dim: int
    vocab_size: int
    max_seq: int
    type_vocab: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        for name in ("num_layers", "hidden", "num_heads", "ffn_dim", "vocab_size",
                     "max_seq", "type_vocab"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden % self.num_heads != 0:
            raise ValueError(f"hidden ({self.hidden}) must be divisible by "
                             f"num_heads ({self.num_heads})")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def desk(cls, vocab_size: int, max_seq: int = 128, dropout: float = 0.1) -> "ModelConfig":
        """Default desk-scale geometry: 4 layers, width 64, 4 heads, FFN 256."""
        return cls(num_layers=4, hidden=64, num_heads=4, ffn_dim=256,
                   vocab_size=vocab_size, max_seq=max_seq, dropout=dropout)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter name -> shape map; also fixes checkpoint order."""
    h, f, v = config.hidden, config.ffn_dim, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "emb.word": (v, h),
        "emb.pos": (config.max_seq, h),
        "emb.segment": (config.type_vocab, h),
        "emb.ln.gamma": (h,),
        "emb.ln.beta": (h,),
    }
    for i in range(config.num_layers):
        p = f"layer{i}"
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{proj}"] = (h, h)
        for bias in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{bias}"] = (h,)
        shapes[f"{p}.attn.ln.gamma"] = (h,)
        shapes[f"{p}.attn.ln.beta"] = (h,)
        shapes[f"{p}.ffn.w1"] = (h, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, h)
        shapes[f"{p}.ffn.b2"] = (h,)
        shapes[f"{p}.ffn.ln.gamma"] = (h,)
        shapes[f"{p}.ffn.ln.beta"] = (h,)
    shapes["mlm.dense.w"] = (h, h)
    shapes["mlm.dense.b"] = (h,)
    shapes["mlm.ln.gamma"] = (h,)
    shapes["mlm.ln.beta"] = (h,)
    shapes["mlm.bias"] = (v,)
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Closed-form scalar parameter count for the configuration."""
    h, f, v = config.hidden, config.ffn_dim, config.vocab_size
    embeddings = v * h + config.max_seq * h + config.type_vocab * h + 2 * h
    per_layer = 4 * (h * h + h) + 2 * h + (h * f + f) + (f * h + h) + 2 * h
    head = h * h + h + 2 * h + v
    return embeddings + config.num_layers * per_layer + head


def truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) with values beyond 2*std resampled, not clipped."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2.0 * std
    return out.astype(np.float32)


def init_params(config: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Truncated-normal(std 0.02) weights, zero biases, identity layer norms.

    The MLM output projection is the token embedding table itself (tied), so
    it does not appear as a separate entry.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gamma"):
            data = np.ones(shape, dtype=np.float32)
        elif name.endswith((".beta", ".bias", ".b", ".bq", ".bk", ".bv", ".bo",
                            ".b1", ".b2")):
            data = np.zeros(shape, dtype=np.float32)
        else:
            data = truncated_normal(rng, shape, 0.02)
        params[name] = Tensor(data)
    return params


def _check_inputs(ids: np.ndarray, mask: np.ndarray, config: ModelConfig) -> None:
    if ids.ndim != 2:
        raise ValueError(f"ids must be [S] or [B, S], got shape {ids.shape}")
    if ids.shape[1] < 1 or ids.shape[1] > config.max_seq:
        raise ValueError(f"sequence length {ids.shape[1]} outside [1, {config.max_seq}]")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("ids must be integers")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValueError(f"token id out of range for vocab of {config.vocab_size}")
    if mask.shape != ids.shape:
        raise ValueError(f"attention mask shape {mask.shape} != ids shape {ids.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("attention mask entries must be 0 or 1")
    if (mask.sum(axis=1) == 0).any():
        raise ValueError("every sequence needs at least one unmasked position")


def forward(ids, attention_mask, config: ModelConfig, params: dict[str, Tensor],
            train_mode: bool = False, tape: Tape | None = None,
            rng: np.random.Generator | None = None) -> list[Tensor]:
    """Run the encoder; returns L+1 hidden states (embedding output first)."""
    ids = np.asarray(ids)
    mask = np.asarray(attention_mask)
    single = ids.ndim == 1
    if single:
        ids = ids[None, :]
        mask = mask[None, :]
    _check_inputs(ids, mask, config)
    if train_mode and config.dropout > 0.0 and rng is None:
        raise ValueError("train_mode forward needs an rng for dropout")
    batch, seq = ids.shape
    h, heads = config.hidden, config.num_heads
    dh = h // heads
    dtype = params["emb.word"].data.dtype

    def drop(t: Tensor) -> Tensor:
        if train_mode and config.dropout > 0.0:
            return dropout(t, config.dropout, rng, tape)
        return t

    x = gather_rows(params["emb.word"], ids, tape)
    x = add(x, gather_rows(params["emb.pos"], np.arange(seq), tape), tape)
    x = add(x, gather_rows(params["emb.segment"], np.zeros_like(ids), tape), tape)
    x = layer_norm(x, params["emb.ln.gamma"], params["emb.ln.beta"], tape=tape)
    x = drop(x)
    hidden = [x]

    # [B, 1, 1, S] additive bias: 0 on real keys, -1e9 on padding keys.
    key_bias = ((1.0 - mask) * ATTENTION_MASK_BIAS).astype(dtype)[:, None, None, :]

    for i in range(config.num_layers):
        p = f"layer{i}"
        q = add(matmul(x, params[f"{p}.attn.wq"], tape), params[f"{p}.attn.bq"], tape)
        k = add(matmul(x, params[f"{p}.attn.wk"], tape), params[f"{p}.attn.bk"], tape)
        v = add(matmul(x, params[f"{p}.attn.wv"], tape), params[f"{p}.attn.bv"], tape)
        qh = transpose(reshape(q, (batch, seq, heads, dh), tape), (0, 2, 1, 3), tape)
        kt = transpose(reshape(k, (batch, seq, heads, dh), tape), (0, 2, 3, 1), tape)
        vh = transpose(reshape(v, (batch, seq, heads, dh), tape), (0, 2, 1, 3), tape)
        scores = scale(matmul(qh, kt, tape), 1.0 / np.sqrt(dh), tape)
        scores = add_const(scores, key_bias, tape)
        probs = drop(softmax(scores, -1, tape))
        ctx = transpose(matmul(probs, vh, tape), (0, 2, 1, 3), tape)
        ctx = reshape(ctx, (batch, seq, h), tape)
        attn = drop(add(matmul(ctx, params[f"{p}.attn.wo"], tape),
                        params[f"{p}.attn.bo"], tape))
        x = layer_norm(add(x, attn, tape), params[f"{p}.attn.ln.gamma"],
                       params[f"{p}.attn.ln.beta"], tape=tape)
        inner = gelu(add(matmul(x, params[f"{p}.ffn.w1"], tape),
                         params[f"{p}.ffn.b1"], tape), tape)
        out = drop(add(matmul(inner, params[f"{p}.ffn.w2"], tape),
                       params[f"{p}.ffn.b2"], tape))
        x = layer_norm(add(x, out, tape), params[f"{p}.ffn.ln.gamma"],
                       params[f"{p}.ffn.ln.beta"], tape=tape)
        hidden.append(x)

    if single:
        hidden = [reshape(t, t.data.shape[1:], tape) for t in hidden]
    return hidden


def mlm_logits(last_hidden: Tensor, params: dict[str, Tensor],
               tape: Tape | None = None) -> Tensor:
    """Transform + layer norm, then decode against the tied embedding table."""
    t = gelu(add(matmul(last_hidden, params["mlm.dense.w"], tape),
                 params["mlm.dense.b"], tape), tape)
    t = layer_norm(t, params["mlm.ln.gamma"], params["mlm.ln.beta"], tape=tape)
    decoder = transpose(params["emb.word"], (1, 0), tape)
    return add(matmul(t, decoder, tape), params["mlm.bias"], tape)


def embed_document(text: str, vocab: Vocab, config: ModelConfig,
                   params: dict[str, Tensor]) -> np.ndarray:
    """Mean over content positions of the last four hidden layers, concatenated.

    Output is a [4 * hidden] float32 vector. Raises when the text has no
    content pieces or the model is too shallow to supply four layers.
    """
    if config.num_layers < 3:
        raise ValueError("embed_document needs at least 4 hidden states "
                         f"(num_layers >= 3), got num_layers={config.num_layers}")
    enc = encode(text, vocab, config.max_seq)
    positions = [i for start, stop in enc.word_spans for i in range(start, stop)]
    if not positions:
        raise ValueError("cannot embed a text with no content pieces")
    hidden = forward(np.asarray(enc.ids), np.asarray(enc.mask), config, params)
    stacked = np.concatenate([layer.data[positions] for layer in hidden[-4:]], axis=-1)
    return stacked.mean(axis=0).astype(np.float32)


def save_checkpoint(params: dict[str, Tensor], config: ModelConfig, path) -> None:
    """Little-endian binary: magic, version, config block, named tensor records."""
    buf = bytearray()
    buf += _CKPT_MAGIC
    buf += struct.pack("<I", _CKPT_VERSION)
    buf += struct.pack("<7I", config.num_layers, config.hidden, config.num_heads,
                       config.ffn_dim, config.vocab_size, config.max_seq,
                       config.type_vocab)
    buf += struct.pack("<d", config.dropout)
    buf += struct.pack("<I", len(params))
    for name, tensor in params.items():
        if tensor.data.dtype != np.float32:
            raise ValueError(f"checkpoint tensors must be float32, {name!r} is "
                             f"{tensor.data.dtype}")
        raw = name.encode("utf-8")
        buf += struct.pack("<I", len(raw))
        buf += raw
        buf += struct.pack("<I", tensor.data.ndim)
        buf += struct.pack(f"<{tensor.data.ndim}I", *tensor.data.shape)
        buf += tensor.data.astype("<f4", copy=False).tobytes(order="C")
    fileio.atomic_write_bytes(path, bytes(buf))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise ValueError(f"truncated checkpoint {self.path}")
        vals = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return vals

    def take_bytes(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise ValueError(f"truncated checkpoint {self.path}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out


def load_checkpoint(path, expected_config: ModelConfig | None = None
                    ) -> tuple[dict[str, Tensor], ModelConfig]:
    """Read and validate a checkpoint; the MLM decoder stays tied on load."""
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take_bytes(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    (version,) = reader.take("<I")
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    layers, hidden, heads, ffn, vocab, max_seq, type_vocab = reader.take("<7I")
    (drop_rate,) = reader.take("<d")
    config = ModelConfig(num_layers=layers, hidden=hidden, num_heads=heads,
                         ffn_dim=ffn, vocab_size=vocab, max_seq=max_seq,
                         type_vocab=type_vocab, dropout=drop_rate)
    if expected_config is not None and config != expected_config:
        raise ValueError(f"checkpoint config {config} does not match expected "
                         f"{expected_config}")
    expected = param_shapes(config)
    (n_tensors,) = reader.take("<I")
    params: dict[str, Tensor] = {}
    for _ in range(n_tensors):
        (name_len,) = reader.take("<I")
        name = reader.take_bytes(name_len).decode("utf-8")
        (rank,) = reader.take("<I")
        if rank > 8:
            raise ValueError(f"implausible rank {rank} for tensor {name!r}")
        shape = tuple(reader.take(f"<{rank}I")) if rank else ()
        if name not in expected:
            raise ValueError(f"unexpected tensor {name!r} in checkpoint")
        if name in params:
            raise ValueError(f"duplicate tensor {name!r} in checkpoint")
        if shape != expected[name]:
            raise ValueError(f"tensor {name!r} has shape {shape}, expected "
                             f"{expected[name]}")
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = reader.take_bytes(4 * count)
        data = np.frombuffer(raw, dtype="<f4", count=count).reshape(shape).copy()
        params[name] = Tensor(data)
    missing = sorted(set(expected) - set(params))
    if missing:
        raise ValueError(f"checkpoint is missing tensors: {missing}")
    if reader.off != len(reader.data):
        raise ValueError(f"trailing bytes in checkpoint {path}")
    # Restore canonical ordering so re-saving is byte-identical.
    return {name: params[name] for name in expected}, config
