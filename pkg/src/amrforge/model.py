"""Desk-scale encoder-decoder transformer with exact gradients.

Pre-norm architecture: the encoder stacks self-attention and feed-forward
blocks, the decoder adds causally masked self-attention and cross-attention
over the encoder output, and a linear head produces vocabulary logits per
target position. Positions use learned absolute embeddings; the token
embedding is shared between encoder and decoder; the output head is a
separate matrix. Query/key/value projections map d_model to
n_heads * d_kv, which need not equal d_model, and the output projection
maps back.

Parameters live in a flat dict of named float64 arrays, so projection
families are individually addressable (names end in ".q", ".k", ".v",
".o"). All computation is float64 and deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amrforge import autodiff as ad

NEG_INF = -1e30


@dataclass(frozen=True)
class ModelSpec:
    """Transformer dimensions. n_layers counts encoder and decoder layers
    separately (n_layers of each)."""

    n_layers: int = 2
    d_model: int = 64
    d_ff: int = 128
    d_kv: int = 16
    n_heads: int = 4
    vocab_size: int = 512
    max_len: int = 128

    def __post_init__(self):
        for name in ("n_layers", "d_model", "d_ff", "d_kv", "n_heads", "vocab_size", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return {
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "d_ff": self.d_ff,
            "d_kv": self.d_kv,
            "n_heads": self.n_heads,
            "vocab_size": self.vocab_size,
            "max_len": self.max_len,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def init_params(spec: ModelSpec, seed: int = 0):
    """Scaled-normal weights (std 0.02), zero biases and norm offsets,
    unit norm gains."""
    rng = np.random.default_rng(seed)
    params = {}

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    d, f, hk, v, L = (
        spec.d_model,
        spec.d_ff,
        spec.n_heads * spec.d_kv,
        spec.vocab_size,
        spec.max_len,
    )
    params["embed.tok"] = normal(v, d)
    params["enc.pos"] = normal(L, d)
    params["dec.pos"] = normal(L, d)
    for i in range(spec.n_layers):
        for block, attn_names in (
            (f"enc.{i}", ("attn",)),
            (f"dec.{i}", ("self", "cross")),
        ):
            n_ln = 0
            for attn in attn_names:
                n_ln += 1
                params[f"{block}.ln{n_ln}.g"] = np.ones(d)
                params[f"{block}.ln{n_ln}.b"] = np.zeros(d)
                params[f"{block}.{attn}.q"] = normal(d, hk)
                params[f"{block}.{attn}.k"] = normal(d, hk)
                params[f"{block}.{attn}.v"] = normal(d, hk)
                params[f"{block}.{attn}.o"] = normal(hk, d)
            n_ln += 1
            params[f"{block}.ln{n_ln}.g"] = np.ones(d)
            params[f"{block}.ln{n_ln}.b"] = np.zeros(d)
            params[f"{block}.ff.w1"] = normal(d, f)
            params[f"{block}.ff.b1"] = np.zeros(f)
            params[f"{block}.ff.w2"] = normal(f, d)
            params[f"{block}.ff.b2"] = np.zeros(d)
    params["enc.norm.g"] = np.ones(d)
    params["enc.norm.b"] = np.zeros(d)
    params["dec.norm.g"] = np.ones(d)
    params["dec.norm.b"] = np.zeros(d)
    params["head.w"] = normal(d, v)
    params["head.b"] = np.zeros(v)
    return params


def parameter_families(params):
    """Group parameter names by structural family (layer indices removed)."""
    families = {}
    for name in sorted(params):
        parts = name.split(".")
        family = ".".join(p for p in parts if not p.isdigit())
        families.setdefault(family, []).append(name)
    return families


def _check_ids(spec, ids, what):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[-1] > spec.max_len:
        raise ValueError(f"{what} length {ids.shape[-1]} exceeds max_len {spec.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= spec.vocab_size):
        raise ValueError(f"{what} ids out of range for vocab {spec.vocab_size}")
    return ids


class _Vars:
    """Per-forward wrapping of parameter arrays as autodiff leaves.

    When split adapters are supplied, adapted projections run as two paths:
    the stored base weight plus the scaled low-rank product applied to the
    activations, exactly the update-time view of adapter tuning."""

    def __init__(self, params, adapters=None):
        self.vars = {name: ad.Var(value) for name, value in params.items()}
        self.adapters = adapters

    def __getitem__(self, name):
        return self.vars[name]

    def project(self, x, name):
        adapters = self.adapters
        if (
            adapters is not None
            and not adapters.merged
            and name in adapters.base
        ):
            down = ad.Var(adapters.a[name].T * adapters.lora.scale)
            up = ad.Var(adapters.b[name].T)
            return ad.add(
                ad.matmul(x, self.vars[name]), ad.matmul(ad.matmul(x, down), up)
            )
        return ad.matmul(x, self.vars[name])

    def grads(self):
        return {
            name: var.grad
            for name, var in self.vars.items()
            if var.grad is not None
        }


def _attention_block(p, prefix, x, kv, mask_add, n_heads):
    q = p.project(x, f"{prefix}.q")
    k = p.project(kv, f"{prefix}.k")
    v = p.project(kv, f"{prefix}.v")
    out = ad.attention(q, k, v, mask_add, n_heads)
    return ad.matmul(out, p[f"{prefix}.o"])


def _ff_block(p, prefix, x):
    h = ad.relu(ad.add(ad.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return ad.add(ad.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def _key_mask(pad_mask):
    """(B, Tk) keep-mask -> additive (B, 1, 1, Tk)."""
    return np.where(pad_mask[:, None, None, :], 0.0, NEG_INF)


def _causal_mask(t):
    return np.where(np.tril(np.ones((t, t), dtype=bool)), 0.0, NEG_INF)[None, None]


def encode(p: _Vars, spec: ModelSpec, src_ids, src_keep):
    b, s = src_ids.shape
    x = ad.add(ad.embedding(p["embed.tok"], src_ids), ad.slice_rows(p["enc.pos"], s))
    mask = _key_mask(src_keep)
    for i in range(spec.n_layers):
        blk = f"enc.{i}"
        h = ad.layer_norm(x, p[f"{blk}.ln1.g"], p[f"{blk}.ln1.b"])
        x = ad.add(x, _attention_block(p, f"{blk}.attn", h, h, mask, spec.n_heads))
        h = ad.layer_norm(x, p[f"{blk}.ln2.g"], p[f"{blk}.ln2.b"])
        x = ad.add(x, _ff_block(p, f"{blk}.ff", h))
    return ad.layer_norm(x, p["enc.norm.g"], p["enc.norm.b"])


def decode(p: _Vars, spec: ModelSpec, memory, src_keep, tgt_ids):
    b, t = tgt_ids.shape
    x = ad.add(ad.embedding(p["embed.tok"], tgt_ids), ad.slice_rows(p["dec.pos"], t))
    causal = _causal_mask(t)
    cross = _key_mask(src_keep)
    for i in range(spec.n_layers):
        blk = f"dec.{i}"
        h = ad.layer_norm(x, p[f"{blk}.ln1.g"], p[f"{blk}.ln1.b"])
        x = ad.add(x, _attention_block(p, f"{blk}.self", h, h, causal, spec.n_heads))
        h = ad.layer_norm(x, p[f"{blk}.ln2.g"], p[f"{blk}.ln2.b"])
        h_mem = _attention_block_cross(p, f"{blk}.cross", h, memory, cross, spec.n_heads)
        x = ad.add(x, h_mem)
        h = ad.layer_norm(x, p[f"{blk}.ln3.g"], p[f"{blk}.ln3.b"])
        x = ad.add(x, _ff_block(p, f"{blk}.ff", h))
    x = ad.layer_norm(x, p["dec.norm.g"], p["dec.norm.b"])
    return ad.add(ad.matmul(x, p["head.w"]), p["head.b"])


def _attention_block_cross(p, prefix, x, memory, mask_add, n_heads):
    q = p.project(x, f"{prefix}.q")
    k = p.project(memory, f"{prefix}.k")
    v = p.project(memory, f"{prefix}.v")
    out = ad.attention(q, k, v, mask_add, n_heads)
    return ad.matmul(out, p[f"{prefix}.o"])


def forward_batch(params, spec: ModelSpec, src_ids, src_keep, tgt_ids, adapters=None):
    """Batched forward pass. Returns (logits Var (B, T, V), param Vars)."""
    p = _Vars(params, adapters)
    memory = encode(p, spec, src_ids, src_keep)
    logits = decode(p, spec, memory, src_keep, tgt_ids)
    return logits, p


def forward(params, spec: ModelSpec, source_ids, target_ids, adapters=None):
    """Single-sequence forward: logits per target position plus a cache
    that supports gradient computation from any scalar of the logits."""
    src = _check_ids(spec, source_ids, "source")
    tgt = _check_ids(spec, target_ids, "target")
    keep = np.ones(src.shape, dtype=bool)
    logits_var, p = forward_batch(params, spec, src, keep, tgt, adapters)
    cache = {"logits_var": logits_var, "param_vars": p}
    return logits_var.data[0], cache


def backward_from_logits(cache, dlogits):
    """Gradients of sum(dlogits * logits) for every parameter."""
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.ndim == 2:
        dlogits = dlogits[None]
    ad.backward(cache["logits_var"], dlogits)
    return cache["param_vars"].grads()


def pad_batch(id_seqs, pad_id=0):
    """Right-pad sequences to a common length. Returns (ids, keep mask)."""
    if not id_seqs:
        raise ValueError("empty batch")
    width = max(1, max(len(s) for s in id_seqs))
    ids = np.full((len(id_seqs), width), pad_id, dtype=np.int64)
    keep = np.zeros((len(id_seqs), width), dtype=bool)
    for i, seq in enumerate(id_seqs):
        ids[i, : len(seq)] = seq
        keep[i, : len(seq)] = True
    return ids, keep


def loss_and_grads(params, spec: ModelSpec, batch, pad_id=0, start_id=0):
    """Mean token cross entropy over a batch of (source ids, target ids)
    pairs, plus the gradient for every parameter. Padding positions are
    excluded from the loss; the decoder input is the target shifted right
    behind a start token."""
    if not batch:
        raise ValueError("empty batch")
    src_ids, src_keep = pad_batch([s for s, _ in batch], pad_id)
    _check_ids(spec, src_ids, "source")
    tgt_ids, tgt_keep = pad_batch([t for _, t in batch], pad_id)
    _check_ids(spec, tgt_ids, "target")
    dec_in = np.roll(tgt_ids, 1, axis=1)
    dec_in[:, 0] = start_id
    logits, p = forward_batch(params, spec, src_ids, src_keep, dec_in)
    loss = ad.softmax_cross_entropy(logits, tgt_ids, tgt_keep.astype(np.float64))
    ad.backward(loss)
    grads = p.grads()
    for name in params:
        grads.setdefault(name, np.zeros_like(params[name]))
    return float(loss.data), grads


def greedy_decode(params, spec: ModelSpec, source_ids, max_steps, eos_id=1, start_id=0):
    """Deterministic argmax decoding of a single sequence."""
    out = greedy_decode_batch(params, spec, [source_ids], max_steps, eos_id, start_id)
    return out[0]


def _ln(x, g, b, eps=1e-6):
    mean = x.mean(-1, keepdims=True)
    var = x.var(-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * g + b


def _heads(x, n_heads):
    b, t, hk = x.shape
    return np.ascontiguousarray(
        x.reshape(b, t, n_heads, hk // n_heads).transpose(0, 2, 1, 3)
    )


def _merge_heads(x):
    b, h, t, k = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, t, h * k)


def _softmax(x):
    x = x - x.max(-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(-1, keepdims=True)


def greedy_decode_batch(params, spec: ModelSpec, sources, max_steps, eos_id=1, start_id=0):
    """Greedy decode a batch of sources in lockstep.

    The encoder runs once; decoding is incremental with per-layer key/value
    caches, so cost is linear in the emitted length. Stops early when every
    sequence has emitted eos; output excludes the start token and eos."""
    if max_steps <= 0 or not sources:
        return [[] for _ in sources]
    src_ids, src_keep = pad_batch(list(sources))
    _check_ids(spec, src_ids, "source")
    p = _Vars(params)
    memory = encode(p, spec, src_ids, src_keep).data
    w = params
    b = src_ids.shape[0]
    hk = spec.n_heads * spec.d_kv
    steps = min(max_steps, spec.max_len - 1)
    scale = 1.0 / np.sqrt(spec.d_kv)
    cross_mask = np.where(src_keep[:, None, None, :], 0.0, NEG_INF)

    cross_k = [
        _heads(memory @ w[f"dec.{i}.cross.k"], spec.n_heads)
        for i in range(spec.n_layers)
    ]
    cross_v = [
        _heads(memory @ w[f"dec.{i}.cross.v"], spec.n_heads)
        for i in range(spec.n_layers)
    ]
    self_k = [np.zeros((b, spec.n_heads, steps, spec.d_kv)) for _ in range(spec.n_layers)]
    self_v = [np.zeros((b, spec.n_heads, steps, spec.d_kv)) for _ in range(spec.n_layers)]

    tokens = np.full((b, steps), eos_id, dtype=np.int64)
    current = np.full(b, start_id, dtype=np.int64)
    finished = np.zeros(b, dtype=bool)
    for t in range(steps):
        x = w["embed.tok"][current][:, None, :] + w["dec.pos"][t][None, None, :]
        for i in range(spec.n_layers):
            blk = f"dec.{i}"
            h = _ln(x, w[f"{blk}.ln1.g"], w[f"{blk}.ln1.b"])
            q = _heads(h @ w[f"{blk}.self.q"], spec.n_heads)
            self_k[i][:, :, t : t + 1, :] = _heads(h @ w[f"{blk}.self.k"], spec.n_heads)
            self_v[i][:, :, t : t + 1, :] = _heads(h @ w[f"{blk}.self.v"], spec.n_heads)
            keys = self_k[i][:, :, : t + 1, :]
            vals = self_v[i][:, :, : t + 1, :]
            probs = _softmax(q @ keys.transpose(0, 1, 3, 2) * scale)
            x = x + _merge_heads(probs @ vals) @ w[f"{blk}.self.o"]
            h = _ln(x, w[f"{blk}.ln2.g"], w[f"{blk}.ln2.b"])
            q = _heads(h @ w[f"{blk}.cross.q"], spec.n_heads)
            probs = _softmax(q @ cross_k[i].transpose(0, 1, 3, 2) * scale + cross_mask)
            x = x + _merge_heads(probs @ cross_v[i]) @ w[f"{blk}.cross.o"]
            h = _ln(x, w[f"{blk}.ln3.g"], w[f"{blk}.ln3.b"])
            ff = np.maximum(h @ w[f"{blk}.ff.w1"] + w[f"{blk}.ff.b1"], 0.0)
            x = x + ff @ w[f"{blk}.ff.w2"] + w[f"{blk}.ff.b2"]
        x = _ln(x, w["dec.norm.g"], w["dec.norm.b"])
        logits = x[:, 0, :] @ w["head.w"] + w["head.b"]
        nxt = logits.argmax(-1)
        nxt = np.where(finished, eos_id, nxt)
        tokens[:, t] = nxt
        finished |= nxt == eos_id
        current = nxt
        if finished.all():
            break
    results = []
    for i in range(b):
        seq = []
        for token in tokens[i]:
            if token == eos_id:
                break
            seq.append(int(token))
        results.append(seq)
    return results
