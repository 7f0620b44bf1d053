"""Minimal reverse-mode automatic differentiation over NumPy arrays.

Just enough machinery for an encoder-decoder transformer: dense matmul
against 2-D weight matrices, broadcast bias addition, embedding gather,
layer norm, relu, fused multi-head attention, and fused softmax cross
entropy. Every value is 64-bit. Operations record a closure on a tape;
backward() walks the tape in reverse topological order and accumulates
gradients into leaf variables.
"""

from __future__ import annotations

import numpy as np


class Var:
    """A node in the computation graph: array value plus gradient slot."""

    __slots__ = ("data", "grad", "parents", "bw", "_grad_borrowed")

    def __init__(self, data, parents=(), bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.bw = bw
        self._grad_borrowed = False

    @property
    def shape(self):
        return self.data.shape

    def add_grad(self, g):
        # First contribution borrows the producer's array (it is never
        # mutated upstream); a second contribution materializes a copy.
        if self.grad is None:
            self.grad = g
            self._grad_borrowed = True
        elif self._grad_borrowed:
            self.grad = self.grad + g
            self._grad_borrowed = False
        else:
            self.grad += g


def backward(root: Var, seed=None):
    """Accumulate d(root)/d(leaf) into every reachable Var's .grad."""
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        var, expanded = stack.pop()
        if expanded:
            topo.append(var)
            continue
        if id(var) in seen:
            continue
        seen.add(id(var))
        stack.append((var, True))
        for parent in var.parents:
            stack.append((parent, False))
    root.add_grad(np.ones_like(root.data) if seed is None else seed)
    for var in reversed(topo):
        if var.bw is not None and var.grad is not None:
            var.bw(var.grad)


def matmul(a: Var, w: Var) -> Var:
    """a @ w with a of rank 2 or 3 and w a 2-D weight matrix."""
    out = Var(a.data @ w.data, (a, w))

    def bw(g):
        a.add_grad(g @ w.data.T)
        if a.data.ndim == 2:
            w.add_grad(a.data.T @ g)
        else:
            w.add_grad(np.tensordot(a.data, g, axes=([0, 1], [0, 1])))

    out.bw = bw
    return out


def add(a: Var, b: Var) -> Var:
    """Elementwise add; b may broadcast (bias over leading axes)."""
    out = Var(a.data + b.data, (a, b))

    def unbroadcast(g, shape):
        extra = g.ndim - len(shape)
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return g

    def bw(g):
        a.add_grad(unbroadcast(g, a.data.shape))
        b.add_grad(unbroadcast(g, b.data.shape))

    out.bw = bw
    return out


def relu(x: Var) -> Var:
    mask = x.data > 0
    out = Var(np.where(mask, x.data, 0.0), (x,))
    out.bw = lambda g: x.add_grad(g * mask)
    return out


def embedding(table: Var, ids) -> Var:
    ids = np.asarray(ids)
    out = Var(table.data[ids], (table,))

    def bw(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        flat_ids = ids.reshape(-1)
        flat_g = g.reshape(len(flat_ids), -1)
        # scatter-add as a one-hot matmul; much faster than np.add.at
        onehot = np.zeros((len(flat_ids), table.data.shape[0]))
        onehot[np.arange(len(flat_ids)), flat_ids] = 1.0
        table.grad += onehot.T @ flat_g

    out.bw = bw
    return out


def slice_rows(table: Var, n: int) -> Var:
    out = Var(table.data[:n], (table,))

    def bw(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        table.grad[:n] += g

    out.bw = bw
    return out


def layer_norm(x: Var, gamma: Var, beta: Var, eps: float = 1e-6) -> Var:
    mean = x.data.mean(-1, keepdims=True)
    var = x.data.var(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out = Var(xhat * gamma.data + beta.data, (x, gamma, beta))

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        gamma.add_grad((g * xhat).sum(lead))
        beta.add_grad(g.sum(lead))
        dxhat = g * gamma.data
        n = x.data.shape[-1]
        dx = (
            dxhat
            - dxhat.mean(-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(-1, keepdims=True)
        ) * inv
        x.add_grad(dx)

    out.bw = bw
    return out


def attention(q: Var, k: Var, v: Var, mask_add, n_heads: int) -> Var:
    """Fused softmax attention over flattened heads.

    q: (B, Tq, H*K), k and v: (B, Tk, H*K); mask_add broadcastable to
    (B, H, Tq, Tk), additive (-inf-scale entries mask; fully masked key
    positions get exactly zero weight in float64).
    """
    b, tq, hk = q.data.shape
    tk = k.data.shape[1]
    dk = hk // n_heads
    # (B, H, T, K) layout so scores and mixes run as batched BLAS matmuls
    qh = np.ascontiguousarray(q.data.reshape(b, tq, n_heads, dk).transpose(0, 2, 1, 3))
    kh = np.ascontiguousarray(k.data.reshape(b, tk, n_heads, dk).transpose(0, 2, 1, 3))
    vh = np.ascontiguousarray(v.data.reshape(b, tk, n_heads, dk).transpose(0, 2, 1, 3))
    scale = 1.0 / np.sqrt(dk)
    scores = qh @ kh.transpose(0, 1, 3, 2) * scale + mask_add
    scores -= scores.max(-1, keepdims=True)
    probs = np.exp(scores)
    probs /= probs.sum(-1, keepdims=True)
    outh = probs @ vh
    out = Var(
        outh.transpose(0, 2, 1, 3).reshape(b, tq, hk), (q, k, v)
    )

    def bw(g):
        gh = np.ascontiguousarray(g.reshape(b, tq, n_heads, dk).transpose(0, 2, 1, 3))
        dv = probs.transpose(0, 1, 3, 2) @ gh
        dprobs = gh @ vh.transpose(0, 1, 3, 2)
        dscores = probs * (dprobs - (dprobs * probs).sum(-1, keepdims=True))
        dq = dscores @ kh * scale
        dk_ = dscores.transpose(0, 1, 3, 2) @ qh * scale
        q.add_grad(dq.transpose(0, 2, 1, 3).reshape(b, tq, hk))
        k.add_grad(dk_.transpose(0, 2, 1, 3).reshape(b, tk, hk))
        v.add_grad(dv.transpose(0, 2, 1, 3).reshape(b, tk, hk))

    out.bw = bw
    return out


def softmax_cross_entropy(logits: Var, targets, weights) -> Var:
    """Mean token cross entropy. targets (B, T) int ids; weights (B, T)
    zero-one mask excluding padding positions from the mean."""
    z = logits.data - logits.data.max(-1, keepdims=True)
    exp = np.exp(z)
    probs = exp / exp.sum(-1, keepdims=True)
    b, t = targets.shape
    picked = probs[np.arange(b)[:, None], np.arange(t)[None, :], targets]
    total = weights.sum()
    loss = -(np.log(np.maximum(picked, 1e-300)) * weights).sum() / total
    out = Var(loss, (logits,))

    def bw(g):
        dlogits = probs.copy()
        dlogits[np.arange(b)[:, None], np.arange(t)[None, :], targets] -= 1.0
        dlogits *= (weights / total)[..., None]
        logits.add_grad(dlogits * g)

    out.bw = bw
    return out
