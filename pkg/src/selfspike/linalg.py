"""Small dense kernels with pinned summation semantics.

``matvec`` and ``affine_rows`` compute each output as a product-then-reduce
over the contiguous input axis, so every dot product uses numpy's in-core
reduction order regardless of batch shape or how rows are chunked. That makes
forward activations independent of the BLAS build and reproducible by a
scalar reference that follows the same reduction order. Backward-pass matmuls
keep BLAS for throughput; gradients are checked against finite differences
with a tolerance, not bit equality.
"""

from __future__ import annotations

import numpy as np

_CHUNK_ELEMS = 1 << 20


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise dot products: out[i] = sum_j w[i, j] * x[j]."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ValueError(f"matvec shape mismatch: w {w.shape} vs x {x.shape}")
    return (w * x).sum(axis=1)


def affine_rows(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched affine map: out[r, i] = sum_j w[i, j] * x[r, j] + b[i].

    Each output element reduces over a C-contiguous product row, so the
    result is bit-identical to applying ``matvec`` row by row. Input rows are
    processed in bounded chunks to cap the temporary product array; chunking
    cannot change any output bit because rows reduce independently.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"affine shape mismatch: x {x.shape} vs w {w.shape}")
    n_out, n_in = w.shape
    if b.shape != (n_out,):
        raise ValueError(f"bias shape {b.shape} does not match n_out {n_out}")
    rows = x.shape[0]
    out = np.empty((rows, n_out), dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, n_out * n_in))
    for start in range(0, rows, step):
        chunk = x[start:start + step]
        prod = np.ascontiguousarray(chunk[:, None, :] * w[None, :, :])
        out[start:start + chunk.shape[0]] = prod.sum(axis=2)
    out += b
    return out


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a * x + y, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"axpy shape mismatch: {x.shape} vs {y.shape}")
    return a * x + y


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a batch of logit rows, plus dL/dlogits.

    Args:
        logits: (B, C) scores.
        labels: (B,) integer class ids in [0, C).

    Returns:
        (loss, dlogits) where loss is the batch mean of
        -log softmax(logits)[label] and dlogits is (softmax - onehot) / B,
        so downstream backprop needs no extra batch scaling.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (B, C), got shape {logits.shape}")
    b, c = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels out of range [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    denom = e.sum(axis=1)
    log_p = z[np.arange(b), labels] - np.log(denom)
    loss = float(-log_p.mean())
    dlogits = e / denom[:, None]
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    return loss, dlogits
