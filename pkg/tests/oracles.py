"""Independent reference implementations used only by the test suite.

Everything here is deliberately naive (explicit loops, no shared code with
the package) so it can serve as an oracle for the fast paths.
"""

from __future__ import annotations

import numpy as np


def conv2d_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, stride: int) -> np.ndarray:
    """Quadruple-loop cross-correlation with reflection padding."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="reflect")
    ho, wo = h // stride, wd // stride
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for ni in range(n):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[ni, ci, oy * stride + i, ox * stride + j] * w[co, ci, i, j]
                    out[ni, co, oy, ox] = acc + (b[co] if b is not None else 0.0)
    return out


def upsample2x_loops(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w), dtype=x.dtype)
    for i in range(2 * h):
        for j in range(2 * w):
            out[:, :, i, j] = x[:, :, i // 2, j // 2]
    return out


def gram_loops(f: np.ndarray) -> np.ndarray:
    """O(C^2 * H * W) gram matrix of a single [C, H, W] feature map."""
    c = f.shape[0]
    m = f.reshape(c, -1)
    g = np.zeros((c, c), dtype=f.dtype)
    for a in range(c):
        for b in range(c):
            g[a, b] = float(np.dot(m[a], m[b]))
    return g


def adam_scalar(theta0: float, grad_fn, lr: float, steps: int,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> float:
    """Scalar Adam, written from the update rule, for cross-checking."""
    theta = theta0
    m = 0.0
    v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def pearson_loops(rows: np.ndarray) -> np.ndarray:
    """Pairwise Pearson correlation from the textbook formula."""
    m = rows.shape[0]
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            a = rows[i] - rows[i].mean()
            b = rows[j] - rows[j].mean()
            out[i, j] = float(np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b)))
    return out


def pca_eigh(data: np.ndarray):
    """Full eigendecomposition of the scatter matrix; returns (eigvals desc, eigvecs)."""
    xc = data - data.mean(axis=0, keepdims=True)
    scatter = xc.T @ xc
    vals, vecs = np.linalg.eigh(scatter)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]
