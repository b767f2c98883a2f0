"""Pure-numpy dense MLP kernels (ReLU trunk + linear head).

Weight convention: W has shape (out, in); activations X have shape (n, in).
"""
from __future__ import annotations

import numpy as np

IMPL = "python"


def forward(trunk_ws, trunk_bs, head_w, head_b, X):
    """Batched forward pass.

    Returns (out, acts) where out is (n, out_dim) and acts is the list of
    post-ReLU hidden activations, one (n, width) array per trunk layer.
    """
    h = X
    acts = []
    for W, b in zip(trunk_ws, trunk_bs):
        h = np.maximum(h @ W.T + b, 0.0)
        acts.append(h)
    out = h @ head_w.T + head_b
    return out, acts


def backward(trunk_ws, head_w, X, acts, out_grad):
    """Weighted-sum backward pass.

    out_grad is (n, out_dim); the result is the gradient of
    sum_i out_grad[i] . out[i] with respect to every weight and bias.
    Returns (trunk_dws, trunk_dbs, head_dw, head_db).
    """
    head_dw = out_grad.T @ acts[-1]
    head_db = out_grad.sum(axis=0)
    d = out_grad @ head_w
    trunk_dws = [None] * len(trunk_ws)
    trunk_dbs = [None] * len(trunk_ws)
    for i in range(len(trunk_ws) - 1, -1, -1):
        d = d * (acts[i] > 0.0)
        prev = acts[i - 1] if i > 0 else X
        trunk_dws[i] = d.T @ prev
        trunk_dbs[i] = d.sum(axis=0)
        if i > 0:
            d = d @ trunk_ws[i]
    return trunk_dws, trunk_dbs, head_dw, head_db
