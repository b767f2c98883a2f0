"""Minimal feed-forward network engine: ReLU trunk, K linear heads, exact
hand-derived backprop, and an adaptive-moment ascent optimizer.

All numeric work routes through irlad._kernels so the compiled fast path and
the numpy fallback share one contract.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import ConfigError

MAGIC = b"IRLADBIN1\n"
FORMAT_VERSION = 1


@dataclass
class MlpParams:
    trunk: list[tuple[np.ndarray, np.ndarray]]  # [(W (out,in), b (out,))]
    heads: list[tuple[np.ndarray, np.ndarray]]  # K linear maps from last width

    @property
    def num_heads(self) -> int:
        return len(self.heads)

    @property
    def input_dim(self) -> int:
        return self.trunk[0][0].shape[1]

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(W.shape[0] for W, _ in self.trunk)

    @property
    def head_dim(self) -> int:
        return self.heads[0][0].shape[0]

    def head_tensors(self, head: int) -> list[np.ndarray]:
        """Tensors owned by the sampled parameter vector: trunk + head k."""
        out = []
        for W, b in self.trunk:
            out.extend((W, b))
        out.extend(self.heads[head])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            trunk=[(W.copy(), b.copy()) for W, b in self.trunk],
            heads=[(W.copy(), b.copy()) for W, b in self.heads],
        )


@dataclass
class GradBuffer:
    trunk: list[tuple[np.ndarray, np.ndarray]]
    heads: list[tuple[np.ndarray, np.ndarray]]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradBuffer":
        return cls(
            trunk=[(np.zeros_like(W), np.zeros_like(b)) for W, b in params.trunk],
            heads=[(np.zeros_like(W), np.zeros_like(b)) for W, b in params.heads],
        )

    def zero(self) -> None:
        for W, b in self.trunk + self.heads:
            W.fill(0.0)
            b.fill(0.0)

    def pairs(self, params: MlpParams):
        for (W, b), (dW, db) in zip(params.trunk + params.heads, self.trunk + self.heads):
            yield W, dW
            yield b, db


def init_params(rng: np.random.Generator | int, sigma2: float,
                widths: tuple[int, ...], K: int, input_dim: int,
                head_dim: int = 1) -> MlpParams:
    """Gaussian N(0, sigma2) initialization of every weight and bias."""
    if sigma2 <= 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    std = float(np.sqrt(sigma2))
    trunk = []
    prev = input_dim
    for w in widths:
        trunk.append((rng.normal(0.0, std, size=(w, prev)), rng.normal(0.0, std, size=w)))
        prev = w
    heads = [(rng.normal(0.0, std, size=(head_dim, prev)), rng.normal(0.0, std, size=head_dim))
             for _ in range(K)]
    return MlpParams(trunk=trunk, heads=heads)


def _check_head(params: MlpParams, head: int) -> None:
    if not 0 <= head < params.num_heads:
        raise IndexError(f"head {head} out of range [0, {params.num_heads})")


def forward_batch(params: MlpParams, X: np.ndarray, head: int,
                  return_acts: bool = False):
    _check_head(params, head)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != params.input_dim:
        raise ValueError(f"input dim {X.shape[1]} != network input dim {params.input_dim}")
    hw, hb = params.heads[head]
    out, acts = _kernels.forward([W for W, _ in params.trunk],
                                 [b for _, b in params.trunk], hw, hb, X)
    if return_acts:
        return out, acts
    return out


def forward(params: MlpParams, x: np.ndarray, head: int):
    """Single-input forward pass; returns a scalar for 1-dim heads."""
    out = forward_batch(params, np.asarray(x, dtype=float)[None, :], head)
    return float(out[0, 0]) if params.head_dim == 1 else out[0]


def backward_batch(params: MlpParams, X: np.ndarray, head: int,
                   out_grad: np.ndarray, grads: GradBuffer,
                   acts: list[np.ndarray] | None = None) -> None:
    """Accumulate d(sum_i out_grad[i] . out[i])/dtheta into grads.

    Only the trunk and the selected head are touched.
    """
    _check_head(params, head)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out_grad = np.atleast_2d(np.asarray(out_grad, dtype=float))
    if acts is None:
        _, acts = forward_batch(params, X, head, return_acts=True)
    trunk_ws = [W for W, _ in params.trunk]
    hw, _ = params.heads[head]
    dws, dbs, hdw, hdb = _kernels.backward(trunk_ws, hw, X, acts, out_grad)
    for (gW, gb), dW, db in zip(grads.trunk, dws, dbs):
        gW += dW
        gb += db
    gW, gb = grads.heads[head]
    gW += hdw
    gb += hdb


def backward(params: MlpParams, x: np.ndarray, head: int,
             upstream_weight: float, grads: GradBuffer) -> None:
    """Accumulate upstream_weight * d(output)/dtheta for one input."""
    x = np.asarray(x, dtype=float)
    og = np.full((1, params.head_dim), float(upstream_weight))
    backward_batch(params, x[None, :], head, og, grads)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **kw) -> "AdamState":
        tensors = [t for pair in params.trunk + params.heads for t in pair]
        return cls(m=[np.zeros_like(t) for t in tensors],
                   v=[np.zeros_like(t) for t in tensors], lr=lr, **kw)

    @classmethod
    def for_tensors(cls, tensors: list[np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(t) for t in tensors],
                   v=[np.zeros_like(t) for t in tensors], lr=lr, **kw)


def adam_tensor_step(tensors: list[np.ndarray], grads: list[np.ndarray],
                     state: AdamState) -> None:
    """In-place ascent step. Tensors whose gradient is identically zero keep
    their value (moments still decay) so that updating one bootstrap head
    never drifts the others."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; update rejected")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for t, g, m, v in zip(tensors, grads, state.m, state.v):
        m *= b1
        v *= b2
        if not np.any(g):
            continue
        m += (1 - b1) * g
        v += (1 - b2) * g * g
        t += state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def adam_step(params: MlpParams, grads: GradBuffer, state: AdamState) -> None:
    tensors = [t for pair in params.trunk + params.heads for t in pair]
    gtensors = [t for pair in grads.trunk + grads.heads for t in pair]
    adam_tensor_step(tensors, gtensors, state)


# ---------------------------------------------------------------------------
# Serialization: self-describing binary container with a JSON header and raw
# little-endian buffers in row-major order. Byte-for-byte reproducible.
# ---------------------------------------------------------------------------

_DTYPES = {"f8": "<f8", "i8": "<i8"}


def save_artifact(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    buffers = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float64:
            code = "f8"
        elif arr.dtype == np.int64:
            code = "i8"
        else:
            raise TypeError(f"unsupported dtype {arr.dtype} for {name}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code})
        buffers.append(arr.astype(_DTYPES[code]).tobytes(order="C"))
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta, "tensors": entries},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for buf in buffers:
            fh.write(buf)


def load_artifact(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not an irlad artifact file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version")
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            dtype = np.dtype(_DTYPES[entry["dtype"]])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return header["meta"], arrays


def params_to_arrays(params: MlpParams, prefix: str = "") -> dict[str, np.ndarray]:
    out = {}
    for i, (W, b) in enumerate(params.trunk):
        out[f"{prefix}trunk_{i}_W"] = W
        out[f"{prefix}trunk_{i}_b"] = b
    for k, (W, b) in enumerate(params.heads):
        out[f"{prefix}head_{k}_W"] = W
        out[f"{prefix}head_{k}_b"] = b
    return out


def params_from_arrays(arrays: dict[str, np.ndarray], n_trunk: int, K: int,
                       prefix: str = "") -> MlpParams:
    trunk = [(arrays[f"{prefix}trunk_{i}_W"], arrays[f"{prefix}trunk_{i}_b"])
             for i in range(n_trunk)]
    heads = [(arrays[f"{prefix}head_{k}_W"], arrays[f"{prefix}head_{k}_b"])
             for k in range(K)]
    return MlpParams(trunk=trunk, heads=heads)


def save_params(path, params: MlpParams, role: str, seed: int,
                extra_meta: dict | None = None,
                extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    meta = {
        "role": role,
        "seed": seed,
        "widths": list(params.widths),
        "K": params.num_heads,
        "head_dim": params.head_dim,
        "input_dim": params.input_dim,
        "n_trunk": len(params.trunk),
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = params_to_arrays(params)
    if extra_arrays:
        arrays.update(extra_arrays)
    save_artifact(path, meta, arrays)


def load_params(path) -> tuple[MlpParams, dict, dict[str, np.ndarray]]:
    meta, arrays = load_artifact(path)
    params = params_from_arrays(arrays, meta["n_trunk"], meta["K"])
    return params, meta, arrays
