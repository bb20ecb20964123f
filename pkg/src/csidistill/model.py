"""Student encoder: two strided temporal convolutions, projection and classifier heads.

Layout of a forward pass on a ``[time, channels]`` feature::

    conv1 (k=5, s=2) -> tanh -> conv2 (k=5, s=2) -> tanh      [T', 64]
    per-position projection                                   [T', d]  segment embeddings
    temporal mean                                             [d]      pooled embedding
    classifier                                                [C]      logits

Convolutions are valid (no padding): ``out_len = (n - kernel) // stride + 1``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, FormatError, NumericError, TruncatedError

KERNEL = 5
STRIDE = 2
HIDDEN1 = 32
HIDDEN2 = 64
MIN_TIME = 25

PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "proj_w", "proj_b", "cls_w", "cls_b")

CHECKPOINT_MAGIC = b"GLSD"
CHECKPOINT_VERSION = 1
# magic | version | in_channels d C kernel1 kernel2 hidden1 hidden2
_CKPT_HEADER = struct.Struct("<4sI7I")


def conv_out_len(n: int, kernel: int = KERNEL, stride: int = STRIDE) -> int:
    return (n - kernel) // stride + 1


def encoded_len(n: int) -> int:
    """Number of segment embeddings produced for an input of ``n`` time steps."""
    return conv_out_len(conv_out_len(n))


@dataclass
class ModelState:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    @property
    def in_channels(self) -> int:
        return self.params["conv1_w"].shape[1]

    @property
    def dim(self) -> int:
        return self.params["proj_w"].shape[1]

    @property
    def num_classes(self) -> int:
        return self.params["cls_w"].shape[1]

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ModelState":
        return ModelState({k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.grads.items()})


@dataclass
class ForwardRecord:
    x: np.ndarray
    patches1: np.ndarray
    h1: np.ndarray
    patches2: np.ndarray
    h2: np.ndarray
    segment_embeddings: np.ndarray
    pooled_embedding: np.ndarray
    logits: np.ndarray


def _glorot(rng, shape, fan_in, fan_out):
    b = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-b, b, size=shape)


def init_params(seed: int, in_channels: int, d: int = 64, C: int = 6) -> ModelState:
    """Glorot-uniform weights, zero biases, zero gradient buffers."""
    if min(in_channels, d, C) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    p = {
        "conv1_w": _glorot(rng, (KERNEL, in_channels, HIDDEN1),
                           KERNEL * in_channels, KERNEL * HIDDEN1),
        "conv1_b": np.zeros(HIDDEN1),
        "conv2_w": _glorot(rng, (KERNEL, HIDDEN1, HIDDEN2),
                           KERNEL * HIDDEN1, KERNEL * HIDDEN2),
        "conv2_b": np.zeros(HIDDEN2),
        "proj_w": _glorot(rng, (HIDDEN2, d), HIDDEN2, d),
        "proj_b": np.zeros(d),
        "cls_w": _glorot(rng, (d, C), d, C),
        "cls_b": np.zeros(C),
    }
    return ModelState(p, {k: np.zeros_like(v) for k, v in p.items()})


def _patches(x: np.ndarray) -> np.ndarray:
    # [T_out, kernel, channels]
    return np.swapaxes(sliding_window_view(x, KERNEL, axis=0)[::STRIDE], 1, 2)


def forward(state: ModelState, feature) -> ForwardRecord:
    x = np.asarray(feature, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"feature must be [time, channels], got shape {x.shape}")
    if x.shape[1] != state.in_channels:
        raise DataError(f"expected {state.in_channels} channels, got {x.shape[1]}")
    if x.shape[0] < MIN_TIME:
        raise DataError(f"time length {x.shape[0]} < {MIN_TIME}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input feature")
    p = state.params
    patches1 = _patches(x)
    h1 = np.tanh(np.einsum("tkc,kco->to", patches1, p["conv1_w"]) + p["conv1_b"])
    patches2 = _patches(h1)
    h2 = np.tanh(np.einsum("tkc,kco->to", patches2, p["conv2_w"]) + p["conv2_b"])
    seg = h2 @ p["proj_w"] + p["proj_b"]
    pooled = seg.mean(axis=0)
    logits = pooled @ p["cls_w"] + p["cls_b"]
    return ForwardRecord(x, patches1, h1, patches2, h2, seg, pooled, logits)


def _scatter_patches(dpatch: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, dpatch.shape[2]))
    T_out = dpatch.shape[0]
    for k in range(KERNEL):
        out[k:k + STRIDE * (T_out - 1) + 1:STRIDE] += dpatch[:, k, :]
    return out


def backward(state: ModelState, record: ForwardRecord, grad_segments=None,
             grad_pooled=None, grad_logits=None) -> None:
    """Accumulate parameter gradients (``+=``) given upstream gradients.

    Any upstream gradient may be ``None``, meaning zero.
    """
    p, g = state.params, state.grads
    seg = record.segment_embeddings
    Tp, d = seg.shape
    C = record.logits.shape[0]
    gs = np.zeros((Tp, d)) if grad_segments is None else np.asarray(grad_segments, float)
    gp = np.zeros(d) if grad_pooled is None else np.asarray(grad_pooled, float)
    gl = np.zeros(C) if grad_logits is None else np.asarray(grad_logits, float)
    if gs.shape != (Tp, d) or gp.shape != (d,) or gl.shape != (C,):
        raise DataError("upstream gradient shapes do not match the forward record")

    g["cls_w"] += np.outer(record.pooled_embedding, gl)
    g["cls_b"] += gl
    gp = gp + p["cls_w"] @ gl
    gs = gs + gp / Tp

    g["proj_w"] += record.h2.T @ gs
    g["proj_b"] += gs.sum(axis=0)
    ga2 = (gs @ p["proj_w"].T) * (1.0 - record.h2 ** 2)

    g["conv2_w"] += np.einsum("tkc,to->kco", record.patches2, ga2)
    g["conv2_b"] += ga2.sum(axis=0)
    dpatch = np.einsum("to,kco->tkc", ga2, p["conv2_w"])
    ga1 = _scatter_patches(dpatch, record.h1.shape[0]) * (1.0 - record.h1 ** 2)

    g["conv1_w"] += np.einsum("tkc,to->kco", record.patches1, ga1)
    g["conv1_b"] += ga1.sum(axis=0)


# ----------------------------------------------------------------------------
# checkpoints


def encode_checkpoint(state: ModelState) -> bytes:
    header = _CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, state.in_channels,
                               state.dim, state.num_classes, KERNEL, KERNEL, HIDDEN1, HIDDEN2)
    body = b"".join(np.ascontiguousarray(state.params[k], dtype="<f8").tobytes()
                    for k in PARAM_NAMES)
    return header + body


def decode_checkpoint(buf: bytes) -> ModelState:
    if len(buf) < _CKPT_HEADER.size:
        raise TruncatedError("checkpoint header truncated")
    magic, version, cin, d, C, k1, k2, h1, h2 = _CKPT_HEADER.unpack_from(buf)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if (k1, k2, h1, h2) != (KERNEL, KERNEL, HIDDEN1, HIDDEN2):
        raise FormatError(f"architecture {(k1, k2, h1, h2)} not supported")
    shapes = {k: v.shape for k, v in init_params(0, cin, d, C).params.items()}
    need = _CKPT_HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(buf) != need:
        kind = TruncatedError if len(buf) < need else FormatError
        raise kind(f"checkpoint size mismatch: need {need} bytes, got {len(buf)}")
    params = {}
    off = _CKPT_HEADER.size
    for k in PARAM_NAMES:
        n = int(np.prod(shapes[k]))
        params[k] = np.frombuffer(buf, "<f8", n, off).reshape(shapes[k]).astype(np.float64)
        off += 8 * n
    return ModelState(params, {k: np.zeros_like(v) for k, v in params.items()})


def save_checkpoint(state: ModelState, path) -> int:
    data = encode_checkpoint(state)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_checkpoint(path) -> ModelState:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def checkpoint_hash(state: ModelState) -> str:
    return hashlib.sha256(encode_checkpoint(state)).hexdigest()
