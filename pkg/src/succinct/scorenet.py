"""Fully convolutional score network in plain numpy, with Adam and checkpoints.

Architecture for depth ``d``: d/2 unpadded 3x3 convolutions (64 channels,
each shrinks H and W by 2), d/2 stride-1 unpadded 3x3 transposed convolutions
(128 channels, each grows H and W by 2), ReLU after each of those, then a
zero-padded 3x3 convolution to one channel and a sigmoid. Output size equals
input size.

Computation runs in float64 so finite-difference checks are meaningful;
checkpoints store float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"SCORENET"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class FcnConfig:
    depth: int = 2
    conv_channels: int = 64
    deconv_channels: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.depth < 2 or self.depth % 2:
            raise ValueError("depth must be even and >= 2")

    @property
    def layer_kinds(self) -> list[str]:
        half = self.depth // 2
        return ["conv"] * half + ["deconv"] * half + ["final"]


@dataclass
class FcnParams:
    config: FcnConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "FcnParams":
        return FcnParams(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def layer_shapes(config: FcnConfig) -> list[tuple[tuple[int, ...], int]]:
    """(weight shape, fan_in) per layer.

    Convolution weights are (out, in, 3, 3); transposed-convolution weights
    are (in, out, 3, 3).
    """
    shapes = []
    c = 1
    for kind in config.layer_kinds:
        if kind == "conv":
            shapes.append(((config.conv_channels, c, 3, 3), c * 9))
            c = config.conv_channels
        elif kind == "deconv":
            shapes.append(((c, config.deconv_channels, 3, 3), c * 9))
            c = config.deconv_channels
        else:
            shapes.append(((1, c, 3, 3), c * 9))
    return shapes


def init_params(config: FcnConfig) -> FcnParams:
    """He-uniform weights, zero biases, deterministic in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for kind, (shape, fan_in) in zip(config.layer_kinds, layer_shapes(config)):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=shape))
        biases.append(np.zeros(shape[1] if kind == "deconv" else shape[0]))
    return FcnParams(config, weights, biases)


# --- layer primitives: x is (C, H, W) ---------------------------------------

def _tap(w, ky, kx, transpose=False):
    # strided operands push numpy matmul off the BLAS path
    m = w[:, :, ky, kx]
    return np.ascontiguousarray(m.T if transpose else m)


def _conv_valid(x, w, b):
    c, h, wd = x.shape
    oh, ow = h - 2, wd - 2
    out = np.zeros((w.shape[0], oh * ow))
    for ky in range(3):
        for kx in range(3):
            out += _tap(w, ky, kx) @ x[:, ky:ky + oh, kx:kx + ow].reshape(c, -1)
    out += b[:, None]
    return out.reshape(-1, oh, ow)


def _conv_valid_backward(x, w, gout):
    c, h, wd = x.shape
    o, oh, ow = gout.shape
    g = gout.reshape(o, -1)
    dw = np.zeros_like(w)
    dx = np.zeros_like(x)
    for ky in range(3):
        for kx in range(3):
            dw[:, :, ky, kx] = g @ x[:, ky:ky + oh, kx:kx + ow].reshape(c, -1).T
            dx[:, ky:ky + oh, kx:kx + ow] += (_tap(w, ky, kx, True) @ g).reshape(c, oh, ow)
    return dx, dw, g.sum(axis=1)


def _deconv(x, w, b):
    c, h, wd = x.shape
    o = w.shape[1]
    xf = x.reshape(c, -1)
    out = np.zeros((o, h + 2, wd + 2))
    for ky in range(3):
        for kx in range(3):
            out[:, ky:ky + h, kx:kx + wd] += (_tap(w, ky, kx, True) @ xf).reshape(o, h, wd)
    out += b[:, None, None]
    return out


def _deconv_backward(x, w, gout):
    c, h, wd = x.shape
    o = w.shape[1]
    xf = x.reshape(c, -1)
    dw = np.zeros_like(w)
    dx = np.zeros((c, h * wd))
    for ky in range(3):
        for kx in range(3):
            gs = gout[:, ky:ky + h, kx:kx + wd].reshape(o, -1)
            dw[:, :, ky, kx] = xf @ gs.T
            dx += _tap(w, ky, kx) @ gs
    return dx.reshape(c, h, wd), dw, gout.sum(axis=(1, 2))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward_cache(params: FcnParams, img, gates=None):
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D image")
    half = params.config.depth // 2
    if min(x.shape) - 2 * half < 1:
        raise ValueError(f"image {x.shape} too small for depth {params.config.depth}")
    a = x[None]
    cache = []
    for i, (kind, w, b) in enumerate(zip(params.config.layer_kinds, params.weights, params.biases)):
        cache.append(a)
        if kind == "final":
            a = _sigmoid(_conv_valid(np.pad(a, ((0, 0), (1, 1), (1, 1))), w, b))
        else:
            z = _conv_valid(a, w, b) if kind == "conv" else _deconv(a, w, b)
            a = np.maximum(z, 0.0) if gates is None else z * gates[i]
        cache.append(a)
    return a[0], cache


def forward(params: FcnParams, img, gates=None) -> np.ndarray:
    """Score map in (0, 1) with the input's shape.

    ``gates`` (from :func:`relu_gates`) freezes every ReLU's on/off pattern,
    which makes the network smooth in its parameters around that pattern.
    """
    return _forward_cache(params, img, gates)[0]


def relu_gates(params: FcnParams, img) -> list[np.ndarray]:
    _, cache = _forward_cache(params, img)
    return [(cache[2 * i + 1] > 0).astype(np.float64) for i in range(len(params.weights) - 1)]


def backward(params: FcnParams, img, upstream) -> FcnParams:
    """Parameter gradients of ``sum(upstream * forward(img))``.

    Returned as an :class:`FcnParams` holding gradients instead of values.
    """
    out, cache = _forward_cache(params, img)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != out.shape:
        raise ValueError(f"upstream gradient {g.shape} does not match output {out.shape}")
    g = g[None]
    n = len(params.weights)
    dws: list = [None] * n
    dbs: list = [None] * n
    for i in range(n - 1, -1, -1):
        kind = params.config.layer_kinds[i]
        a_in, a_out = cache[2 * i], cache[2 * i + 1]
        w = params.weights[i]
        if kind == "final":
            g = g * a_out * (1.0 - a_out)
            dx, dws[i], dbs[i] = _conv_valid_backward(np.pad(a_in, ((0, 0), (1, 1), (1, 1))), w, g)
            g = dx[:, 1:-1, 1:-1]
        elif kind == "deconv":
            g = g * (a_out > 0)
            g, dws[i], dbs[i] = _deconv_backward(a_in, w, g)
        else:
            g = g * (a_out > 0)
            g, dws[i], dbs[i] = _conv_valid_backward(a_in, w, g)
    return FcnParams(params.config, dws, dbs)


# --- Adam -------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: FcnParams, lr: float = 1e-5) -> "AdamState":
        ts = params.tensors()
        return cls([np.zeros_like(t) for t in ts], [np.zeros_like(t) for t in ts], lr=lr)


def adam_step(params: FcnParams, grads: FcnParams, state: AdamState) -> tuple[FcnParams, AdamState]:
    """Bias-corrected Adam update; inputs are left untouched."""
    ps, gs = params.tensors(), grads.tensors()
    if len(ps) != len(gs) or any(p.shape != g.shape for p, g in zip(ps, gs)):
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in gs):
        raise FloatingPointError("non-finite gradient")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        new_p.append(p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    out = FcnParams(params.config, new_p[0::2], new_p[1::2])
    st = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return out, st


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(path, params: FcnParams, diagnostics: list[dict] | None = None) -> None:
    """Binary blob: magic, version, config JSON, then float32 LE tensors in layer order.

    Diagnostics, when given, go to a ``.json`` sidecar next to the blob.
    """
    path = Path(path)
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(cfg)), cfg]
    for t in params.tensors():
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))
    if diagnostics is not None:
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(diagnostics, indent=1, sort_keys=True))


def load_checkpoint(path) -> FcnParams:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path} is not a score-network checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, n = struct.unpack_from("<II", raw, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += 8
    config = FcnConfig(**json.loads(raw[off:off + n]))
    off += n
    template = init_params(config)
    tensors = []
    for t in template.tensors():
        size = t.size * 4
        if off + size > len(raw):
            raise ValueError(f"truncated checkpoint {path}")
        tensors.append(np.frombuffer(raw, dtype="<f4", count=t.size, offset=off).reshape(t.shape).astype(np.float64))
        off += size
    if off != len(raw):
        raise ValueError(f"trailing bytes in checkpoint {path}")
    return FcnParams(config, tensors[0::2], tensors[1::2])
