"""Dense grayscale images, convolution, gradients and Gaussian pyramids.

Images and score maps are plain 2-D numpy arrays indexed ``[y, x]``.
Images are float32 in [0, 1]; score maps are float64.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    pass


def as_gray(img) -> np.ndarray:
    """Validate and convert to a float32 image with values in [0, 1]."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return arr


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    # header: magic, width, height, maxval separated by whitespace, comments allowed
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"truncated PGM header in {path}")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ImageFormatError(f"only binary P5 PGM is supported, got {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid PGM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h
    data = np.frombuffer(raw, dtype=dtype, count=n, offset=pos) if len(raw) - pos >= n * dtype.itemsize else None
    if data is None:
        raise ImageFormatError(f"truncated PGM data in {path}")
    return (data.reshape(h, w).astype(np.float64) / maxval).astype(np.float32)


def load_image(path) -> np.ndarray:
    """Read an 8/16-bit grayscale PNG or binary PGM, normalized to [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        return _read_pgm(path)
    try:
        im = Image.open(path)
        im.load()
    except Exception as exc:  # PIL raises a zoo of types
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    if im.format != "PNG":
        raise ImageFormatError(f"unsupported format {im.format} for {path}")
    if im.mode == "L":
        scale = 255.0
    elif im.mode in ("I;16", "I;16B", "I;16L", "I"):
        scale = 65535.0
    else:
        raise ImageFormatError(f"not a grayscale image (mode {im.mode}): {path}")
    arr = np.asarray(im).astype(np.float64)
    if arr.max(initial=0) > scale:
        raise ImageFormatError(f"pixel values exceed 16 bits in {path}")
    return (arr / scale).astype(np.float32)


def save_pgm(path, img) -> None:
    """Debug dump: 8-bit P5 PGM, values clamped to [0, 1]."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    h, w = arr.shape
    data = np.round(arr * 255.0).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def save_png16(path, values) -> None:
    """Write a uint16-valued grid as a 16-bit grayscale PNG."""
    arr = np.asarray(values)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
        raise ValueError("values out of 16-bit range")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def load_png16_raw(path) -> np.ndarray:
    """Raw integer values of a 16-bit (or 8-bit) grayscale PNG."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    im = Image.open(path)
    if im.mode not in ("L", "I;16", "I;16B", "I;16L", "I"):
        raise ImageFormatError(f"not a grayscale image (mode {im.mode}): {path}")
    return np.asarray(im).astype(np.int64)


def convolve2d(img, kernel, mode: str = "same") -> np.ndarray:
    """True 2-D convolution (kernel flipped).

    ``mode="valid"`` shrinks each side by ``kernel_side - 1``; ``mode="same"``
    keeps the shape and replicates edge pixels.
    """
    a = np.asarray(img, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {k.shape}")
    ry, rx = k.shape[0] // 2, k.shape[1] // 2
    if mode == "same":
        a = np.pad(a, ((ry, ry), (rx, rx)), mode="edge")
    elif mode != "valid":
        raise ValueError(f"unknown mode {mode!r}")
    oh, ow = a.shape[0] - 2 * ry, a.shape[1] - 2 * rx
    if oh < 1 or ow < 1:
        raise ValueError("kernel larger than image")
    kf = k[::-1, ::-1]
    out = np.zeros((oh, ow))
    # fixed accumulation order keeps results bit-reproducible
    for dy in range(k.shape[0]):
        for dx in range(k.shape[1]):
            out += kf[dy, dx] * a[dy:dy + oh, dx:dx + ow]
    return out


def gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients with replicated borders."""
    a = np.asarray(img, dtype=np.float64)
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ValueError("image must be at least 3x3")
    p = np.pad(a, 1, mode="edge")
    ix = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    iy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return ix, iy


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_rows(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    p = np.pad(a, ((0, 0), (r, r)), mode="edge")
    out = np.zeros_like(a)
    w = a.shape[1]
    for i, gi in enumerate(g):
        out += gi * p[:, i:i + w]
    return out


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, support radius ceil(3 sigma), replicated borders."""
    g = gaussian_kernel1d(sigma)
    a = np.asarray(img, dtype=np.float64)
    return _filter_rows(_filter_rows(a, g).T, g).T


def box_filter(img, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 window with replicated borders."""
    a = np.asarray(img, dtype=np.float64)
    if radius == 0:
        return a.copy()
    g = np.full(2 * radius + 1, 1.0 / (2 * radius + 1))
    return _filter_rows(_filter_rows(a, g).T, g).T


def gaussian_pyramid(img, levels: int, sigma: float = 1.0) -> list[np.ndarray]:
    """Level 0 is the input; each further level is blurred then decimated by 2."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    a = np.asarray(img, dtype=np.float32)
    h, w = a.shape
    for _ in range(levels - 1):
        h, w = (h + 1) // 2, (w + 1) // 2
    if levels > 1 and (h < 8 or w < 8):
        raise ValueError(f"too many pyramid levels ({levels}) for image of shape {a.shape}")
    pyr = [a]
    for _ in range(levels - 1):
        pyr.append(gaussian_blur(pyr[-1], sigma)[::2, ::2].astype(np.float32))
    return pyr
