"""Binary PPM images and the deterministic synthetic corpus."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER = re.compile(rb"P6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


class PPMError(ValueError):
    pass


def decode_ppm(raw: bytes) -> np.ndarray:
    """Decode P6 bytes to a ``3 x H x W`` uint8 array."""
    m = _HEADER.match(raw)
    if m is None:
        raise PPMError("malformed P6 header")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise PPMError(f"unsupported maxval {maxval} (only 255)")
    if w < 1 or h < 1:
        raise PPMError(f"invalid extent {w}x{h}")
    start = m.end()
    n = w * h * 3
    payload = raw[start : start + n]
    if len(payload) != n:
        raise PPMError(f"truncated payload: expected {n} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    """Encode a ``3 x H x W`` uint8 array as P6."""
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise ValueError(f"expected 3 x H x W pixels, got {pixels.shape}")
    _, h, w = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(pixels.transpose(1, 2, 0), dtype=np.uint8).tobytes()


def to_bytes(img: np.ndarray) -> np.ndarray:
    """``[0, 1]`` floats to uint8 by rounding to nearest."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def load_image(path, dtype=np.float32) -> np.ndarray:
    """Read a P6 file as a ``3 x H x W`` array in ``[0, 1]``."""
    return (decode_ppm(Path(path).read_bytes()).astype(np.float64) / 255.0).astype(dtype)


def save_image(img: np.ndarray, path) -> None:
    if img.ndim == 4:
        if img.shape[0] != 1:
            raise ValueError("save_image writes one image at a time")
        img = img[0]
    Path(path).write_bytes(encode_ppm(to_bytes(img)))


def load_corpus(directory, dtype=np.float32) -> tuple[np.ndarray, list[str]]:
    """All ``*.ppm`` files of a directory, sorted by name, as ``N x 3 x H x W``."""
    paths = sorted(Path(directory).glob("*.ppm"))
    if not paths:
        raise FileNotFoundError(f"no .ppm images in {directory}")
    images = [load_image(p, dtype) for p in paths]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"corpus images differ in shape: {sorted(shapes)}")
    return np.stack(images), [p.name for p in paths]


def synth_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """One procedural image with smooth shading, an ellipse and fine noise."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    img = np.empty((3, size, size))
    # background: a random low-frequency field per channel
    for c in range(3):
        base = rng.uniform(0.2, 0.8)
        gx, gy = rng.uniform(-0.3, 0.3, size=2)
        fx, fy = rng.uniform(0.5, 2.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img[c] = base + gx * (xx - 0.5) + gy * (yy - 0.5) + 0.1 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    # a jittered central ellipse with its own colour and shading
    cy, cx = 0.5 + rng.uniform(-0.08, 0.08, size=2)
    ry, rx = rng.uniform(0.22, 0.34), rng.uniform(0.16, 0.26)
    inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    mask = 1.0 / (1.0 + np.exp((inside - 1.0) * 12.0))
    tone = rng.uniform(0.3, 0.9, size=3)
    shade = 1.0 - 0.25 * np.clip(inside, 0, 1)
    for c in range(3):
        img[c] = img[c] * (1 - mask) + tone[c] * shade * mask
    img += rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_corpus_arrays(n: int, size: int, seed: int) -> np.ndarray:
    """``n`` synthetic images quantized to 8 bits, as ``n x 3 x size x size`` floats."""
    if size % 16:
        raise ValueError(f"size must be divisible by 16, got {size}")
    rng = np.random.default_rng(seed)
    return np.stack([to_bytes(synth_image(size, rng)).astype(np.float32) / 255.0 for _ in range(n)])


def synth_corpus(n: int, size: int, seed: int, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synth_corpus_arrays(n, size, seed)):
        p = out / f"img_{i:04d}.ppm"
        save_image(img, p)
        paths.append(p)
    return paths
