"""JPEG pixel pipeline with exact and differentiable rounding.

With ``round_mode="true"`` :func:`jpeg_pipeline` reproduces the decoded
pixels of a baseline JPEG encoder (entropy coding is lossless and therefore
omitted). Every other round mode replaces the quantizer's rounding with a
smooth stand-in so gradients reach the input image.

Images are ``N x 3 x H x W`` tensors in ``[0, 255]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .tensor import Tensor

ROUND_MODES = ("true", "identity", "cubic", "soft", "sin")
SUBSAMPLING = ("444", "420")

# ITU-T T.81 Annex K, tables K.1 and K.2
BASE_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)
BASE_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)

# full-range BT.601 (JFIF)
RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_OFFSET = np.array([0.0, 128.0, 128.0])
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)


@dataclass(frozen=True)
class JpegConfig:
    quality: int = 80
    round_mode: str = "sin"
    subsample: str = "420"

    def __post_init__(self):
        _check_quality(self.quality)
        if self.round_mode not in ROUND_MODES:
            raise ValueError(f"round_mode must be one of {ROUND_MODES}, got {self.round_mode!r}")
        if self.subsample not in SUBSAMPLING:
            raise ValueError(f"subsample must be one of {SUBSAMPLING}, got {self.subsample!r}")

    @property
    def differentiable(self) -> bool:
        return self.round_mode != "true"


@dataclass(frozen=True)
class QuantTables:
    luma: np.ndarray
    chroma: np.ndarray


def _check_quality(q) -> None:
    if int(q) != q or not 1 <= q <= 99:
        raise ValueError(f"quality must be an integer in [1, 99], got {q!r}")


@lru_cache(maxsize=None)
def quality_to_tables(q: int) -> QuantTables:
    """Scale the Annex K tables to quality ``q`` (libjpeg convention)."""
    _check_quality(q)
    scale = 5000 // q if q < 50 else 200 - 2 * q
    luma = np.clip((BASE_LUMA * scale + 50) // 100, 1, 255)
    chroma = np.clip((BASE_CHROMA * scale + 50) // 100, 1, 255)
    luma.setflags(write=False)
    chroma.setflags(write=False)
    return QuantTables(luma, chroma)


# ---------------------------------------------------------------------------
# colour and sampling
# ---------------------------------------------------------------------------

def _color_transform(img: Tensor, matrix: np.ndarray, pre: np.ndarray, post: np.ndarray) -> Tensor:
    if img.ndim != 4 or img.shape[1] != 3:
        raise ValueError(f"expected an N x 3 x H x W image, got shape {img.shape}")
    planes = [img[:, c] for c in range(3)]
    if pre.any():
        planes = [p - float(o) for p, o in zip(planes, pre)]
    out = []
    for row, off in zip(matrix, post):
        acc = planes[0] * float(row[0]) + planes[1] * float(row[1]) + planes[2] * float(row[2])
        out.append(acc + float(off) if off else acc)
    return T.stack_channels(out)


def rgb_to_ycbcr(img: Tensor) -> Tensor:
    return _color_transform(img, RGB_TO_YCBCR, np.zeros(3), YCBCR_OFFSET)


def ycbcr_to_rgb(img: Tensor) -> Tensor:
    return _color_transform(img, YCBCR_TO_RGB, YCBCR_OFFSET, np.zeros(3))


def chroma_subsample(ycbcr: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Split into planes, 2x2-averaging the two chroma planes."""
    h, w = ycbcr.shape[2:]
    if h % 2 or w % 2:
        raise ValueError(f"chroma subsampling needs even extents, got {h}x{w}")
    return ycbcr[:, 0], T.avg_pool2(ycbcr[:, 1]), T.avg_pool2(ycbcr[:, 2])


def chroma_upsample(plane: Tensor) -> Tensor:
    return T.upsample2(plane)


# ---------------------------------------------------------------------------
# blocks and DCT
# ---------------------------------------------------------------------------

def _pad_edge(plane: Tensor, h8: int, w8: int) -> Tensor:
    h, w = plane.shape[-2:]
    if h8 != h:
        plane = T.take(plane, np.minimum(np.arange(h8), h - 1), axis=plane.ndim - 2)
    if w8 != w:
        plane = T.take(plane, np.minimum(np.arange(w8), w - 1), axis=plane.ndim - 1)
    return plane


def block_split(plane: Tensor) -> Tensor:
    """``N x H x W`` plane to ``N x B x 8 x 8`` blocks in raster order.

    Extents that are not multiples of 8 are padded by edge replication.
    """
    n, h, w = plane.shape
    h8, w8 = -(-h // 8) * 8, -(-w // 8) * 8
    plane = _pad_edge(plane, h8, w8)
    blocks = plane.reshape(n, h8 // 8, 8, w8 // 8, 8).transpose(0, 1, 3, 2, 4)
    return blocks.reshape(n, (h8 // 8) * (w8 // 8), 8, 8)


def block_merge(blocks: Tensor, height: int, width: int) -> Tensor:
    """Inverse of :func:`block_split`, cropping any padding."""
    n = blocks.shape[0]
    bh, bw = -(-height // 8), -(-width // 8)
    if blocks.shape[1] != bh * bw:
        raise ValueError(f"{blocks.shape[1]} blocks cannot tile a {height}x{width} plane")
    plane = blocks.reshape(n, bh, bw, 8, 8).transpose(0, 1, 3, 2, 4).reshape(n, bh * 8, bw * 8)
    if bh * 8 != height or bw * 8 != width:
        plane = plane[:, :height, :width]
    return plane


@lru_cache(maxsize=None)
def _dct_matrix_f64() -> np.ndarray:
    n = 8
    d = np.zeros((n, n))
    for u in range(n):
        alpha = math.sqrt(1 / n) if u == 0 else math.sqrt(2 / n)
        for x in range(n):
            d[u, x] = alpha * math.cos(math.pi * (2 * x + 1) * u / (2 * n))
    return d


def dct_matrix(dtype=None) -> Tensor:
    """Orthonormal 8-point DCT-II basis, rows indexed by frequency."""
    return Tensor(_dct_matrix_f64(), dtype=dtype)


def _check_blocks(t: Tensor) -> None:
    if t.shape[-2:] != (8, 8):
        raise ValueError(f"expected trailing 8x8 blocks, got shape {t.shape}")


def dct8x8(blocks: Tensor) -> Tensor:
    _check_blocks(blocks)
    d = dct_matrix(blocks.dtype)
    dt = Tensor(d.data.T, dtype=blocks.dtype)
    return T.matmul(T.matmul(d, blocks), dt)


def idct8x8(coeffs: Tensor) -> Tensor:
    _check_blocks(coeffs)
    d = dct_matrix(coeffs.dtype)
    dt = Tensor(d.data.T, dtype=coeffs.dtype)
    return T.matmul(T.matmul(dt, coeffs), d)


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------

def _sin_round(x: Tensor) -> Tensor:
    two_pi = 2 * math.pi
    return x - T.sin(x * two_pi) * (1 / two_pi)


def approx_round(x: Tensor, mode: str) -> Tensor:
    """Apply the rounding stand-in selected by ``mode`` elementwise."""
    if mode == "true":
        return T.round_nograd(x)
    if mode == "identity":
        return x
    if mode == "sin":
        return _sin_round(x)
    if mode == "cubic":
        r = T.round_nograd(x)
        return r + T.cube(x - r)
    if mode == "soft":
        return T.straight_through(_sin_round(x), np.round(x.data))
    raise ValueError(f"unknown round mode {mode!r}; expected one of {ROUND_MODES}")


def quantize(coeffs: Tensor, table: np.ndarray, round_mode: str) -> Tensor:
    """Quantize and immediately dequantize DCT blocks against ``table``."""
    table = np.asarray(table)
    if table.shape != (8, 8):
        raise ValueError(f"quantization table must be 8x8, got {table.shape}")
    if np.any(table <= 0):
        raise ValueError("quantization table entries must be positive")
    _check_blocks(coeffs)
    full = np.broadcast_to(table.astype(coeffs.dtype), coeffs.shape)
    q = Tensor(full, dtype=coeffs.dtype)
    inv = Tensor(1.0 / full, dtype=coeffs.dtype)
    return approx_round(coeffs * inv, round_mode) * q


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def _compress_plane(plane: Tensor, table: np.ndarray, round_mode: str) -> Tensor:
    h, w = plane.shape[1:]
    blocks = block_split(plane) - 128.0
    coeffs = quantize(dct8x8(blocks), table, round_mode)
    return block_merge(idct8x8(coeffs) + 128.0, h, w)


def jpeg_pipeline(img: Tensor, cfg: JpegConfig) -> Tensor:
    """Compress and decompress ``img`` (values in ``[0, 255]``)."""
    if img.ndim != 4 or img.shape[1] != 3:
        raise ValueError(f"expected an N x 3 x H x W image, got shape {img.shape}")
    tables = quality_to_tables(cfg.quality)
    ycc = rgb_to_ycbcr(img)
    if cfg.subsample == "420":
        y, cb, cr = chroma_subsample(ycc)
    else:
        y, cb, cr = ycc[:, 0], ycc[:, 1], ycc[:, 2]
    y = _compress_plane(y, tables.luma, cfg.round_mode)
    cb = _compress_plane(cb, tables.chroma, cfg.round_mode)
    cr = _compress_plane(cr, tables.chroma, cfg.round_mode)
    if cfg.subsample == "420":
        cb, cr = chroma_upsample(cb), chroma_upsample(cr)
    return T.clamp(ycbcr_to_rgb(T.stack_channels([y, cb, cr])), 0.0, 255.0)


def jpeg_unit(img: Tensor, cfg: JpegConfig) -> Tensor:
    """:func:`jpeg_pipeline` for images in ``[0, 1]``."""
    return jpeg_pipeline(img * 255.0, cfg) * (1 / 255.0)


def reference_jpeg(img: np.ndarray, quality: int, subsample: str = "420") -> np.ndarray:
    """True-rounding roundtrip of a ``[0, 1]`` array; no graph is recorded."""
    out = jpeg_unit(Tensor(img, dtype=img.dtype), JpegConfig(quality, "true", subsample))
    return out.data
