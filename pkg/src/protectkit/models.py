"""Manipulation models under attack and the perturbation generator.

The manipulation models are small frozen convolutional encoder-decoders
that stand in for large pretrained image-to-image networks; attacks only
ever treat them as differentiable black boxes. The generator is a U-Net
that maps an image concatenated with a global perturbation to an
image-specific perturbation.

All images live in ``[0, 1]``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

WHITE = (1.0, 1.0, 1.0)
BLUE = (0.0, 0.0, 1.0)

CHECKPOINT_FORMAT = "protectkit-checkpoint/1"


@dataclass
class ModelParams:
    """Named parameter tensors plus the descriptor needed to rebuild them."""

    arch: dict
    params: dict[str, Tensor]
    seed: int = 0

    def trainable(self, flag: bool = True) -> "ModelParams":
        for p in self.params.values():
            p.requires_grad = flag
            p.grad = None
        return self

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def count(self) -> int:
        return sum(p.size for p in self.params.values())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(self.params[name].data.tobytes())
        return h.hexdigest()

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            dict(self.arch),
            {k: Tensor(v.data, requires_grad=v.requires_grad, dtype=dtype) for k, v in self.params.items()},
            self.seed,
        )

    def __call__(self, x: Tensor) -> Tensor:
        return FORWARD[self.arch["kind"]](self, x)


# ---------------------------------------------------------------------------
# toy manipulation models
# ---------------------------------------------------------------------------

TOY_WIDTH = 8
# detector gains per layer; tuned so that an eps of a few 1/255 steps can
# swing the output while smooth clean images leave the detectors quiet
TOY_GAINS = (3.0, 1.5, 1.5, 1.0)
_LOWPASS = np.outer([1, 3, 3, 1], [1, 3, 3, 1]) / 64.0
_BILINEAR = np.outer([0.25, 0.75, 0.75, 0.25], [0.25, 0.75, 0.75, 0.25])


def _normal(rng: np.random.Generator, shape, std: float) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape))


def _unit_kernels(rng: np.random.Generator, shape, zero_mean: bool) -> np.ndarray:
    w = rng.normal(size=shape)
    if zero_mean:
        w -= w.mean(axis=(-2, -1), keepdims=True)
    norm = np.sqrt((w**2).sum(axis=tuple(range(1, w.ndim)), keepdims=True))
    return w / norm


def _toy_params(in_channels: int, seed: int, kind: str) -> ModelParams:
    """Seeded weights for a toy encoder-decoder.

    Channels 0-2 carry a low-pass copy of the (last three) input channels
    down and back up, so clean inputs are roughly reconstructed. The
    remaining channels are random zero-mean detectors whose responses are
    mixed into every output channel; they form the high-gain directions an
    attack can exploit.
    """
    rng = np.random.default_rng(seed)
    w = TOY_WIDTH
    det = w - 3
    g1, g2, g3, g4 = TOY_GAINS
    lo = in_channels - 3

    d1 = np.zeros((w, in_channels, 4, 4))
    for c in range(3):
        d1[c, lo + c] = _LOWPASS
    d1[3:] = g1 * _unit_kernels(rng, (det, in_channels, 4, 4), zero_mean=True)

    d2 = np.zeros((w, w, 4, 4))
    for c in range(3):
        d2[c, c] = _LOWPASS
    d2[3:] = g2 * _unit_kernels(rng, (det, w, 4, 4), zero_mean=False)
    d2[3:, :3] -= d2[3:, :3].mean(axis=(-2, -1), keepdims=True)

    u1 = np.zeros((w, w, 4, 4))
    for c in range(3):
        u1[c, c] = _BILINEAR
    u1[3:, 3:] = g3 * rng.normal(size=(det, det, 1, 1)) / np.sqrt(det) * _BILINEAR

    u2 = np.zeros((w, 3, 4, 4))
    for c in range(3):
        u2[c, c] = _BILINEAR
    u2[3:] = g4 * rng.normal(size=(det, 3, 1, 1)) / np.sqrt(det) * _BILINEAR
    # the decoder emits 3 * (x - 0.5); tanh then maps back into [0, 1]
    u2 *= 3.0

    params = {
        "down1.weight": Tensor(d1),
        "down1.bias": Tensor(np.zeros(w)),
        "down2.weight": Tensor(d2),
        "down2.bias": Tensor(np.concatenate([np.zeros(3), rng.normal(0.0, 0.05, det)])),
        "up1.weight": Tensor(u1),
        "up1.bias": Tensor(np.zeros(w)),
        "up2.weight": Tensor(u2),
        "up2.bias": Tensor(np.full(3, -1.5)),
    }
    return ModelParams({"kind": kind, "in_channels": in_channels, "width": w}, params, seed)


def _toy_forward(m: ModelParams, x: Tensor) -> Tensor:
    p = m.params
    h = T.leaky_relu(T.conv2d(x, p["down1.weight"], p["down1.bias"], stride=2, padding=1), 0.2)
    h = T.leaky_relu(T.conv2d(h, p["down2.weight"], p["down2.bias"], stride=2, padding=1), 0.2)
    h = T.leaky_relu(T.conv_transpose2d(h, p["up1.weight"], p["up1.bias"], stride=2, padding=1), 0.2)
    h = T.conv_transpose2d(h, p["up2.weight"], p["up2.bias"], stride=2, padding=1)
    return (T.tanh(h) + 1.0) * 0.5


def _identity_forward(m: ModelParams, x: Tensor) -> Tensor:
    return x


@dataclass
class ManipulationSpec:
    """A frozen manipulation model paired with its solid-colour target."""

    name: str
    model: ModelParams
    target_color: tuple[float, float, float]
    arity: int = 1

    def __call__(self, x: Tensor, source: Tensor | None = None) -> Tensor:
        """Manipulate ``x``; two-input models also take an unprotected ``source``."""
        if self.arity == 2:
            if source is None:
                raise ValueError(f"{self.name} needs a source image")
            if source.requires_grad:
                raise ValueError("gradients must not flow into the source image")
            return self.model(T.concat_channels(source, x))
        return self.model(x)

    def target(self, shape) -> np.ndarray:
        n, c, h, w = shape
        color = np.asarray(self.target_color, dtype=T.default_dtype()).reshape(1, c, 1, 1)
        return np.broadcast_to(color, (n, c, h, w)).copy()

    def fingerprint(self) -> str:
        return self.model.fingerprint()


def toy_recon_model(seed: int = 0, target: tuple[float, float, float] = WHITE) -> ManipulationSpec:
    """Single-input encoder-decoder standing in for a self-reconstruction model."""
    return ManipulationSpec("toy_recon", _toy_params(3, seed, "toy_recon"), tuple(target), 1)


def toy_blend_model(seed: int = 1, target: tuple[float, float, float] = BLUE) -> ManipulationSpec:
    """Two-input encoder-decoder standing in for face swapping / style mixing."""
    return ManipulationSpec("toy_blend", _toy_params(6, seed, "toy_blend"), tuple(target), 2)


def identity_model(target: tuple[float, float, float] = WHITE) -> ManipulationSpec:
    """``f(x) = x``; only useful for checking attack arithmetic in closed form."""
    return ManipulationSpec("identity", ModelParams({"kind": "identity"}, {}, 0), tuple(target), 1)


# ---------------------------------------------------------------------------
# U-Net generator
# ---------------------------------------------------------------------------

GENERATOR_WIDTHS = (8, 16, 32, 64)
MAX_DEPTH = 6


def unet_depth(image_size: int) -> int:
    """Number of down-sampling levels, stopping at a 4x4 bottleneck (at most 6)."""
    return max(1, min(MAX_DEPTH, int(math.log2(image_size)) - 2))


def unet_widths(base_width: int, depth: int) -> list[int]:
    return [base_width * min(2**i, 8) for i in range(depth)]


def unet_generator(
    base_width: int = 16,
    seed: int = 0,
    image_size: int = 64,
    depth: int | None = None,
    in_channels: int = 6,
    out_channels: int = 3,
) -> ModelParams:
    """U-Net with 4x4 stride-2 convolutions and skip concatenations.

    Weights are drawn from N(0, 0.02); biases start at zero.
    """
    if base_width not in GENERATOR_WIDTHS:
        raise ValueError(f"base_width must be one of {GENERATOR_WIDTHS}, got {base_width}")
    depth = unet_depth(image_size) if depth is None else depth
    if image_size % (2**depth):
        raise ValueError(f"image size {image_size} is not divisible by 2**{depth}")
    rng = np.random.default_rng(seed)
    widths = unet_widths(base_width, depth)
    params: dict[str, Tensor] = {}
    prev = in_channels
    for i, w in enumerate(widths):
        params[f"enc{i}.weight"] = _normal(rng, (w, prev, 4, 4), 0.02)
        params[f"enc{i}.bias"] = Tensor(np.zeros(w))
        prev = w
    # decoder level i upsamples back to the resolution of encoder level i - 1
    for i in reversed(range(depth)):
        cin = widths[i] if i == depth - 1 else 2 * widths[i]
        cout = widths[i - 1] if i > 0 else out_channels
        params[f"dec{i}.weight"] = _normal(rng, (cin, cout, 4, 4), 0.02)
        params[f"dec{i}.bias"] = Tensor(np.zeros(cout))
    arch = {
        "kind": "unet",
        "base_width": base_width,
        "depth": depth,
        "image_size": image_size,
        "in_channels": in_channels,
        "out_channels": out_channels,
    }
    return ModelParams(arch, params, seed)


def _unet_forward(m: ModelParams, x: Tensor) -> Tensor:
    p = m.params
    depth = m.arch["depth"]
    if x.shape[2] % (2**depth) or x.shape[3] % (2**depth):
        raise ValueError(f"input extent {x.shape[2:]} is not divisible by 2**{depth}")
    skips = []
    h = x
    for i in range(depth):
        if i > 0:
            h = T.leaky_relu(h, 0.2)
        h = T.conv2d(h, p[f"enc{i}.weight"], p[f"enc{i}.bias"], stride=2, padding=1)
        skips.append(h)
    for i in reversed(range(depth)):
        if i < depth - 1:
            h = T.concat_channels(h, skips[i])
        h = T.conv_transpose2d(T.relu(h), p[f"dec{i}.weight"], p[f"dec{i}.bias"], stride=2, padding=1)
    return h


FORWARD = {
    "toy_recon": _toy_forward,
    "toy_blend": _toy_forward,
    "identity": _identity_forward,
    "unet": _unet_forward,
}


def build_params(arch: dict, seed: int = 0) -> ModelParams:
    kind = arch.get("kind")
    if kind == "unet":
        return unet_generator(
            arch["base_width"], seed, arch["image_size"], arch["depth"], arch["in_channels"], arch["out_channels"]
        )
    if kind in ("toy_recon", "toy_blend"):
        return _toy_params(arch["in_channels"], seed, kind)
    if kind == "identity":
        return ModelParams({"kind": "identity"}, {}, seed)
    raise ValueError(f"unknown architecture kind {kind!r}")


def apply_protection(gen: ModelParams, img: Tensor, delta_g, eps: float) -> tuple[Tensor, Tensor]:
    """Return ``(delta_i, protected)`` for images in ``[0, 1]``.

    The generator sees ``[img, delta_g]`` stacked on channels. Its output
    ``g`` becomes ``eps * tanh(g / eps)``, which is ``g`` near zero and stays
    inside ``[-eps, eps]`` without the dead gradient of a hard clip; the sum is
    clipped to ``[0, 1]``.
    """
    delta_g = T.as_tensor(delta_g, like=img)
    if delta_g.shape != img.shape:
        if delta_g.shape == img.shape[1:] or delta_g.shape == (1,) + img.shape[1:]:
            delta_g = Tensor(np.broadcast_to(delta_g.data.reshape((1,) + img.shape[1:]), img.shape), dtype=img.dtype)
        else:
            raise ValueError(f"global perturbation shape {delta_g.shape} does not match image {img.shape}")
    raw = gen(T.concat_channels(img, delta_g))
    delta = T.soft_bound(raw, eps)
    protected = T.clamp(img + delta, 0.0, 1.0)
    return delta, protected


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _blob_path(manifest: Path) -> Path:
    return manifest.with_name(manifest.name + ".bin")


def save_checkpoint(m: ModelParams, path, extra: dict | None = None) -> Path:
    """Write a key = value manifest at ``path`` and raw little-endian data beside it."""
    path = Path(path)
    blob = _blob_path(path)
    lines = [f"format = {CHECKPOINT_FORMAT}", f"seed = {m.seed}", f"blob = {blob.name}"]
    lines += [f"arch.{k} = {v}" for k, v in m.arch.items()]
    for k, v in (extra or {}).items():
        lines.append(f"meta.{k} = {v}")
    offset = 0
    chunks = []
    for name in sorted(m.params):
        arr = m.params[name].data
        data = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        shape = "x".join(str(s) for s in arr.shape)
        lines.append(f"param.{name} = shape={shape} dtype={arr.dtype.name} offset={offset} nbytes={len(data)}")
        chunks.append(data)
        offset += len(data)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    blob.write_bytes(b"".join(chunks))
    return path


def _parse_value(v: str):
    try:
        return int(v)
    except ValueError:
        return v


def read_manifest(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_checkpoint(path) -> tuple[ModelParams, dict[str, str]]:
    """Load a checkpoint, validating every tensor against the architecture."""
    path = Path(path)
    manifest = read_manifest(path)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} manifest")
    arch = {k[5:]: _parse_value(v) for k, v in manifest.items() if k.startswith("arch.")}
    seed = int(manifest.get("seed", 0))
    expected = build_params(arch, seed)
    raw = path.with_name(manifest["blob"]).read_bytes()
    params = {}
    for key, spec in manifest.items():
        if not key.startswith("param."):
            continue
        name = key[6:]
        fields = dict(item.split("=", 1) for item in spec.split())
        shape = tuple(int(s) for s in fields["shape"].split("x")) if fields["shape"] else ()
        if name not in expected.params:
            raise ValueError(f"{path}: unexpected parameter {name!r} for {arch.get('kind')}")
        if shape != expected.params[name].shape:
            raise ValueError(f"{path}: {name} has shape {shape}, architecture expects {expected.params[name].shape}")
        dtype = np.dtype(fields["dtype"]).newbyteorder("<")
        off, nbytes = int(fields["offset"]), int(fields["nbytes"])
        if off + nbytes > len(raw):
            raise ValueError(f"{path}: blob truncated at {name}")
        arr = np.frombuffer(raw, dtype=dtype, count=nbytes // dtype.itemsize, offset=off).reshape(shape)
        params[name] = Tensor(arr.astype(dtype.newbyteorder("=")), dtype=arr.dtype.newbyteorder("="))
    missing = set(expected.params) - set(params)
    if missing:
        raise ValueError(f"{path}: missing parameters {sorted(missing)}")
    meta = {k[5:]: v for k, v in manifest.items() if k.startswith("meta.")}
    return ModelParams(arch, params, seed), meta


def save_array(arr: np.ndarray, path, meta: dict | None = None) -> Path:
    """Store one array (e.g. a global perturbation) in checkpoint format."""
    m = ModelParams({"kind": "array", "shape": "x".join(map(str, arr.shape))}, {"value": Tensor(arr, dtype=arr.dtype)})
    return save_checkpoint(m, path, meta)


def load_array(path) -> tuple[np.ndarray, dict[str, str]]:
    path = Path(path)
    manifest = read_manifest(path)
    if manifest.get("arch.kind") != "array":
        raise ValueError(f"{path}: not an array checkpoint")
    raw = path.with_name(manifest["blob"]).read_bytes()
    fields = dict(item.split("=", 1) for item in manifest["param.value"].split())
    shape = tuple(int(s) for s in fields["shape"].split("x"))
    if fields["shape"] != manifest["arch.shape"]:
        raise ValueError(f"{path}: array shape disagrees with header")
    dtype = np.dtype(fields["dtype"]).newbyteorder("<")
    if int(fields["nbytes"]) > len(raw):
        raise ValueError(f"{path}: blob truncated")
    arr = np.frombuffer(raw, dtype=dtype, count=int(fields["nbytes"]) // dtype.itemsize).reshape(shape)
    meta = {k[5:]: v for k, v in manifest.items() if k.startswith("meta.")}
    return arr.astype(dtype.newbyteorder("=")), meta
