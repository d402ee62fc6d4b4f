"""Protection procedures: per-image sign attacks, a dataset-global
perturbation and a conditional perturbation generator.

Every procedure minimises the distance between a frozen manipulation
model's output and that model's solid-colour target, optionally through a
differentiable JPEG layer, while penalising the size of the perturbation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .jpeg import JpegConfig, jpeg_unit
from .models import ManipulationSpec, ModelParams, apply_protection, unet_generator
from .tensor import Tensor

logger = logging.getLogger(__name__)

NORMS = ("l1", "l2", "linf")
JPEG_MODES = ("off", "fixed", "random")


@dataclass(frozen=True)
class AttackConfig:
    """Hyper-parameters shared by all protection procedures.

    ``eps`` bounds every pixel of the perturbation (``[0, 1]`` units),
    ``alpha`` is the sign-step size for I-FGSM / I-PGD and ``lr`` the Adam
    learning rate for the learned methods. ``lam`` weighs the perturbation
    loss; ``task_lams`` optionally overrides it per manipulation model.
    """

    eps: float = 0.05
    alpha: float = 0.01
    steps: int = 100
    lam: float = 0.0
    lr: float = 1e-3
    norm: str = "l2"
    jpeg: str = "off"
    quality: int = 80
    round_mode: str = "sin"
    subsample: str = "420"
    seed: int = 0
    task_lams: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.lam < 0 or any(v < 0 for v in self.task_lams or ()):
            raise ValueError("lam must be >= 0")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.jpeg not in JPEG_MODES:
            raise ValueError(f"jpeg must be one of {JPEG_MODES}, got {self.jpeg!r}")
        JpegConfig(self.quality, self.round_mode, self.subsample)

    def lam_for(self, k: int) -> float:
        return self.task_lams[k] if self.task_lams else self.lam

    def with_(self, **kw) -> "AttackConfig":
        return replace(self, **kw)


@dataclass
class Task:
    """One manipulation model and the images it is protected on.

    Two-input models also need ``sources``: the unprotected second input,
    paired with ``images`` row by row.
    """

    spec: ManipulationSpec
    images: np.ndarray
    sources: np.ndarray | None = None

    def __post_init__(self):
        if len(self.images) == 0:
            raise ValueError(f"task {self.spec.name} has an empty dataset")
        if self.spec.arity == 2 and (self.sources is None or len(self.sources) != len(self.images)):
            raise ValueError(f"{self.spec.name} needs one source image per protected image")

    def __len__(self) -> int:
        return len(self.images)

    def source(self, idx) -> Tensor | None:
        if self.sources is None:
            return None
        return Tensor(self.sources[idx])


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None], lr: float) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update applied in place to ``params``."""
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params


# ---------------------------------------------------------------------------
# shared loss assembly
# ---------------------------------------------------------------------------

def _jpeg_cfg(cfg: AttackConfig, rng: np.random.Generator) -> JpegConfig | None:
    if cfg.jpeg == "off":
        return None
    q = int(rng.integers(1, 100)) if cfg.jpeg == "random" else cfg.quality
    return JpegConfig(q, cfg.round_mode, cfg.subsample)


def task_loss(
    task: Task,
    k: int,
    idx,
    protected: Tensor,
    clean: Tensor,
    cfg: AttackConfig,
    jcfg: JpegConfig | None,
) -> tuple[Tensor, Tensor, Tensor]:
    """``(total, recon, perturb)`` for one task on a batch of protected images."""
    seen = jpeg_unit(protected, jcfg) if jcfg is not None else protected
    out = task.spec(seen, task.source(idx))
    target = task.spec.target(out.shape)
    recon = T.reduce_losses(cfg.norm, out, Tensor(target, dtype=out.dtype))
    perturb = T.reduce_losses(cfg.norm, protected, clean)
    lam = cfg.lam_for(k)
    total = recon + perturb * lam if lam else recon
    if not math.isfinite(total.item()):
        raise FloatingPointError(f"non-finite loss on task {task.spec.name} (recon={recon.item()}, perturb={perturb.item()})")
    return total, recon, perturb


def _sample(rng: np.random.Generator, tasks: Sequence[Task]) -> tuple[int, int]:
    k = int(rng.integers(len(tasks)))
    i = int(rng.integers(len(tasks[k])))
    return k, i


# ---------------------------------------------------------------------------
# per-image sign attacks
# ---------------------------------------------------------------------------

def _sign_attack(
    spec: ManipulationSpec,
    img: np.ndarray,
    cfg: AttackConfig,
    alpha: float,
    project: Callable[[np.ndarray, np.ndarray], np.ndarray],
    source: np.ndarray | None,
    trace: list | None,
) -> np.ndarray:
    img = np.asarray(img, dtype=T.default_dtype())
    x = img.copy()
    src = Tensor(source) if source is not None else None
    target = None
    for n in range(cfg.steps):
        xt = Tensor(x, requires_grad=True)
        out = spec(xt, src)
        if target is None:
            target = Tensor(spec.target(out.shape), dtype=out.dtype)
        # summed loss: the sign of the gradient is the same as for the mean
        # but cannot underflow on large batches
        loss = T.reduce_losses("l2_sum", out, target)
        if not math.isfinite(loss.item()):
            raise FloatingPointError(f"non-finite reconstruction loss at step {n}")
        T.backward(loss)
        if trace is not None:
            trace.append(loss.item() / out.size)
        x = project(x - alpha * np.sign(xt.grad), img).astype(img.dtype)
    return x


def _ball_projection(eps: float):
    def project(x, img):
        return np.clip(np.clip(x, img - eps, img + eps), 0.0, 1.0)

    return project


def ifgsm(
    spec: ManipulationSpec,
    img: np.ndarray,
    cfg: AttackConfig,
    source: np.ndarray | None = None,
    trace: list | None = None,
) -> np.ndarray:
    """Iterative fast gradient sign method towards the manipulation target.

    Starting from the clean image, each step moves every pixel by
    ``cfg.alpha`` against the sign of the reconstruction-loss gradient and
    clips the accumulated perturbation to ``[-eps, eps]`` (and the image to
    ``[0, 1]``). ``img`` may be a batch; images are attacked independently.
    """
    return _sign_attack(spec, img, cfg, cfg.alpha, _ball_projection(cfg.eps), source, trace)


IPGD_STEP = 0.01


def ipgd(
    spec: ManipulationSpec,
    img: np.ndarray,
    cfg: AttackConfig,
    source: np.ndarray | None = None,
    trace: list | None = None,
) -> np.ndarray:
    """Iterative projected gradient descent.

    Identical sign updates to :func:`ifgsm`, followed by Euclidean
    projection onto the intersection of the L-infinity ball of radius
    ``eps`` around the clean image and the ``[0, 1]`` box. For these two
    boxes the projection is the composition of the two clips.
    """
    return _sign_attack(spec, img, cfg, cfg.alpha, _ball_projection(cfg.eps), source, trace)


# ---------------------------------------------------------------------------
# global perturbation
# ---------------------------------------------------------------------------

@dataclass
class GlobalPerturbation:
    delta: np.ndarray
    eps: float
    iterations: int = 0
    initial_loss: float = math.nan
    final_loss: float = math.nan
    log: list[dict] = field(default_factory=list)

    def protect(self, images: np.ndarray) -> np.ndarray:
        d = np.clip(self.delta, -self.eps, self.eps)
        return np.clip(images + d, 0.0, 1.0).astype(images.dtype)


def _global_protected(x: Tensor, delta: Tensor, eps: float) -> Tensor:
    d = T.clamp(delta, -eps, eps)
    if d.shape != x.shape:
        d = T.take(d, np.zeros(x.shape[0], dtype=np.intp), axis=0)
    return T.clamp(x + d, 0.0, 1.0)


def total_loss(tasks: Sequence[Task], cfg: AttackConfig, protect: Callable[[int, np.ndarray], Tensor], qualities: Sequence[int | None] = (None,)) -> float:
    """Mean of the per-task objective over every image in every task.

    ``protect(k, images)`` returns the protected batch for task ``k``. With a
    JPEG mode other than ``off`` the loss is averaged over ``qualities``.
    """
    values = []
    for k, task in enumerate(tasks):
        x = Tensor(task.images)
        xp = protect(k, task.images)
        for q in qualities:
            jcfg = JpegConfig(q, cfg.round_mode, cfg.subsample) if q is not None else None
            total, _, _ = task_loss(task, k, slice(None), xp, x, cfg, jcfg)
            values.append(total.item())
    return float(np.mean(values))


def _eval_qualities(cfg: AttackConfig) -> tuple[int | None, ...]:
    if cfg.jpeg == "off":
        return (None,)
    if cfg.jpeg == "fixed":
        return (cfg.quality,)
    return (10, 30, 50, 80, 95)


def optimize_global(
    tasks: Sequence[Task],
    cfg: AttackConfig,
    on_step: Callable[[dict], None] | None = None,
) -> GlobalPerturbation:
    """Adam over one image-shaped perturbation shared by every image.

    One ``(task, image)`` pair is drawn per step. The perturbation starts
    uniform in ``[-eps, eps]`` and is kept inside that interval.
    """
    if not tasks:
        raise ValueError("at least one task is required")
    shape = (1,) + tasks[0].images.shape[1:]
    for t in tasks:
        if t.images.shape[1:] != shape[1:]:
            raise ValueError("all tasks must share one image shape")
    rng = np.random.default_rng(cfg.seed)
    delta = rng.uniform(-cfg.eps, cfg.eps, size=shape).astype(T.default_dtype())
    params = {"delta": delta}
    state = AdamState()

    def protect_with(d):
        return lambda k, imgs: _global_protected(Tensor(imgs), Tensor(d), cfg.eps)

    qualities = _eval_qualities(cfg)
    initial = total_loss(tasks, cfg, protect_with(delta.copy()), qualities)
    log = []
    for step in range(cfg.steps):
        k, i = _sample(rng, tasks)
        jcfg = _jpeg_cfg(cfg, rng)
        x = Tensor(tasks[k].images[i : i + 1])
        dt = Tensor(params["delta"], requires_grad=True)
        total, recon, perturb = task_loss(tasks[k], k, slice(i, i + 1), _global_protected(x, dt, cfg.eps), x, cfg, jcfg)
        T.backward(total)
        adam_step(state, params, {"delta": dt.grad}, cfg.lr)
        np.clip(params["delta"], -cfg.eps, cfg.eps, out=params["delta"])
        rec = {"step": step, "task": k, "image": i, "quality": jcfg.quality if jcfg else None,
               "recon": recon.item(), "perturb": perturb.item(), "total": total.item()}
        log.append(rec)
        if on_step is not None:
            on_step(rec)
    final = total_loss(tasks, cfg, protect_with(params["delta"]), qualities)
    logger.info("global perturbation: loss %.5f -> %.5f over %d steps", initial, final, cfg.steps)
    return GlobalPerturbation(params["delta"], cfg.eps, cfg.steps, initial, final, log)


# ---------------------------------------------------------------------------
# conditional generator
# ---------------------------------------------------------------------------

@dataclass
class GeneratorRun:
    generator: ModelParams
    delta_g: np.ndarray
    eps: float
    initial_loss: float = math.nan
    final_loss: float = math.nan
    log: list[dict] = field(default_factory=list)

    def protect(self, images: np.ndarray, batch: int = 16) -> np.ndarray:
        return protect_images(self.generator, images, self.delta_g, self.eps, batch)


def protect_images(gen: ModelParams, images: np.ndarray, delta_g: np.ndarray, eps: float, batch: int = 16) -> np.ndarray:
    """Generator forward pass over a corpus; no graph is recorded."""
    frozen = {k: p.requires_grad for k, p in gen.params.items()}
    for p in gen.params.values():
        p.requires_grad = False
    try:
        out = []
        for s in range(0, len(images), batch):
            x = Tensor(images[s : s + batch])
            dg = np.broadcast_to(np.asarray(delta_g, dtype=x.dtype).reshape((1,) + x.shape[1:]), x.shape)
            _, xp = apply_protection(gen, x, dg, eps)
            out.append(xp.data)
    finally:
        for k, p in gen.params.items():
            p.requires_grad = frozen[k]
    return np.concatenate(out, axis=0)


def train_generator(
    tasks: Sequence[Task],
    delta_g: GlobalPerturbation | np.ndarray | None,
    cfg: AttackConfig,
    generator: ModelParams | None = None,
    base_width: int = 16,
    on_step: Callable[[dict], None] | None = None,
) -> GeneratorRun:
    """Adam over the generator weights.

    ``delta_g`` conditions the generator; pass ``zeros`` for an image-only
    model. When ``cfg.jpeg`` is ``fixed`` or ``random`` the protected image
    goes through the differentiable JPEG layer (quality drawn from 1..99 per
    step for ``random``) before reaching the manipulation model.
    """
    if delta_g is None:
        raise ValueError("train_generator needs a global perturbation (use zeros for an image-only model)")
    if not tasks:
        raise ValueError("at least one task is required")
    dg = delta_g.delta if isinstance(delta_g, GlobalPerturbation) else np.asarray(delta_g)
    dg = np.clip(dg, -cfg.eps, cfg.eps).astype(T.default_dtype())
    size = tasks[0].images.shape[-1]
    gen = generator if generator is not None else unet_generator(base_width, cfg.seed, size)
    gen = gen.astype(T.default_dtype()).trainable(True)
    rng = np.random.default_rng(cfg.seed + 1)
    state = AdamState()
    dgt = Tensor(dg.reshape((1,) + dg.shape[-3:]))
    qualities = _eval_qualities(cfg)

    def protect_with(k, imgs):
        return Tensor(protect_images(gen, imgs, dg, cfg.eps))

    initial = total_loss(tasks, cfg, protect_with, qualities)
    log = []
    weights = {name: p.data for name, p in gen.params.items()}
    for step in range(cfg.steps):
        k, i = _sample(rng, tasks)
        jcfg = _jpeg_cfg(cfg, rng)
        x = Tensor(tasks[k].images[i : i + 1])
        gen.zero_grad()
        _, xp = apply_protection(gen, x, dgt, cfg.eps)
        total, recon, perturb = task_loss(tasks[k], k, slice(i, i + 1), xp, x, cfg, jcfg)
        T.backward(total)
        adam_step(state, weights, {name: p.grad for name, p in gen.params.items()}, cfg.lr)
        rec = {"step": step, "task": k, "image": i, "quality": jcfg.quality if jcfg else None,
               "recon": recon.item(), "perturb": perturb.item(), "total": total.item()}
        log.append(rec)
        if on_step is not None:
            on_step(rec)
    gen.trainable(False)
    final = total_loss(tasks, cfg, protect_with, qualities)
    logger.info("generator: loss %.5f -> %.5f over %d steps", initial, final, cfg.steps)
    return GeneratorRun(gen, dg, cfg.eps, initial, final, log)
