"""Metrics and experiment drivers: perturbation sweeps, per-image error
distributions, robustness to real JPEG and runtime benchmarks.

Evaluation-time compression always uses true rounding.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import attacks as A
from . import tensor as T
from .jpeg import reference_jpeg
from .models import ManipulationSpec
from .tensor import Tensor

INF = math.inf
METHODS = ("ifgsm", "ipgd", "global", "generator", "generator_i")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``inf``."""
    return psnr_from_mse(mse(a, b), max_val)


def psnr_from_mse(m: float, max_val: float = 1.0) -> float:
    if m == 0:
        return INF
    return 10.0 * math.log10(max_val * max_val / m)


@dataclass
class MetricsRecord:
    method: str
    image: int
    perturb_mse: float
    perturb_psnr: float
    output_mse: float
    output_psnr: float
    quality: str
    seed: int


def manipulate(spec: ManipulationSpec, images: np.ndarray, sources: np.ndarray | None = None, batch: int = 32) -> np.ndarray:
    """Run the frozen model over a corpus without recording a graph."""
    outs = []
    for s in range(0, len(images), batch):
        src = Tensor(sources[s : s + batch]) if sources is not None else None
        outs.append(spec(Tensor(images[s : s + batch]), src).data)
    return np.concatenate(outs, axis=0)


def compress(images: np.ndarray, qualities: Sequence[int] | None, subsample: str = "420") -> np.ndarray:
    """Apply real JPEG once per quality in ``qualities`` (in order)."""
    out = images
    for q in qualities or ():
        out = reference_jpeg(out, int(q), subsample).astype(images.dtype)
    return out


def quality_label(qualities: Sequence[int] | None) -> str:
    return "none" if not qualities else "+".join(str(q) for q in qualities)


def evaluate(
    method: str,
    spec: ManipulationSpec,
    clean: np.ndarray,
    protected: np.ndarray,
    sources: np.ndarray | None = None,
    qualities: Sequence[int] | None = None,
    seed: int = 0,
) -> list[MetricsRecord]:
    """Per-image perturbation and output-vs-target metrics.

    ``qualities`` compresses the protected images (sequentially) before they
    reach the manipulation model.
    """
    seen = compress(protected, qualities)
    out = manipulate(spec, seen, sources)
    target = spec.target(out.shape)
    records = []
    for i in range(len(clean)):
        pm = mse(protected[i], clean[i])
        om = mse(out[i], target[i])
        records.append(
            MetricsRecord(method, i, pm, psnr_from_mse(pm), om, psnr_from_mse(om), quality_label(qualities), seed)
        )
    return records


def summarize(records: Iterable[MetricsRecord]) -> dict[str, float]:
    records = list(records)
    pm = float(np.mean([r.perturb_mse for r in records]))
    om = float(np.mean([r.output_mse for r in records]))
    return {
        "perturb_mse": pm,
        "perturb_psnr": psnr_from_mse(pm),
        "output_mse": om,
        "output_psnr": psnr_from_mse(om),
        "n": len(records),
    }


# ---------------------------------------------------------------------------
# protection methods behind one calling convention
# ---------------------------------------------------------------------------

Protector = Callable[[np.ndarray, "np.ndarray | None"], np.ndarray]


@dataclass
class Trained:
    """Artifacts of a learned method, kept so sweeps can reuse them."""

    protect: Protector
    global_perturbation: A.GlobalPerturbation | None = None
    generator: A.GeneratorRun | None = None


def build_protector(
    method: str,
    train_tasks: Sequence[A.Task],
    cfg: A.AttackConfig,
    gen_cfg: A.AttackConfig | None = None,
    base_width: int = 16,
    delta_g: A.GlobalPerturbation | None = None,
) -> Trained:
    """Turn a method name and configuration into a ``protect(images, sources)``.

    ``cfg`` drives the global perturbation (or the per-image attacks);
    ``gen_cfg`` the generator training, defaulting to ``cfg``.
    """
    spec = train_tasks[0].spec
    if method in ("ifgsm", "ipgd"):
        fn = A.ifgsm if method == "ifgsm" else A.ipgd
        return Trained(lambda imgs, src=None: fn(spec, imgs, cfg, source=src))
    if method == "global":
        g = delta_g or A.optimize_global(train_tasks, cfg)
        return Trained(lambda imgs, src=None: g.protect(imgs), g)
    if method in ("generator", "generator_i"):
        gen_cfg = gen_cfg or cfg
        if method == "generator":
            g = delta_g or A.optimize_global(train_tasks, cfg)
            dg = g.delta
        else:
            g = None
            dg = np.zeros((1,) + train_tasks[0].images.shape[1:], dtype=T.default_dtype())
        run = A.train_generator(train_tasks, dg, gen_cfg, base_width=base_width)
        return Trained(lambda imgs, src=None: run.protect(imgs), g, run)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class CurvePoint:
    method: str
    param: float
    perturb_mse: float
    perturb_psnr: float
    output_mse: float
    output_psnr: float


def sweep_curve(
    method: str,
    train_tasks: Sequence[A.Task],
    test_images: np.ndarray,
    grid: Sequence[float],
    cfg: A.AttackConfig,
    gen_cfg: A.AttackConfig | None = None,
    test_sources: np.ndarray | None = None,
    qualities: Sequence[int] | None = None,
    base_width: int = 16,
) -> list[CurvePoint]:
    """Output-vs-target error as a function of perturbation strength.

    ``grid`` holds eps values for ``ifgsm`` / ``ipgd`` (step size eps / 10)
    and perturbation weights for the learned methods.
    """
    if len(test_images) == 0:
        raise ValueError("empty evaluation corpus")
    if len(grid) < 3:
        raise ValueError("a sweep needs at least three operating points")
    spec = train_tasks[0].spec
    points = []
    for value in grid:
        if method in ("ifgsm", "ipgd"):
            trained = build_protector(method, train_tasks, cfg.with_(eps=value, alpha=value / 10))
        else:
            g_cfg = (gen_cfg or cfg).with_(lam=value)
            trained = build_protector(method, train_tasks, cfg.with_(lam=value), g_cfg, base_width)
        prot = trained.protect(test_images, test_sources)
        s = summarize(evaluate(method, spec, test_images, prot, test_sources, qualities, cfg.seed))
        points.append(CurvePoint(method, float(value), s["perturb_mse"], s["perturb_psnr"], s["output_mse"], s["output_psnr"]))
    return sorted(points, key=lambda p: p.perturb_mse)


def interpolate(curve: Sequence[CurvePoint], perturb_mse: float) -> float:
    """Output MSE of a curve at a perturbation level (linear in log-perturbation)."""
    pts = sorted(curve, key=lambda p: p.perturb_mse)
    xs = np.log([max(p.perturb_mse, 1e-12) for p in pts])
    ys = np.array([p.output_mse for p in pts])
    return float(np.interp(math.log(max(perturb_mse, 1e-12)), xs, ys))


def shared_range(*curves: Sequence[CurvePoint]) -> tuple[float, float]:
    """Perturbation interval covered by every curve (may be empty: lo > hi)."""
    lo = max(min(p.perturb_mse for p in c) for c in curves)
    hi = min(max(p.perturb_mse for p in c) for c in curves)
    return lo, hi


def monotone_violations(curve: Sequence[CurvePoint]) -> int:
    """Count adjacent points where more perturbation gave a worse output."""
    pts = sorted(curve, key=lambda p: p.perturb_mse)
    return sum(1 for a, b in zip(pts, pts[1:]) if b.output_mse > a.output_mse)


# ---------------------------------------------------------------------------
# distributions and robustness
# ---------------------------------------------------------------------------

@dataclass
class DistributionReport:
    method: str
    errors: list[float]
    mean: float
    variance: float
    max: float

    @property
    def max_mean_ratio(self) -> float:
        return self.max / self.mean if self.mean > 0 else INF


def distribution_report(
    method: str,
    spec: ManipulationSpec,
    clean: np.ndarray,
    protected: np.ndarray,
    sources: np.ndarray | None = None,
) -> DistributionReport:
    errs = [r.output_mse for r in evaluate(method, spec, clean, protected, sources)]
    return DistributionReport(method, errs, float(np.mean(errs)), float(np.var(errs)), float(np.max(errs)))


@dataclass
class RobustnessRow:
    method: str
    quality: str
    output_mse: float
    output_psnr: float


def robustness_eval(
    method: str,
    spec: ManipulationSpec,
    clean: np.ndarray,
    protected: np.ndarray,
    qualities: Sequence[int] = (80, 30),
    levels: int = 1,
    sources: np.ndarray | None = None,
    chain: Sequence[int] = (30, 80),
) -> list[RobustnessRow]:
    """Output error after real JPEG at each quality (plus an uncompressed row).

    With ``levels=2`` one extra row compresses sequentially through ``chain``.
    """
    if levels not in (1, 2):
        raise ValueError("levels must be 1 or 2")
    settings: list[Sequence[int] | None] = [None] + [(int(q),) for q in qualities]
    if levels == 2:
        settings.append(tuple(chain))
    rows = []
    for qs in settings:
        s = summarize(evaluate(method, spec, clean, protected, sources, qs))
        rows.append(RobustnessRow(method, quality_label(qs), s["output_mse"], s["output_psnr"]))
    return rows


# ---------------------------------------------------------------------------
# runtime
# ---------------------------------------------------------------------------

@dataclass
class BenchResult:
    method: str
    mean_ms: float
    std_ms: float
    repeats: int


def runtime_bench(methods: dict[str, Callable[[], object]], repeats: int = 10) -> list[BenchResult]:
    """Wall-clock time per call, after one untimed warm-up call."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    results = []
    for name, fn in methods.items():
        fn()
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append((time.perf_counter() - t0) * 1000.0)
        std = statistics.pstdev(times) if repeats > 1 else 0.0
        results.append(BenchResult(name, statistics.fmean(times), std, repeats))
    return results


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def write_table(rows: Sequence, path) -> Path:
    """Write dataclass rows (or dicts) as CSV with a one-line header."""
    path = Path(path)
    dicts = [asdict(r) if not isinstance(r, dict) else r for r in rows]
    if not dicts:
        raise ValueError("no rows to write")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(dicts[0]), lineterminator="\n")
        w.writeheader()
        for d in dicts:
            w.writerow({k: _fmt(v) for k, v in d.items()})
    return path


def _fmt(v):
    if isinstance(v, float):
        return "inf" if v == INF else repr(v)
    return v


def write_summary(values: dict, path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in values.items()), encoding="utf-8")
    return path
