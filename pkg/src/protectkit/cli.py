"""Command-line front end.

Every command writes into ``--out``: its primary artifacts, a
``manifest.txt`` (resolved configuration plus git-style blob hashes of all
inputs and outputs) and, for optimisation runs, a ``log.jsonl`` with one
record per step. Settings resolve as built-in default, then ``--config``
file, then explicit flag.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import attacks as A
from . import evalkit as E
from . import imageio as I
from . import models as M
from . import tensor as T
from .jpeg import ROUND_MODES, JpegConfig, jpeg_unit

logger = logging.getLogger("protectkit")


class UsageError(Exception):
    """Bad configuration or arguments; reported without a traceback."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


CONFIG_KEYS: dict[str, Callable[[str], object]] = {
    "eps": float,
    "alpha": float,
    "steps": int,
    "lam": float,
    "lr": float,
    "norm": str,
    "jpeg": str,
    "quality": int,
    "round_mode": str,
    "subsample": str,
    "task_lams": _floats,
    "base_width": int,
    "model_seed": int,
    "grid": _floats,
    "qualities": _ints,
    "levels": int,
    "repeats": int,
    "batch": int,
}

DEFAULTS = {
    "eps": 0.05,
    "alpha": 0.01,
    "lam": 0.0,
    "lr": 1e-3,
    "norm": "l2",
    "jpeg": "off",
    "quality": 80,
    "round_mode": "sin",
    "subsample": "420",
    "task_lams": None,
    "base_width": 16,
    "model_seed": None,
    "grid": None,
    "qualities": (80, 30),
    "levels": 1,
    "repeats": 10,
    "batch": 16,
}

# per-command overrides of the defaults above
COMMAND_DEFAULTS = {
    "attack": {"steps": 100},
    "optimize-global": {"steps": 2000},
    "train-generator": {"steps": 5000, "lr": 1e-3},
    "evaluate": {"steps": 100},
}


def read_config(path) -> dict[str, object]:
    """Parse a flat ``key = value`` file; unknown keys are an error."""
    out: dict[str, object] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def validate(settings: dict) -> None:
    eps = settings.get("eps")
    if eps is not None and not eps > 0:
        raise UsageError(f"eps must be > 0, got {eps}")
    steps = settings.get("steps")
    if steps is not None and steps < 0:
        raise UsageError(f"steps must be >= 0, got {steps}")
    for q in [settings.get("quality")] + list(settings.get("qualities") or ()):
        if q is not None and not 1 <= q <= 99:
            raise UsageError(f"quality must be in [1, 99], got {q}")
    if settings.get("levels") not in (None, 1, 2):
        raise UsageError(f"levels must be 1 or 2, got {settings['levels']}")


def resolve(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS, steps=None)
    settings.update(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        settings.update(read_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    validate(settings)
    return settings


def attack_config(settings: dict, seed: int) -> A.AttackConfig:
    names = {f.name for f in fields(A.AttackConfig)}
    kw = {k: v for k, v in settings.items() if k in names and v is not None}
    try:
        return A.AttackConfig(seed=seed, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------

def blob_sha1(data: bytes) -> str:
    """Git's object id for a blob with this content."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class Run:
    """Collects inputs, outputs and log records of one command."""

    def __init__(self, out: Path, command: str, settings: dict, seed: int, precision: str):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.settings = settings
        self.seed = seed
        self.precision = precision
        self.inputs: list[tuple[str, Path]] = []
        self.outputs: list[Path] = []
        self._log = None

    def add_inputs(self, role: str, paths: Sequence[Path]) -> None:
        """Record input files under ``role`` (directories are expanded)."""
        for p in paths:
            p = Path(p)
            files = sorted(q for q in p.iterdir() if q.is_file()) if p.is_dir() else [p]
            self.inputs.extend((role, q) for q in files)

    def output(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def log(self, record: dict) -> None:
        if self._log is None:
            self._log = self.output(self.out / "log.jsonl").open("w", encoding="utf-8")
        self._log.write(json.dumps(record, sort_keys=True) + "\n")

    def finish(self) -> Path:
        if self._log is not None:
            self._log.close()
        lines = [f"command = {self.command}", f"seed = {self.seed}", f"precision = {self.precision}"]
        for k in sorted(self.settings):
            v = self.settings[k]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"config.{k} = {v}")
        for role, p in self.inputs:
            lines.append(f"input.{role}/{p.name} = {blob_sha1(p.read_bytes())}")
        for p in sorted(set(self.outputs)):
            lines.append(f"output.{p.relative_to(self.out)} = {blob_sha1(p.read_bytes())}")
        path = self.out / "manifest.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# models, tasks and per-image parallelism
# ---------------------------------------------------------------------------

MODEL_NAMES = ("toy_recon", "toy_blend")


def make_spec(name: str, model_seed: int | None) -> M.ManipulationSpec:
    if name == "toy_recon":
        return M.toy_recon_model(0 if model_seed is None else model_seed)
    if name == "toy_blend":
        return M.toy_blend_model(1 if model_seed is None else model_seed)
    raise UsageError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")


def load_dir(path) -> tuple[np.ndarray, list[str]]:
    try:
        return I.load_corpus(path, T.default_dtype())
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def parse_task(text: str, model_seed: int | None, run: Run, role: str = "task") -> A.Task:
    """``MODEL:IMAGES`` or ``MODEL:IMAGES:SOURCES``."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"--task expects MODEL:IMAGES[:SOURCES], got {text!r}")
    spec = make_spec(parts[0], model_seed)
    images, _ = load_dir(parts[1])
    run.add_inputs(role, [Path(parts[1])])
    sources = None
    if len(parts) == 3:
        sources, _ = load_dir(parts[2])
        run.add_inputs(role + "-sources", [Path(parts[2])])
    try:
        return A.Task(spec, images, sources)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _attack_worker(job):
    method, model, model_seed, precision, img, src, cfg = job
    T.set_precision(precision)
    spec = make_spec(model, model_seed)
    fn = A.ifgsm if method == "ifgsm" else A.ipgd
    trace: list[float] = []
    out = fn(spec, img[None], cfg, source=None if src is None else src[None], trace=trace)
    return out[0], trace


def parallel_map(fn, jobs: list, workers: int) -> list:
    """Map over independent images; results do not depend on ``workers``."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def save_images(run: Run, images: np.ndarray, names: Sequence[str], subdir: str = "images") -> None:
    d = run.out / subdir
    d.mkdir(parents=True, exist_ok=True)
    for img, name in zip(images, names):
        I.save_image(img, run.output(d / name))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, settings, run: Run) -> None:
    if args.size % 16:
        raise UsageError(f"--size must be divisible by 16, got {args.size}")
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    arrays = I.synth_corpus_arrays(args.n, args.size, args.seed)
    save_images(run, arrays, [f"img_{i:04d}.ppm" for i in range(args.n)])
    print(f"wrote {args.n} images to {run.out / 'images'}")


def _tasks(args, settings, run) -> list[A.Task]:
    if not args.task:
        raise UsageError("at least one --task MODEL:IMAGES[:SOURCES] is required")
    return [parse_task(t, settings["model_seed"], run, f"task{k}") for k, t in enumerate(args.task)]


def cmd_optimize_global(args, settings, run: Run) -> None:
    tasks = _tasks(args, settings, run)
    cfg = attack_config(settings, args.seed)
    g = A.optimize_global(tasks, cfg, on_step=run.log)
    M.save_array(g.delta, run.output(run.out / "delta_g.ckpt"), {"eps": cfg.eps})
    run.output(run.out / "delta_g.ckpt.bin")
    E.write_summary(
        {"initial_loss": g.initial_loss, "final_loss": g.final_loss, "iterations": g.iterations},
        run.output(run.out / "summary.txt"),
    )
    print(f"global perturbation: loss {g.initial_loss:.6f} -> {g.final_loss:.6f}")


def _load_delta(path: str, run: Run) -> np.ndarray:
    p = Path(path)
    if p.is_dir():
        p = p / "delta_g.ckpt"
    try:
        arr, _ = M.load_array(p)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load global perturbation {p}: {exc}") from None
    run.add_inputs("delta_g", [p, p.with_name(p.name + ".bin")])
    return arr.astype(T.default_dtype())


def cmd_train_generator(args, settings, run: Run) -> None:
    tasks = _tasks(args, settings, run)
    cfg = attack_config(settings, args.seed)
    if args.delta_g and args.image_only:
        raise UsageError("--delta-g and --image-only are mutually exclusive")
    if args.delta_g:
        dg = _load_delta(args.delta_g, run)
    elif args.image_only:
        dg = np.zeros((1,) + tasks[0].images.shape[1:], dtype=T.default_dtype())
    else:
        raise UsageError("train-generator needs --delta-g PATH (or --image-only)")
    res = A.train_generator(tasks, dg, cfg, base_width=settings["base_width"], on_step=run.log)
    M.save_checkpoint(res.generator, run.output(run.out / "generator.ckpt"), {"eps": cfg.eps})
    run.output(run.out / "generator.ckpt.bin")
    M.save_array(res.delta_g, run.output(run.out / "delta_g.ckpt"), {"eps": cfg.eps})
    run.output(run.out / "delta_g.ckpt.bin")
    E.write_summary(
        {"initial_loss": res.initial_loss, "final_loss": res.final_loss, "parameters": res.generator.count()},
        run.output(run.out / "summary.txt"),
    )
    print(f"generator: loss {res.initial_loss:.6f} -> {res.final_loss:.6f}")


def cmd_attack(args, settings, run: Run) -> None:
    images, names = load_dir(args.images)
    run.add_inputs("images", [Path(args.images)])
    sources = None
    if args.sources:
        sources, _ = load_dir(args.sources)
        run.add_inputs("sources", [Path(args.sources)])
    cfg = attack_config(settings, args.seed)
    spec = make_spec(args.model, settings["model_seed"])
    if spec.arity == 2 and sources is None:
        raise UsageError(f"{args.model} needs --sources")
    jobs = [
        (args.method, args.model, settings["model_seed"], run.precision, images[i], None if sources is None else sources[i], cfg)
        for i in range(len(images))
    ]
    results = parallel_map(_attack_worker, jobs, args.jobs)
    for name, (_, trace) in zip(names, results):
        for step, loss in enumerate(trace):
            run.log({"image": name, "step": step, "recon": loss})
    save_images(run, np.stack([r[0] for r in results]), names)
    print(f"{args.method}: protected {len(names)} images")


def _load_generator(path: str, run: Run) -> tuple[M.ModelParams, np.ndarray, float]:
    d = Path(path)
    ckpt = d / "generator.ckpt" if d.is_dir() else d
    try:
        gen, meta = M.load_checkpoint(ckpt)
        dg, _ = M.load_array(ckpt.with_name("delta_g.ckpt"))
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load generator {ckpt}: {exc}") from None
    run.add_inputs("generator", [ckpt, ckpt.with_name(ckpt.name + ".bin"), ckpt.with_name("delta_g.ckpt"), ckpt.with_name("delta_g.ckpt.bin")])
    return gen.astype(T.default_dtype()), dg.astype(T.default_dtype()), float(meta["eps"])


def cmd_protect(args, settings, run: Run) -> None:
    gen, dg, eps = _load_generator(args.generator, run)
    images, names = load_dir(args.images)
    run.add_inputs("images", [Path(args.images)])
    # one image per forward pass, so --jobs cannot change the result
    out = np.concatenate([A.protect_images(gen, images[i : i + 1], dg, eps) for i in range(len(images))])
    save_images(run, out, names)
    print(f"protected {len(names)} images (eps={eps})")


def cmd_evaluate(args, settings, run: Run) -> None:
    handlers = {
        "sweep": _eval_sweep,
        "distribution": _eval_distribution,
        "robustness": _eval_robustness,
        "bench": _eval_bench,
    }
    handlers[args.kind](args, settings, run)


def _eval_sweep(args, settings, run: Run) -> None:
    tasks = _tasks(args, settings, run)
    if not args.test:
        raise UsageError("evaluate sweep needs --test IMAGES")
    test, _ = load_dir(args.test)
    run.add_inputs("test", [Path(args.test)])
    grid = settings["grid"]
    if not grid:
        grid = (0.01, 0.02, 0.05) if args.method in ("ifgsm", "ipgd") else (10.0, 100.0, 1000.0)
    cfg = attack_config(settings, args.seed)
    try:
        pts = E.sweep_curve(
            args.method, tasks[:1], test, grid, cfg,
            test_sources=tasks[0].sources[: len(test)] if tasks[0].sources is not None else None,
            base_width=settings["base_width"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    E.write_table(pts, run.output(run.out / "curve.csv"))
    for p in pts:
        print(f"{p.method} param={p.param:g} perturb_mse={p.perturb_mse:.6g} output_mse={p.output_mse:.6g}")


def _clean_and_protected(args, run: Run) -> tuple[M.ManipulationSpec, np.ndarray, np.ndarray, np.ndarray | None, list[str]]:
    if not (args.clean and args.protected):
        raise UsageError(f"evaluate {args.kind} needs --clean and --protected")
    clean, names = load_dir(args.clean)
    prot, pnames = load_dir(args.protected)
    if names != pnames or clean.shape != prot.shape:
        raise UsageError("--clean and --protected must hold the same file names and shapes")
    run.add_inputs("clean", [Path(args.clean)])
    run.add_inputs("protected", [Path(args.protected)])
    sources = None
    if args.sources:
        sources, _ = load_dir(args.sources)
        run.add_inputs("sources", [Path(args.sources)])
    spec = make_spec(args.model, run.settings["model_seed"])
    if spec.arity == 2 and sources is None:
        raise UsageError(f"{args.model} needs --sources")
    return spec, clean, prot, sources, names


def _eval_distribution(args, settings, run: Run) -> None:
    spec, clean, prot, sources, names = _clean_and_protected(args, run)
    rep = E.distribution_report(args.method, spec, clean, prot, sources)
    rows = [{"image": n, "output_mse": e} for n, e in zip(names, rep.errors)]
    E.write_table(rows, run.output(run.out / "per_image.csv"))
    E.write_summary(
        {"method": args.method, "mean": rep.mean, "variance": rep.variance, "max": rep.max, "max_mean_ratio": rep.max_mean_ratio},
        run.output(run.out / "summary.txt"),
    )
    print(f"{args.method}: mean={rep.mean:.6g} variance={rep.variance:.6g} max/mean={rep.max_mean_ratio:.4g}")


def _eval_robustness(args, settings, run: Run) -> None:
    spec, clean, prot, sources, _ = _clean_and_protected(args, run)
    rows = E.robustness_eval(args.method, spec, clean, prot, settings["qualities"], settings["levels"], sources)
    E.write_table(rows, run.output(run.out / "robustness.csv"))
    for r in rows:
        print(f"{r.method} quality={r.quality} output_mse={r.output_mse:.6g}")


def _eval_bench(args, settings, run: Run) -> None:
    gen, dg, eps = _load_generator(args.generator, run) if args.generator else (None, None, settings["eps"])
    images, _ = load_dir(args.images)
    run.add_inputs("images", [Path(args.images)])
    spec = make_spec(args.model, settings["model_seed"])
    if spec.arity == 2:
        raise UsageError("bench runs on single-input models")
    img = images[:1]
    cfg = attack_config(settings, args.seed).with_(steps=settings["steps"])
    methods = {
        "ifgsm": lambda: A.ifgsm(spec, img, cfg),
        "ipgd": lambda: A.ipgd(spec, img, cfg),
    }
    if gen is not None:
        methods["generator"] = lambda: A.protect_images(gen, img, dg, eps)
    rows = E.runtime_bench(methods, settings["repeats"])
    # timings are wall-clock and differ between runs; they stay out of the
    # manifest's output hashes
    E.write_table(rows, run.out / "bench.csv")
    for r in rows:
        print(f"{r.method}: {r.mean_ms:.3f} ms +/- {r.std_ms:.3f} (n={r.repeats})")


def cmd_jpeg(args, settings, run: Run) -> None:
    src = Path(args.images)
    if src.is_file():
        try:
            images, names = I.load_image(src, T.default_dtype())[None], [src.name]
        except (OSError, I.PPMError) as exc:
            raise UsageError(str(exc)) from None
    else:
        images, names = load_dir(src)
    run.add_inputs("images", [src])
    try:
        jcfg = JpegConfig(settings["quality"], args.mode, settings["subsample"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = np.concatenate([jpeg_unit(T.Tensor(images[i : i + 1]), jcfg).data for i in range(len(images))])
    err = E.mse(out * 255.0, images * 255.0)
    save_images(run, out, names)
    E.write_summary({"quality": jcfg.quality, "mode": args.mode, "mse_255": err}, run.output(run.out / "summary.txt"))
    print(f"mse = {err:.6f}")


COMMANDS = {
    "synth": cmd_synth,
    "optimize-global": cmd_optimize_global,
    "train-generator": cmd_train_generator,
    "attack": cmd_attack,
    "protect": cmd_protect,
    "evaluate": cmd_evaluate,
    "jpeg": cmd_jpeg,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-image work")
    p.add_argument("--out", required=True, help="output directory")
    return p


def _tuning() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--eps", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--norm", choices=A.NORMS)
    p.add_argument("--jpeg", choices=A.JPEG_MODES)
    p.add_argument("--quality", type=int)
    p.add_argument("--round-mode", dest="round_mode", choices=ROUND_MODES)
    p.add_argument("--subsample", choices=("444", "420"))
    p.add_argument("--task-lams", dest="task_lams", type=_floats)
    p.add_argument("--base-width", dest="base_width", type=int, choices=M.GENERATOR_WIDTHS)
    p.add_argument("--model-seed", dest="model_seed", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protectkit", description="Adversarial image protection toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    common, tuning = _common(), _tuning()

    p = sub.add_parser("synth", parents=[common], help="write a synthetic PPM corpus")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)

    task_help = "MODEL:IMAGES[:SOURCES], repeatable"
    p = sub.add_parser("optimize-global", parents=[common, tuning], help="optimise a global perturbation")
    p.add_argument("--task", action="append", help=task_help)

    p = sub.add_parser("train-generator", parents=[common, tuning], help="train the perturbation generator")
    p.add_argument("--task", action="append", help=task_help)
    p.add_argument("--delta-g", dest="delta_g", help="optimize-global output directory or checkpoint")
    p.add_argument("--image-only", action="store_true", help="condition on a zero global perturbation")

    p = sub.add_parser("attack", parents=[common, tuning], help="per-image sign attack")
    p.add_argument("method", choices=("ifgsm", "ipgd"))
    p.add_argument("--images", required=True)
    p.add_argument("--sources")
    p.add_argument("--model", default="toy_recon", choices=MODEL_NAMES)

    p = sub.add_parser("protect", parents=[common], help="apply a trained generator")
    p.add_argument("--generator", required=True)
    p.add_argument("--images", required=True)

    p = sub.add_parser("evaluate", parents=[common, tuning], help="experiments and benchmarks")
    p.add_argument("kind", choices=("sweep", "distribution", "robustness", "bench"))
    p.add_argument("--method", default="generator", choices=E.METHODS)
    p.add_argument("--model", default="toy_recon", choices=MODEL_NAMES)
    p.add_argument("--task", action="append", help=task_help + " (sweep)")
    p.add_argument("--test", help="held-out images (sweep)")
    p.add_argument("--grid", type=_floats, help="eps values (baselines) or lambda values (learned)")
    p.add_argument("--clean")
    p.add_argument("--protected")
    p.add_argument("--sources")
    p.add_argument("--qualities", type=_ints)
    p.add_argument("--levels", type=int)
    p.add_argument("--generator", help="trained generator (bench)")
    p.add_argument("--images", help="images to time on (bench)")
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("jpeg", parents=[common], help="JPEG utilities")
    p.add_argument("action", choices=("roundtrip",))
    p.add_argument("--images", required=True, help="a PPM file or a directory")
    p.add_argument("--quality", type=int)
    p.add_argument("--mode", default="true", choices=ROUND_MODES)
    p.add_argument("--subsample", choices=("444", "420"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        settings = resolve(args)
        T.set_precision(args.precision)
        run = Run(Path(args.out), args.command, settings, args.seed, args.precision)
        COMMANDS[args.command](args, settings, run)
        run.finish()
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"protectkit: error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"protectkit: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0
