# %% [markdown]
# # Global perturbation plus generator, and what compression does to it
#
# A global perturbation is trained once over a corpus; a small U-Net then
# learns an image-specific perturbation in one forward pass. Training through
# the JPEG surrogate with a random quality per step keeps the protection
# alive after real compression.
#
# Takes a few seconds on one core.

# %%
import time

from protectkit import attacks as A
from protectkit import evalkit as E
from protectkit import models as M
from protectkit.imageio import synth_corpus_arrays

imgs = synth_corpus_arrays(24, 64, seed=2)
train, test = imgs[:16], imgs[16:]
spec = M.toy_recon_model(2)
task = A.Task(spec, train)

# %%
cfg = A.AttackConfig(eps=0.05, lam=10.0, steps=300, lr=1e-3, seed=0)
glob = A.optimize_global([task], cfg)
print(f"global perturbation: loss {glob.initial_loss:.4f} -> {glob.final_loss:.4f}")

# %% [markdown]
# Two generators conditioned on the global perturbation: one trained on
# clean inputs, one through JPEG at a random quality each step.

# %%
runs = {}
for name, jpeg in (("no compression", "off"), ("random quality", "random")):
    t0 = time.perf_counter()
    runs[name] = A.train_generator([task], glob, cfg.with_(steps=600, jpeg=jpeg), base_width=8)
    print(f"{name}: loss {runs[name].initial_loss:.4f} -> {runs[name].final_loss:.4f} "
          f"({time.perf_counter() - t0:.0f}s)")

# %% [markdown]
# Output-target error after real JPEG (lower means the manipulation was
# pushed harder towards the white target, i.e. better protection).

# %%
for name, run in runs.items():
    rows = E.robustness_eval(name, spec, test, run.protect(test), qualities=(80, 30), levels=1)
    print(f"{name:>15}: " + "  ".join(f"{r.quality}={r.output_mse:.4f}" for r in rows))
print(f"{'clean':>15}: {E.summarize(E.evaluate('clean', spec, test, test))['output_mse']:.4f}")

# %% [markdown]
# One forward pass versus a 100-step attack on a single image.

# %%
gen = runs["random quality"]
bench = E.runtime_bench({
    "generator": lambda: gen.protect(test[:1]),
    "ipgd (100 steps)": lambda: A.ipgd(spec, test[:1], A.AttackConfig(eps=0.05, steps=100)),
}, repeats=5)
for b in bench:
    print(f"{b.method:>17}: {b.mean_ms:8.2f} ms")
