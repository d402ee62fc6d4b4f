# %% [markdown]
# # Per-image baselines: I-FGSM and I-PGD
#
# Both take signed gradient steps towards a target output and project back
# onto the eps ball around the clean image (and onto [0, 1]).

# %%
import numpy as np

from protectkit import attacks as A
from protectkit import evalkit as E
from protectkit import models as M
from protectkit.imageio import synth_corpus_arrays

# %% [markdown]
# On the identity "manipulation" with a white target the trajectory is known
# in closed form: each pixel climbs by alpha per step until it reaches
# x0 + eps or 1.

# %%
x0 = np.array([[[[0.10, 0.50, 0.97]]]]).repeat(3, axis=1)
trace = []
out = A.ifgsm(M.identity_model(), x0, A.AttackConfig(eps=0.08, alpha=0.03, steps=4), trace=trace)
print("attacked :", out[0, 0, 0])
print("predicted:", np.minimum(np.minimum(x0 + 4 * 0.03, x0 + 0.08), 1.0)[0, 0, 0])
print("loss per step:", np.round(trace, 5))

# %% [markdown]
# On the toy reconstruction model, a bigger budget buys a smaller gap to the
# white target.

# %%
spec = M.toy_recon_model(0)
imgs = synth_corpus_arrays(4, 64, seed=1)
clean_out = E.summarize(E.evaluate("clean", spec, imgs, imgs))["output_mse"]
print(f"clean: output-target mse {clean_out:.4f}")
for eps in (0.01, 0.02, 0.05, 0.1):
    prot = A.ipgd(spec, imgs, A.AttackConfig(eps=eps, alpha=eps / 10, steps=50))
    s = E.summarize(E.evaluate("ipgd", spec, imgs, prot))
    print(f"eps={eps:<5} perturbation mse {s['perturb_mse']:.2e}  output-target mse {s['output_mse']:.4f}")
