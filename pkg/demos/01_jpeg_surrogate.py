# %% [markdown]
# # A differentiable JPEG
#
# Real JPEG rounds quantised DCT coefficients, and rounding has zero gradient
# almost everywhere. The surrogate swaps the rounding for a smooth stand-in so
# a perturbation can be optimised *through* compression.

# %%
import numpy as np

from protectkit import jpeg as J
from protectkit import tensor as T
from protectkit.imageio import synth_corpus_arrays
from protectkit.tensor import Tensor

imgs = synth_corpus_arrays(6, 64, seed=0) * 255.0  # the pipeline works on 0..255

# %% [markdown]
# The rounding stand-ins, on a few values around 2.5:

# %%
x = Tensor(np.array([2.0, 2.25, 2.5, 2.75, 3.0]))
for mode in J.ROUND_MODES:
    print(f"{mode:>9}", np.round(J.approx_round(x, mode).data, 4))

# %% [markdown]
# How far is each surrogate from true rounding on whole images?  `soft` is
# bitwise equal in the forward pass (it only changes the gradient).

# %%
true80 = J.jpeg_pipeline(Tensor(imgs), J.JpegConfig(80, "true")).data
for mode in ("sin", "soft", "cubic", "identity"):
    approx = J.jpeg_pipeline(Tensor(imgs), J.JpegConfig(80, mode)).data
    print(f"{mode:>9}: mean |surrogate - true| = {np.mean(np.abs(approx - true80)):.3f} grey levels")

# %% [markdown]
# Distortion against the uncompressed image falls as quality rises.

# %%
for q in (10, 30, 50, 80, 95):
    out = J.reference_jpeg(imgs / 255.0, q)
    print(f"q={q:>2}: mse = {np.mean((out - imgs / 255.0) ** 2) * 255**2:7.2f} (0..255 scale)")

# %% [markdown]
# Gradients flow through the sin surrogate; central differences agree.

# %%
with T.precision("f64"):
    small = Tensor(imgs[:1, :, :16, :16].astype(np.float64), requires_grad=True)
    w = np.random.default_rng(0).normal(size=small.shape)
    cfg = J.JpegConfig(60, "sin")
    loss = lambda t: T.sum_all(T.mul(J.jpeg_pipeline(t, cfg), Tensor(w)))
    T.backward(loss(small))
    fd = T.numerical_gradient(lambda a: loss(Tensor(a)).item(), small.data, 1e-5)
    print("relative error vs finite differences:", T.relative_error(small.grad, fd))
