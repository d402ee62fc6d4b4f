"""Targeted adversarial protection of images against differentiable
manipulation models, with a differentiable JPEG layer and a small numpy
autodiff core."""

__version__ = "0.1.0"
