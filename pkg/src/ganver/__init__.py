"""GAN training with a variational entropy regularizer on 2-D Gaussian-mixture benchmarks.

Everything runs on numpy: a small tape-based reverse-mode autodiff engine,
MLP generators/critics, a neural mutual-information lower bound, and the
sample-based evaluation battery.
"""

__version__ = "0.1.0"
