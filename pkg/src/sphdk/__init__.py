"""Spherical DeepKriging: spatial prediction on the sphere.

Eigen-ordered spherical thin-plate spline (MRTS) features feed a
batch-normalized multilayer perceptron; OLS and universal kriging on the
same features serve as baselines.
"""

__version__ = "0.1.0"
