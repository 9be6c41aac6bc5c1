"""voxgan: Wasserstein-GAN training over 3D voxel grids.

Improved-Wasserstein training (gradient penalty, 5:1 critic schedule) for
volumetric shape generation, plus a conditional variational-encoder variant
that completes shapes from single-view depth-scan occlusions. Built on a
small numpy tensor core with double-backward support.
"""

import os as _os

# Pin BLAS thread pools before numpy spins them up so runs with
# VOXGAN_THREADS set are reproducible for that thread count.
_threads = _os.environ.get("VOXGAN_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os

from . import conv, layers, losses, metrics, models, optim, rng, tensor, training, voxel  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    ContainerError,
    DataError,
    GradientError,
    NonFiniteError,
    ShapeError,
    VoxganError,
)
from .rng import Rng, sample_normal, sample_uniform  # noqa: E402
from .tensor import Tensor, grad, no_grad, set_default_dtype  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Rng",
    "grad",
    "no_grad",
    "sample_normal",
    "sample_uniform",
    "set_default_dtype",
    "tensor",
    "conv",
    "layers",
    "optim",
    "models",
    "losses",
    "training",
    "voxel",
    "metrics",
    "rng",
    "VoxganError",
    "ShapeError",
    "GradientError",
    "NonFiniteError",
    "ConfigError",
    "DataError",
    "ContainerError",
]
