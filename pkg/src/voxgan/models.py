"""Generator / critic / encoder builders and the latent-code machinery.

The generator maps a normally distributed latent vector through one dense
layer, reshapes to a small cube, then upsamples with stride-2 kernel-4
transposed convolutions (batch norm + ReLU between, tanh after the last)
to a signed occupancy grid in (-1, 1). The critic mirrors it with stride-2
kernel-4 convolutions and leaky ReLU, flattening into a single affine
score; it deliberately contains no batch norm so per-sample input
gradients stay well defined for the gradient penalty. The voxel encoder
reuses the critic topology but ends in a 2*latent-dim head (means and
log-variances); the image encoder is a small strided 2D conv stack with
the same head.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .layers import (
    BatchNorm,
    Conv2d,
    Conv3d,
    ConvTranspose3d,
    Dense,
    Flatten,
    LeakyReLU,
    ReLU,
    Reshape,
    Sequential,
    Tanh,
)
from .rng import sample_normal
from .tensor import Tensor

RESOLUTIONS = (8, 16, 20, 32)
BASES = ("generator", "discriminator", "image-encoder", "voxel-encoder")

LEAKY_SLOPE = 0.2


def _generator_plan(resolution):
    """(base cube extent, deconv channel chain ending in 1 output channel)."""
    plans = {
        32: (2, (256, 128, 64, 32, 1)),
        20: (5, (64, 32, 1)),
        16: (2, (64, 32, 16, 1)),
        8: (2, (32, 16, 1)),
    }
    return plans[resolution]


def _critic_plan(resolution):
    extent, chain = _generator_plan(resolution)
    return tuple(reversed(chain[:-1]))


def _image_plan(resolution):
    return (64, 128, 256, 512) if resolution >= 20 else (16, 32, 64, 128)


@dataclass
class ModelSpec:
    """Declarative description of one network stack."""

    base: str
    resolution: int = 32
    latent_dim: int = 200
    channels: tuple = field(default=None)

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}; expected one of {BASES}")
        if self.resolution not in RESOLUTIONS:
            raise ValueError(f"resolution {self.resolution} not in {RESOLUTIONS}")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if self.channels is None:
            if self.base == "generator":
                self.channels = _generator_plan(self.resolution)[1]
            elif self.base == "image-encoder":
                self.channels = _image_plan(self.resolution)
            else:
                self.channels = _critic_plan(self.resolution)
        else:
            self.channels = tuple(int(c) for c in self.channels)
        if self.base == "generator":
            n = len(self.channels) - 1
            if self.channels[-1] != 1:
                raise ValueError("generator channel chain must end in 1")
            if self.resolution % (1 << n) != 0 or self.resolution >> n < 1:
                raise ValueError(
                    f"resolution {self.resolution} cannot be reached by {n} stride-2 upsamplings"
                )

    @property
    def encoder_output_dim(self):
        return 2 * self.latent_dim

    @property
    def base_extent(self):
        n = len(self.channels) - 1
        return self.resolution >> n

    def to_config(self):
        return {
            "base": self.base,
            "res": str(self.resolution),
            "latent": str(self.latent_dim),
            "channels": ",".join(str(c) for c in self.channels),
        }

    @classmethod
    def from_config(cls, cfg):
        return cls(
            base=cfg["base"],
            resolution=int(cfg["res"]),
            latent_dim=int(cfg["latent"]),
            channels=tuple(int(c) for c in cfg["channels"].split(",")),
        )


class Network(Sequential):
    def __init__(self, spec, named_layers):
        super().__init__(named_layers)
        self.spec = spec


@dataclass
class LatentCode:
    """Reparameterized Gaussian code: sample = mu + exp(log_var/2) * eta."""

    mu: Tensor
    log_var: Tensor
    sample: Tensor
    eta: Tensor


def reparameterize(head_out, rng):
    """Split a [B, 2L] encoder head into means/log-variances and draw a sample."""
    if head_out.ndim != 2 or head_out.shape[1] % 2 != 0:
        raise ShapeError("reparameterize", head_out.shape, "(B, 2*latent)")
    latent = head_out.shape[1] // 2
    mu = T.narrow(head_out, 1, 0, latent)
    log_var = T.narrow(head_out, 1, latent, latent)
    eta = sample_normal(rng, (head_out.shape[0], latent))
    sample = mu + T.exp(log_var * 0.5) * eta
    return LatentCode(mu=mu, log_var=log_var, sample=sample, eta=eta)


class EncoderNetwork(Network):
    def encode(self, x, rng, train=False):
        return reparameterize(self(x, train=train), rng)


def build_generator(spec, rng):
    if spec.base != "generator":
        raise ValueError(f"spec base is {spec.base!r}, not generator")
    chain = spec.channels
    extent = spec.base_extent
    c0 = chain[0]
    layers = [
        ("dense", Dense(spec.latent_dim, c0 * extent**3, rng)),
        ("cube", Reshape((c0, extent, extent, extent))),
    ]
    n = len(chain) - 1
    for i in range(n):
        layers.append((f"deconv{i + 1}", ConvTranspose3d(chain[i], chain[i + 1], rng)))
        if i < n - 1:
            layers.append((f"bn{i + 1}", BatchNorm(chain[i + 1])))
            layers.append((f"relu{i + 1}", ReLU()))
    layers.append(("tanh", Tanh()))
    return Network(spec, layers)


def _conv_trunk(spec, rng):
    """Shared critic/voxel-encoder body: strided conv + leaky ReLU stack."""
    layers = []
    in_ch = 1
    extent = spec.resolution
    for i, out_ch in enumerate(spec.channels):
        layers.append((f"conv{i + 1}", Conv3d(in_ch, out_ch, rng)))
        layers.append((f"lrelu{i + 1}", LeakyReLU(LEAKY_SLOPE)))
        extent = layers[-2][1].out_extent(extent)
        in_ch = out_ch
    layers.append(("flatten", Flatten()))
    return layers, in_ch * extent**3


def build_discriminator(spec, rng):
    if spec.base != "discriminator":
        raise ValueError(f"spec base is {spec.base!r}, not discriminator")
    layers, flat = _conv_trunk(spec, rng)
    layers.append(("score", Dense(flat, 1, rng)))
    return Network(spec, layers)


def build_encoder(spec, rng):
    if spec.base == "voxel-encoder":
        layers, flat = _conv_trunk(spec, rng)
        layers.append(("head", Dense(flat, spec.encoder_output_dim, rng)))
        return EncoderNetwork(spec, layers)
    if spec.base == "image-encoder":
        layers = []
        in_ch = 1
        extent = spec.resolution
        for i, out_ch in enumerate(spec.channels):
            conv = Conv2d(in_ch, out_ch, rng, k=5, stride=2, pad=2)
            layers.append((f"conv{i + 1}", conv))
            layers.append((f"lrelu{i + 1}", LeakyReLU(LEAKY_SLOPE)))
            extent = conv.out_extent(extent)
            in_ch = out_ch
        layers.append(("flatten", Flatten()))
        layers.append(("head", Dense(in_ch * extent**2, spec.encoder_output_dim, rng)))
        return EncoderNetwork(spec, layers)
    raise ValueError(f"spec base is {spec.base!r}, not an encoder")


def interpolate_latents(z_a, z_b, steps):
    """Linear interpolation between two latent vectors, endpoints inclusive."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    if z_a.shape != z_b.shape:
        raise ShapeError("interpolate_latents", z_a.shape, z_b.shape)
    if steps < 2:
        raise ValueError("steps must be >= 2")
    ts = np.linspace(0.0, 1.0, steps)
    return [z_a + t * (z_b - z_a) for t in ts]


def decode_latents(generator, latents):
    """Decode latent vectors into soft occupancy grids (eval mode)."""
    from .voxel import VoxelGrid, from_signed

    z = np.stack([np.asarray(v, dtype=np.float64) for v in latents])
    with T.no_grad():
        out = generator(Tensor(z), train=False)
    return [VoxelGrid(from_signed(out.data[i, 0])) for i in range(out.shape[0])]


class CompletionModel:
    """Deterministic encode-decode: conditions map through the code means."""

    def __init__(self, encoder, generator):
        self.encoder = encoder
        self.generator = generator

    def __call__(self, condition):
        from .voxel import VoxelGrid, from_signed, to_signed

        x = to_signed(condition.binarize().occupancy.astype(np.float64))[None, None]
        with T.no_grad():
            head = self.encoder(Tensor(x), train=False)
            mu = T.narrow(head, 1, 0, head.shape[1] // 2)
            out = self.generator(mu, train=False)
        return VoxelGrid(from_signed(out.data[0, 0]))
