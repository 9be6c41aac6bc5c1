"""Network building blocks: dense, 2D/3D conv, transposed conv, batch norm.

Weight init is truncated normal (std 0.02, clipped at 2 sigma) with zero
biases. Conv kernels use layout [out_ch, in_ch, k, ...]; transposed-conv
kernels keep the layout of the convolution they are adjoint to, i.e.
[layer_in_ch, layer_out_ch, k, ...].
"""

import numpy as np

from . import tensor as T
from .conv import conv_nd, conv_out_extent, conv_transpose_nd, conv_transpose_out_extent
from .errors import ShapeError
from .tensor import Tensor


class Module:
    """Minimal layer protocol: callable, with named parameters and buffers."""

    def parameters(self):
        return []

    def buffers(self):
        return []

    def __call__(self, x, train=False):
        raise NotImplementedError


class Dense(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = Tensor(rng.truncated_normal((in_dim, out_dim)), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def parameters(self):
        ps = [("W", self.W)]
        if self.b is not None:
            ps.append(("b", self.b))
        return ps

    def __call__(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError("dense", x.shape, self.W.shape)
        y = T.matmul(x, self.W)
        if self.b is not None:
            y = y + self.b
        return y


class _ConvBase(Module):
    nd = None
    transposed = False

    def __init__(self, in_ch, out_ch, rng, k=4, stride=2, pad=1, bias=True):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.k, self.stride, self.pad = k, stride, pad
        kshape = (in_ch, out_ch) if self.transposed else (out_ch, in_ch)
        kshape = kshape + (k,) * self.nd
        self.W = Tensor(rng.truncated_normal(kshape), requires_grad=True)
        self.b = Tensor(np.zeros(out_ch), requires_grad=True) if bias else None

    def parameters(self):
        ps = [("W", self.W)]
        if self.b is not None:
            ps.append(("b", self.b))
        return ps

    def out_extent(self, d):
        if self.transposed:
            return conv_transpose_out_extent(d, self.k, self.stride, self.pad)
        return conv_out_extent(d, self.k, self.stride, self.pad)

    def __call__(self, x, train=False):
        if x.ndim != self.nd + 2 or x.shape[1] != self.in_ch:
            raise ShapeError(self._opname(), x.shape, self.W.shape)
        op = conv_transpose_nd if self.transposed else conv_nd
        y = op(x, self.W, stride=self.stride, pad=self.pad)
        if self.b is not None:
            y = y + T.reshape(self.b, (self.out_ch,) + (1,) * self.nd)
        return y

    def _opname(self):
        return ("conv_transpose" if self.transposed else "conv") + f"{self.nd}d"


class Conv3d(_ConvBase):
    nd = 3


class Conv2d(_ConvBase):
    nd = 2


class ConvTranspose3d(_ConvBase):
    nd = 3
    transposed = True


class BatchNorm(Module):
    """Per-channel normalization over batch and spatial axes (channel axis 1).

    Train mode uses biased batch statistics and updates the running buffers
    as running = momentum * running + (1 - momentum) * batch. Eval mode uses
    the running buffers. Train mode needs batch >= 2.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.9):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def __call__(self, x, train=False):
        if x.ndim < 2 or x.shape[1] != self.channels:
            raise ShapeError("batchnorm", x.shape, (self.channels,))
        axes = (0,) + tuple(range(2, x.ndim))
        cshape = (self.channels,) + (1,) * (x.ndim - 2)
        if train:
            if x.shape[0] < 2:
                raise ShapeError("batchnorm", x.shape, (2,), "train mode needs batch >= 2")
            mu = x.mean(axis=axes, keepdims=True)
            var = ((x - mu) ** 2).mean(axis=axes, keepdims=True)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mu.data.reshape(self.channels)
            self.running_var = m * self.running_var + (1 - m) * var.data.reshape(self.channels)
            xn = (x - mu) / T.sqrt(var + self.eps)
        else:
            rm = Tensor(self.running_mean.reshape(cshape))
            rs = Tensor(np.sqrt(self.running_var + self.eps).reshape(cshape))
            xn = (x - rm) / rs
        return xn * T.reshape(self.gamma, cshape) + T.reshape(self.beta, cshape)


class ReLU(Module):
    def __call__(self, x, train=False):
        return T.relu(x)


class LeakyReLU(Module):
    def __init__(self, alpha=0.2):
        self.alpha = alpha

    def __call__(self, x, train=False):
        return T.leaky_relu(x, self.alpha)


class Tanh(Module):
    def __call__(self, x, train=False):
        return T.tanh(x)


class Sigmoid(Module):
    def __call__(self, x, train=False):
        return T.sigmoid(x)


class Flatten(Module):
    def __call__(self, x, train=False):
        return T.reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))


class Reshape(Module):
    """Reshape the per-sample tail, keeping the batch axis."""

    def __init__(self, tail):
        self.tail = tuple(tail)

    def __call__(self, x, train=False):
        return T.reshape(x, (x.shape[0],) + self.tail)


class Sequential(Module):
    def __init__(self, named_layers):
        """named_layers: list of (name, Module)."""
        self.layers = list(named_layers)

    def parameters(self):
        out = []
        for name, layer in self.layers:
            for pname, p in layer.parameters():
                out.append((f"{name}.{pname}", p))
        return out

    def buffers(self):
        out = []
        for name, layer in self.layers:
            for bname, b in layer.buffers():
                out.append((f"{name}.{bname}", b))
        return out

    def set_buffer(self, name, value):
        head, _, tail = name.partition(".")
        for lname, layer in self.layers:
            if lname == head:
                setattr(layer, tail, np.asarray(value, dtype=np.float64).copy())
                return
        raise KeyError(name)

    def __call__(self, x, train=False):
        for _, layer in self.layers:
            x = layer(x, train=train)
        return x

    def modules(self):
        return [layer for _, layer in self.layers]


def contains_batchnorm(net):
    return any(isinstance(m, BatchNorm) for m in net.modules())
