"""N-d cross-correlation primitives (2D for images, 3D for voxel grids).

Three raw kernels form a closed triad under differentiation:

  forward(x, w)        input  [B,Ci,*S] x kernel [Co,Ci,*K] -> [B,Co,*O]
  input_grad(u, w)     adjoint of forward in x; also the transposed conv
  weight_grad(x, u)    adjoint of forward in w

Each Tensor-level op wires its VJPs to the other two, so any derivative
order stays inside the triad. Transposed convolution IS input_grad: with
identical stride/pad/kernel it satisfies <forward(x,w), y> == <x, transpose(y,w)>.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor

# -- shape arithmetic -----------------------------------------------------------


def conv_out_extent(d, k, stride, pad):
    ext = (d + 2 * pad - k) // stride + 1
    if d + 2 * pad < k or ext < 1:
        raise ShapeError("conv", (d,), (k,), "extent underflow")
    return ext


def conv_transpose_out_extent(d, k, stride, pad):
    ext = (d - 1) * stride - 2 * pad + k
    if ext < 1:
        raise ShapeError("conv_transpose", (d,), (k,), "extent underflow")
    return ext


def _spatial(x):
    return x.shape[2:]


def _check_conv_shapes(op, x, w):
    nd = x.ndim - 2
    if w.ndim != nd + 2:
        raise ShapeError(op, x.shape, w.shape, "kernel rank mismatch")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(op, x.shape, w.shape, "channel mismatch")
    k = w.shape[2]
    if any(e != k for e in w.shape[2:]):
        raise ShapeError(op, x.shape, w.shape, "kernel must be cubic")
    return nd, k


# -- raw kernels ----------------------------------------------------------------


def _strided_windows(xp, k, stride, nd):
    win = sliding_window_view(xp, (k,) * nd, axis=tuple(range(2, 2 + nd)))
    sub = (slice(None), slice(None)) + tuple(slice(None, None, stride) for _ in range(nd))
    return win[sub]


def conv_forward_raw(x, w, stride, pad):
    nd = x.ndim - 2
    k = w.shape[2]
    xp = np.pad(x, [(0, 0), (0, 0)] + [(pad, pad)] * nd)
    win = _strided_windows(xp, k, stride, nd)  # [B, Ci, *O, *K]
    y = np.tensordot(
        win,
        w,
        axes=((1,) + tuple(range(2 + nd, 2 + 2 * nd)), (1,) + tuple(range(2, 2 + nd))),
    )  # [B, *O, Co]
    return np.ascontiguousarray(np.moveaxis(y, -1, 1))


def conv_input_grad_raw(u, w, stride, pad, in_spatial):
    """Adjoint of conv_forward_raw in x: scatter u back through the kernel.

    One channel contraction, then one strided slice-add per kernel offset;
    for a fixed offset the target positions stride apart, so plain += is an
    exact scatter. Positions past the last window (floor-division tails)
    correctly receive zero.
    """
    import itertools

    nd = u.ndim - 2
    k = w.shape[2]
    if pad >= k:
        raise ShapeError("conv_input_grad", u.shape, w.shape, "pad must be < kernel")
    b, co = u.shape[:2]
    ci = w.shape[1]
    out_sp = _spatial(u)
    for d, o in zip(in_spatial, out_sp):
        if conv_out_extent(d, k, stride, pad) != o:
            raise ShapeError("conv_input_grad", u.shape, tuple(in_spatial),
                             "upstream extent inconsistent with input extent")
    # tmp[b, ci, *O, *K] = sum_co u[b, co, *O] w[co, ci, *K]
    tmp = np.moveaxis(np.tensordot(u, w, axes=((1,), (0,))), 1 + nd, 1)
    full = tuple((o - 1) * stride + k for o in out_sp)
    gp = np.zeros((b, ci) + full, dtype=u.dtype)
    lead = (slice(None), slice(None))
    for dk in itertools.product(range(k), repeat=nd):
        dst = lead + tuple(
            slice(d, d + stride * o, stride) for d, o in zip(dk, out_sp)
        )
        src = lead + (Ellipsis,) + dk
        gp[dst] += tmp[src]
    # drop the pad border; extend with zeros where the input outruns coverage
    tail = [max(0, pad + d - f) for d, f in zip(in_spatial, full)]
    if any(tail):
        gp = np.pad(gp, [(0, 0), (0, 0)] + [(0, t) for t in tail])
    crop = lead + tuple(slice(pad, pad + d) for d in in_spatial)
    return np.ascontiguousarray(gp[crop])


def conv_weight_grad_raw(x, u, stride, pad, k):
    """Adjoint of conv_forward_raw in w: correlate input windows with u."""
    nd = x.ndim - 2
    xp = np.pad(x, [(0, 0), (0, 0)] + [(pad, pad)] * nd)
    win = _strided_windows(xp, k, stride, nd)  # [B, Ci, *O, *K]
    dw = np.tensordot(
        u,
        win,
        axes=((0,) + tuple(range(2, 2 + nd)), (0,) + tuple(range(2, 2 + nd))),
    )  # [Co, Ci, *K]
    return np.ascontiguousarray(dw)


# -- differentiable ops ----------------------------------------------------------


def conv_nd(x, w, stride=2, pad=1):
    """Strided cross-correlation with zero padding (2-d or 3-d by input rank)."""
    nd, k = _check_conv_shapes("conv", x, w)
    for d in _spatial(x):
        conv_out_extent(d, k, stride, pad)
    out = Tensor._from_op(conv_forward_raw(x.data, w.data, stride, pad), f"conv{nd}d", (x, w))
    in_sp = _spatial(x)
    return out._set_vjps(
        lambda u: conv_input_grad(u, w, stride, pad, in_sp),
        lambda u: conv_weight_grad(x, u, stride, pad, k),
    )


def conv_input_grad(u, w, stride, pad, in_spatial):
    nd = u.ndim - 2
    if u.shape[1] != w.shape[0]:
        raise ShapeError("conv_input_grad", u.shape, w.shape, "channel mismatch")
    in_spatial = tuple(int(d) for d in in_spatial)
    k = w.shape[2]
    data = conv_input_grad_raw(u.data, w.data, stride, pad, in_spatial)
    out = Tensor._from_op(data, f"conv{nd}d_input_grad", (u, w))
    return out._set_vjps(
        lambda v: conv_nd(v, w, stride, pad),
        lambda v: conv_weight_grad(v, u, stride, pad, k),
    )


def conv_weight_grad(x, u, stride, pad, k):
    nd = x.ndim - 2
    data = conv_weight_grad_raw(x.data, u.data, stride, pad, k)
    out = Tensor._from_op(data, f"conv{nd}d_weight_grad", (x, u))
    in_sp = _spatial(x)
    return out._set_vjps(
        lambda m: conv_input_grad(u, m, stride, pad, in_sp),
        lambda m: conv_nd(x, m, stride, pad),
    )


def conv_transpose_nd(x, w, stride=2, pad=1):
    """Transposed (fractionally strided) convolution; adjoint of conv_nd.

    The kernel keeps conv layout [Co,Ci,*K] where Co is this op's INPUT
    channel count and Ci its OUTPUT channel count, so the same kernel
    satisfies the adjoint pairing with conv_nd at equal params.
    """
    nd = x.ndim - 2
    if x.shape[1] != w.shape[0]:
        raise ShapeError("conv_transpose", x.shape, w.shape, "channel mismatch")
    k = w.shape[2]
    out_sp = tuple(conv_transpose_out_extent(d, k, stride, pad) for d in _spatial(x))
    return conv_input_grad(x, w, stride, pad, out_sp)
