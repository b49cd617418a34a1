"""Forward kernels and their vector-Jacobian products.

Every tensor is a C-contiguous ``float64`` :class:`numpy.ndarray`. Images use
the NCHW layout; convolution kernels are ``(out, in, k, k)`` for the strided
convolution and ``(in, out, k, k)`` for its transpose.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError

STRIDE = 2


def as_tensor(x):
    """Return ``x`` as a C-contiguous float64 array (no copy when possible)."""
    return np.ascontiguousarray(x, dtype=np.float64)


def out_size(n):
    """Spatial size after one stride-2 "same" convolution."""
    return -(-n // STRIDE)


def same_padding(in_size, k):
    """Return ``(before, after)`` zero padding for one spatial axis.

    The total is ``max((out - 1) * 2 + k - in, 0)``; an odd total puts the
    extra cell after the data (bottom/right).
    """
    total = max((out_size(in_size) - 1) * STRIDE + k - in_size, 0)
    return total // 2, total - total // 2


def _check_kernel(k):
    if k < 1 or k % 2 == 0:
        raise ShapeError(f"kernel size must be odd and positive, got {k}")


def _patches(x, k):
    """Strided k×k windows of the zero-padded input: ``(N, C, oh, ow, k, k)``."""
    _, _, h, w = x.shape
    ph, pw = same_padding(h, k), same_padding(w, k)
    xp = np.pad(x, ((0, 0), (0, 0), ph, pw))
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))
    return windows[:, :, ::STRIDE, ::STRIDE][:, :, : out_size(h), : out_size(w)]


def _fold(cols, in_hw):
    """Adjoint of :func:`_patches`: scatter-add windows back onto the input grid."""
    n, c, oh, ow, k, _ = cols.shape
    h, w = in_hw
    (pt, pb), (pl, pr) = same_padding(h, k), same_padding(w, k)
    xp = np.zeros((n, c, h + pt + pb, w + pl + pr))
    for p in range(k):
        for q in range(k):
            xp[:, :, p : p + STRIDE * oh : STRIDE, q : q + STRIDE * ow : STRIDE] += cols[..., p, q]
    return xp[:, :, pt : pt + h, pl : pl + w]


def conv2d_s2(x, kernel, bias):
    """Stride-2 convolution with "same" zero padding.

    Parameters
    ----------
    x : ndarray, shape (N, Cin, H, W)
    kernel : ndarray, shape (Cout, Cin, k, k)
    bias : ndarray, shape (Cout,)

    Returns
    -------
    ndarray, shape (N, Cout, ceil(H/2), ceil(W/2))
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d_s2 expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    cout, cin, k, k2 = kernel.shape
    _check_kernel(k)
    if k != k2:
        raise ShapeError(f"kernel must be square, got {k}x{k2}")
    if x.shape[1] != cin:
        raise ShapeError(f"kernel expects {cin} input channels, input has {x.shape[1]}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"empty input of shape {x.shape}")
    y = np.einsum("ncijpq,ocpq->noij", _patches(x, k), kernel, optimize=True)
    y += bias[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_s2_vjp(grad, x, kernel):
    """Gradients of :func:`conv2d_s2` w.r.t. ``(x, kernel, bias)``."""
    k = kernel.shape[-1]
    gx = _fold(np.einsum("noij,ocpq->ncijpq", grad, kernel, optimize=True), x.shape[2:])
    gk = np.einsum("noij,ncijpq->ocpq", grad, _patches(x, k), optimize=True)
    return np.ascontiguousarray(gx), gk, grad.sum(axis=(0, 2, 3))


def convT2d_s2(x, kernel, bias, target_hw):
    """Transposed stride-2 convolution, the exact adjoint of :func:`conv2d_s2`.

    ``target_hw`` is the spatial shape of the tensor the matching encoder
    layer consumed; it must satisfy ``ceil(H/2) == h`` and ``ceil(W/2) == w``.
    ``kernel`` has shape ``(Cin, Cout, k, k)`` where ``Cin`` matches ``x``.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"convT2d_s2 expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    cin, cout, k, _ = kernel.shape
    _check_kernel(k)
    if x.shape[1] != cin:
        raise ShapeError(f"kernel expects {cin} input channels, input has {x.shape[1]}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    th, tw = (int(v) for v in target_hw)
    if th < 1 or tw < 1 or out_size(th) != x.shape[2] or out_size(tw) != x.shape[3]:
        raise ShapeError(
            f"target {th}x{tw} is incompatible with input spatial shape {x.shape[2]}x{x.shape[3]}"
        )
    cols = np.einsum("noij,ocpq->ncijpq", x, kernel, optimize=True)
    y = _fold(cols, (th, tw)) + bias[None, :, None, None]
    return np.ascontiguousarray(y)


def convT2d_s2_vjp(grad, x, kernel):
    """Gradients of :func:`convT2d_s2` w.r.t. ``(x, kernel, bias)``."""
    k = kernel.shape[-1]
    cols = _patches(grad, k)
    gx = np.einsum("ncijpq,ocpq->noij", cols, kernel, optimize=True)
    gk = np.einsum("noij,ncijpq->ocpq", x, cols, optimize=True)
    return np.ascontiguousarray(gx), gk, grad.sum(axis=(0, 2, 3))


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def frobenius_sq(x):
    x = as_tensor(x)
    return float(np.dot(x.ravel(), x.ravel()))


def l1_sum(x):
    return float(np.abs(as_tensor(x)).sum())


def sign0(x):
    """Elementwise sign with ``sign(0) == 0`` (the subgradient used for |x|)."""
    return np.sign(x)


def ceil_chain(size, n_layers):
    """Spatial sizes visited by ``n_layers`` stride-2 convolutions, input first."""
    sizes = [int(size)]
    for _ in range(n_layers):
        sizes.append(out_size(sizes[-1]))
    return sizes


def numel(shape):
    return math.prod(shape)
