"""Float64 tensor kernels, reverse-mode graph and dense linear algebra."""

from .graph import Graph, Node, backward
from .linalg import svd, sym_eig, tridiagonal_ql, tridiagonalize
from .ops import (
    as_tensor,
    ceil_chain,
    conv2d_s2,
    convT2d_s2,
    frobenius_sq,
    l1_sum,
    matmul,
    out_size,
    relu,
    same_padding,
)

__all__ = [
    "Graph",
    "Node",
    "backward",
    "svd",
    "sym_eig",
    "tridiagonal_ql",
    "tridiagonalize",
    "as_tensor",
    "ceil_chain",
    "conv2d_s2",
    "convT2d_s2",
    "frobenius_sq",
    "l1_sum",
    "matmul",
    "out_size",
    "relu",
    "same_padding",
]
