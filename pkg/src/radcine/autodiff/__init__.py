from .tensor import (Tensor, no_grad, dtype_scope, default_dtype, track_allocations,
                     make_node, as_tensor, add, sub, mul, div, scale, exp, softplus,
                     leaky_relu, sum_, mean, vdot, permute, reshape, slice_, concat,
                     stack, linear_op)
from .functional import (conv2d, maxpool2d, upsample_bilinear, fft_1d, complex_mul,
                         to_complex, from_complex)
from .checkpoint import save_weights, load_weights, CheckpointError

__all__ = [
    "Tensor", "no_grad", "dtype_scope", "default_dtype", "track_allocations",
    "make_node", "as_tensor", "add", "sub", "mul", "div", "scale", "exp", "softplus",
    "leaky_relu", "sum_", "mean", "vdot", "permute", "reshape", "slice_", "concat",
    "stack", "linear_op", "conv2d", "maxpool2d", "upsample_bilinear", "fft_1d",
    "complex_mul", "to_complex", "from_complex", "save_weights", "load_weights",
    "CheckpointError",
]
