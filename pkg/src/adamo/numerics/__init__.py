from adamo.numerics.autodiff import (
    IGNORE_INDEX,
    PRIMITIVES,
    STANDARD,
    WIDE,
    GradTape,
    Tensor,
    add,
    apply_primitive,
    backward,
    cross_entropy,
    embedding,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    scale,
    softmax,
    sum_all,
    transpose,
)
from adamo.numerics.gradcheck import GradCheckReport, grad_check
from adamo.numerics.optim import AdamState, adam_step
from adamo.numerics.sampling import make_rng, sample_gaussian

__all__ = [
    "IGNORE_INDEX", "PRIMITIVES", "STANDARD", "WIDE", "GradTape", "Tensor", "add", "apply_primitive",
    "backward", "cross_entropy", "embedding", "gelu", "layer_norm", "matmul", "mul", "reshape", "scale",
    "softmax", "sum_all", "transpose", "GradCheckReport", "grad_check", "AdamState", "adam_step",
    "make_rng", "sample_gaussian",
]
