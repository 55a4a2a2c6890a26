from .gradcheck import finite_difference, max_relative_error
from .optim import OptimizerState, adam_step, clip_grad_norm, global_norm
from .rng import Rng
from .tensor import (
    PRIMITIVES,
    GradTape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cross_entropy,
    current_tape,
    div,
    dropout,
    embedding,
    exp,
    gelu,
    getitem,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    softmax,
    square,
    sub,
    sum_,
    tanh,
    transpose,
)
