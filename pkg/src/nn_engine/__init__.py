"""Fixed-architecture feed-forward networks on numpy."""

from .engine import (
    DEFAULT_EVAL_BATCH,
    ForwardTrace,
    Mode,
    backward,
    evaluate,
    forward,
    loss_and_grads,
    predict,
    predict_proba,
)
from .errors import LabelRangeError, NonFiniteGradientError, ShapeMismatchError, UnknownNetworkError
from .network import (
    BUILTIN_SPECS,
    LENET,
    NET_A,
    NET_B,
    NET_C,
    NET_D,
    LayerKind,
    LayerParams,
    LayerSpec,
    NetworkSpec,
    Parameters,
    Tensor,
    conv,
    dense,
    dropout,
    flatten,
    get_spec,
    init_parameters,
    max_pool,
    relu,
    softmax,
    tanh,
)
from .optimizer import OptimizerState, current_lr, sgd_momentum_step

__all__ = [
    "BUILTIN_SPECS",
    "DEFAULT_EVAL_BATCH",
    "ForwardTrace",
    "LENET",
    "LabelRangeError",
    "LayerKind",
    "LayerParams",
    "LayerSpec",
    "Mode",
    "NET_A",
    "NET_B",
    "NET_C",
    "NET_D",
    "NetworkSpec",
    "NonFiniteGradientError",
    "OptimizerState",
    "Parameters",
    "ShapeMismatchError",
    "Tensor",
    "UnknownNetworkError",
    "backward",
    "conv",
    "current_lr",
    "dense",
    "dropout",
    "evaluate",
    "flatten",
    "forward",
    "get_spec",
    "init_parameters",
    "loss_and_grads",
    "max_pool",
    "predict",
    "predict_proba",
    "relu",
    "sgd_momentum_step",
    "softmax",
    "tanh",
]
