from . import functional, nn
from .gradcheck import check_gradients, finite_difference_grad, relative_error
from .optim import Adam, OptimState, adam_step
from .tensor import (
    ContractError,
    DimensionError,
    Module,
    NumericError,
    Tensor,
    as_tensor,
    no_grad,
    numeric_checks,
    topo_order,
)

__all__ = [
    "Adam",
    "ContractError",
    "DimensionError",
    "Module",
    "NumericError",
    "OptimState",
    "Tensor",
    "adam_step",
    "as_tensor",
    "check_gradients",
    "finite_difference_grad",
    "functional",
    "nn",
    "no_grad",
    "numeric_checks",
    "relative_error",
    "topo_order",
]
