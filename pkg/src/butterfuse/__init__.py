"""Frequency-aware feature fusion neck and toy detector on a small numpy autodiff engine."""

from .errors import ConfigError, FormatError, ShapeError
from .tensor import Tensor, backward, grad_check, grad_check_params, no_grad

__all__ = ["ConfigError", "FormatError", "ShapeError", "Tensor", "backward", "grad_check",
           "grad_check_params", "no_grad"]
__version__ = "0.1.0"
