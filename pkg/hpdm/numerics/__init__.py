"""Tensor kernels, autodiff helpers, optimizer and checkpoint I/O."""

from .autodiff import backward, check_kernel, grad_check, grad_check_parameters, shadow64
from .grid import grid_sample_3d
from .kernels import Kernel, kernel_set
from .optim import OptimizerState, Schedule

__all__ = [
    "Kernel",
    "OptimizerState",
    "Schedule",
    "backward",
    "check_kernel",
    "grad_check",
    "grad_check_parameters",
    "grid_sample_3d",
    "kernel_set",
    "shadow64",
]
