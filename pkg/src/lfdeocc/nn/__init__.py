from .tensor import (
    Tensor,
    add,
    batch_norm,
    concat,
    conv2d,
    conv2d_transpose,
    conv_out_size,
    crop_center,
    leaky_relu,
    mse_loss,
)
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, Module, kaiming_normal
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor", "add", "batch_norm", "concat", "conv2d", "conv2d_transpose",
    "conv_out_size", "crop_center", "leaky_relu", "mse_loss",
    "BatchNorm2d", "Conv2d", "ConvTranspose2d", "Module", "kaiming_normal",
    "GradCheckReport", "grad_check",
]
