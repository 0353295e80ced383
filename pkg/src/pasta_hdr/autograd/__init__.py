from . import ops
from .gradcheck import check_gradients
from .nn import Conv2d, LayerNorm, Linear, Module
from .tensor import (
    MemoryCapExceeded,
    Parameter,
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    default_dtype,
    get_default_dtype,
    memory_cap,
    no_record,
)

__all__ = [
    "ops", "check_gradients", "Conv2d", "LayerNorm", "Linear", "Module",
    "MemoryCapExceeded", "Parameter", "Tape", "Tensor", "active_tape", "as_tensor",
    "backward", "default_dtype", "get_default_dtype", "memory_cap", "no_record",
]
