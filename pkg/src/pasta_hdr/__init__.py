"""HDR deghosting with progressive wavelet aggregation, on a small numpy autodiff engine."""

from .model import ModelConfig, PASTANet, count_params, preset

__version__ = "0.1.0"

__all__ = ["ModelConfig", "PASTANet", "count_params", "preset", "__version__"]
