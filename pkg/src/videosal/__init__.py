"""Video saliency prediction: windowed-attention encoder, multi-level fusion,
full-temporal-resolution convolutional decoder, training/evaluation tooling."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, no_grad, tensor  # noqa: F401
from .errors import (  # noqa: F401
    ConfigurationError,
    DegenerateInputError,
    FileFormatError,
    GraphError,
    ShapeError,
    TrainingDiverged,
    VideosalError,
)
