"""adpgcn: adaptive graph convolution framework for multivariate forecasting."""

from . import kernels
from .errors import AdpgcnError
from .gradcheck import finite_difference_check
from .graph import (
    AdaptiveAdjacency,
    GcnBlock,
    GraphConvParams,
    adaptive_graph_conv,
    diffusion_conv,
    gcn_layer,
    materialize_adjacency,
)
from .model import Forecaster, GcnConfig, ModelConfig
from .tensor import Tensor, no_grad
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AdaptiveAdjacency",
    "AdpgcnError",
    "Forecaster",
    "GcnBlock",
    "GcnConfig",
    "GraphConvParams",
    "ModelConfig",
    "Tensor",
    "TrainConfig",
    "adaptive_graph_conv",
    "diffusion_conv",
    "finite_difference_check",
    "gcn_layer",
    "kernels",
    "materialize_adjacency",
    "no_grad",
    "train",
    "__version__",
]
