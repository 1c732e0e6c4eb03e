"""RLS-optimized training with multi-shot structured pruning for FNNs/CNNs."""

from .data import Dataset, InputMask, load_cifar_binary, load_mnist_idx
from .network import Network, fnn_arch, minivgg_arch, mse_loss
from .pruning import PruneReport, PruneSet
from .rls import MomentumOptimizer, RlsHyperParams, RlsOptimizer
from .train import TrainConfig, TrainResult, evaluate

__version__ = "0.1.0"

__all__ = [
    "Dataset", "InputMask", "load_cifar_binary", "load_mnist_idx",
    "Network", "fnn_arch", "minivgg_arch", "mse_loss",
    "PruneReport", "PruneSet",
    "MomentumOptimizer", "RlsHyperParams", "RlsOptimizer",
    "TrainConfig", "TrainResult", "evaluate",
]
