"""Referring-expression segmentation on frozen encoder stubs.

A small float64 autodiff core drives the trainable middle of the model:
feature fusion over a frozen conv pyramid, bidirectional cross-modal
attention with a relevance gate, and a query-token mask decoder, trained
with focal + dice losses on synthetic shape scenes.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .config import TrainConfig
from .model import ReferringSegmenter
from .tensor import Tensor, backward

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "ReferringSegmenter", "Tensor", "TrainConfig",
           "backward", "__version__"]
