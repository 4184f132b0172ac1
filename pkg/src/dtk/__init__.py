"""Dilated-convolution CNN toolkit.

From-scratch differentiable layer ops (dilated conv, pooling, dense, softmax),
a declarative layer graph with freeze-aware training, VGG-16/19 builders with
per-block dilation and a two-branch concat tail, CIFAR data pipeline, a
named-tensor weight container, and a receptive-field coverage analyzer.
"""

from .cifar import (
    AugmentConfig,
    ChannelStats,
    RawDataset,
    augment,
    load_cifar10,
    load_cifar100,
    split,
    standardize,
)
from .errors import (
    ConfigError,
    FormatError,
    InputError,
    MappingError,
    NumericError,
    ShapeError,
    StateError,
    ToolkitError,
)
from .graph import LayerSpec, ModelGraph
from .ops import ConvSpec, DenseSpec, PoolSpec, same_padding
from .rf import CoverageMask, ScheduleLayer, coverage, coverage_probe, rf_report, span_formula
from .tensor import Tensor, add, from_values, matmul, mul, ones, sub, zeros
from .train import (
    AdamState,
    DataSplits,
    PlateauScheduler,
    TrainConfig,
    TrainReport,
    adam_step,
    accuracy,
    cross_entropy,
    evaluate,
    fit,
    plateau_scheduler,
)
from .vgg import ArchConfig, BlockPlan, PretrainedInit, RandomInit, build, catalog, param_count

__version__ = "0.1.0"
