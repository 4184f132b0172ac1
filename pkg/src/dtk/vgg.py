"""Builders that turn a block plan into a runnable VGG-16/19 graph.

A plan has five blocks. Each block is a run of 3x3 same-padded convolutions
(ReLU after each) closed by a 2x2 stride-2 max pool; block 5 may carry two
dilation rates, in which case its conv stack is duplicated, one copy per rate,
and the copies are concatenated along channels before the block-5 pool.
The head is fixed: flatten, dense 512, ReLU, dense 256, ReLU, dense C, softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ntl, ops
from .errors import ConfigError, MappingError
from .graph import INPUT_NAME, LayerSpec, ModelGraph
from .tensor import Tensor

CONV_COUNTS = {"vgg16": (2, 2, 3, 3, 3), "vgg19": (2, 2, 4, 4, 4)}
BLOCK_FILTERS = (64, 128, 256, 512, 512)
HEAD_DIMS = (512, 256)


@dataclass(frozen=True)
class BlockPlan:
    frozen: bool = False
    dilations: tuple[int, ...] = (1,)

    def __post_init__(self):
        if len(self.dilations) not in (1, 2) or any(d < 1 for d in self.dilations):
            raise ConfigError(f"block dilations must be 1 or 2 positive rates: {self.dilations}")


@dataclass(frozen=True)
class ArchConfig:
    family: str
    blocks: tuple[BlockPlan, BlockPlan, BlockPlan, BlockPlan, BlockPlan]
    num_classes: int = 10
    channel_div: int = 1  # reduced-scale knob for desk-size runs; 1 = full width

    def __post_init__(self):
        if self.family not in CONV_COUNTS:
            raise ConfigError(f"unknown family '{self.family}'")
        if len(self.blocks) != 5:
            raise ConfigError(f"need 5 block plans, got {len(self.blocks)}")
        for i, plan in enumerate(self.blocks[:4]):
            if len(plan.dilations) != 1:
                raise ConfigError(f"only block 5 may branch; block {i + 1} has {plan.dilations}")
        if self.num_classes not in (10, 100):
            raise ConfigError(f"num_classes must be 10 or 100, got {self.num_classes}")
        if self.channel_div < 1 or any(f % self.channel_div for f in BLOCK_FILTERS):
            raise ConfigError(f"channel_div {self.channel_div} must divide {BLOCK_FILTERS}")


@dataclass(frozen=True)
class RandomInit:
    seed: int = 0


@dataclass(frozen=True)
class PretrainedInit:
    """Conv weights from a named-tensor file; dense layers stay randomly drawn.

    Head shapes differ from any source network trained at other resolutions,
    so only convolution parameters are imported.
    """

    source: str | Path | list
    dense_seed: int = 0


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(np.float32))


def build(config: ArchConfig, init: RandomInit | PretrainedInit = RandomInit(0),
          input_hw: tuple[int, int] = (32, 32)) -> ModelGraph:
    """Materialize a graph for the given plan.

    Parameter names follow "block{i}_conv{j}[_br{b}].{weights|bias}" and
    "fc{k}.{weights|bias}"; pretrained sources must use the same names
    (branch copies are filled from the unsuffixed block-5 names).
    """
    conv_counts = CONV_COUNTS[config.family]
    seed = init.seed if isinstance(init, RandomInit) else init.dense_seed
    rng = np.random.Generator(np.random.PCG64(seed))

    layers: list[LayerSpec] = []
    params: dict[str, Tensor] = {}

    def add_conv(name, in_c, out_c, dilation, frozen, src):
        spec = ops.ConvSpec(
            in_channels=in_c,
            out_channels=out_c,
            kernel=(3, 3),
            dilation=(dilation, dilation),
            padding=ops.same_padding((3, 3), (dilation, dilation)),
        )
        layers.append(LayerSpec(name, "conv", spec, [src], frozen=frozen))
        params[f"{name}.weights"] = _glorot(
            rng, (out_c, in_c, 3, 3), fan_in=in_c * 9, fan_out=out_c * 9
        )
        params[f"{name}.bias"] = Tensor(np.zeros(out_c, dtype=np.float32))
        relu_name = name.replace("conv", "relu", 1)
        layers.append(LayerSpec(relu_name, "relu", None, [name]))
        return relu_name

    h, w = input_hw
    prev = INPUT_NAME
    in_c = 3
    for bi, plan in enumerate(config.blocks, start=1):
        out_c = BLOCK_FILTERS[bi - 1] // config.channel_div
        if len(plan.dilations) == 1:
            src = prev
            for ci in range(1, conv_counts[bi - 1] + 1):
                src = add_conv(
                    f"block{bi}_conv{ci}", in_c if ci == 1 else out_c, out_c,
                    plan.dilations[0], plan.frozen, src,
                )
            pre_pool = src
            pool_in_c = out_c
        else:
            branch_ends = []
            for br, rate in enumerate(plan.dilations, start=1):
                src = prev
                for ci in range(1, conv_counts[bi - 1] + 1):
                    src = add_conv(
                        f"block{bi}_conv{ci}_br{br}", in_c if ci == 1 else out_c, out_c,
                        rate, plan.frozen, src,
                    )
                branch_ends.append(src)
            concat_name = f"block{bi}_concat"
            layers.append(LayerSpec(concat_name, "concat", None, branch_ends))
            pre_pool = concat_name
            pool_in_c = out_c * 2
        pool_name = f"block{bi}_pool"
        layers.append(LayerSpec(pool_name, "maxpool", ops.PoolSpec(2, 2), [pre_pool]))
        if (h - 2) % 2 or (w - 2) % 2:
            raise ConfigError(f"input {input_hw} does not pool evenly at block {bi}")
        h, w = (h - 2) // 2 + 1, (w - 2) // 2 + 1
        prev = pool_name
        in_c = pool_in_c

    layers.append(LayerSpec("flatten", "flatten", None, [prev]))
    dims = [in_c * h * w, *HEAD_DIMS, config.num_classes]
    prev = "flatten"
    for k in range(1, 4):
        name = f"fc{k}"
        layers.append(LayerSpec(name, "dense", ops.DenseSpec(dims[k - 1], dims[k]), [prev]))
        params[f"{name}.weights"] = _glorot(
            rng, (dims[k - 1], dims[k]), fan_in=dims[k - 1], fan_out=dims[k]
        )
        params[f"{name}.bias"] = Tensor(np.zeros(dims[k], dtype=np.float32))
        prev = name
        if k < 3:
            relu_name = f"fc{k}_relu"
            layers.append(LayerSpec(relu_name, "relu", None, [name]))
            prev = relu_name
    layers.append(LayerSpec("softmax", "softmax", None, [prev]))

    g = ModelGraph(layers, params)
    if isinstance(init, PretrainedInit):
        entries = ntl.read(init.source) if isinstance(init.source, (str, Path)) else init.source
        report = ntl.load_into(g, entries, strict=False)
        missing_conv = [m for m in report.missing if not m.startswith("fc")]
        if missing_conv:
            raise MappingError(f"pretrained source lacks conv parameters: {missing_conv}")
    return g


def param_count(g: ModelGraph) -> int:
    """Total scalar parameters across all weights and biases."""
    return sum(t.size for t in g.params.values())


def catalog() -> dict[str, ArchConfig]:
    """The eight studied freeze/dilation combinations, keyed by row label."""
    f = BlockPlan(frozen=True)
    t = BlockPlan  # trainable

    def plan(*entries):
        return tuple(entries)

    return {
        "vgg16_basic": ArchConfig("vgg16", plan(t(), t(), t(), t(), t())),
        "vgg16_freeze1_1248": ArchConfig(
            "vgg16", plan(f, t(dilations=(1,)), t(dilations=(2,)), t(dilations=(4,)), t(dilations=(8,)))
        ),
        "vgg16_freeze2_248": ArchConfig(
            "vgg16", plan(f, f, t(dilations=(2,)), t(dilations=(4,)), t(dilations=(8,)))
        ),
        "vgg16_proposed": ArchConfig(
            "vgg16", plan(f, f, t(dilations=(2,)), t(dilations=(4,)), t(dilations=(4, 8)))
        ),
        "vgg19_basic": ArchConfig("vgg19", plan(t(), t(), t(), t(), t())),
        "vgg19_freeze1_1248": ArchConfig(
            "vgg19", plan(f, t(dilations=(1,)), t(dilations=(2,)), t(dilations=(4,)), t(dilations=(8,)))
        ),
        "vgg19_freeze2_248": ArchConfig(
            "vgg19", plan(f, f, t(dilations=(2,)), t(dilations=(4,)), t(dilations=(8,)))
        ),
        "vgg19_proposed": ArchConfig(
            "vgg19", plan(f, f, t(dilations=(2,)), t(dilations=(2,)), t(dilations=(2, 4)))
        ),
    }
