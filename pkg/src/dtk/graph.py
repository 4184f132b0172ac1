"""Declarative layer DAG with per-layer freeze flags and reverse-mode backward.

A graph is a topologically ordered list of layers, each naming its upstream
producers; the reserved name "input" refers to the graph input. Exactly one
layer may be terminal. Parameters live in a flat registry keyed
"<layer>.weights" / "<layer>.bias" — the same names the weight container uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, InputError, ShapeError, StateError
from .tensor import Tensor

KINDS = ("conv", "maxpool", "relu", "dense", "flatten", "concat", "softmax")
PARAM_KINDS = ("conv", "dense")
INPUT_NAME = "input"


@dataclass
class LayerSpec:
    name: str
    kind: str
    spec: object = None  # ConvSpec | PoolSpec | DenseSpec | None
    inputs: list[str] = field(default_factory=lambda: [INPUT_NAME])
    frozen: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind '{self.kind}'")
        if self.name == INPUT_NAME:
            raise ConfigError(f"layer name '{INPUT_NAME}' is reserved")
        want = 2 if self.kind == "concat" else 1
        if len(self.inputs) != want:
            raise ConfigError(f"layer '{self.name}' ({self.kind}) needs {want} input(s)")
        needs_spec = {"conv": ops.ConvSpec, "maxpool": ops.PoolSpec, "dense": ops.DenseSpec}
        if self.kind in needs_spec and not isinstance(self.spec, needs_spec[self.kind]):
            raise ConfigError(f"layer '{self.name}' needs a {needs_spec[self.kind].__name__}")


class ModelGraph:
    """Layer DAG plus parameter registry; forward/backward walk it in order."""

    def __init__(self, layers: list[LayerSpec], params: dict[str, Tensor]):
        self.layers = list(layers)
        self.params = dict(params)
        self._by_name = {}
        self._validate()

    def _validate(self):
        consumed = set()
        seen = set()
        for layer in self.layers:
            if layer.name in seen:
                raise ConfigError(f"duplicate layer name '{layer.name}'")
            for src in layer.inputs:
                if src != INPUT_NAME and src not in seen:
                    raise ConfigError(
                        f"layer '{layer.name}' consumes '{src}' before it is defined"
                    )
                consumed.add(src)
            seen.add(layer.name)
            self._by_name[layer.name] = layer
        terminals = [l.name for l in self.layers if l.name not in consumed]
        if len(self.layers) == 0 or len(terminals) != 1:
            raise ConfigError(f"graph must have exactly one output layer, found {terminals}")
        self.output_layer = terminals[0]
        for layer in self.layers:
            if layer.kind in PARAM_KINDS:
                for part in ("weights", "bias"):
                    key = f"{layer.name}.{part}"
                    if key not in self.params:
                        raise ConfigError(f"missing parameter '{key}'")

    def layer(self, name: str) -> LayerSpec:
        if name not in self._by_name:
            raise InputError(f"unknown layer '{name}'")
        return self._by_name[name]

    def layer_params(self, name: str) -> tuple[Tensor, Tensor]:
        layer = self.layer(name)
        if layer.kind not in PARAM_KINDS:
            raise InputError(f"layer '{name}' has no parameters")
        return self.params[f"{name}.weights"], self.params[f"{name}.bias"]

    def trainable_params(self) -> dict[str, Tensor]:
        out = {}
        for layer in self.layers:
            if layer.kind in PARAM_KINDS and not layer.frozen:
                out[f"{layer.name}.weights"] = self.params[f"{layer.name}.weights"]
                out[f"{layer.name}.bias"] = self.params[f"{layer.name}.bias"]
        return out

    def set_frozen(self, layer_names, flag: bool) -> "ModelGraph":
        """Set freeze flags; frozen layers keep forwarding but get no grads."""
        for name in layer_names:
            layer = self.layer(name)
            if layer.kind not in PARAM_KINDS:
                raise InputError(f"layer '{name}' ({layer.kind}) cannot be frozen")
            layer.frozen = flag
        return self

    def forward(self, x: Tensor):
        """Run the graph; returns (output, cache) with cache feeding backward."""
        acts: dict[str, Tensor] = {INPUT_NAME: x}
        pool_args: dict[str, np.ndarray] = {}
        for layer in self.layers:
            srcs = [acts[s] for s in layer.inputs]
            try:
                if layer.kind == "conv":
                    w, b = self.layer_params(layer.name)
                    out = ops.conv2d_forward(srcs[0], w, b, layer.spec)
                elif layer.kind == "maxpool":
                    out, arg = ops.maxpool_forward(srcs[0], layer.spec)
                    pool_args[layer.name] = arg
                elif layer.kind == "relu":
                    out = ops.relu_forward(srcs[0])
                elif layer.kind == "dense":
                    w, b = self.layer_params(layer.name)
                    out = ops.dense_forward(srcs[0], w, b)
                elif layer.kind == "flatten":
                    out = ops.flatten_forward(srcs[0])
                elif layer.kind == "concat":
                    out = ops.concat_channels(srcs[0], srcs[1])
                else:
                    out = ops.softmax(srcs[0])
            except ShapeError as err:
                raise ShapeError(f"layer '{layer.name}': {err}") from err
            acts[layer.name] = out
        cache = {"graph": self, "acts": acts, "pool_args": pool_args}
        return acts[self.output_layer], cache

    def backward(self, cache: dict, grad_out: Tensor):
        """Reverse-order accumulation of adjoints.

        When the output layer is a softmax, grad_out is interpreted as the
        gradient with respect to that softmax's input (the logits) — the fused
        cross-entropy path — and the softmax layer itself is skipped.
        Otherwise grad_out is the gradient at the graph output.

        Returns (grads, grad_input): grads maps "<layer>.weights"/".bias" to
        tensors for every non-frozen parameterized layer; frozen layers still
        propagate grad_input upstream.
        """
        if cache.get("graph") is not self or "acts" not in cache:
            raise StateError("cache does not belong to a forward pass of this graph")
        acts = cache["acts"]
        pool_args = cache["pool_args"]

        grad_acc: dict[str, np.ndarray] = {}
        skip = set()
        out_layer = self._by_name[self.output_layer]
        if out_layer.kind == "softmax":
            grad_acc[out_layer.inputs[0]] = grad_out.data.copy()
            skip.add(out_layer.name)
        else:
            grad_acc[out_layer.name] = grad_out.data.copy()

        def push(name: str, g: np.ndarray):
            if name in grad_acc:
                grad_acc[name] = grad_acc[name] + g
            else:
                grad_acc[name] = g

        grads: dict[str, Tensor] = {}
        for layer in reversed(self.layers):
            if layer.name in skip:
                continue
            g_arr = grad_acc.pop(layer.name, None)
            if g_arr is None:
                raise StateError(f"no gradient reached layer '{layer.name}'")
            g = Tensor(g_arr)
            src = layer.inputs[0]
            if layer.kind == "conv":
                w, _ = self.layer_params(layer.name)
                gi, gw, gb = ops.conv2d_backward(
                    g, acts[src], w, layer.spec, with_param_grads=not layer.frozen
                )
                push(src, gi.data)
                if not layer.frozen:
                    grads[f"{layer.name}.weights"] = gw
                    grads[f"{layer.name}.bias"] = gb
            elif layer.kind == "maxpool":
                gi = ops.maxpool_backward(g, pool_args[layer.name], acts[src].shape)
                push(src, gi.data)
            elif layer.kind == "relu":
                push(src, ops.relu_backward(g, acts[src]).data)
            elif layer.kind == "dense":
                w, _ = self.layer_params(layer.name)
                gi, gw, gb = ops.dense_backward(g, acts[src], w)
                push(src, gi.data)
                if not layer.frozen:
                    grads[f"{layer.name}.weights"] = gw
                    grads[f"{layer.name}.bias"] = gb
            elif layer.kind == "flatten":
                push(src, ops.flatten_backward(g, acts[src].shape).data)
            elif layer.kind == "concat":
                first = acts[src].shape[1]
                ga, gb = ops.concat_backward(g, first)
                push(src, ga.data)
                push(layer.inputs[1], gb.data)
            else:  # softmax somewhere mid-graph: true Jacobian product
                push(src, ops.softmax_backward(g, acts[layer.name]).data)

        grad_input = grad_acc.pop(INPUT_NAME, None)
        if grad_input is None:
            raise StateError("no gradient reached the graph input")
        return grads, Tensor(grad_input)
