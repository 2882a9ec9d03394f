"""Split execution: node layers under a precision mode, hub layers in real arithmetic.

Precision modes:

``fp32``
    every layer in real arithmetic; identical to the reference run.
``w10_fp``
    node weights rounded to F10, node feature maps kept real.
``w10_f8``
    node weights in F10, node feature maps fixed point: u8 pixels in, int16
    words out of every MAC layer, 32-bit saturating accumulation. Sigmoid and
    tanh go through 256-entry tables after moving to ``fxp.LUT_IN_FRAC``.

The split layer's output is converted back to real values before the hub
layers run. Batchnorm on the node is folded into the preceding conv/dense
layer when that layer has no fused activation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .. import fxp, kernels
from ..netmodel import CONV_KINDS, LayerSpec, NetworkSpec, conv_padding
from ..tensorio import Tensor
from . import ops

PRECISIONS = ("fp32", "w10_fp", "w10_f8")
FIXED_NODE_KINDS = ("conv2d", "dense", "maxpool", "flatten", "activation", "dropout", "batchnorm")


class InferenceError(ValueError):
    pass


@dataclass
class RunResult:
    output: Tensor
    split: str
    precision: str
    overflow: dict[str, int] = field(default_factory=dict)
    saturated: dict[str, int] = field(default_factory=dict)
    frac_bits: dict[str, int] = field(default_factory=dict)
    boundary: Tensor | None = None

    @property
    def any_overflow(self) -> bool:
        return any(self.overflow.values()) or any(self.saturated.values())

    def metadata(self) -> dict:
        return {
            "split": self.split,
            "precision": self.precision,
            "accumulator_overflows": self.overflow,
            "requantize_saturations": self.saturated,
            "frac_bits": self.frac_bits,
        }


def _as_array(t) -> np.ndarray:
    if isinstance(t, Tensor):
        return t.to_real().astype(np.float64)
    return np.asarray(t, dtype=np.float64)


class Engine:
    """Holds a network and its real weights; each ``run_*`` call is independent.

    One instance should be used from one thread at a time.
    """

    def __init__(self, net: NetworkSpec, weights: Mapping[tuple[str, str], object]):
        if not net.is_resolved:
            raise InferenceError("network shapes must be inferred before execution")
        self.net = net
        self.kernel: dict[str, np.ndarray] = {}
        self.bias: dict[str, np.ndarray | None] = {}
        for i, layer in enumerate(net.layers):
            self._load_layer(i, layer, weights)
        ids = {l.id for l in net.layers}
        stray = [k for k in weights if k[0] not in ids]
        if stray:
            raise InferenceError(f"weights for unknown layer {stray[0][0]!r}")

    def _load_layer(self, i: int, layer: LayerSpec, weights) -> None:
        in_s, out_s = self.net.in_shape(i), self.net.out_shape(i)
        if layer.kind in CONV_KINDS:
            kh, kw = layer.kernel
            shape = (kh, kw, in_s.channels, layer.filters)
        elif layer.kind == "dense":
            shape = (1, 1, in_s.element_count, layer.units)
        elif layer.kind == "batchnorm":
            shape = (in_s.channels,)
        else:
            for role in ("kernel", "bias"):
                if (layer.id, role) in weights:
                    raise InferenceError(f"layer {layer.id!r} ({layer.kind}) takes no weights")
            return
        k = weights.get((layer.id, "kernel"))
        if k is None:
            raise InferenceError(f"missing kernel for layer {layer.id!r}")
        k = _as_array(k)
        if k.size != int(np.prod(shape)):
            raise InferenceError(f"kernel for {layer.id!r} has {k.size} values, expected shape {shape}")
        self.kernel[layer.id] = k.reshape(shape)
        b = weights.get((layer.id, "bias"))
        n_out = shape[-1] if layer.kind != "batchnorm" else in_s.channels
        if b is not None:
            b = _as_array(b).reshape(-1)
            if b.size != n_out:
                raise InferenceError(f"bias for {layer.id!r} has {b.size} values, expected {n_out}")
        elif layer.kind == "batchnorm":
            raise InferenceError(f"missing shift (bias) for batchnorm {layer.id!r}")
        self.bias[layer.id] = b

    # ------------------------------------------------------------------ real

    def _real_layer(self, i: int, x: np.ndarray, kernel: np.ndarray | None = None,
                    bias: np.ndarray | None = None) -> np.ndarray:
        layer = self.net.layers[i]
        out_s = self.net.out_shape(i)
        k = self.kernel.get(layer.id) if kernel is None else kernel
        b = self.bias.get(layer.id) if bias is None else bias
        if layer.kind == "conv2d":
            y = ops.conv2d(x, k, b, layer.stride, layer.padding, out_s.height, out_s.width)
        elif layer.kind == "conv_transpose2d":
            y = ops.conv_transpose2d(x, k, b, layer.stride)
        elif layer.kind == "dense":
            y = ops.dense(x, k[0, 0], b)
        elif layer.kind == "maxpool":
            y = ops.maxpool(x, layer.kernel, layer.stride, out_s.height, out_s.width)
        elif layer.kind == "flatten":
            y = x.reshape(1, 1, -1)
        elif layer.kind == "batchnorm":
            y = ops.batchnorm(x, k, b)
        elif layer.kind == "dropout":
            y = x
        elif layer.kind == "activation":
            return ops.activation(x, layer.activation)
        else:  # pragma: no cover - parse_network rejects other kinds
            raise InferenceError(f"unsupported layer kind {layer.kind}")
        return ops.activation(y, layer.activation)

    def _check_input(self, x) -> np.ndarray:
        arr = x.to_real() if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
        if tuple(arr.shape) != tuple(self.net.input_shape.as_list()):
            raise InferenceError(f"input shape {tuple(arr.shape)} does not match network input "
                                 f"{tuple(self.net.input_shape.as_list())}")
        return arr.astype(np.float32)

    def _hub(self, x: np.ndarray, start: int) -> np.ndarray:
        for i in range(start, len(self.net.layers)):
            x = self._real_layer(i, x)
        return x

    def run_reference(self, x) -> Tensor:
        return Tensor.real(self._hub(self._check_input(x), 0))

    def layer_outputs(self, x) -> list[np.ndarray]:
        """Real output of every layer, in order."""
        out = []
        cur = self._check_input(x)
        for i in range(len(self.net.layers)):
            cur = self._real_layer(i, cur)
            out.append(cur)
        return out

    # ------------------------------------------------------------ node side

    def _foldable(self, i: int) -> bool:
        """Batchnorm at index i can fold into layer i-1."""
        if i == 0 or self.net.layers[i].kind != "batchnorm":
            return False
        prev = self.net.layers[i - 1]
        return prev.kind in ("conv2d", "dense") and prev.activation == "none"

    def _node_params(self, split_idx: int) -> dict[str, tuple[np.ndarray, np.ndarray | None]]:
        """Node-side kernels/biases after batchnorm folding (real values)."""
        params = {}
        for i in range(split_idx + 1):
            layer = self.net.layers[i]
            if layer.id in self.kernel and layer.kind != "batchnorm":
                params[layer.id] = (self.kernel[layer.id], self.bias[layer.id])
            if self._foldable(i) and i <= split_idx:
                prev = self.net.layers[i - 1].id
                scale, shift = self.kernel[layer.id], self.bias[layer.id]
                k, b = params[prev]
                b = np.zeros(k.shape[-1]) if b is None else b
                params[prev] = (k * scale, b * scale + shift)
        return params

    def _run_w10_fp(self, x: np.ndarray, split_idx: int, rounding: str) -> np.ndarray:
        params = self._node_params(split_idx)
        for i in range(split_idx + 1):
            layer = self.net.layers[i]
            if self._foldable(i):
                continue
            if layer.id in params:
                k, b = params[layer.id]
                kq = fxp.dequantize_weights(fxp.quantize_weights(k, rounding))
                x = self._real_layer(i, x, kq, b)
            else:
                x = self._real_layer(i, x)
        return x

    def _run_w10_f8(self, x, split_idx: int, frac_plan: dict[str, int], rounding: str,
                    result: RunResult) -> np.ndarray:
        if isinstance(x, Tensor) and x.dtype == "act_s16":
            words, frac = x.data.astype(np.int32), x.frac_bits
        elif isinstance(x, Tensor) and x.dtype == "act_u8":
            words, frac = x.data.astype(np.int32), 0
        else:
            words, frac = fxp.real_to_u8(self._check_input(x)).astype(np.int32), 0
        params = self._node_params(split_idx)
        for i in range(split_idx + 1):
            layer = self.net.layers[i]
            if layer.kind not in FIXED_NODE_KINDS:
                raise InferenceError(f"layer {layer.id!r} ({layer.kind}) cannot run in fixed point on the node")
            if layer.kind == "batchnorm":
                if self._foldable(i):
                    continue
                raise InferenceError(f"batchnorm {layer.id!r} has no conv/dense to fold into")
            out_s = self.net.out_shape(i)
            if layer.kind in ("conv2d", "dense"):
                k, b = params[layer.id]
                wq = fxp.quantize_weights(k, rounding)
                acc_frac = frac + fxp.W_FRAC
                braw = np.zeros(wq.shape[-1], dtype=np.int64) if b is None else \
                    np.rint(np.clip(b * (1 << acc_frac), -2.0 ** 62, 2.0 ** 62)).astype(np.int64)
                if layer.kind == "conv2d":
                    in_s = self.net.in_shape(i)
                    kh, kw = layer.kernel
                    pt = conv_padding(in_s.height, out_s.height, kh, layer.stride, layer.padding)
                    pl = conv_padding(in_s.width, out_s.width, kw, layer.stride, layer.padding)
                    acc, ovf = kernels.conv2d_sat(words, wq, braw, layer.stride, pt, pl,
                                                  out_s.height, out_s.width)
                else:
                    acc, ovf = kernels.conv2d_sat(words.reshape(1, 1, -1), wq, braw, 1, 0, 0, 1, 1)
                result.overflow[layer.id] = ovf
                if layer.activation == "relu":
                    acc = np.maximum(acc, 0)
                if layer.activation in ("sigmoid", "tanh"):
                    target = min(fxp.LUT_IN_FRAC, acc_frac)
                else:
                    target = min(frac_plan.get(layer.id, 8), acc_frac)
                words, sat = fxp.requantize_array(acc, acc_frac, target, rounding)
                result.saturated[layer.id] = sat
                words, frac = words.astype(np.int32), target
                if layer.activation in ("sigmoid", "tanh"):
                    words, frac = self._lut(words, frac, layer.activation)
            elif layer.kind == "maxpool":
                words = ops.maxpool(words, layer.kernel, layer.stride, out_s.height, out_s.width)
            elif layer.kind == "flatten":
                words = words.reshape(1, 1, -1)
            elif layer.kind == "activation":
                if layer.activation == "relu":
                    words = np.maximum(words, 0)
                elif layer.activation in ("sigmoid", "tanh"):
                    shifted = fxp.round_shift_array(words, frac - fxp.LUT_IN_FRAC, rounding)
                    words = np.clip(shifted, fxp.S16_MIN, fxp.S16_MAX)
                    result.saturated[layer.id] = int(np.count_nonzero(words != shifted))
                    words, frac = self._lut(words, fxp.LUT_IN_FRAC, layer.activation)
            result.frac_bits[layer.id] = frac
        return words.astype(np.float64) / (1 << frac)

    @staticmethod
    def _lut(words: np.ndarray, frac: int, kind: str) -> tuple[np.ndarray, int]:
        lut = fxp.activation_lut(kind, frac)
        clipped = np.clip(words, fxp.S16_MIN, fxp.S16_MAX)
        return fxp.apply_lut(clipped, lut).astype(np.int32), fxp.LUT_OUT_FRAC

    def calibrate(self, x, split: str) -> dict[str, int]:
        """Per-layer binary points that fit the real outputs of the node layers into int16."""
        idx = self.net.index_of(split)
        outs = self.layer_outputs(x)
        return {self.net.layers[i].id: fxp.frac_bits_for(float(np.abs(outs[i]).max(initial=0.0)))
                for i in range(idx + 1)}

    def run_split(self, x, split: str, precision: str = "fp32",
                  frac_bits: int | str | Mapping[str, int] = 8,
                  rounding: str = "nearest_even") -> RunResult:
        """Run the node part under ``precision`` and the hub part in real arithmetic.

        ``frac_bits`` sets the int16 binary point of node MAC outputs under
        ``w10_f8``: one value for every layer, a per-layer mapping, or
        ``"auto"`` to size each layer from a reference run.
        """
        if precision not in PRECISIONS:
            raise InferenceError(f"precision must be one of {PRECISIONS}, got {precision!r}")
        if rounding not in fxp.ROUNDINGS:
            raise InferenceError(f"rounding must be one of {fxp.ROUNDINGS}")
        idx = self.net.index_of(split)
        result = RunResult(output=None, split=split, precision=precision)
        if precision == "fp32":
            x = self._check_input(x)
            for i in range(idx + 1):
                x = self._real_layer(i, x)
            result.boundary = Tensor.real(x)
            result.output = Tensor.real(self._hub(x, idx + 1))
            return result
        if precision == "w10_fp":
            y = self._run_w10_fp(self._check_input(x).astype(np.float32), idx, rounding)
        else:
            if frac_bits == "auto":
                plan = self.calibrate(x, split)
            elif isinstance(frac_bits, Mapping):
                plan = dict(frac_bits)
            else:
                plan = {l.id: int(frac_bits) for l in self.net.layers}
            for v in plan.values():
                if not 0 <= v <= 15:
                    raise InferenceError(f"frac_bits must be in [0, 15], got {v}")
            if isinstance(x, Tensor) and x.dtype in ("act_u8", "act_s16"):
                if tuple(x.data.shape) != tuple(self.net.input_shape.as_list()):
                    raise InferenceError("input shape does not match network input")
                y = self._run_w10_f8(x, idx, plan, rounding, result)
            else:
                y = self._run_w10_f8(self._check_input(x), idx, plan, rounding, result)
        boundary = np.asarray(y, dtype=np.float32)
        result.boundary = Tensor.real(boundary)
        result.output = Tensor.real(self._hub(boundary, idx + 1))
        return result


def run_reference(net: NetworkSpec, weights, x) -> Tensor:
    return Engine(net, weights).run_reference(x)


def run_split(net: NetworkSpec, weights, x, split: str, precision: str = "fp32", **kw) -> RunResult:
    return Engine(net, weights).run_split(x, split, precision, **kw)
