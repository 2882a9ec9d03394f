"""Network architecture description, validation and shape inference.

An architecture document is JSON with the keys ``name``, ``input`` ([H, W, C])
and ``layers``. Each layer object carries ``id`` and ``type`` plus the keys its
kind needs:

==================  ===============================================
type                keys
==================  ===============================================
conv2d              kernel [kh, kw], filters, stride, padding, activation
conv_transpose2d    kernel [kh, kw], filters, stride, padding, activation
dense               units, activation
maxpool             kernel [kh, kw], stride, padding
flatten             (none)
batchnorm           (none)
dropout             (none)
activation          activation
==================  ===============================================

``stride`` defaults to 1, ``padding`` to ``"same"`` and ``activation`` to
``"none"``. Keys outside a kind's row are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

LAYER_KINDS = (
    "conv2d",
    "conv_transpose2d",
    "dense",
    "maxpool",
    "flatten",
    "batchnorm",
    "dropout",
    "activation",
)
CONV_KINDS = ("conv2d", "conv_transpose2d")
PADDINGS = ("same", "valid")
ACTIVATIONS = ("none", "relu", "sigmoid", "tanh")

_ALLOWED_KEYS = {
    "conv2d": {"kernel", "filters", "stride", "padding", "activation"},
    "conv_transpose2d": {"kernel", "filters", "stride", "padding", "activation"},
    "dense": {"units", "activation"},
    "maxpool": {"kernel", "stride", "padding"},
    "flatten": set(),
    "batchnorm": set(),
    "dropout": set(),
    "activation": {"activation"},
}
_REQUIRED_KEYS = {
    "conv2d": {"kernel", "filters"},
    "conv_transpose2d": {"kernel", "filters"},
    "dense": {"units"},
    "maxpool": {"kernel"},
    "activation": {"activation"},
}


class NetworkError(ValueError):
    """Invalid architecture document or impossible shape chain."""

    def __init__(self, message: str, layer_id: str | None = None, field: str | None = None):
        self.layer_id = layer_id
        self.field = field
        where = []
        if layer_id is not None:
            where.append(f"layer {layer_id!r}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class TensorShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise NetworkError(f"{name} must be a positive integer, got {v!r}")

    @property
    def element_count(self) -> int:
        return self.height * self.width * self.channels

    @property
    def is_flat(self) -> bool:
        return self.height == 1 and self.width == 1

    def as_list(self) -> list[int]:
        return [self.height, self.width, self.channels]


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    kernel: tuple[int, int] | None = None
    filters: int | None = None
    units: int | None = None
    stride: int = 1
    padding: str = "same"
    activation: str = "none"

    @property
    def has_macs(self) -> bool:
        return self.kind in CONV_KINDS or self.kind == "dense"


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: TensorShape
    layers: tuple[LayerSpec, ...]
    resolved_shapes: tuple[tuple[TensorShape, TensorShape], ...] | None = None

    @property
    def is_resolved(self) -> bool:
        return self.resolved_shapes is not None

    def index_of(self, layer_id: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.id == layer_id:
                return i
        raise NetworkError("unknown layer id", layer_id=layer_id)

    def layer(self, layer_id: str) -> LayerSpec:
        return self.layers[self.index_of(layer_id)]

    def in_shape(self, i: int) -> TensorShape:
        return self._shapes()[i][0]

    def out_shape(self, i: int) -> TensorShape:
        return self._shapes()[i][1]

    @property
    def output_shape(self) -> TensorShape:
        return self._shapes()[-1][1]

    def _shapes(self):
        if self.resolved_shapes is None:
            raise NetworkError("network shapes are not resolved; call infer_shapes first")
        return self.resolved_shapes


def _positive_int(value: Any, layer_id: str, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise NetworkError(f"expected a positive integer, got {value!r}", layer_id, name)
    if value < 1:
        raise NetworkError(f"must be positive, got {value}", layer_id, name)
    return value


def _parse_layer(obj: Any, position: int) -> LayerSpec:
    if not isinstance(obj, dict):
        raise NetworkError(f"layer #{position} must be an object")
    layer_id = obj.get("id")
    if not isinstance(layer_id, str) or not layer_id:
        raise NetworkError(f"layer #{position} needs a non-empty string id", field="id")
    kind = obj.get("type")
    if kind not in LAYER_KINDS:
        raise NetworkError(f"unknown layer type {kind!r}", layer_id, "type")

    keys = set(obj) - {"id", "type"}
    extra = keys - _ALLOWED_KEYS[kind]
    if extra:
        raise NetworkError(f"key not allowed for {kind}", layer_id, sorted(extra)[0])
    missing = _REQUIRED_KEYS.get(kind, set()) - keys
    if missing:
        raise NetworkError("missing required field", layer_id, sorted(missing)[0])

    kw: dict[str, Any] = {}
    if "kernel" in obj:
        k = obj["kernel"]
        if not isinstance(k, list) or len(k) != 2:
            raise NetworkError("kernel must be [kh, kw]", layer_id, "kernel")
        kw["kernel"] = (_positive_int(k[0], layer_id, "kernel"), _positive_int(k[1], layer_id, "kernel"))
    for name in ("filters", "units", "stride"):
        if name in obj:
            kw[name] = _positive_int(obj[name], layer_id, name)
    if "padding" in obj:
        if obj["padding"] not in PADDINGS:
            raise NetworkError(f"padding must be one of {PADDINGS}", layer_id, "padding")
        kw["padding"] = obj["padding"]
    if "activation" in obj:
        if obj["activation"] not in ACTIVATIONS:
            raise NetworkError(f"activation must be one of {ACTIVATIONS}", layer_id, "activation")
        kw["activation"] = obj["activation"]

    layer = LayerSpec(id=layer_id, kind=kind, **kw)
    if kind == "maxpool" and "stride" not in obj:
        # pooling windows tile the input unless told otherwise
        layer = replace(layer, stride=layer.kernel[0])
    if kind == "maxpool" and layer.padding == "valid" and layer.stride > min(layer.kernel):
        raise NetworkError("stride exceeds kernel under valid padding", layer_id, "stride")
    if kind == "conv_transpose2d" and layer.padding != "same":
        raise NetworkError("conv_transpose2d supports 'same' padding only", layer_id, "padding")
    return layer


def network_from_dict(doc: Any) -> NetworkSpec:
    if not isinstance(doc, dict):
        raise NetworkError("architecture document must be an object")
    extra = set(doc) - {"name", "input", "layers"}
    if extra:
        raise NetworkError("unknown top-level key", field=sorted(extra)[0])
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise NetworkError("missing network name", field="name")
    dims = doc.get("input")
    if not isinstance(dims, list) or len(dims) != 3:
        raise NetworkError("input must be [H, W, C]", field="input")
    input_shape = TensorShape(*(_positive_int(d, None, "input") for d in dims))
    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list) or not layers_doc:
        raise NetworkError("layers must be a non-empty list", field="layers")

    layers = []
    seen = set()
    for i, obj in enumerate(layers_doc):
        layer = _parse_layer(obj, i)
        if layer.id in seen:
            raise NetworkError("duplicate layer id", layer.id, "id")
        seen.add(layer.id)
        layers.append(layer)
    return NetworkSpec(name=name, input_shape=input_shape, layers=tuple(layers))


def parse_network(text: str) -> NetworkSpec:
    """Parse an architecture document; shapes are left unresolved."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def load_network(path: str | Path) -> NetworkSpec:
    """Read, parse and shape-infer an architecture file."""
    return infer_shapes(parse_network(Path(path).read_text()))


def network_to_dict(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        obj: dict[str, Any] = {"id": layer.id, "type": layer.kind}
        allowed = _ALLOWED_KEYS[layer.kind]
        if "kernel" in allowed:
            obj["kernel"] = list(layer.kernel)
        for name in ("filters", "units", "stride", "padding", "activation"):
            if name in allowed:
                obj[name] = getattr(layer, name)
        layers.append(obj)
    return {"name": net.name, "input": net.input_shape.as_list(), "layers": layers}


def serialize_network(net: NetworkSpec) -> str:
    return json.dumps(network_to_dict(net), indent=2) + "\n"


def _conv_out(n: int, k: int, s: int, padding: str, layer_id: str) -> int:
    if padding == "same":
        return -(-n // s)
    if k > n:
        raise NetworkError(f"kernel {k} larger than input {n} under valid padding", layer_id, "kernel")
    return (n - k) // s + 1


def layer_output_shape(layer: LayerSpec, shape: TensorShape) -> TensorShape:
    kind = layer.kind
    if kind == "conv2d":
        kh, kw = layer.kernel
        h = _conv_out(shape.height, kh, layer.stride, layer.padding, layer.id)
        w = _conv_out(shape.width, kw, layer.stride, layer.padding, layer.id)
        return TensorShape(h, w, layer.filters)
    if kind == "conv_transpose2d":
        return TensorShape(shape.height * layer.stride, shape.width * layer.stride, layer.filters)
    if kind == "maxpool":
        if layer.padding == "valid":
            kh, kw = layer.kernel
            if kh > shape.height or kw > shape.width:
                raise NetworkError("pool window larger than input", layer.id, "kernel")
        h, w = shape.height // layer.stride, shape.width // layer.stride
        if h < 1 or w < 1:
            raise NetworkError("pooling produces a zero output dimension", layer.id, "stride")
        return TensorShape(h, w, shape.channels)
    if kind == "flatten":
        return TensorShape(1, 1, shape.element_count)
    if kind == "dense":
        if not shape.is_flat:
            raise NetworkError(
                f"dense needs flat input, got {shape.height}x{shape.width}x{shape.channels}",
                layer.id,
                "type",
            )
        return TensorShape(1, 1, layer.units)
    return shape


def infer_shapes(net: NetworkSpec) -> NetworkSpec:
    """Annotate every layer with its (input, output) shape."""
    shapes = []
    cur = net.input_shape
    for layer in net.layers:
        out = layer_output_shape(layer, cur)
        shapes.append((cur, out))
        cur = out
    return replace(net, resolved_shapes=tuple(shapes))


def conv_padding(n_in: int, n_out: int, k: int, s: int, padding: str) -> int:
    """Leading zero-padding for a conv2d axis (TensorFlow 'same' convention)."""
    if padding == "valid":
        return 0
    total = max((n_out - 1) * s + k - n_in, 0)
    return total // 2
