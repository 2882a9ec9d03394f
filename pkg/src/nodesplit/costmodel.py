"""Per-layer data volume, MAC counts, figure of merit and split selection."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, replace

from .netmodel import CONV_KINDS, LayerSpec, NetworkSpec, TensorShape

COST_MODES = ("analytic", "table")
FOM_SCOPES = ("per_layer", "cumulative")
IMPLEMENTATIONS = ("parallel", "serial")

# kinds that never get their own row; they ride along with the preceding block
AUX_KINDS = ("maxpool", "batchnorm", "dropout", "activation")

CSV_HEADER = [
    "layer_id", "kind", "out_h", "out_w", "out_c", "dv", "macs",
    "blocks_parallel", "blocks_serial", "fom", "dv_rel", "cc_rel", "fom_rel",
]


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class CostConfig:
    cost_mode: str = "analytic"
    fom_cc_scope: str = "per_layer"
    aux_rows: bool = False

    def __post_init__(self):
        if self.cost_mode not in COST_MODES:
            raise CostError(f"cost_mode must be one of {COST_MODES}, got {self.cost_mode!r}")
        if self.fom_cc_scope not in FOM_SCOPES:
            raise CostError(f"fom_cc_scope must be one of {FOM_SCOPES}, got {self.fom_cc_scope!r}")


@dataclass(frozen=True)
class LayerCost:
    layer_id: str
    kind: str
    out_shape: TensorShape
    dv: int
    macs_analytic: int
    blocks_parallel: int
    blocks_serial: int
    cc: float
    fom: float
    dv_rel: float = 0.0
    cc_rel: float = 0.0
    fom_rel: float = 0.0

    @property
    def is_candidate(self) -> bool:
        return self.kind in CONV_KINDS or self.kind == "dense"

    def blocks(self, implementation: str) -> int:
        return self.blocks_parallel if implementation == "parallel" else self.blocks_serial


def data_volume(shape: TensorShape) -> int:
    return shape.height * shape.width * shape.channels


def mac_count_conv(layer: LayerSpec, in_shape: TensorShape | None, out_shape: TensorShape | None) -> int:
    """kh * kw * C_in * H_out * W_out * C_out.

    Stride is already folded into the output dims, so it is not divided out again.
    """
    if layer.kind not in CONV_KINDS:
        raise CostError(f"{layer.id}: mac_count_conv needs a conv layer, got {layer.kind}")
    if in_shape is None or out_shape is None:
        raise CostError(f"{layer.id}: shapes are unresolved")
    kh, kw = layer.kernel
    return kh * kw * in_shape.channels * out_shape.height * out_shape.width * out_shape.channels


def mac_count_dense(in_elems: int, units: int) -> int:
    return in_elems * units


def mac_blocks(layer: LayerSpec, out_shape: TensorShape, implementation: str) -> int:
    """MAC-block activations for a conv layer.

    A parallel block holds kh*kw MAC units and fires once per output element;
    a serial block holds kh units, so each output needs kh activations.
    """
    if layer.kind not in CONV_KINDS:
        raise CostError(f"{layer.id}: MAC blocks are defined for conv layers only, got {layer.kind}")
    if implementation not in IMPLEMENTATIONS:
        raise CostError(f"implementation must be one of {IMPLEMENTATIONS}")
    n = out_shape.height * out_shape.width * out_shape.channels
    return n if implementation == "parallel" else layer.kernel[0] * n


def layer_macs(layer: LayerSpec, in_shape: TensorShape, out_shape: TensorShape) -> int:
    if layer.kind in CONV_KINDS:
        return mac_count_conv(layer, in_shape, out_shape)
    if layer.kind == "dense":
        return mac_count_dense(in_shape.element_count, layer.units)
    return 0


def layer_blocks(layer: LayerSpec, out_shape: TensorShape) -> tuple[int, int]:
    """(parallel, serial) block counts; a dense block is one output neuron."""
    if layer.kind in CONV_KINDS:
        return mac_blocks(layer, out_shape, "parallel"), mac_blocks(layer, out_shape, "serial")
    if layer.kind == "dense":
        return layer.units, layer.units
    return 0, 0


def _normalize(values: list[float]) -> list[float]:
    top = max(values, default=0)
    if top <= 0:
        return [0.0 for _ in values]
    return [v / top for v in values]


def cost_table(net: NetworkSpec, cfg: CostConfig = CostConfig()) -> list[LayerCost]:
    """One LayerCost per block layer, in network order.

    Pooling, batchnorm, dropout and standalone activation layers get rows only
    when ``cfg.aux_rows`` is set; their MACs are zero either way.
    """
    rows = []
    running = 0
    for i, layer in enumerate(net.layers):
        in_shape, out_shape = net.in_shape(i), net.out_shape(i)
        macs = layer_macs(layer, in_shape, out_shape)
        bp, bs = layer_blocks(layer, out_shape)
        own = macs if cfg.cost_mode == "analytic" else bp
        running += own
        if layer.kind in AUX_KINDS and not cfg.aux_rows:
            continue
        cc = running if cfg.fom_cc_scope == "cumulative" else own
        dv = data_volume(out_shape)
        rows.append(
            LayerCost(
                layer_id=layer.id,
                kind=layer.kind,
                out_shape=out_shape,
                dv=dv,
                macs_analytic=macs,
                blocks_parallel=bp,
                blocks_serial=bs,
                cc=cc,
                fom=float(dv) * float(cc),
            )
        )
    dv_rel = _normalize([r.dv for r in rows])
    cc_rel = _normalize([r.cc for r in rows])
    fom_rel = _normalize([r.fom for r in rows])
    return [
        replace(r, dv_rel=a, cc_rel=b, fom_rel=c)
        for r, a, b, c in zip(rows, dv_rel, cc_rel, fom_rel)
    ]


def select_split(costs: list[LayerCost], allow_zero_cost: bool = False) -> str:
    """Id of the lowest-FoM layer; the earliest wins a tie.

    By default only conv and dense rows are candidates.
    """
    if not costs:
        raise CostError("cannot select a split from an empty cost table")
    pool = costs if allow_zero_cost else [c for c in costs if c.is_candidate]
    if not pool:
        raise CostError("no candidate layers (conv/dense) in the cost table")
    best = pool[0]
    for c in pool[1:]:
        if c.fom < best.fom:
            best = c
    return best.layer_id


def _row(c: LayerCost) -> list:
    return [
        c.layer_id, c.kind, c.out_shape.height, c.out_shape.width, c.out_shape.channels,
        c.dv, c.macs_analytic, c.blocks_parallel, c.blocks_serial,
        repr(float(c.fom)), repr(c.dv_rel), repr(c.cc_rel), repr(c.fom_rel),
    ]


def cost_csv(costs: list[LayerCost], split: str | None = None) -> str:
    """CSV text of the cost table. With ``split`` a trailing ``split`` column marks that row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER + (["split"] if split is not None else []))
    for c in costs:
        row = _row(c)
        if split is not None:
            row.append("SPLIT" if c.layer_id == split else "")
        w.writerow(row)
    return buf.getvalue()


def cost_report(costs: list[LayerCost], split: str | None = None) -> str:
    rows = []
    for c in costs:
        d = asdict(c)
        d["out_shape"] = c.out_shape.as_list()
        rows.append(d)
    return json.dumps({"split": split, "layers": rows}, indent=2) + "\n"
