"""Node hardware energy, power and latency for parallel and serial MAC blocks.

A parallel block is a kh x kw array of MAC units producing one output
element per clock; a serial block holds kh units and needs kh clocks per
output. Dense layers are mapped one output neuron per block. The latency
model is one block activation per clock cycle, with no memory stalls.

Two energy bases exist. ``table`` charges a fixed energy per block activation
(with a per-MAC fallback for kernel sizes missing from the table); ``analytic``
charges ``energy_per_mac`` for every MAC of the full convolution count.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .costmodel import IMPLEMENTATIONS, LayerCost
from .netmodel import CONV_KINDS, NetworkSpec

ENERGY_BASES = ("table", "analytic")

DEFAULT_BLOCK_ENERGY = {
    ((5, 5), "parallel"): 8e-12,
    ((3, 3), "parallel"): 1.75e-12,
    ((5, 5), "serial"): 6e-12,
    ((3, 3), "serial"): 2e-12,
}


class HardwareError(ValueError):
    pass


@dataclass(frozen=True)
class HwConfig:
    implementation: str = "parallel"
    energy_per_block: Mapping[tuple[tuple[int, int], str], float] = field(
        default_factory=lambda: dict(DEFAULT_BLOCK_ENERGY)
    )
    energy_per_mac: float = 1.2e-12
    clock_hz: float = 1e8
    fps: float = 30.0
    mem_overhead_factor: float = 1.8
    overhead_applied: bool = False
    energy_basis: str = "table"
    allow_fallback: bool = True

    def __post_init__(self):
        if self.implementation not in IMPLEMENTATIONS:
            raise HardwareError(f"implementation must be one of {IMPLEMENTATIONS}")
        if self.energy_basis not in ENERGY_BASES:
            raise HardwareError(f"energy_basis must be one of {ENERGY_BASES}")
        for name in ("energy_per_mac", "clock_hz", "fps"):
            v = getattr(self, name)
            if not v > 0:
                raise HardwareError(f"{name} must be strictly positive, got {v}")
        if not self.mem_overhead_factor >= 1:
            raise HardwareError(f"mem_overhead_factor must be >= 1, got {self.mem_overhead_factor}")
        for key, e in self.energy_per_block.items():
            if not e > 0:
                raise HardwareError(f"block energy for {key} must be strictly positive")

    @property
    def power_scale(self) -> float:
        return self.fps * (self.mem_overhead_factor if self.overhead_applied else 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["energy_per_block"] = {
            f"{k[0][0]}x{k[0][1]}:{k[1]}": v for k, v in self.energy_per_block.items()
        }
        return d


def _parse_block_key(key: str) -> tuple[tuple[int, int], str]:
    try:
        size, impl = key.split(":")
        kh, kw = (int(v) for v in size.lower().split("x"))
    except ValueError as exc:
        raise HardwareError(f"block energy key {key!r} must look like '5x5:parallel'") from exc
    if impl not in IMPLEMENTATIONS:
        raise HardwareError(f"block energy key {key!r}: unknown implementation")
    return (kh, kw), impl


def hw_config_from_dict(doc: Mapping) -> HwConfig:
    """Build an HwConfig from a mapping that overrides any default field.

    ``energy_per_block`` entries are keyed ``"<kh>x<kw>:<implementation>"``
    and merge over the defaults.
    """
    known = set(HwConfig.__dataclass_fields__)
    extra = set(doc) - known
    if extra:
        raise HardwareError(f"unknown hardware config key {sorted(extra)[0]!r}")
    kwargs = dict(doc)
    if "energy_per_block" in kwargs:
        table = dict(DEFAULT_BLOCK_ENERGY)
        for key, e in kwargs["energy_per_block"].items():
            table[_parse_block_key(key)] = float(e)
        kwargs["energy_per_block"] = table
    return HwConfig(**kwargs)


def load_hw_config(path: str | Path) -> HwConfig:
    return hw_config_from_dict(json.loads(Path(path).read_text()))


def block_energy(kernel: tuple[int, int] | None, macs_per_block: int, cfg: HwConfig,
                 implementation: str | None = None) -> float:
    impl = implementation or cfg.implementation
    if kernel is not None and (tuple(kernel), impl) in cfg.energy_per_block:
        return cfg.energy_per_block[(tuple(kernel), impl)]
    if not cfg.allow_fallback:
        raise HardwareError(f"no block energy for kernel {kernel} ({impl}) and fallback disabled")
    return cfg.energy_per_mac * macs_per_block


def macs_per_block(kernel: tuple[int, int], implementation: str) -> int:
    kh, kw = kernel
    return kh * kw if implementation == "parallel" else kh


def layer_energy(blocks: int, kernel: tuple[int, int] | None, cfg: HwConfig,
                 implementation: str | None = None, macs_in_block: int | None = None) -> float:
    """blocks x energy per block activation."""
    if blocks < 0:
        raise HardwareError("block count must be non-negative")
    if blocks == 0:
        return 0.0
    impl = implementation or cfg.implementation
    if macs_in_block is None:
        macs_in_block = macs_per_block(kernel, impl) if kernel is not None else 1
    return blocks * block_energy(kernel, macs_in_block, cfg, impl)


def layer_power(energy: float, cfg: HwConfig) -> float:
    """Energy per frame times frame rate (times the memory factor when enabled)."""
    if energy < 0:
        raise HardwareError("energy must be non-negative")
    return energy * cfg.power_scale


def layer_latency(blocks: int, cfg: HwConfig) -> float:
    return blocks / cfg.clock_hz


@dataclass(frozen=True)
class LayerHw:
    layer_id: str
    kind: str
    blocks: int
    macs: int
    energy_j: float
    power_w: float
    latency_s: float


@dataclass(frozen=True)
class HwReport:
    layers: tuple[LayerHw, ...]
    config: HwConfig

    @property
    def energy_j(self) -> float:
        return sum(l.energy_j for l in self.layers)

    @property
    def power_w(self) -> float:
        return sum(l.power_w for l in self.layers)

    @property
    def latency_s(self) -> float:
        return sum(l.latency_s for l in self.layers)

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers)


def _layer_hw(net: NetworkSpec, cost: LayerCost, cfg: HwConfig) -> LayerHw:
    layer = net.layer(cost.layer_id)
    impl = cfg.implementation
    blocks = cost.blocks(impl)
    if cfg.energy_basis == "analytic":
        energy = cost.macs_analytic * cfg.energy_per_mac
    elif layer.kind in CONV_KINDS:
        energy = layer_energy(blocks, layer.kernel, cfg, impl)
    elif layer.kind == "dense" and blocks:
        energy = layer_energy(blocks, None, cfg, impl, macs_in_block=cost.macs_analytic // blocks)
    else:
        energy = 0.0
    return LayerHw(
        layer_id=cost.layer_id,
        kind=cost.kind,
        blocks=blocks,
        macs=cost.macs_analytic,
        energy_j=energy,
        power_w=layer_power(energy, cfg),
        latency_s=layer_latency(blocks, cfg),
    )


def layers_report(net: NetworkSpec, costs: list[LayerCost], cfg: HwConfig,
                  start: int = 0, stop: int | None = None) -> HwReport:
    """Report over cost rows whose layer index lies in [start, stop)."""
    stop = len(net.layers) if stop is None else stop
    rows = [c for c in costs if start <= net.index_of(c.layer_id) < stop]
    return HwReport(tuple(_layer_hw(net, c, cfg) for c in rows), cfg)


def node_report(net: NetworkSpec, split: str, cfg: HwConfig, costs: list[LayerCost]) -> HwReport:
    """Layers up to and including ``split`` run on the node."""
    idx = net.index_of(split)
    return layers_report(net, costs, cfg, 0, idx + 1)


def full_node_report(net: NetworkSpec, cfg: HwConfig, costs: list[LayerCost]) -> HwReport:
    return layers_report(net, costs, cfg)


@dataclass(frozen=True)
class BaselineEntry:
    name: str
    energy_per_mac: float
    source_note: str = ""

    def __post_init__(self):
        if not self.energy_per_mac > 0:
            raise HardwareError(f"baseline {self.name!r}: energy_per_mac must be strictly positive")


@dataclass(frozen=True)
class BaselineComparison:
    name: str
    power_w: float
    ratio: float


def compare_baselines(node_energy: float, fps: float, baselines: list[BaselineEntry],
                      macs: int) -> list[BaselineComparison]:
    """Power each baseline would draw on the same MAC workload, and its ratio to the node."""
    if not baselines:
        raise HardwareError("need at least one baseline")
    node_power = node_energy * fps
    if not node_power > 0:
        raise HardwareError("node power must be positive to form a ratio")
    out = []
    for b in baselines:
        p = macs * b.energy_per_mac * fps
        out.append(BaselineComparison(b.name, p, p / node_power))
    return out


def load_baselines(path: str | Path) -> list[BaselineEntry]:
    """Baseline registry: JSON list of {name, energy_per_mac_pj, source_note}."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise HardwareError("baseline registry must be a list")
    out = []
    for item in doc:
        extra = set(item) - {"name", "energy_per_mac_pj", "source_note"}
        if extra:
            raise HardwareError(f"unknown baseline key {sorted(extra)[0]!r}")
        out.append(BaselineEntry(item["name"], float(item["energy_per_mac_pj"]) * 1e-12,
                                 item.get("source_note", "")))
    return out


HW_CSV_HEADER = ["layer_id", "kind", "blocks", "macs", "energy_j", "power_w", "latency_s"]


def hw_csv(report: HwReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HW_CSV_HEADER)
    for l in report.layers:
        w.writerow([l.layer_id, l.kind, l.blocks, l.macs, repr(l.energy_j), repr(l.power_w), repr(l.latency_s)])
    w.writerow(["TOTAL", "", sum(l.blocks for l in report.layers), report.macs,
                repr(report.energy_j), repr(report.power_w), repr(report.latency_s)])
    return buf.getvalue()


def hw_json(report: HwReport) -> dict:
    return {
        "layers": [asdict(l) for l in report.layers],
        "totals": {"energy_j": report.energy_j, "power_w": report.power_w, "latency_s": report.latency_s},
        "config": report.config.to_dict(),
    }
