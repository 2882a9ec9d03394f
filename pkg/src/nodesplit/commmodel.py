"""Feature-map transmission cost over low-power radios and node/hub energy checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .costmodel import CostConfig, LayerCost, cost_table
from .hwmodel import HwConfig, full_node_report, node_report
from .netmodel import NetworkSpec

BIT_WIDTHS = (8, 16, 32)
NJ = 1e-9


class CommError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolSpec:
    """Energy per bit (J/bit) and throughput (bit/s) ranges.

    The point values used in computations default to the geometric mean of
    each range.
    """

    name: str
    energy_per_bit_min: float
    energy_per_bit_max: float
    throughput_min: float
    throughput_max: float
    energy_point: float | None = None
    throughput_point: float | None = None

    def __post_init__(self):
        for lo, hi, what in (
            (self.energy_per_bit_min, self.energy_per_bit_max, "energy_per_bit"),
            (self.throughput_min, self.throughput_max, "throughput"),
        ):
            if not 0 < lo <= hi:
                raise CommError(f"{self.name}: need 0 < {what}_min <= {what}_max")
        if self.energy_point is None:
            object.__setattr__(self, "energy_point", math.sqrt(self.energy_per_bit_min * self.energy_per_bit_max))
        if self.throughput_point is None:
            object.__setattr__(self, "throughput_point", math.sqrt(self.throughput_min * self.throughput_max))
        # geometric means can land a hair outside [min, max] through rounding
        e = min(max(self.energy_point, self.energy_per_bit_min), self.energy_per_bit_max)
        t = min(max(self.throughput_point, self.throughput_min), self.throughput_max)
        if not math.isclose(e, self.energy_point, rel_tol=1e-12) or not math.isclose(t, self.throughput_point, rel_tol=1e-12):
            raise CommError(f"{self.name}: point values must lie inside their ranges")
        object.__setattr__(self, "energy_point", e)
        object.__setattr__(self, "throughput_point", t)

    def with_energy_point(self, energy_per_bit: float) -> "ProtocolSpec":
        """Copy with a different energy point; the range widens to contain it."""
        return ProtocolSpec(
            self.name,
            min(self.energy_per_bit_min, energy_per_bit),
            max(self.energy_per_bit_max, energy_per_bit),
            self.throughput_min,
            self.throughput_max,
            energy_per_bit,
            self.throughput_point,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "energy_per_bit_nj": [self.energy_per_bit_min / NJ, self.energy_per_bit_max / NJ],
            "throughput_bps": [self.throughput_min, self.throughput_max],
            "energy_point_nj": self.energy_point / NJ,
            "throughput_point_bps": self.throughput_point,
        }


def builtin_protocols() -> list[ProtocolSpec]:
    """Registry of radios with published per-bit energy ranges.

    "Tens of Mbps" is pinned to 10 Mbps and "a few Mbps" to 2 Mbps. NFC is
    left out: its energy depends on the reader.
    """
    return [
        ProtocolSpec("BLE", 10 * NJ, 50 * NJ, 125e3, 2e6),
        ProtocolSpec("Zigbee", 50 * NJ, 100 * NJ, 250e3, 250e3),
        ProtocolSpec("WiFi-HaLow", 5 * NJ, 10 * NJ, 10e6, 10e6),
        ProtocolSpec("BCC", 0.002 * NJ, 0.01 * NJ, 2e6, 2e6),
        ProtocolSpec("LoRa", 50 * NJ, 150 * NJ, 0.3e3, 27e3),
        ProtocolSpec("UWB", 10 * NJ, 20 * NJ, 110e3, 27e6),
        ProtocolSpec("Backscatter", 0.001 * NJ, 0.01 * NJ, 2e6, 2e6),
    ]


def protocol_from_dict(d: dict) -> ProtocolSpec:
    extra = set(d) - {"name", "energy_per_bit_nj", "throughput_bps", "energy_point_nj", "throughput_point_bps"}
    if extra:
        raise CommError(f"unknown protocol key {sorted(extra)[0]!r}")
    try:
        e_lo, e_hi = d["energy_per_bit_nj"]
        t_lo, t_hi = d["throughput_bps"]
        name = d["name"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CommError(f"malformed protocol entry {d!r}") from exc
    ep = d.get("energy_point_nj")
    return ProtocolSpec(
        name, e_lo * NJ, e_hi * NJ, float(t_lo), float(t_hi),
        None if ep is None else ep * NJ, d.get("throughput_point_bps"),
    )


def load_protocols(path: str | Path) -> list[ProtocolSpec]:
    """Registry file: JSON list of protocol objects (see ``ProtocolSpec.to_dict``)."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise CommError("protocol registry must be a list")
    return [protocol_from_dict(d) for d in doc]


def resolve_protocol(name: str, registry: list[ProtocolSpec] | None = None) -> ProtocolSpec:
    """Registry lookup (case-insensitive) or inline ``custom:<nJ_per_bit>:<bps>``."""
    if name.startswith("custom:"):
        parts = name.split(":")
        if len(parts) != 3:
            raise CommError(f"custom protocol must be custom:<nJ_per_bit>:<bps>, got {name!r}")
        try:
            nj, bps = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise CommError(f"custom protocol numbers unreadable in {name!r}") from exc
        if not (nj > 0 and bps > 0):
            raise CommError("custom protocol values must be positive")
        return ProtocolSpec(name, nj * NJ, nj * NJ, bps, bps)
    for p in registry if registry is not None else builtin_protocols():
        if p.name.lower() == name.lower():
            return p
    raise CommError(f"unknown protocol {name!r}")


@dataclass(frozen=True)
class CommReport:
    protocol: str
    bits_transmitted: int
    energy_j: float
    latency_s: float


def comm_cost(dv: int, bits_per_element: int, proto: ProtocolSpec) -> CommReport:
    if dv <= 0:
        raise CommError("data volume must be positive")
    if bits_per_element not in BIT_WIDTHS:
        raise CommError(f"bits_per_element must be one of {BIT_WIDTHS}, got {bits_per_element}")
    bits = dv * bits_per_element
    return CommReport(proto.name, bits, bits * proto.energy_point, bits / proto.throughput_point)


@dataclass(frozen=True)
class FeasibilityReport:
    split: str
    e_node: float
    e_comm: float
    e_hub: float
    e_full_node: float

    @property
    def node_lt_hub(self) -> bool:
        return self.e_node < self.e_hub

    @property
    def dist_saves(self) -> bool:
        return self.e_node + self.e_comm < self.e_full_node

    @property
    def balanced(self) -> float:
        return self.e_node / self.e_comm if self.e_comm > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "e_node": self.e_node,
            "e_comm": self.e_comm,
            "e_hub": self.e_hub,
            "e_full_node": self.e_full_node,
            "checks": {
                "node_lt_hub": self.node_lt_hub,
                "dist_saves": self.dist_saves,
                "balanced": self.balanced if math.isfinite(self.balanced) else None,
            },
        }


def feasibility(net: NetworkSpec, split: str, hw_cfg: HwConfig, proto: ProtocolSpec,
                hub_energy_per_mac: float, bits_per_element: int = 16,
                costs: list[LayerCost] | None = None) -> FeasibilityReport:
    """Node, link and hub energies per frame for a split after layer ``split``.

    The hub runs every layer after the split at ``hub_energy_per_mac`` per MAC.
    """
    if not hub_energy_per_mac > 0:
        raise CommError("hub_energy_per_mac must be strictly positive")
    if costs is None:
        costs = cost_table(net, CostConfig())
    idx = net.index_of(split)
    e_node = node_report(net, split, hw_cfg, costs).energy_j
    e_full = full_node_report(net, hw_cfg, costs).energy_j
    hub_macs = sum(c.macs_analytic for c in costs if net.index_of(c.layer_id) > idx)
    e_comm = comm_cost(net.out_shape(idx).element_count, bits_per_element, proto).energy_j
    return FeasibilityReport(split, e_node, e_comm, hub_macs * hub_energy_per_mac, e_full)
