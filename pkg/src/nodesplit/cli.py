"""Command-line entry point: ``nodesplit <command> ...``.

Exit codes: 0 success, 2 input or validation error, 3 malformed data file,
4 internal inconsistency.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .commmodel import (CommError, builtin_protocols, comm_cost, feasibility, load_protocols,
                        resolve_protocol)
from .costmodel import COST_MODES, FOM_SCOPES, IMPLEMENTATIONS, CostConfig, CostError, cost_csv, cost_report, \
    cost_table, select_split
from .fxp import ROUNDINGS, FixedPointError
from .hwmodel import (ENERGY_BASES, HardwareError, HwConfig, compare_baselines, hw_config_from_dict, hw_csv,
                      hw_json, load_baselines, node_report)
from .infer import PRECISIONS, Engine, InferenceError, MetricError, quality
from .netmodel import NetworkError, load_network
from .tensorio import DataFileError, load_tensor, load_weights, save_tensor

EXIT_OK, EXIT_INPUT, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
VALIDATION_ERRORS = (NetworkError, CostError, HardwareError, CommError, InferenceError,
                     FixedPointError, MetricError)


class UsageError(ValueError):
    pass


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not v > 0 or (isinstance(v, float) and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
        return v
    return parse


def _frac_bits(text: str):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"frac bits must be an integer or 'auto', got {text!r}")
    if not 0 <= v <= 15:
        raise argparse.ArgumentTypeError("frac bits must be in [0, 15]")
    return v


def _add_cost_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cost-mode", choices=COST_MODES, default="analytic",
                   help="computation cost: full MAC count or parallel block count")
    p.add_argument("--fom-mode", choices=FOM_SCOPES, default="per_layer",
                   help="MACs of the layer alone or cumulative up to it")
    p.add_argument("--aux-rows", action="store_true", help="give pooling/batchnorm/dropout layers their own rows")


def _add_hw_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hw-config", type=Path, help="JSON file overriding hardware parameters")
    p.add_argument("--implementation", choices=IMPLEMENTATIONS)
    p.add_argument("--fps", type=_positive(float))
    p.add_argument("--clock-hz", type=_positive(float))
    p.add_argument("--energy-per-mac", type=_positive(float), help="J per MAC for the per-MAC energy model")
    p.add_argument("--mem-overhead", type=_positive(float), help="memory-access power factor (>= 1)")
    p.add_argument("--apply-overhead", action="store_true", help="multiply power by the memory factor")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "structured"), default="csv", dest="report_format")
    p.add_argument("-o", "--output", type=Path, help="write the report here instead of standard output")


def _add_protocol_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--protocol", required=required, help="registry name or custom:<nJ_per_bit>:<bps>")
    p.add_argument("--protocols-file", type=Path, help="JSON protocol registry replacing the built-in one")
    p.add_argument("--bits-per-element", type=int, choices=(8, 16, 32), default=16)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nodesplit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="per-layer data volume, MACs and figure of merit")
    p.add_argument("arch", type=Path)
    _add_cost_flags(p)
    _add_output_flags(p)

    p = sub.add_parser("split", help="choose the split layer and check its energy balance")
    p.add_argument("arch", type=Path)
    _add_cost_flags(p)
    _add_hw_flags(p)
    _add_protocol_flags(p, required=True)
    p.add_argument("--hub-energy-per-mac", type=_positive(float), required=True, help="J per MAC on the hub")
    p.add_argument("--energy-basis", choices=ENERGY_BASES, default="analytic")
    p.add_argument("-o", "--output", type=Path)

    p = sub.add_parser("power", help="node energy, power and latency per layer")
    p.add_argument("arch", type=Path)
    p.add_argument("--split", dest="split_id", help="last node layer (default: the selected split)")
    _add_cost_flags(p)
    _add_hw_flags(p)
    p.add_argument("--energy-basis", choices=ENERGY_BASES, default="table")
    p.add_argument("--baselines", type=Path, help="JSON list of {name, energy_per_mac_pj, source_note}")
    _add_output_flags(p)

    p = sub.add_parser("comm", help="feature-map transmission energy and latency per layer")
    p.add_argument("arch", type=Path)
    p.add_argument("--split", dest="split_id", help="report only this layer")
    _add_cost_flags(p)
    _add_protocol_flags(p, required=True)
    _add_output_flags(p)

    p = sub.add_parser("simulate", help="run the network split between node and hub")
    p.add_argument("arch", type=Path)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--split", dest="split_id", help="last node layer (default: the selected split)")
    _add_cost_flags(p)
    p.add_argument("--precision", choices=PRECISIONS, default="w10_f8")
    p.add_argument("--frac-bits", type=_frac_bits, default=8, help="int16 binary point of node maps, or 'auto'")
    p.add_argument("--rounding", choices=ROUNDINGS, default="nearest_even")
    p.add_argument("--output-tensor", type=Path, help="write the network output tensor here")
    p.add_argument("--metrics", type=Path, help="write the quality report (JSON) here")
    p.add_argument("--reference-output", type=Path, help="also write the all-real reference output")
    p.add_argument("-o", "--output", type=Path, help="write the run report here instead of standard output")

    p = sub.add_parser("protocols", help="list the radio protocol registry")
    p.add_argument("--protocols-file", type=Path)
    _add_output_flags(p)
    return ap


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _hw_config(args, basis: str) -> HwConfig:
    doc = {}
    if getattr(args, "hw_config", None) is not None:
        doc = json.loads(args.hw_config.read_text())
        if not isinstance(doc, dict):
            raise UsageError("hardware config must be a JSON object")
    overrides = {
        "implementation": args.implementation,
        "fps": args.fps,
        "clock_hz": args.clock_hz,
        "energy_per_mac": args.energy_per_mac,
        "mem_overhead_factor": args.mem_overhead,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.apply_overhead:
        doc["overhead_applied"] = True
    doc["energy_basis"] = basis
    return hw_config_from_dict(doc)


def _net_and_costs(args):
    net = load_network(args.arch)
    cfg = CostConfig(args.cost_mode, args.fom_mode, args.aux_rows)
    return net, cost_table(net, cfg)


def _split_id(args, net, costs) -> str:
    if getattr(args, "split_id", None):
        net.index_of(args.split_id)
        return args.split_id
    return select_split(costs)


def _registry(args):
    if getattr(args, "protocols_file", None) is not None:
        return load_protocols(args.protocols_file)
    return builtin_protocols()


def cmd_analyze(args) -> int:
    net, costs = _net_and_costs(args)
    split = select_split(costs)
    text = cost_csv(costs, split) if args.report_format == "csv" else cost_report(costs, split)
    _emit(text, args.output)
    return EXIT_OK


def cmd_split(args) -> int:
    net, costs = _net_and_costs(args)
    split = select_split(costs)
    hw = _hw_config(args, args.energy_basis)
    proto = resolve_protocol(args.protocol, _registry(args))
    # feasibility energies always use the MAC-count costs, independent of --cost-mode
    mac_costs = cost_table(net, CostConfig(aux_rows=args.aux_rows))
    rep = feasibility(net, split, hw, proto, args.hub_energy_per_mac, args.bits_per_element, mac_costs)
    doc = {
        "split": split,
        "protocol": proto.to_dict(),
        "bits_per_element": args.bits_per_element,
        "split_dv": net.out_shape(net.index_of(split)).element_count,
        "node_layers": [l.id for l in net.layers[: net.index_of(split) + 1]],
        "hub_layers": [l.id for l in net.layers[net.index_of(split) + 1:]],
        "feasibility": rep.to_dict(),
    }
    _emit(_dumps(doc), args.output)
    return EXIT_OK


def cmd_power(args) -> int:
    net, costs = _net_and_costs(args)
    split = _split_id(args, net, costs)
    hw = _hw_config(args, args.energy_basis)
    rep = node_report(net, split, hw, costs)
    comparisons = None
    if args.baselines is not None:
        comparisons = compare_baselines(rep.energy_j, hw.fps, load_baselines(args.baselines), rep.macs)
    if args.report_format == "csv":
        text = hw_csv(rep)
        if comparisons:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["baseline", "power_w", "ratio"])
            for c in comparisons:
                w.writerow([c.name, repr(c.power_w), repr(c.ratio)])
            text += "\n" + buf.getvalue()
    else:
        doc = hw_json(rep)
        doc["split"] = split
        if comparisons:
            doc["baselines"] = [{"name": c.name, "power_w": c.power_w, "ratio": c.ratio} for c in comparisons]
        text = _dumps(doc)
    _emit(text, args.output)
    return EXIT_OK


def cmd_comm(args) -> int:
    net, costs = _net_and_costs(args)
    proto = resolve_protocol(args.protocol, _registry(args))
    rows = costs if not args.split_id else [c for c in costs if c.layer_id == _split_id(args, net, costs)]
    if not rows:
        raise UsageError(f"layer {args.split_id!r} has no cost row")
    reports = [(c, comm_cost(c.dv, args.bits_per_element, proto)) for c in rows]
    if args.report_format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer_id", "dv", "bits", "energy_j", "latency_s"])
        for c, r in reports:
            w.writerow([c.layer_id, c.dv, r.bits_transmitted, repr(r.energy_j), repr(r.latency_s)])
        text = buf.getvalue()
    else:
        text = _dumps({
            "protocol": proto.to_dict(),
            "bits_per_element": args.bits_per_element,
            "layers": [{"layer_id": c.layer_id, "dv": c.dv, "bits": r.bits_transmitted,
                        "energy_j": r.energy_j, "latency_s": r.latency_s} for c, r in reports],
        })
    _emit(text, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    net, costs = _net_and_costs(args)
    split = _split_id(args, net, costs)
    weights = load_weights(args.weights)
    x = load_tensor(args.input)
    engine = Engine(net, weights)
    ref = engine.run_reference(x)
    res = engine.run_split(x, split, args.precision, frac_bits=args.frac_bits, rounding=args.rounding)
    if tuple(res.output.data.shape) != tuple(ref.data.shape):
        raise RuntimeError("split output shape differs from reference output shape")
    q = quality(ref, res.output)
    if args.output_tensor is not None:
        save_tensor(args.output_tensor, res.output)
    if args.reference_output is not None:
        save_tensor(args.reference_output, ref)
    if args.metrics is not None:
        args.metrics.write_text(_dumps(q.to_dict()))
    doc = {"run": res.metadata(), "quality": q.to_dict(), "output_shape": list(res.output.data.shape)}
    _emit(_dumps(doc), args.output)
    return EXIT_OK


def cmd_protocols(args) -> int:
    reg = _registry(args)
    if args.report_format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "energy_per_bit_min_nj", "energy_per_bit_max_nj", "throughput_min_bps",
                    "throughput_max_bps", "energy_point_nj", "throughput_point_bps"])
        for p in reg:
            d = p.to_dict()
            w.writerow([p.name, *map(repr, d["energy_per_bit_nj"]), *map(repr, d["throughput_bps"]),
                        repr(d["energy_point_nj"]), repr(d["throughput_point_bps"])])
        text = buf.getvalue()
    else:
        text = _dumps([p.to_dict() for p in reg])
    _emit(text, args.output)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "split": cmd_split,
    "power": cmd_power,
    "comm": cmd_comm,
    "simulate": cmd_simulate,
    "protocols": cmd_protocols,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except DataFileError as exc:
        print(f"error: data file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (*VALIDATION_ERRORS, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - reported as an internal fault
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
