"""Regenerate the bundled autoencoder fixtures (architectures, seeded weights, input images).

Usage: python scripts/make_fixtures.py [output_dir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from nodesplit.netmodel import load_network
from nodesplit.tensorio import Tensor, save_tensor, save_weights

SEED = 20240611

AE1 = {
    "name": "ae1",
    "input": [128, 128, 3],
    "layers": [
        {"id": "B1", "type": "conv2d", "kernel": [5, 5], "filters": 128, "stride": 2, "activation": "relu"},
        {"id": "P1", "type": "maxpool", "kernel": [2, 2]},
        {"id": "B2", "type": "conv2d", "kernel": [3, 3], "filters": 64, "stride": 2, "activation": "relu"},
        {"id": "P2", "type": "maxpool", "kernel": [2, 2]},
        {"id": "B3", "type": "conv2d", "kernel": [3, 3], "filters": 32, "stride": 2, "activation": "relu"},
        {"id": "B4", "type": "flatten"},
        {"id": "B5", "type": "dense", "units": 256, "activation": "relu"},
        {"id": "B6", "type": "conv_transpose2d", "kernel": [4, 4], "filters": 32, "stride": 4, "activation": "relu"},
        {"id": "B7", "type": "conv_transpose2d", "kernel": [4, 4], "filters": 64, "stride": 4, "activation": "relu"},
        {"id": "B8", "type": "conv_transpose2d", "kernel": [4, 4], "filters": 128, "stride": 4, "activation": "relu"},
        {"id": "B9", "type": "conv_transpose2d", "kernel": [3, 3], "filters": 3, "stride": 2},
    ],
}

_up = [
    {"id": f"B{i}", "type": "conv_transpose2d", "kernel": [4, 4], "filters": f, "stride": 2, "activation": "relu"}
    for i, f in zip(range(8, 14), (32, 32, 16, 16, 8, 3))
]
_up[-1].pop("activation")

AE2 = {
    "name": "ae2",
    "input": [256, 256, 3],
    "layers": [
        {"id": "B1", "type": "conv2d", "kernel": [3, 3], "filters": 16, "stride": 2, "activation": "relu"},
        {"id": "B2", "type": "conv2d", "kernel": [3, 3], "filters": 32, "stride": 2, "activation": "relu"},
        {"id": "B3", "type": "conv2d", "kernel": [3, 3], "filters": 4, "stride": 4, "activation": "relu"},
        {"id": "B4", "type": "conv2d", "kernel": [3, 3], "filters": 16, "activation": "relu"},
        {"id": "B5", "type": "conv2d", "kernel": [3, 3], "filters": 32, "stride": 2, "activation": "relu"},
        {"id": "F1", "type": "flatten"},
        {"id": "B6", "type": "dense", "units": 512, "activation": "relu"},
        {"id": "B7", "type": "conv_transpose2d", "kernel": [4, 4], "filters": 16, "stride": 4, "activation": "relu"},
        *_up,
    ],
}


def seeded_weights(net, rng: np.random.Generator) -> dict:
    """Uniform in +-min(1, sqrt(6 / fan_in)); biases zero-centred and small."""
    out = {}
    for i, layer in enumerate(net.layers):
        if not layer.has_macs:
            continue
        cin = net.in_shape(i).channels if layer.kind != "dense" else net.in_shape(i).element_count
        if layer.kind == "dense":
            taps, cout = 1, layer.units
        else:
            taps, cout = layer.kernel[0] * layer.kernel[1], layer.filters
        limit = min(1.0, float(np.sqrt(6.0 / (taps * cin))))
        k = rng.uniform(-limit, limit, size=(taps, cin, cout)).astype(np.float32)
        b = rng.uniform(-0.05, 0.05, size=(1, 1, cout)).astype(np.float32)
        out[(layer.id, "kernel")] = Tensor(k, "real32")
        out[(layer.id, "bias")] = Tensor(b, "real32")
    return out


def synthetic_image(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth gradients, a few discs and light noise, as u8 RGB."""
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.stack([160 * xx + 40, 160 * yy + 40, 120 * (1 - xx) * yy + 60], axis=-1)
    for _ in range(6):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.05, 0.2)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r ** 2
        img[mask] = rng.uniform(0, 255, 3)
    img += rng.normal(0, 4, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def main(argv: list[str]) -> int:
    out_dir = Path(argv[0]) if argv else Path(__file__).resolve().parents[1] / "src" / "nodesplit" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, doc in enumerate((AE1, AE2)):
        arch = out_dir / f"{doc['name']}.arch"
        arch.write_text(json.dumps(doc, indent=2) + "\n")
        net = load_network(arch)
        rng = np.random.default_rng(SEED + k)
        save_weights(out_dir / f"{doc['name']}.dnnw", seeded_weights(net, rng))
        h, w, _ = doc["input"]
        save_tensor(out_dir / f"{doc['name']}_input.dnnt", Tensor(synthetic_image(h, w, rng), "act_u8"))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
