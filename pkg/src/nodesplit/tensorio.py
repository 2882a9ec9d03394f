"""Tensor and weight-container files.

Tensor file (``.dnnt``)::

    b"DNNT" | u32 LE header length | JSON header | raw LE payload

The header holds ``dtype`` (``real32``, ``act_u8``, ``act_s16`` or ``f10``),
``shape`` [H, W, C] and, for ``act_s16``, ``frac_bits``. ``f10`` payloads are
packed weight words, one per 16-bit word.

Weight container (``.dnnw``)::

    b"DNNW" | u32 LE index length | JSON index | records

The index is a list of ``{layer_id, role, offset, length}`` where ``offset``
counts from the first record byte and each record is a complete tensor file.
Kernels are stored as [kh*kw, C_in, C_out] (dense: [1, in, units]), biases
as [1, 1, C_out]; batchnorm layers carry a per-channel ``kernel`` (scale) and
``bias`` (shift).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fxp import pack_f10, unpack_f10
from .netmodel import TensorShape

TENSOR_MAGIC = b"DNNT"
WEIGHTS_MAGIC = b"DNNW"
DTYPES = {"real32": "<f4", "act_u8": "u1", "act_s16": "<i2", "f10": "<u2"}
_NATIVE = {"real32": np.float32, "act_u8": np.uint8, "act_s16": np.int16, "f10": np.uint16}
ROLES = ("kernel", "bias")


class DataFileError(ValueError):
    """Malformed tensor or weight file; ``offset`` is the byte where it went wrong."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"at byte {offset}: {message}")


@dataclass
class Tensor:
    """H x W x C tensor. ``data`` is a numpy array of that shape."""

    data: np.ndarray
    dtype: str = "real32"
    frac_bits: int | None = None

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.data.ndim != 3:
            raise ValueError(f"tensor data must be H x W x C, got shape {self.data.shape}")
        if self.dtype == "act_s16" and self.frac_bits is None:
            self.frac_bits = 8
        self.data = np.ascontiguousarray(self.data, dtype=_NATIVE[self.dtype])

    @property
    def shape(self) -> TensorShape:
        return TensorShape(*(int(d) for d in self.data.shape))

    def to_real(self) -> np.ndarray:
        """Values as float32 (fixed-point words scaled by their binary point)."""
        if self.dtype == "act_s16":
            return (self.data.astype(np.float64) / (1 << self.frac_bits)).astype(np.float32)
        if self.dtype == "f10":
            return (unpack_f10(self.data) / 256.0).astype(np.float32)
        return self.data.astype(np.float32)

    @classmethod
    def real(cls, data) -> "Tensor":
        return cls(np.asarray(data, dtype=np.float32), "real32")


def tensor_to_bytes(t: Tensor) -> bytes:
    header = {"dtype": t.dtype, "shape": list(t.data.shape)}
    if t.dtype == "act_s16":
        header["frac_bits"] = t.frac_bits
    hb = json.dumps(header, sort_keys=True).encode()
    payload = t.data.astype(DTYPES[t.dtype]).tobytes()
    return TENSOR_MAGIC + struct.pack("<I", len(hb)) + hb + payload


def tensor_from_bytes(buf: bytes, base: int = 0) -> Tensor:
    """Decode a tensor file; ``base`` is added to reported offsets."""
    if len(buf) < 8:
        raise DataFileError("truncated tensor preamble", base + len(buf))
    if buf[:4] != TENSOR_MAGIC:
        raise DataFileError(f"bad magic {buf[:4]!r}, expected {TENSOR_MAGIC!r}", base)
    (hlen,) = struct.unpack("<I", buf[4:8])
    if len(buf) < 8 + hlen:
        raise DataFileError(f"truncated header: need {hlen} bytes", base + len(buf))
    try:
        header = json.loads(buf[8:8 + hlen])
        dtype = header["dtype"]
        shape = [int(d) for d in header["shape"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataFileError(f"unreadable header: {exc}", base + 8) from exc
    if dtype not in DTYPES:
        raise DataFileError(f"unknown dtype {dtype!r}", base + 8)
    if len(shape) != 3 or min(shape) < 1:
        raise DataFileError(f"shape must be three positive dims, got {shape}", base + 8)
    start = 8 + hlen
    nbytes = int(np.prod(shape)) * np.dtype(DTYPES[dtype]).itemsize
    if len(buf) < start + nbytes:
        raise DataFileError(f"truncated payload: need {nbytes} bytes, have {len(buf) - start}", base + len(buf))
    if len(buf) > start + nbytes:
        raise DataFileError("trailing bytes after payload", base + start + nbytes)
    data = np.frombuffer(buf, dtype=DTYPES[dtype], count=int(np.prod(shape)), offset=start).reshape(shape)
    if dtype == "f10" and (data >> 10).any():
        raise DataFileError("f10 word with bits above bit 9", base + start)
    return Tensor(data.copy(), dtype, header.get("frac_bits"))


def save_tensor(path: str | Path, t: Tensor) -> None:
    Path(path).write_bytes(tensor_to_bytes(t))


def load_tensor(path: str | Path) -> Tensor:
    return tensor_from_bytes(Path(path).read_bytes())


WeightKey = tuple[str, str]


def weights_to_bytes(weights: dict[WeightKey, Tensor]) -> bytes:
    index, blobs, offset = [], [], 0
    for (layer_id, role), t in weights.items():
        if role not in ROLES:
            raise ValueError(f"unknown weight role {role!r}")
        b = tensor_to_bytes(t)
        index.append({"layer_id": layer_id, "role": role, "offset": offset, "length": len(b)})
        blobs.append(b)
        offset += len(b)
    ib = json.dumps(index).encode()
    return WEIGHTS_MAGIC + struct.pack("<I", len(ib)) + ib + b"".join(blobs)


def weights_from_bytes(buf: bytes) -> dict[WeightKey, Tensor]:
    if len(buf) < 8:
        raise DataFileError("truncated weight preamble", len(buf))
    if buf[:4] != WEIGHTS_MAGIC:
        raise DataFileError(f"bad magic {buf[:4]!r}, expected {WEIGHTS_MAGIC!r}", 0)
    (ilen,) = struct.unpack("<I", buf[4:8])
    if len(buf) < 8 + ilen:
        raise DataFileError(f"truncated index: need {ilen} bytes", len(buf))
    try:
        index = json.loads(buf[8:8 + ilen])
    except ValueError as exc:
        raise DataFileError(f"unreadable index: {exc}", 8) from exc
    base = 8 + ilen
    out: dict[WeightKey, Tensor] = {}
    for entry in index:
        try:
            key = (entry["layer_id"], entry["role"])
            off, length = int(entry["offset"]), int(entry["length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFileError(f"malformed index entry {entry!r}", 8) from exc
        if key[1] not in ROLES:
            raise DataFileError(f"unknown weight role {key[1]!r}", 8)
        if key in out:
            raise DataFileError(f"duplicate record {key}", 8)
        lo = base + off
        if lo + length > len(buf):
            raise DataFileError(f"record {key} runs past end of file", len(buf))
        out[key] = tensor_from_bytes(buf[lo:lo + length], base=lo)
    return out


def save_weights(path: str | Path, weights: dict[WeightKey, Tensor]) -> None:
    Path(path).write_bytes(weights_to_bytes(weights))


def load_weights(path: str | Path) -> dict[WeightKey, Tensor]:
    return weights_from_bytes(Path(path).read_bytes())


def f10_tensor(q: np.ndarray) -> Tensor:
    """Pack signed F10 values (units of 2**-8) into an ``f10`` tensor."""
    q = np.asarray(q)
    if q.ndim != 3:
        raise ValueError("f10 tensor needs three dims")
    return Tensor(pack_f10(q), "f10")
