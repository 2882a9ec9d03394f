"""Bit-exact fixed-point formats of the node MAC unit.

Weights are 10-bit sign/magnitude words: 1 sign bit, 1 integer bit and 8
fraction bits, so a weight is ``(-1)**sign * m / 256`` with ``0 <= m <= 511``.
Input pixels are unsigned 8-bit integers; deeper feature maps are signed
16-bit words with a per-layer binary point (Q7.8 unless told otherwise).
Products are summed in a saturating 32-bit accumulator whose binary point sits
at ``act_frac + 8``.

Packed weight word (one per little-endian 16-bit word in weight files)::

    bit 9     sign
    bit 8     integer bit
    bits 7..0 fraction
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

W_FRAC = 8
W_MAG_MAX = 511
W_MAX = W_MAG_MAX / 256
U8_MAX = 255
S16_MIN, S16_MAX = -(1 << 15), (1 << 15) - 1
ACC_MIN, ACC_MAX = -(1 << 31), (1 << 31) - 1
ROUNDINGS = ("nearest_even", "truncate")


class FixedPointError(ValueError):
    pass


@dataclass(frozen=True)
class WeightF10:
    sign: int
    magnitude: int

    def __post_init__(self):
        if self.sign not in (0, 1):
            raise FixedPointError(f"sign must be 0 or 1, got {self.sign}")
        if not 0 <= self.magnitude <= W_MAG_MAX:
            raise FixedPointError(f"magnitude out of range: {self.magnitude}")
        if self.magnitude == 0 and self.sign:
            object.__setattr__(self, "sign", 0)

    @property
    def integer_bit(self) -> int:
        return self.magnitude >> 8

    @property
    def fraction(self) -> int:
        return self.magnitude & 0xFF

    @property
    def signed(self) -> int:
        """Value in units of 2**-8."""
        return -self.magnitude if self.sign else self.magnitude

    @property
    def value(self) -> float:
        return self.signed / 256

    def pack(self) -> int:
        return (self.sign << 9) | self.magnitude

    @classmethod
    def unpack(cls, word: int) -> "WeightF10":
        if not 0 <= word < 1 << 10:
            raise FixedPointError(f"packed weight word out of range: {word:#x}")
        return cls(word >> 9, word & 0x1FF)


@dataclass(frozen=True)
class ActU8:
    raw: int

    def __post_init__(self):
        if not 0 <= self.raw <= U8_MAX:
            raise FixedPointError(f"u8 activation out of range: {self.raw}")

    frac_bits = 0

    @property
    def value(self) -> float:
        return float(self.raw)


@dataclass(frozen=True)
class ActS16:
    raw: int
    frac_bits: int = 8

    def __post_init__(self):
        if not S16_MIN <= self.raw <= S16_MAX:
            raise FixedPointError(f"s16 activation out of range: {self.raw}")
        if not 0 <= self.frac_bits <= 15:
            raise FixedPointError(f"frac_bits must be in [0, 15], got {self.frac_bits}")

    @property
    def value(self) -> float:
        return self.raw / (1 << self.frac_bits)


@dataclass(frozen=True)
class Acc32:
    raw: int = 0
    frac_bits: int = 8
    overflow: bool = False

    def __post_init__(self):
        if not ACC_MIN <= self.raw <= ACC_MAX:
            raise FixedPointError(f"accumulator out of range: {self.raw}")

    @property
    def value(self) -> float:
        return self.raw / (1 << self.frac_bits)


def _round_shift(x: int, shift: int, rounding: str) -> int:
    """x / 2**shift as an integer, for Python ints of any size."""
    if shift <= 0:
        return x << -shift
    q = x >> shift
    if rounding == "truncate":
        return q
    rem = x - (q << shift)
    half = 1 << (shift - 1)
    if rem > half or (rem == half and q & 1):
        q += 1
    return q


def _clamp(x: int, lo: int, hi: int) -> int:
    return lo if x < lo else hi if x > hi else x


def quantize_weight(w: float, rounding: str = "nearest_even") -> WeightF10:
    """Nearest F10 weight; out-of-range inputs saturate to +/-511/256."""
    if math.isnan(w):
        raise FixedPointError("cannot quantize NaN")
    mag = abs(w) * 256
    if rounding == "nearest_even":
        m = round(mag) if mag < 1024 else 1024
    elif rounding == "truncate":
        m = math.floor(mag) if mag < 1024 else 1024
    else:
        raise FixedPointError(f"rounding must be one of {ROUNDINGS}")
    return WeightF10(1 if w < 0 else 0, min(m, W_MAG_MAX))


def dequantize_weight(w: WeightF10) -> float:
    return w.signed / 256


def mac(act: ActU8 | ActS16, w: WeightF10, acc: Acc32 | None = None) -> Acc32:
    """One multiply-accumulate step.

    The magnitude product is formed first and conditionally negated on the
    combined sign, then added with 32-bit saturation. Overflow sets the sticky
    ``overflow`` flag.
    """
    acc_frac = act.frac_bits + W_FRAC
    if acc is None:
        acc = Acc32(0, acc_frac)
    if acc.frac_bits != acc_frac:
        raise FixedPointError(f"accumulator frac_bits {acc.frac_bits} != {acc_frac}")
    a_sign = 1 if act.raw < 0 else 0
    product = abs(act.raw) * w.magnitude
    if a_sign ^ w.sign:
        product = -product
    total = acc.raw + product
    sat = _clamp(total, ACC_MIN, ACC_MAX)
    return Acc32(sat, acc_frac, acc.overflow or sat != total)


def requantize(acc: Acc32, frac_bits: int = 8, rounding: str = "nearest_even") -> ActS16:
    """Shift the accumulator down to ``frac_bits`` and saturate to 16 bits."""
    if frac_bits > acc.frac_bits:
        raise FixedPointError(f"target frac_bits {frac_bits} exceeds accumulator {acc.frac_bits}")
    q = _round_shift(acc.raw, acc.frac_bits - frac_bits, rounding)
    return ActS16(_clamp(q, S16_MIN, S16_MAX), frac_bits)


def to_u8(x: float) -> ActU8:
    return ActU8(_clamp(int(round(x)), 0, U8_MAX))


# ---------------------------------------------------------------------------
# array versions used by the inference engine


def quantize_weights(w: np.ndarray, rounding: str = "nearest_even") -> np.ndarray:
    """Signed F10 values in units of 2**-8 (int32), same shape as ``w``."""
    w = np.asarray(w, dtype=np.float64)
    if np.isnan(w).any():
        raise FixedPointError("cannot quantize NaN")
    mag = np.abs(w) * 256.0
    mag = np.rint(mag) if rounding == "nearest_even" else np.floor(mag)
    mag = np.minimum(mag, W_MAG_MAX).astype(np.int32)
    return np.where(w < 0, -mag, mag).astype(np.int32)


def dequantize_weights(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / 256.0


def pack_f10(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.int32)
    if (np.abs(q) > W_MAG_MAX).any():
        raise FixedPointError("weight magnitude exceeds 511")
    return (np.where(q < 0, 1 << 9, 0) | np.abs(q)).astype(np.uint16)


def unpack_f10(words: np.ndarray) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint16)
    if (words >> 10).any():
        raise FixedPointError("packed weight word has bits above bit 9")
    mag = (words & 0x1FF).astype(np.int32)
    return np.where(words & 0x200, -mag, mag).astype(np.int32)


def mac_array(act: np.ndarray, wq: np.ndarray, acc: np.ndarray | int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise ``acc + act * w`` with 32-bit saturation. Returns (acc, overflow)."""
    a = np.asarray(act, dtype=np.int64)
    w = np.asarray(wq, dtype=np.int64)
    product = np.abs(a) * np.abs(w)
    product = np.where((a < 0) ^ (w < 0), -product, product)
    total = np.asarray(acc, dtype=np.int64) + product
    sat = np.clip(total, ACC_MIN, ACC_MAX)
    return sat, sat != total


def round_shift_array(x: np.ndarray, shift: int, rounding: str = "nearest_even") -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if shift <= 0:
        return x << -shift
    q = x >> shift
    if rounding == "truncate":
        return q
    rem = x - (q << shift)
    half = 1 << (shift - 1)
    up = (rem > half) | ((rem == half) & (q & 1 == 1))
    return q + up


def requantize_array(acc: np.ndarray, acc_frac: int, frac_bits: int,
                     rounding: str = "nearest_even") -> tuple[np.ndarray, int]:
    """Accumulators to int16 words. Returns (words, number of saturated elements)."""
    if frac_bits > acc_frac:
        raise FixedPointError(f"target frac_bits {frac_bits} exceeds accumulator {acc_frac}")
    q = round_shift_array(acc, acc_frac - frac_bits, rounding)
    out = np.clip(q, S16_MIN, S16_MAX)
    return out.astype(np.int16), int(np.count_nonzero(out != q))


def real_to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64)), 0, U8_MAX).astype(np.uint8)


def real_to_fixed(x: np.ndarray, frac_bits: int, lo: int, hi: int) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * (1 << frac_bits)), lo, hi).astype(np.int64)


def frac_bits_for(max_abs: float, limit: int = 15) -> int:
    """Largest binary point in [0, limit] that keeps ``max_abs`` inside int16."""
    if max_abs <= 0:
        return limit
    f = math.floor(math.log2(S16_MAX / max_abs))
    return max(0, min(limit, f))


LUT_OUT_FRAC = 14
# words are brought to this binary point before a table lookup, so the 256
# buckets span +-8 in steps of 1/16
LUT_IN_FRAC = 12


def activation_lut(kind: str, in_frac: int, out_frac: int = LUT_OUT_FRAC) -> np.ndarray:
    """256-entry table for sigmoid/tanh, indexed by the top 8 bits of an int16.

    Entry i covers raw words ``(i - 128) << 8`` .. ``+255`` and holds the
    function at the bucket centre.
    """
    fn = {"sigmoid": lambda v: 1.0 / (1.0 + np.exp(-v)), "tanh": np.tanh}[kind]
    centers = ((np.arange(256) - 128) * 256 + 128) / float(1 << in_frac)
    return real_to_fixed(fn(centers), out_frac, S16_MIN, S16_MAX).astype(np.int16)


def apply_lut(words: np.ndarray, lut: np.ndarray) -> np.ndarray:
    idx = (np.asarray(words, dtype=np.int32) >> 8) + 128
    return lut[idx]
