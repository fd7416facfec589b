"""Sign/magnitude fixed-point codes for bounded real values.

A real value g with |g| expected below a scale bound m is stored as one
sign bit plus p-1 magnitude bits holding floor(|g| * 2^(p-1) / m),
saturated at 2^(p-1) - 1 (the largest integer p-1 bits can hold). Bit
locations are numbered 1..p: location 1 is the sign bit, location 2 the
most significant magnitude bit, location p the least significant one.

No fractional bits exist; the scale bound m carries all the dynamic
range, so decoding is a single multiply by m / 2^(p-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Magnitudes must stay exactly representable in float64, so the full
# width is capped at 53 bits (52 magnitude bits).
MIN_WIDTH = 4
MAX_WIDTH = 53


@dataclass(frozen=True)
class FixedPointConfig:
    """Code width and scale bound shared by an encode/decode pair.

    p counts all bits including the sign, so there are p-1 magnitude
    bits. m is the positive bound the magnitudes are scaled against.
    """

    p: int
    m: float

    def __post_init__(self):
        if not isinstance(self.p, int) or not (MIN_WIDTH <= self.p <= MAX_WIDTH):
            raise ValueError(
                f"bit width p must be an integer in [{MIN_WIDTH}, {MAX_WIDTH}], got {self.p!r}"
            )
        if not (isinstance(self.m, (int, float)) and math.isfinite(self.m) and self.m > 0):
            raise ValueError(f"scale bound m must be positive and finite, got {self.m!r}")

    @property
    def scale(self) -> float:
        """2^(p-1) as a float; exact for p <= 53."""
        return float(1 << (self.p - 1))

    @property
    def magnitude_cap(self) -> int:
        """Largest magnitude representable in p-1 bits."""
        return (1 << (self.p - 1)) - 1


@dataclass(frozen=True)
class SignedFixedPoint:
    """One encoded value: sign bit plus p-1 magnitude bits, MSB first.

    sign is 1 for non-negative values and 0 for negative ones (the
    aggregation side clusters first-bit-0 codes into the negative
    group). magnitude_bits[i] is the bit at location i + 2.
    """

    sign: int
    magnitude_bits: tuple[int, ...]

    def __post_init__(self):
        if self.sign not in (0, 1):
            raise ValueError(f"sign bit must be 0 or 1, got {self.sign!r}")
        if len(self.magnitude_bits) < MIN_WIDTH - 1:
            raise ValueError(
                f"need at least {MIN_WIDTH - 1} magnitude bits, got {len(self.magnitude_bits)}"
            )
        if any(b not in (0, 1) for b in self.magnitude_bits):
            raise ValueError("magnitude bits must all be 0 or 1")

    @property
    def p(self) -> int:
        return len(self.magnitude_bits) + 1

    @property
    def magnitude(self) -> int:
        """Integer value of the magnitude bits."""
        value = 0
        for bit in self.magnitude_bits:
            value = (value << 1) | bit
        return value

    @classmethod
    def from_magnitude(cls, sign: int, magnitude: int, p: int) -> "SignedFixedPoint":
        if not (0 <= magnitude < (1 << (p - 1))):
            raise ValueError(f"magnitude {magnitude} does not fit in {p - 1} bits")
        bits = tuple((magnitude >> (p - 2 - i)) & 1 for i in range(p - 1))
        return cls(sign=sign, magnitude_bits=bits)


def encode(g: float, cfg: FixedPointConfig) -> SignedFixedPoint:
    """Encode a real value under cfg.

    The magnitude is floor(|g| * 2^(p-1) / m) saturated at 2^(p-1) - 1;
    rounding is truncation toward zero. Zero encodes as non-negative.

    Raises ValueError for non-finite g.
    """
    if not math.isfinite(g):
        raise ValueError(f"cannot encode non-finite value {g!r}")
    sign = 1 if g >= 0 else 0
    scaled = math.floor(abs(g) * cfg.scale / cfg.m)
    magnitude = int(min(scaled, cfg.magnitude_cap))
    return SignedFixedPoint.from_magnitude(sign, magnitude, cfg.p)


def decode(code: SignedFixedPoint, cfg: FixedPointConfig) -> float:
    """Map a code back to a real value: +-magnitude * m / 2^(p-1)."""
    if code.p != cfg.p:
        raise ValueError(f"code width {code.p} does not match config width {cfg.p}")
    magnitude = code.magnitude
    if magnitude == 0:
        return 0.0
    value = (magnitude * cfg.m) / cfg.scale
    return value if code.sign == 1 else -value


def bit_at(code: SignedFixedPoint, location: int) -> int:
    """Bit at a 1-based location; 2 is the most significant magnitude bit.

    Location 1 (the sign) is not addressable here; selection only ever
    targets magnitude bits.
    """
    if not (2 <= location <= code.p):
        raise IndexError(f"bit location {location} outside magnitude range [2, {code.p}]")
    return code.magnitude_bits[location - 2]


def encode_array(values, cfg: FixedPointConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized encode: returns (sign bits, integer magnitudes).

    Applies exactly the same float operations as scalar encode, element
    by element, so both paths produce identical codes.
    """
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot encode non-finite values")
    signs = (v >= 0).astype(np.uint8)
    scaled = np.floor(np.abs(v) * cfg.scale / cfg.m)
    magnitudes = np.minimum(scaled, float(cfg.magnitude_cap)).astype(np.int64)
    return signs, magnitudes


def decode_array(signs, magnitudes, cfg: FixedPointConfig) -> np.ndarray:
    """Vectorized decode of (sign bits, integer magnitudes)."""
    mags = np.asarray(magnitudes, dtype=np.int64)
    values = (mags * cfg.m) / cfg.scale
    return np.where(np.asarray(signs) == 1, values, -values)
