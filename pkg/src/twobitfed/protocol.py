"""Bit-exact wire framing for uplink updates, plus overhead accounting.

Uplink frame layout (normative):

    offset | size | field
    -------+------+---------------------------------------------
    0      | 4    | node_id, unsigned big-endian
    4      | 4    | round, unsigned big-endian
    8      | 4    | param_count P, unsigned big-endian
    12     | 1    | p (full code width), unsigned
    13     | 1    | base_location, unsigned
    14     | ...  | payload: ceil(2P / 8) bytes of packed bits

Parameter j occupies payload bit positions 2j (sign) and 2j+1 (value),
packed least-significant-bit-first within each byte; trailing pad bits
must be zero. Payload size depends only on P, never on p or the values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .mapping import TwoBitUpdateMatrix

_HEADER = struct.Struct(">IIIBB")

METHODS = ("twobit", "fedavg", "dp_fedavg")


@dataclass(frozen=True)
class UplinkFrame:
    node_id: int
    round: int
    param_count: int
    p: int
    base_location: int
    payload: bytes

    def payload_length(self) -> int:
        return (2 * self.param_count + 7) // 8


@dataclass(frozen=True)
class DownlinkMessage:
    """Server broadcast: full-precision weights, scale bound, one location."""

    round: int
    weights: tuple[float, ...]
    m: float
    base_location: int

    def __post_init__(self):
        if self.base_location < 2:
            raise ValueError(f"base location {self.base_location} below 2")


@dataclass(frozen=True)
class OverheadReport:
    method: str
    uplink_bits_per_node_per_round: int
    reduction_factor: Fraction
    padded_payload_bits: int


def pack(update: TwoBitUpdateMatrix) -> UplinkFrame:
    """Serialize a two-bit update matrix into an uplink frame."""
    if not (0 <= update.node_id < 2**32 and 0 <= update.round < 2**32):
        raise ValueError("node_id and round must fit in 32 bits")
    if update.p > 255:
        raise ValueError("code width must fit in one byte")
    bits = np.empty(2 * update.param_count, dtype=np.uint8)
    bits[0::2] = update.rows[:, 0]
    bits[1::2] = update.rows[:, 1]
    payload = np.packbits(bits, bitorder="little").tobytes()
    return UplinkFrame(
        node_id=update.node_id,
        round=update.round,
        param_count=update.param_count,
        p=update.p,
        base_location=update.base_location,
        payload=payload,
    )


def unpack(frame: UplinkFrame) -> TwoBitUpdateMatrix:
    """Exact inverse of pack; rejects length or padding violations."""
    expected = frame.payload_length()
    if len(frame.payload) != expected:
        raise ValueError(
            f"payload must be {expected} bytes for {frame.param_count} parameters,"
            f" got {len(frame.payload)}"
        )
    raw = np.unpackbits(np.frombuffer(frame.payload, dtype=np.uint8), bitorder="little")
    used = 2 * frame.param_count
    if raw[used:].any():
        raise ValueError("trailing pad bits must be zero")
    rows = np.stack([raw[0:used:2], raw[1:used:2]], axis=1)
    return TwoBitUpdateMatrix(
        node_id=frame.node_id,
        round=frame.round,
        p=frame.p,
        base_location=frame.base_location,
        rows=rows,
    )


def frame_to_bytes(frame: UplinkFrame) -> bytes:
    """Flatten a frame to its wire bytes (header then payload)."""
    header = _HEADER.pack(
        frame.node_id, frame.round, frame.param_count, frame.p, frame.base_location
    )
    return header + frame.payload


def frame_from_bytes(data: bytes) -> UplinkFrame:
    """Parse wire bytes into a frame, validating the advertised length."""
    if len(data) < _HEADER.size:
        raise ValueError(f"frame needs at least {_HEADER.size} header bytes, got {len(data)}")
    node_id, round_index, param_count, p, base_location = _HEADER.unpack_from(data)
    payload = data[_HEADER.size :]
    frame = UplinkFrame(
        node_id=node_id,
        round=round_index,
        param_count=param_count,
        p=p,
        base_location=base_location,
        payload=payload,
    )
    if len(payload) != frame.payload_length():
        raise ValueError(
            f"payload length {len(payload)} inconsistent with {param_count} parameters"
        )
    return frame


def uplink_overhead(method: str, p: int, param_count: int) -> OverheadReport:
    """Per-node per-round uplink cost of a method against the p-bit baseline.

    The two-bit scheme always pays 2 bits per parameter (factor p/2 over
    sending p-bit values); full-precision methods pay p bits per
    parameter. The headline figure excludes framing; padded_payload_bits
    includes the byte-alignment padding.
    """
    if p < 4:
        raise ValueError(f"bit width must be at least 4, got {p}")
    if param_count < 1:
        raise ValueError(f"need at least one parameter, got {param_count}")
    if method == "twobit":
        bits = 2 * param_count
        return OverheadReport(
            method=method,
            uplink_bits_per_node_per_round=bits,
            reduction_factor=Fraction(p, 2),
            padded_payload_bits=8 * ((bits + 7) // 8),
        )
    if method in ("fedavg", "dp_fedavg"):
        bits = p * param_count
        return OverheadReport(
            method=method,
            uplink_bits_per_node_per_round=bits,
            reduction_factor=Fraction(1),
            padded_payload_bits=bits,
        )
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
