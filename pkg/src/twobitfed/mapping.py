"""Client-side mapping of a local update vector to two bits per parameter.

Each parameter contributes one row (sign bit, value bit): the sign of
the update entry, and the bit of its fixed-point code at a location the
server requested. The server sends a single base location per node per
round; the node increments it by one for every subsequent row, wrapping
over the magnitude locations 2..p so arbitrarily long vectors keep all
bits selectable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import FixedPointConfig, encode_array


@dataclass(eq=False)
class TwoBitUpdateMatrix:
    """A node's full per-round payload: one (sign, value) bit pair per row.

    rows is a (P, 2) uint8 array; column 0 holds sign bits, column 1 the
    selected value bits. p and base_location are recorded so the matrix
    round-trips through the wire frame without side channels.
    """

    node_id: int
    round: int
    p: int
    base_location: int
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.uint8)
        if rows.ndim != 2 or rows.shape[1] != 2:
            raise ValueError(f"rows must have shape (P, 2), got {rows.shape}")
        if rows.size and rows.max() > 1:
            raise ValueError("rows must contain only bits")
        if not (2 <= self.base_location <= self.p):
            raise IndexError(
                f"base location {self.base_location} outside [2, {self.p}]"
            )
        self.rows = rows

    @property
    def param_count(self) -> int:
        return self.rows.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TwoBitUpdateMatrix):
            return NotImplemented
        return (
            self.node_id == other.node_id
            and self.round == other.round
            and self.p == other.p
            and self.base_location == other.base_location
            and np.array_equal(self.rows, other.rows)
        )


def location_for_row(base_location: int, row_index: int, p: int) -> int:
    """Effective bit location for one row: base + row, wrapped over [2, p]."""
    if not (2 <= base_location <= p):
        raise IndexError(f"base location {base_location} outside [2, {p}]")
    if row_index < 0:
        raise IndexError(f"row index must be non-negative, got {row_index}")
    return (base_location - 2 + row_index) % (p - 1) + 2


def locations_for_rows(base_location: int, count: int, p: int) -> np.ndarray:
    """Vectorized location_for_row over rows 0..count-1."""
    if not (2 <= base_location <= p):
        raise IndexError(f"base location {base_location} outside [2, {p}]")
    return (base_location - 2 + np.arange(count, dtype=np.int64)) % (p - 1) + 2


def map_update(
    update,
    cfg: FixedPointConfig,
    base_location: int,
    node_id: int = 0,
    round_index: int = 0,
) -> TwoBitUpdateMatrix:
    """Map a 1-D real update vector to its two-bit matrix.

    Row j pairs the sign of update[j] with the bit of its code at
    location_for_row(base_location, j, p). Deterministic: all the
    randomness lives in the server's location assignment.
    """
    values = np.asarray(update, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"update vector must be 1-D, got shape {values.shape}")
    signs, magnitudes = encode_array(values, cfg)
    locations = locations_for_rows(base_location, values.shape[0], cfg.p)
    value_bits = ((magnitudes >> (cfg.p - locations)) & 1).astype(np.uint8)
    rows = np.stack([signs, value_bits], axis=1)
    return TwoBitUpdateMatrix(
        node_id=node_id,
        round=round_index,
        p=cfg.p,
        base_location=base_location,
        rows=rows,
    )
