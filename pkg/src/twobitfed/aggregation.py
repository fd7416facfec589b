"""Server-side bit assignment, majority voting, and reconstruction.

Per round the server hands every node one base bit location. Received
two-bit rows are grouped per parameter by (effective location, sign);
each group's value bits are majority-voted per location (ties and
unfilled locations resolve to 0), the voted bits are assembled into one
non-negative magnitude per sign group, both magnitudes are rescaled by
m / 2^(p-1), and the parameter's update is the node-count-weighted
average of the positive value and the negated negative value. The scale
bound m is then refreshed from the largest group magnitude seen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import FixedPointConfig
from .mapping import TwoBitUpdateMatrix, locations_for_rows

M_FLOOR_DEFAULT = 1e-6


@dataclass(frozen=True)
class BitAssignment:
    """Round's mapping node_id -> base bit location in [2, p]."""

    round: int
    base_locations: dict[int, int]


@dataclass
class GlobalModelState:
    """Server-held model: flat weights, scale bound m, round counter."""

    weights: np.ndarray
    m: float
    round: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError(f"weights must be a flat vector, got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if not (self.m > 0 and np.isfinite(self.m)):
            raise ValueError(f"scale bound m must be positive and finite, got {self.m!r}")


@dataclass
class VoteTally:
    """Per-parameter vote counts: ones/total per location per sign group.

    Arrays are indexed by location - 2 and have length p - 1. n_pos and
    n_neg count the reporting nodes whose sign bit put them in each
    group for this parameter.
    """

    p: int
    pos_ones: np.ndarray
    pos_total: np.ndarray
    neg_ones: np.ndarray
    neg_total: np.ndarray
    n_pos: int
    n_neg: int

    def __post_init__(self):
        for name in ("pos_ones", "pos_total", "neg_ones", "neg_total"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (self.p - 1,):
                raise ValueError(f"{name} must have length p - 1 = {self.p - 1}")
            setattr(self, name, arr)
        if np.any(self.pos_ones > self.pos_total) or np.any(self.neg_ones > self.neg_total):
            raise ValueError("ones counts cannot exceed totals")
        if min(self.pos_ones.min(initial=0), self.neg_ones.min(initial=0)) < 0:
            raise ValueError("counts must be non-negative")

    @classmethod
    def from_contributions(cls, contributions, p: int) -> "VoteTally":
        """Build a tally from (location, sign, bit) triples of one parameter."""
        pos_ones = np.zeros(p - 1, dtype=np.int64)
        pos_total = np.zeros(p - 1, dtype=np.int64)
        neg_ones = np.zeros(p - 1, dtype=np.int64)
        neg_total = np.zeros(p - 1, dtype=np.int64)
        n_pos = n_neg = 0
        for location, sign, bit in contributions:
            if not (2 <= location <= p):
                raise IndexError(f"location {location} outside [2, {p}]")
            idx = location - 2
            if sign == 1:
                pos_total[idx] += 1
                pos_ones[idx] += bit
                n_pos += 1
            else:
                neg_total[idx] += 1
                neg_ones[idx] += bit
                n_neg += 1
        return cls(p, pos_ones, pos_total, neg_ones, neg_total, n_pos, n_neg)


def assign_locations(n: int, p: int, rng_seed, round_index: int = 0) -> BitAssignment:
    """Randomly assign base locations to nodes 0..n-1.

    With n >= p-1 every magnitude location 2..p is covered: the first
    p-1 nodes receive a random permutation of all locations and the rest
    draw uniformly. With fewer nodes the assigned locations are a
    uniform sample without replacement. Deterministic given the seed.
    """
    if n < 1:
        raise ValueError(f"need at least one node, got {n}")
    if p < 4:
        raise ValueError(f"bit width must be at least 4, got {p}")
    rng = np.random.default_rng(rng_seed)
    locations = np.arange(2, p + 1)
    if n >= p - 1:
        base = rng.permutation(locations)
        extra = rng.integers(2, p + 1, size=n - (p - 1))
        assigned = np.concatenate([base, extra])
    else:
        assigned = rng.choice(locations, size=n, replace=False)
    return BitAssignment(
        round=round_index,
        base_locations={node: int(loc) for node, loc in enumerate(assigned)},
    )


def vote_bit(bits) -> int:
    """Majority vote over a collection of bits; ties and empty give 0."""
    ones = 0
    total = 0
    for b in bits:
        ones += b
        total += 1
    return 1 if 2 * ones > total else 0


def _group_magnitude(ones: np.ndarray, total: np.ndarray, p: int) -> int:
    """Assemble voted bits (location order 2..p) into one integer."""
    value = 0
    for idx in range(p - 1):
        value <<= 1
        if 2 * int(ones[idx]) > int(total[idx]):
            value |= 1
    return value


def reconstruct_parameter(tally: VoteTally, cfg: FixedPointConfig) -> float:
    """One parameter's reconstructed real update from its vote tally.

    Votes each sign group's bits per location, assembles a positive and
    a negative magnitude (absent groups are all-zero), rescales both by
    m / 2^(p-1), and returns the group-size-weighted average with the
    negative value negated.
    """
    if tally.p != cfg.p:
        raise ValueError(f"tally width {tally.p} does not match config width {cfg.p}")
    reporting = tally.n_pos + tally.n_neg
    if reporting < 1:
        raise ValueError("cannot reconstruct a parameter no node reported")
    pos_value = (_group_magnitude(tally.pos_ones, tally.pos_total, cfg.p) * cfg.m) / cfg.scale
    neg_value = (_group_magnitude(tally.neg_ones, tally.neg_total, cfg.p) * cfg.m) / cfg.scale
    return (tally.n_pos * pos_value + tally.n_neg * (-neg_value)) / reporting


def _validate_round_inputs(updates, assignment, state, cfg):
    if not updates:
        raise ValueError("cannot aggregate an empty update set")
    param_count = state.weights.shape[0]
    round_index = state.round
    seen = set()
    for u in updates:
        if u.p != cfg.p:
            raise ValueError(f"update from node {u.node_id} has width {u.p}, expected {cfg.p}")
        if u.param_count != param_count:
            raise ValueError(
                f"update from node {u.node_id} has {u.param_count} rows, expected {param_count}"
            )
        if u.round != round_index:
            raise ValueError(
                f"update from node {u.node_id} is for round {u.round}, server is at {round_index}"
            )
        if u.node_id in seen:
            raise ValueError(f"duplicate update from node {u.node_id}")
        seen.add(u.node_id)
        base = assignment.base_locations.get(u.node_id)
        if base is None:
            raise ValueError(f"node {u.node_id} missing from the bit assignment")
        if base != u.base_location:
            raise ValueError(
                f"node {u.node_id} used base location {u.base_location}, assigned {base}"
            )


def aggregate_round(
    updates,
    assignment: BitAssignment,
    state: GlobalModelState,
    cfg: FixedPointConfig,
    payload: str = "delta",
    m_mode: str = "monotone",
    m_floor: float = M_FLOOR_DEFAULT,
) -> GlobalModelState:
    """Fold one round of two-bit updates into a new global state.

    With payload="delta" the reconstructed vector is added to the
    current weights; with payload="weights" it replaces them. m_mode
    "monotone" keeps m at the max of its old value and the round's
    largest group magnitude; "adaptive" tracks the round max directly,
    clamped below by m_floor. Deterministic and symmetric in the nodes.
    """
    if payload not in ("delta", "weights"):
        raise ValueError(f"unknown payload kind {payload!r}")
    if m_mode not in ("monotone", "adaptive"):
        raise ValueError(f"unknown m mode {m_mode!r}")
    _validate_round_inputs(updates, assignment, state, cfg)

    p = cfg.p
    param_count = state.weights.shape[0]
    n_updates = len(updates)

    pos_ones = np.zeros((param_count, p - 1), dtype=np.int64)
    pos_total = np.zeros((param_count, p - 1), dtype=np.int64)
    neg_ones = np.zeros((param_count, p - 1), dtype=np.int64)
    neg_total = np.zeros((param_count, p - 1), dtype=np.int64)
    n_pos = np.zeros(param_count, dtype=np.int64)

    row_idx = np.arange(param_count)
    for u in updates:
        loc_idx = locations_for_rows(u.base_location, param_count, p) - 2
        signs = u.rows[:, 0].astype(bool)
        bits = u.rows[:, 1].astype(np.int64)
        # Within one update each parameter appears once, so plain fancy
        # indexing (no np.add.at) is safe for the scatter-adds.
        pos_rows, pos_locs = row_idx[signs], loc_idx[signs]
        neg_rows, neg_locs = row_idx[~signs], loc_idx[~signs]
        pos_total[pos_rows, pos_locs] += 1
        pos_ones[pos_rows, pos_locs] += bits[signs]
        neg_total[neg_rows, neg_locs] += 1
        neg_ones[neg_rows, neg_locs] += bits[~signs]
        n_pos += signs

    n_neg = n_updates - n_pos

    bit_weights = 1 << (p - 2 - np.arange(p - 1, dtype=np.int64))
    pos_mag = ((2 * pos_ones > pos_total).astype(np.int64) @ bit_weights)
    neg_mag = ((2 * neg_ones > neg_total).astype(np.int64) @ bit_weights)
    pos_value = (pos_mag * cfg.m) / cfg.scale
    neg_value = (neg_mag * cfg.m) / cfg.scale
    reconstructed = (n_pos * pos_value + n_neg * (-neg_value)) / n_updates

    round_max = float(max(pos_value.max(initial=0.0), neg_value.max(initial=0.0)))
    if m_mode == "monotone":
        new_m = max(state.m, round_max)
    else:
        new_m = max(round_max, m_floor)

    if payload == "delta":
        new_weights = state.weights + reconstructed
    else:
        new_weights = reconstructed

    return GlobalModelState(weights=new_weights, m=new_m, round=state.round + 1)
