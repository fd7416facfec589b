"""Differential-privacy accounting for the two-bit mechanism.

The mechanism reveals only the sign bit plus one uniformly selected
magnitude bit, which makes it ln(p / (p - 2))-differentially private
with delta identically zero. This module computes that epsilon, and
verifies the bound by exhaustively enumerating the mechanism's output
probabilities under the randomization model behind the guarantee: two
codes differing in exactly one magnitude bit, all other magnitude bits
i.i.d. uniform, and the selected location uniform over [2, p]. All
enumeration runs in exact rational arithmetic; floats appear only in
the final epsilon conversion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .fixedpoint import SignedFixedPoint

# 2^(p-2) * (p-1) enumerated states; p=16 is ~250k, still instant.
MAX_ENUM_WIDTH = 16


@dataclass(frozen=True)
class PrivacyReport:
    """Privacy level of the two-bit mechanism at width p."""

    p: int
    epsilon: float
    delta: float
    verified: bool


@dataclass(frozen=True)
class OutputDistribution:
    """Exact output probabilities of one code over the four (sign, bit) pairs."""

    probabilities: dict[tuple[int, int], Fraction]

    def __post_init__(self):
        total = sum(self.probabilities.values(), Fraction(0))
        if total != 1:
            raise ValueError(f"probabilities must sum to 1, got {total}")

    def __getitem__(self, output: tuple[int, int]) -> Fraction:
        return self.probabilities[output]


@dataclass(frozen=True)
class ModelProbabilities:
    """Enumerated output probabilities for a neighboring code pair.

    Keyed by the differing bit's value d in the first code: output_zero[d]
    and output_one[d] are the probabilities that the mechanism emits
    value bit 0 or 1 for that code; neighbor_* are the same for the code
    with the differing bit flipped.
    """

    p: int
    output_zero: dict[int, Fraction]
    output_one: dict[int, Fraction]
    neighbor_zero: dict[int, Fraction]
    neighbor_one: dict[int, Fraction]


def epsilon_theoretical(p: int) -> float:
    """The mechanism's epsilon at width p: ln(p / (p - 2))."""
    if not isinstance(p, int) or p < 3:
        raise ValueError(f"epsilon requires an integer width p >= 3, got {p!r}")
    return math.log(p / (p - 2))


def output_distribution(code: SignedFixedPoint) -> OutputDistribution:
    """Exact output distribution for a concrete code under uniform selection.

    Each magnitude location is selected with probability 1 / (p - 1), so
    the value-bit probabilities are plain bit-count fractions; outputs
    carrying the other sign have probability zero.
    """
    width = code.p - 1
    ones = sum(code.magnitude_bits)
    probs = {
        (code.sign, 1): Fraction(ones, width),
        (code.sign, 0): Fraction(width - ones, width),
        (1 - code.sign, 1): Fraction(0),
        (1 - code.sign, 0): Fraction(0),
    }
    return OutputDistribution(probs)


def enumerate_model_probabilities(p: int) -> ModelProbabilities:
    """Exhaustively enumerate the randomization model's output probabilities.

    The differing bit sits at location p without loss of generality (the
    selection is uniform, so the location of the difference is
    irrelevant); the remaining p - 2 magnitude bits range over all
    assignments with equal weight.
    """
    if not isinstance(p, int) or not (4 <= p <= MAX_ENUM_WIDTH):
        raise ValueError(
            f"enumeration supports widths in [4, {MAX_ENUM_WIDTH}], got {p!r}"
        )
    n_free = p - 2
    atom = Fraction(1, (p - 1) * 2**n_free)
    output_zero = {0: Fraction(0), 1: Fraction(0)}
    output_one = {0: Fraction(0), 1: Fraction(0)}
    neighbor_zero = {0: Fraction(0), 1: Fraction(0)}
    neighbor_one = {0: Fraction(0), 1: Fraction(0)}
    for differing in (0, 1):
        for free_bits in itertools.product((0, 1), repeat=n_free):
            code_bits = free_bits + (differing,)
            neighbor_bits = free_bits + (1 - differing,)
            for loc_idx in range(p - 1):
                if code_bits[loc_idx] == 1:
                    output_one[differing] += atom
                else:
                    output_zero[differing] += atom
                if neighbor_bits[loc_idx] == 1:
                    neighbor_one[differing] += atom
                else:
                    neighbor_zero[differing] += atom
    return ModelProbabilities(p, output_zero, output_one, neighbor_zero, neighbor_one)


def worst_case_ratio(p: int) -> Fraction:
    """Largest output-probability ratio between neighbors, exact.

    Maximizes Pr[output | code] / Pr[output | neighbor] over both output
    values and both values of the differing bit. Equals p / (p - 2) for
    every valid width.
    """
    probs = enumerate_model_probabilities(p)
    ratios = []
    for d in (0, 1):
        for mine, theirs in (
            (probs.output_zero[d], probs.neighbor_zero[d]),
            (probs.output_one[d], probs.neighbor_one[d]),
        ):
            if theirs == 0:
                raise ArithmeticError("model probabilities are never zero for p >= 4")
            ratios.append(mine / theirs)
    return max(ratios)


def pair_ratio(x: SignedFixedPoint, x_bar: SignedFixedPoint):
    """Worst output-probability ratio for two concrete neighboring codes.

    Diagnostic only: with the magnitude bits fixed rather than
    randomized, a ratio can exceed the randomized-model bound or be
    unbounded (returned as math.inf) when the neighbor never produces
    an output the code can produce.
    """
    if x.p != x_bar.p:
        raise ValueError("codes must share a width")
    if x.sign != x_bar.sign:
        raise ValueError("neighboring codes share the sign bit")
    differing = sum(
        a != b for a, b in zip(x.magnitude_bits, x_bar.magnitude_bits)
    )
    if differing != 1:
        raise ValueError(
            f"neighboring codes differ in exactly one magnitude bit, got {differing}"
        )
    dist_x = output_distribution(x)
    dist_bar = output_distribution(x_bar)
    worst: Fraction | float = Fraction(0)
    for output, p_x in dist_x.probabilities.items():
        p_bar = dist_bar[output]
        if p_x == 0:
            continue
        if p_bar == 0:
            return math.inf
        worst = max(worst, p_x / p_bar)
    return worst


def privacy_report(p: int) -> PrivacyReport:
    """Epsilon, delta, and (for enumerable widths) oracle verification."""
    epsilon = epsilon_theoretical(p)
    verified = False
    if 4 <= p <= MAX_ENUM_WIDTH:
        verified = worst_case_ratio(p) == Fraction(p, p - 2)
    return PrivacyReport(p=p, epsilon=epsilon, delta=0.0, verified=verified)
