"""Shannon entropy over position distributions and entropy-shift profiles.

All entropies are in nats. Probabilities at or below ``ZERO_MASS`` are
treated as exactly zero so that one-hot vectors come out at exactly 0.0
and noise-floor entries cannot push a term negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ContractViolationError, PositionDistribution

ZERO_MASS = 1e-12


def _entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Row-wise -sum(p ln p) with the zero-mass convention.

    The p·ln(p) terms are computed vectorized, then each row is reduced with
    compensated summation. That makes the result independent of where the
    nonzero entries sit in the vector: permuting a distribution never moves
    its entropy by even one ulp, so equal-by-construction entropies compare
    equal and downstream tie-breaks stay deterministic.
    """
    probs = np.atleast_2d(probs)
    live = probs > ZERO_MASS
    safe = np.where(live, probs, 1.0)
    terms = safe * np.log(safe)
    # 0.0 - x rather than -x: a one-hot row sums to +0.0 and must stay
    # positive zero, or its serialized form would not round-trip.
    return np.array(
        [0.0 - math.fsum(terms[k][live[k]]) for k in range(len(probs))], dtype=np.float64
    )


def shannon_entropy(dist: PositionDistribution) -> float:
    """Entropy of one position's distribution, in nats.

    The result is always >= 0 and, for a well-formed vector over V tokens,
    at most ln V (up to float rounding).
    """
    return float(_entropy_rows(dist.probs)[0])


@dataclass(frozen=True)
class EntropyProfile:
    """Per-position entropies over a strictly ascending position window."""

    positions: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if len(values) != len(self.positions):
            raise ContractViolationError("profile positions and values differ in length")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.positions)

    def value_at(self, position: int) -> float:
        try:
            return float(self.values[self.positions.index(position)])
        except ValueError:
            raise ContractViolationError(f"position {position} not in profile") from None


@dataclass(frozen=True)
class ShiftProfile:
    """Forward differences of an entropy profile.

    Each pair ``(i, d)`` is the shift from position i to the next profiled
    position: d = H(next) - H(i). A length-1 profile yields no pairs.
    """

    pairs: tuple[tuple[int, float], ...]

    def __len__(self) -> int:
        return len(self.pairs)


def entropy_profile(dists: Sequence[PositionDistribution]) -> EntropyProfile:
    """Profile a window of distributions ordered by strictly ascending position."""
    positions = tuple(d.position for d in dists)
    for a, b in zip(positions, positions[1:]):
        if b <= a:
            raise ContractViolationError("profile positions must be strictly ascending")
    if not dists:
        return EntropyProfile((), np.zeros(0))
    matrix = np.stack([d.probs for d in dists])
    return EntropyProfile(positions, _entropy_rows(matrix))


def entropy_shifts(profile: EntropyProfile) -> ShiftProfile:
    """Forward entropy differences of a non-empty profile."""
    if len(profile) == 0:
        raise ContractViolationError("cannot take shifts of an empty profile")
    diffs = np.diff(profile.values)
    return ShiftProfile(
        tuple((profile.positions[i], float(diffs[i])) for i in range(len(diffs)))
    )


def block_mean_entropy(profile: EntropyProfile, block_positions: Iterable[int]) -> float:
    """Mean profile entropy over a non-empty subset of profiled positions."""
    wanted = set(block_positions)
    if not wanted:
        raise ContractViolationError("block positions must be non-empty")
    index = {p: i for i, p in enumerate(profile.positions)}
    missing = wanted - index.keys()
    if missing:
        raise ContractViolationError(
            f"position {min(missing)} not covered by the profile"
        )
    rows = sorted(index[p] for p in wanted)
    return math.fsum(profile.values[rows]) / len(rows)
