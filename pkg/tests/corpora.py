"""Shared corpora for the test suite.

Spec construction is pure, so specs are cached per seed to keep repeated
use across test modules cheap. The toy spec is small enough to decode by
hand; its marginals and boundary structure are asserted from first
principles in the unit tests.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

from swordsman import (
    Constituent,
    PlantedCorpusSpec,
    generate_spec,
    make_comparison_spec,
)


@lru_cache(maxsize=None)
def comparison(seed: int) -> PlantedCorpusSpec:
    return make_comparison_spec(seed)


@lru_cache(maxsize=None)
def generated(seed: int, weight_profile: str = "uniform") -> PlantedCorpusSpec:
    return generate_spec(seed, weight_profile=weight_profile)


def toy_spec() -> PlantedCorpusSpec:
    """Two tiny head-branching constituents over a vocabulary of 8.

    Region positions 2..6 after prompt (1, 2); mask id 7.

      span A = [2, 4]: (3,0,5) at 3/4 | (4,0,5) at 1/4
      span B = [5, 6]: (6,1)   at 2/3 | (2,1)   at 1/3

    Untouched marginals: position 2 is {3: 3/4, 4: 1/4}, positions 3 and 4
    are one-hot, position 5 is {6: 2/3, 2: 1/3}, position 6 is one-hot. The
    only positive entropy shift sits on the pair (4, 5), so the adaptive
    boundary lands exactly on A's planted end. The maximum likelihood
    completion is [3, 0, 5, 6, 1].
    """
    a = Constituent(
        start=2,
        realizations=((3, 0, 5), (4, 0, 5)),
        weights=(Fraction(3, 4), Fraction(1, 4)),
    )
    b = Constituent(
        start=5,
        realizations=((6, 1), (2, 1)),
        weights=(Fraction(2, 3), Fraction(1, 3)),
    )
    return PlantedCorpusSpec(
        vocab_size=8, mask_id=7, prompt=(1, 2), constituents=(a, b)
    )


def single_span_spec() -> PlantedCorpusSpec:
    """One constituent only: no internal boundaries to recall."""
    c = Constituent(
        start=1,
        realizations=((2, 3), (4, 3)),
        weights=(Fraction(1, 2), Fraction(1, 2)),
    )
    return PlantedCorpusSpec(vocab_size=6, mask_id=5, prompt=(0,), constituents=(c,))
