"""Planted-constituent corpora: a synthetic model with exact marginals.

A corpus plants a sequence of contiguous constituents after a fixed prompt.
Each constituent carries a handful of weighted realizations (token strings of
equal length). The model's conditional distribution at a masked position is
the weight mixture over the realizations of that constituent which remain
compatible with every token already decoded inside its span. Constituents
are independent of one another, so marginals, entropies, and maximum
likelihood completions are all exactly computable. Weights are kept as
:class:`fractions.Fraction` internally and only converted to float at the
distribution surface, which makes specs round-trip through files bit for bit.

Two generators are provided. :func:`generate_spec` plants well-separated
constituents whose entropy profile is a spike at each constituent head and
zero inside, so boundary recovery has an unambiguous ground truth.
:func:`make_comparison_spec` builds a mixed corpus with regions that reward
adaptive partitioning and regions that punish a fixed block grid.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import (
    ConfigError,
    ContractViolationError,
    PositionDistribution,
    SequenceState,
    UnreachableStateError,
    Vocab,
)
from .entropy import EntropyProfile, entropy_profile

WeightLike = "Fraction | int | float | str"


def normalized_weights(raw: Sequence) -> tuple[Fraction, ...]:
    """Convert weights to exact fractions summing to exactly one.

    Floats are read as decimal literals (``0.42`` becomes ``21/50``), so a
    weight written in source text means what it says.
    """
    fracs = []
    for w in raw:
        if isinstance(w, float):
            w = Fraction(str(w))
        else:
            w = Fraction(w)
        if w <= 0:
            raise ConfigError(f"realization weights must be positive, got {w}")
        fracs.append(w)
    if not fracs:
        raise ConfigError("a constituent needs at least one realization weight")
    total = sum(fracs)
    return tuple(w / total for w in fracs)


@dataclass(frozen=True)
class Constituent:
    """One planted span: equally long realizations with exact weights."""

    start: int
    realizations: tuple[tuple[int, ...], ...]
    weights: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if not self.realizations:
            raise ConfigError("constituent has no realizations")
        if len(self.realizations) > 64:
            raise ConfigError("constituents are capped at 64 realizations")
        length = len(self.realizations[0])
        if length < 1:
            raise ConfigError("constituent realizations must be non-empty")
        for r in self.realizations:
            if len(r) != length:
                raise ConfigError("constituent realizations differ in length")
        if len(set(self.realizations)) != len(self.realizations):
            raise ConfigError("constituent realizations must be pairwise distinct")
        if len(self.weights) != len(self.realizations):
            raise ConfigError("one weight per realization is required")
        if any(w <= 0 for w in self.weights):
            raise ConfigError("realization weights must be positive")
        if sum(self.weights) != 1:
            raise ConfigError("realization weights must sum to exactly one")

    @property
    def length(self) -> int:
        return len(self.realizations[0])

    @property
    def end(self) -> int:
        return self.start + self.length - 1

    @property
    def ml_index(self) -> int:
        """Index of the maximum weight realization, lowest index on ties."""
        return max(range(len(self.weights)), key=lambda i: (self.weights[i], -i))


@dataclass(frozen=True)
class PlantedCorpusSpec:
    """A prompt plus ordered constituents tiling the generation region.

    ``seed`` records how the spec was generated (when it was) and plays no
    role in inference. Region length is capped at 2048 and branch counts at
    64 so every marginal stays brute-force enumerable in negligible time.
    """

    vocab_size: int
    mask_id: int
    prompt: tuple[int, ...]
    constituents: tuple[Constituent, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        vocab = Vocab(self.vocab_size, self.mask_id)
        if not self.prompt:
            raise ConfigError("corpus prompt must be non-empty")
        for t in self.prompt:
            if not 0 <= t < vocab.size or t == vocab.mask_id:
                raise ConfigError(f"prompt token {t} outside the non-mask alphabet")
        if not self.constituents:
            raise ConfigError("corpus has no constituents")
        cursor = len(self.prompt)
        for c in self.constituents:
            if c.start != cursor:
                raise ConfigError(
                    f"constituent at {c.start} breaks contiguity, expected {cursor}"
                )
            cursor = c.end + 1
            for r in c.realizations:
                for t in r:
                    if not 0 <= t < vocab.size or t == vocab.mask_id:
                        raise ConfigError(
                            f"realization token {t} outside the non-mask alphabet"
                        )
        if cursor - len(self.prompt) > 2048:
            raise ConfigError("corpus generation region is capped at 2048 positions")

    @property
    def prompt_len(self) -> int:
        return len(self.prompt)

    @property
    def gen_len(self) -> int:
        return sum(c.length for c in self.constituents)

    @property
    def region_end(self) -> int:
        return self.prompt_len + self.gen_len - 1

    @property
    def vocab(self) -> Vocab:
        return Vocab(self.vocab_size, self.mask_id)


def planted_boundaries(spec: PlantedCorpusSpec) -> tuple[int, ...]:
    """Absolute end position of every constituent, in order."""
    return tuple(c.end for c in spec.constituents)


def ml_completion(spec: PlantedCorpusSpec) -> list[int]:
    """The maximum likelihood filling of the generation region."""
    out: list[int] = []
    for c in spec.constituents:
        out.extend(c.realizations[c.ml_index])
    return out


def _mixture(
    c: Constituent, indices: Sequence[int], offset: int, vocab_size: int
) -> np.ndarray:
    total = Fraction(0)
    for i in indices:
        total += c.weights[i]
    # Aggregate per-token mass exactly; a single float conversion per token
    # keeps shared tokens at exactly 1.0 and every marginal correctly rounded.
    mass: dict[int, Fraction] = {}
    for i in indices:
        token = c.realizations[i][offset]
        mass[token] = mass.get(token, Fraction(0)) + c.weights[i]
    probs = np.zeros(vocab_size, dtype=np.float64)
    for token, weight in mass.items():
        probs[token] = float(weight / total)
    return probs


class SynthBackend:
    """Serves exact conditional marginals for a planted corpus.

    Distributions for untouched constituents are precomputed once and shared,
    so repeated whole-tail queries stay cheap. A query is a pure function of
    the visible tokens inside each constituent's span, so conditional
    marginals are memoized by that evidence signature; results never depend
    on query order.
    """

    def __init__(self, spec: PlantedCorpusSpec) -> None:
        self._spec = spec
        self._vocab = spec.vocab
        self._owner: dict[int, int] = {}
        for idx, c in enumerate(spec.constituents):
            for pos in range(c.start, c.end + 1):
                self._owner[pos] = idx
        self._untouched: dict[int, PositionDistribution] = {}
        for c in spec.constituents:
            everyone = range(len(c.realizations))
            for offset in range(c.length):
                pos = c.start + offset
                self._untouched[pos] = PositionDistribution(
                    pos, _mixture(c, everyone, offset, spec.vocab_size)
                )
        self._memo: dict[
            tuple[int, tuple[tuple[int, int], ...]],
            tuple[list[int], dict[int, PositionDistribution]],
        ] = {}

    @property
    def vocab(self) -> Vocab:
        return self._vocab

    def query(
        self, state: SequenceState, positions: Sequence[int]
    ) -> dict[int, PositionDistribution]:
        if state.vocab != self._vocab:
            raise ContractViolationError("state vocabulary does not match the corpus")
        by_constituent: dict[int, list[int]] = {}
        for pos in positions:
            if pos not in self._owner:
                raise ContractViolationError(f"position {pos} is outside the corpus")
            if pos not in state.masked:
                raise ContractViolationError(f"position {pos} is not masked")
            by_constituent.setdefault(self._owner[pos], []).append(pos)

        out: dict[int, PositionDistribution] = {}
        mask = self._vocab.mask_id
        for idx, wanted in by_constituent.items():
            c = self._spec.constituents[idx]
            span = state.tokens[c.start : c.end + 1]
            evidence = tuple((j, int(t)) for j, t in enumerate(span) if t != mask)
            if not evidence:
                for pos in wanted:
                    out[pos] = self._untouched[pos]
                continue
            entry = self._memo.get((idx, evidence))
            if entry is None:
                compatible = [
                    i
                    for i, r in enumerate(c.realizations)
                    if all(r[j] == t for j, t in evidence)
                ]
                if not compatible:
                    raise UnreachableStateError(
                        "decoded tokens match no realization of the constituent "
                        f"spanning [{c.start}, {c.end}]",
                        position=min(wanted),
                    )
                entry = (compatible, {})
                self._memo[(idx, evidence)] = entry
            compatible, known = entry
            for pos in wanted:
                dist = known.get(pos)
                if dist is None:
                    dist = PositionDistribution(
                        pos,
                        _mixture(c, compatible, pos - c.start, self._spec.vocab_size),
                    )
                    known[pos] = dist
                out[pos] = dist
        return out


def synth_distributions(
    spec: PlantedCorpusSpec,
    state: SequenceState | None = None,
    positions: Sequence[int] | None = None,
) -> dict[int, PositionDistribution]:
    """Exact marginals at masked positions, given any reachable state.

    With no ``state`` the fully masked region is assumed; with no
    ``positions`` every masked position is answered.
    """
    backend = SynthBackend(spec)
    if state is None:
        state = SequenceState.initial(spec.vocab, list(spec.prompt), spec.gen_len)
    if positions is None:
        positions = state.masked_sorted()
    return backend.query(state, positions)


# A planted corpus counts as well separated when boundary shifts dominate
# interior wobble by at least this factor.
SEPARABLE_RATIO = 10.0


@dataclass(frozen=True)
class BoundaryContrast:
    """How sharply constituent edges stand out of the entropy profile."""

    mean_boundary_shift: float
    mean_intra_shift: float
    ratio: float
    boundary_count: int
    intra_count: int

    @property
    def separable(self) -> bool:
        return self.ratio > SEPARABLE_RATIO


def boundary_contrast(
    spec: PlantedCorpusSpec,
    profile: "EntropyProfile | None" = None,
    epsilon: float = 1e-9,
) -> BoundaryContrast:
    """Contrast between entropy shifts at planted edges and inside spans.

    Shifts are taken on the fully masked profile (computed here unless one
    is passed in). A pair that crosses into a new constituent counts as a
    boundary shift (signed, so a weak edge hurts the mean). A pair leaving a
    constituent's first position is the onset drop and belongs to neither
    class. Everything else is an intra shift, counted in absolute value. The
    ratio divides mean boundary shift by mean intra shift, floored at
    ``epsilon`` so perfectly flat interiors report a finite number.
    """
    if len(spec.constituents) < 2:
        raise ContractViolationError("boundary contrast needs at least two constituents")
    if profile is None:
        dists = synth_distributions(spec)
        positions = sorted(dists)
        profile = entropy_profile([dists[p] for p in positions])
    positions = list(profile.positions)
    starts = {c.start for c in spec.constituents}
    boundary: list[float] = []
    intra: list[float] = []
    values = profile.values
    for k in range(len(positions) - 1):
        shift = float(values[k + 1] - values[k])
        left = positions[k]
        if left + 1 in starts:
            boundary.append(shift)
        elif left in starts:
            continue
        else:
            intra.append(abs(shift))
    mean_boundary = math.fsum(boundary) / len(boundary)
    mean_intra = math.fsum(intra) / len(intra) if intra else 0.0
    return BoundaryContrast(
        mean_boundary_shift=mean_boundary,
        mean_intra_shift=mean_intra,
        ratio=mean_boundary / max(mean_intra, epsilon),
        boundary_count=len(boundary),
        intra_count=len(intra),
    )


def _profile_weights(profile: str, branches: int) -> tuple[Fraction, ...]:
    if profile == "uniform":
        return (Fraction(1, branches),) * branches
    if profile == "tilted":
        q = Fraction(4, 5)
        raw = [q**i for i in range(branches)]
        return normalized_weights(raw)
    raise ConfigError(f"unknown weight profile {profile!r}")


def _sample_lengths(rng: random.Random, total: int, lo: int, hi: int) -> list[int]:
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad length range [{lo}, {hi}]")
    if not any(k * lo <= total <= k * hi for k in range(1, total // lo + 1)):
        raise ConfigError(f"no constituent lengths in [{lo}, {hi}] can tile {total}")
    lengths: list[int] = []
    remaining = total
    while remaining:
        options = [
            l
            for l in range(lo, min(hi, remaining) + 1)
            if remaining - l == 0 or remaining - l >= lo
        ]
        lengths.append(rng.choice(options))
        remaining -= lengths[-1]
    return lengths


def _head_constituent(
    rng: random.Random,
    start: int,
    length: int,
    branches: int,
    alphabet: int,
    weights: tuple[Fraction, ...],
) -> Constituent:
    """All realizations diverge at the first position and agree after it."""
    heads = rng.sample(range(alphabet), branches)
    body = [rng.randrange(alphabet) for _ in range(length - 1)]
    realizations = tuple(tuple([h] + body) for h in heads)
    return Constituent(start, realizations, weights)


def generate_spec(
    seed: int,
    *,
    gen_len: int = 512,
    prompt_len: int = 8,
    vocab_size: int = 64,
    branch_range: tuple[int, int] = (4, 16),
    length_range: tuple[int, int] = (3, 12),
    weight_profile: str = "uniform",
) -> PlantedCorpusSpec:
    """Plant well-separated constituents with spike-and-floor entropy.

    Every constituent's realizations share all tokens after the first, so
    the untouched profile is ``ln(branches)``-sized spikes at constituent
    heads (exactly that for uniform weights) and zero elsewhere. Branch
    counts are sorted in descending order so that, scanning any remaining
    tail, the largest entropy shift is always the nearest planted edge.
    """
    if gen_len < 1:
        raise ConfigError("generated corpora need a non-empty region")
    if prompt_len < 1:
        raise ConfigError("generated corpora need a non-empty prompt")
    lo_b, hi_b = branch_range
    if lo_b < 2:
        raise ConfigError("constituents need at least two branches")
    alphabet = vocab_size - 1
    if hi_b > alphabet:
        raise ConfigError("branch range exceeds the non-mask alphabet")
    rng = random.Random(seed)
    lengths = _sample_lengths(rng, gen_len, *length_range)
    branches = sorted((rng.randint(lo_b, hi_b) for _ in lengths), reverse=True)
    prompt = tuple(rng.randrange(alphabet) for _ in range(prompt_len))
    constituents = []
    cursor = prompt_len
    for length, b in zip(lengths, branches):
        weights = _profile_weights(weight_profile, b)
        constituents.append(_head_constituent(rng, cursor, length, b, alphabet, weights))
        cursor += length
    return PlantedCorpusSpec(vocab_size, vocab_size - 1, prompt, tuple(constituents), seed)


TRAP_WEIGHTS = normalized_weights(["0.42", "0.405", "0.03", "0.145"])
# Conditional split of every cascade dependent given the determiner.
CASCADE_SPLIT = (Fraction(4, 5), Fraction(1, 5))


def _trap_constituent(rng: random.Random, start: int, alphabet: int) -> Constituent:
    """A two-token span where committing the first position first misleads.

    The first position's marginal argmax belongs to the runner-up pair, while
    the second position (the anchor) has both the higher confidence and the
    maximum likelihood token. Decoded whole, anchor first, the span resolves
    to its most likely realization; cut in half, the orphaned first position
    commits the wrong token and drags its partner with it.
    """
    x, y, z, m, n, p = rng.sample(range(alphabet), 6)
    realizations = ((x, m), (y, n), (y, m), (z, p))
    return Constituent(start, realizations, TRAP_WEIGHTS)


def _opener_constituent(rng: random.Random, start: int, alphabet: int) -> Constituent:
    """Twelve flat 12-way columns and one shared token; length 13.

    The highest mean-entropy span in a comparison corpus. It decodes cheaply
    (one committed column pins the realization and the rest collapse) but
    its block mean anchors the hardness scale that later, easier blocks are
    measured against.
    """
    weights = _profile_weights("tilted", 12)
    columns = [rng.sample(range(alphabet), 12) for _ in range(12)]
    tail = rng.randrange(alphabet)
    realizations = tuple(
        tuple([columns[j][i] for j in range(12)] + [tail]) for i in range(12)
    )
    return Constituent(start, realizations, weights)


def _cascade_constituent(rng: random.Random, start: int, alphabet: int) -> Constituent:
    """Four dependents, one determiner, three shared tokens; length 8.

    The determiner is a 4-way tilted choice; each dependent splits 4/5 to
    1/5 on its own coin given the determiner, so knowing the determiner
    leaves every dependent at confidence 0.8 and the dependents stay
    mutually independent (committing one reveals nothing about the others).
    All 64 joint realizations are enumerated. Realization 0 (first branch,
    all majority coins) is the unique maximum likelihood filling.
    """
    det_weights = _profile_weights("tilted", 4)
    dep_tokens = [rng.sample(range(alphabet), 8) for _ in range(4)]
    det_tokens = rng.sample(range(alphabet), 4)
    tail = [rng.randrange(alphabet) for _ in range(3)]
    realizations = []
    weights = []
    for j in range(4):
        for coins in range(16):
            bits = [(coins >> (3 - i)) & 1 for i in range(4)]
            deps = [dep_tokens[i][2 * j + bits[i]] for i in range(4)]
            realizations.append(tuple(deps + [det_tokens[j]] + tail))
            w = det_weights[j]
            for bit in bits:
                w *= CASCADE_SPLIT[bit]
            weights.append(w)
    return Constituent(start, tuple(realizations), tuple(weights))


def _one_hot_constituent(rng: random.Random, start: int, length: int, alphabet: int) -> Constituent:
    tokens = tuple(rng.randrange(alphabet) for _ in range(length))
    return Constituent(start, (tokens,), (Fraction(1),))


def _nats(weights) -> float:
    return -math.fsum(float(w) * math.log(float(w)) for w in weights if w > 0)


@lru_cache(maxsize=1)
def _comparison_design_margins() -> dict[str, float]:
    """Structural constants of the comparison layout, checked once.

    The cascade's one-shot parallel step requires the decayed threshold to
    land below the dependents' post-determiner confidence (4/5) while the
    fixed threshold (0.9) stays above it; the boundary profile requires the
    dependent entropy to exceed the determiner's. Both margins follow from
    the weight tables alone, so a violation is a construction bug.
    """
    det = _profile_weights("tilted", 4)
    split_entropy = _nats(CASCADE_SPLIT)
    dep_entropy = _nats([w * c for w in det for c in CASCADE_SPLIT])
    det_entropy = _nats(det)
    cascade_mean = (4 * dep_entropy + det_entropy) / 8
    opener_mean = 12 * _nats(_profile_weights("tilted", 12)) / 13
    lam = 1.0 - cascade_mean / opener_mean
    ratio = split_entropy / cascade_mean
    tau = 0.9 * ((1.0 - lam) + lam * math.sqrt(ratio))
    margins = {
        "parallel_step_tau": tau,
        "dep_confidence": float(max(det) * CASCADE_SPLIT[0]),
        "dep_entropy": dep_entropy,
        "det_entropy": det_entropy,
    }
    assert tau < 0.8 - 0.01, f"cascade parallel step would not engage (tau {tau:.4f})"
    assert dep_entropy > det_entropy + 0.1, "cascade profile must fall toward its end"
    return margins


def make_comparison_spec(
    seed: int,
    *,
    gen_len: int = 512,
    prompt_len: int = 8,
    vocab_size: int = 48,
) -> PlantedCorpusSpec:
    """A mixed corpus for strategy comparisons.

    Layout, in order: one high-entropy opener span, fourteen cascade
    constituents, two runs of seventeen glued two-token traps, and
    deterministic filler. Every segment edge carries an entropy rise of at
    least one nat while interiors stay flat or fall, so adaptive
    partitioning peels segments off left to right and keeps each trap run
    in one piece, decoding every trap anchor-first into its maximum
    likelihood pair. The runs start at odd generation offsets and span more
    than 32 positions, so a 32-wide fixed grid always cuts at least one
    trap between its two positions and commits a non-maximum-likelihood
    pair there. Cascade dependents sit at confidence 4/5 once their
    determiner lands: below the fixed threshold, which unmasks them one per
    step, but above the entropy-tracking threshold once it decays, which
    takes all four in one step.
    """
    _comparison_design_margins()
    if gen_len < 384:
        raise ConfigError("comparison corpora are sized for at least 384 positions")
    if prompt_len < 1:
        raise ConfigError("comparison corpora need a non-empty prompt")
    alphabet = vocab_size - 1
    if alphabet < 12:
        raise ConfigError("comparison corpora need at least 12 non-mask tokens")
    rng = random.Random(seed)
    prompt = tuple(rng.randrange(alphabet) for _ in range(prompt_len))
    constituents: list[Constituent] = []
    cursor = prompt_len

    def place(c: Constituent) -> None:
        nonlocal cursor
        constituents.append(c)
        cursor = c.end + 1

    place(_opener_constituent(rng, cursor, alphabet))
    for _ in range(14):
        place(_cascade_constituent(rng, cursor, alphabet))

    for _ in range(2):
        # Trap runs must start at an odd generation offset: the first trap
        # positions then sweep every odd residue mod 32, so one trap per run
        # straddles a fixed-grid edge no matter how the grid falls.
        assert (cursor - prompt_len) % 2 == 1
        for _ in range(17):
            place(_trap_constituent(rng, cursor, alphabet))
        place(_one_hot_constituent(rng, cursor, 4, alphabet))

    remaining = gen_len - (cursor - prompt_len)
    for length in _sample_lengths(rng, remaining, 3, 30):
        place(_one_hot_constituent(rng, cursor, length, alphabet))

    return PlantedCorpusSpec(vocab_size, vocab_size - 1, prompt, tuple(constituents), seed)


SPEC_FORMAT = "planted-corpus-v1"


def save_spec(path, spec: PlantedCorpusSpec) -> None:
    """Write a spec as JSON with weights as exact rational strings."""
    doc = {
        "format": SPEC_FORMAT,
        "vocab_size": spec.vocab_size,
        "mask_id": spec.mask_id,
        "seed": spec.seed,
        "prompt": list(spec.prompt),
        "constituents": [
            {
                "start": c.start,
                "length": c.length,
                "realizations": [list(r) for r in c.realizations],
                "weights": [str(w) for w in c.weights],
            }
            for c in spec.constituents
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_spec(path) -> PlantedCorpusSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read corpus spec: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"corpus spec {path} is not JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != SPEC_FORMAT:
        raise ConfigError(f"not a {SPEC_FORMAT} document: {path}")
    try:
        constituents = tuple(
            Constituent(
                start=int(c["start"]),
                realizations=tuple(tuple(int(t) for t in r) for r in c["realizations"]),
                weights=tuple(Fraction(w) for w in c["weights"]),
            )
            for c in doc["constituents"]
        )
        seed = doc.get("seed")
        return PlantedCorpusSpec(
            vocab_size=int(doc["vocab_size"]),
            mask_id=int(doc["mask_id"]),
            prompt=tuple(int(t) for t in doc["prompt"]),
            constituents=constituents,
            seed=None if seed is None else int(seed),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed corpus spec {path}: {exc}") from None
