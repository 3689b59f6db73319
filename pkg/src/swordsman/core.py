"""Core value types and the model-backend contract.

Everything downstream (entropy profiling, partitioning, the decode loop)
works in terms of the small immutable types defined here: a vocabulary with
a reserved mask id, a sequence state whose masked set mirrors the mask
sentinel exactly, and per-position probability vectors in float64.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

# A probability vector may miss 1.0 by at most this much before the backend
# that produced it is considered broken.
PROB_SUM_TOL = 1e-5


class ContractViolationError(ValueError):
    """An operation was called outside its stated preconditions."""


class ConfigError(ValueError):
    """A run configuration is invalid (CLI exit code 2)."""


class BackendFaultError(RuntimeError):
    """A model backend violated its contract (CLI exit code 3)."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)
        self.position = position


class UnreachableStateError(BackendFaultError):
    """The decoded tokens are jointly impossible under the model."""


@dataclass(frozen=True)
class Vocab:
    """Token id space ``[0, size)`` with one id reserved as the mask sentinel."""

    size: int
    mask_id: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ContractViolationError(f"vocab size must be >= 2, got {self.size}")
        if not 0 <= self.mask_id < self.size:
            raise ContractViolationError(
                f"mask id {self.mask_id} outside vocab of size {self.size}"
            )


def _frozen_array(values: Iterable[int] | np.ndarray, dtype=np.int64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SequenceState:
    """Immutable snapshot of a partially decoded sequence.

    ``tokens`` holds the full sequence (prompt + generation region); a
    position is in ``masked`` if and only if its token is the mask sentinel.
    Prompt positions are never masked.
    """

    vocab: Vocab
    prompt_len: int
    tokens: np.ndarray
    masked: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", _frozen_array(self.tokens))
        if not 0 < self.prompt_len <= len(self.tokens):
            raise ContractViolationError(
                f"prompt length {self.prompt_len} invalid for {len(self.tokens)} tokens"
            )
        for p in self.masked:
            if not self.prompt_len <= p < len(self.tokens):
                raise ContractViolationError(f"masked position {p} outside generation region")
        mask_positions = frozenset(int(p) for p in np.flatnonzero(self.tokens == self.vocab.mask_id))
        if mask_positions != self.masked:
            raise ContractViolationError("masked set does not mirror mask-token positions")
        bad = [int(t) for t in self.tokens if not 0 <= t < self.vocab.size]
        if bad:
            raise ContractViolationError(f"token id {bad[0]} outside vocab of size {self.vocab.size}")

    @property
    def gen_len(self) -> int:
        return len(self.tokens) - self.prompt_len

    def masked_sorted(self) -> list[int]:
        return sorted(self.masked)

    @staticmethod
    def initial(vocab: Vocab, prompt: Sequence[int], gen_len: int) -> "SequenceState":
        """Fully masked starting state: the prompt followed by ``gen_len`` masks."""
        prompt = list(int(t) for t in prompt)
        if not prompt:
            raise ConfigError("prompt must be non-empty")
        if any(t == vocab.mask_id for t in prompt):
            raise ConfigError("prompt may not contain the mask id")
        if any(not 0 <= t < vocab.size for t in prompt):
            raise ConfigError("prompt token outside the vocabulary")
        if gen_len < 0:
            raise ContractViolationError(f"generation length must be >= 0, got {gen_len}")
        tokens = prompt + [vocab.mask_id] * gen_len
        masked = frozenset(range(len(prompt), len(prompt) + gen_len))
        return SequenceState(vocab, len(prompt), _frozen_array(tokens), masked)


@dataclass(frozen=True)
class PositionDistribution:
    """Next-token distribution for one masked position, in float64.

    Entries must be non-negative and sum to 1 within ``PROB_SUM_TOL``.
    Instances are immutable; the probs array is read-only.
    """

    position: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or len(probs) == 0:
            raise ContractViolationError("probs must be a non-empty 1-d vector")
        if np.any(probs < 0.0):
            raise ContractViolationError(
                f"negative probability at position {self.position}"
            )
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ContractViolationError(
                f"probabilities at position {self.position} sum to {total!r}"
            )
        if not probs.flags.writeable and probs is self.probs:
            return
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


def confidence(dist: PositionDistribution) -> float:
    """Largest single-token probability, the usual unmasking confidence score."""
    return float(dist.probs.max())


def argmax_token(dist: PositionDistribution) -> int:
    """Most likely token id; ties break to the lowest id."""
    return int(dist.probs.argmax())


def apply_unmask(state: SequenceState, fills: Mapping[int, int]) -> SequenceState:
    """Commit token ids at masked positions, returning the successor state.

    Every key must currently be masked and every value must be a real token
    (in range, not the mask id). Raises ContractViolationError otherwise.
    """
    if not fills:
        return state
    for pos, tok in fills.items():
        if pos not in state.masked:
            raise ContractViolationError(f"position {pos} is not masked")
        if not 0 <= tok < state.vocab.size:
            raise ContractViolationError(f"token id {tok} outside vocab at position {pos}")
        if tok == state.vocab.mask_id:
            raise ContractViolationError(f"cannot fill position {pos} with the mask id")
    tokens = state.tokens.copy()
    for pos, tok in fills.items():
        tokens[pos] = tok
    return SequenceState(
        vocab=state.vocab,
        prompt_len=state.prompt_len,
        tokens=tokens,
        masked=state.masked - frozenset(fills),
    )


class ModelBackend(Protocol):
    """Anything that can score masked positions of a sequence.

    ``query`` must return exactly one distribution per requested position,
    keyed by position, and must be deterministic in (state, positions).
    The full sequence is always presented; ``positions`` only restricts
    which marginals are computed.
    """

    @property
    def vocab(self) -> Vocab: ...

    def query(
        self, state: SequenceState, positions: Sequence[int]
    ) -> dict[int, PositionDistribution]: ...


PARTITION_MODES = ("fixed", "adaptive")
THRESHOLD_MODES = ("fixed", "dynamic")
CACHE_MODES = ("none", "prefix", "dual")


@dataclass(frozen=True)
class DecodeConfig:
    """Knobs for one decode run.

    ``gen_len == 0`` is accepted at the library level (identity decode); the
    command-line front end additionally requires it to be positive.
    """

    gen_len: int
    partition_mode: str = "adaptive"
    fixed_block_size: int = 32
    tau_min: float = 0.1
    threshold_mode: str = "dynamic"
    tau_fixed: float = 0.9
    tau_init: float = 0.9
    cache_mode: str = "none"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gen_len < 0:
            raise ConfigError(f"gen_len must be >= 0, got {self.gen_len}")
        if self.partition_mode not in PARTITION_MODES:
            raise ConfigError(f"unknown partition mode {self.partition_mode!r}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.cache_mode not in CACHE_MODES:
            raise ConfigError(f"unknown cache mode {self.cache_mode!r}")
        if self.fixed_block_size < 1:
            raise ConfigError("fixed block size must be >= 1")
        if self.partition_mode == "fixed":
            if self.gen_len and self.fixed_block_size > self.gen_len:
                raise ConfigError(
                    f"fixed block size {self.fixed_block_size} exceeds gen_len {self.gen_len}"
                )
        if not self.tau_min >= 0.0:
            raise ConfigError("tau_min must be non-negative")
        for name in ("tau_fixed", "tau_init"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        if not -(2**63) <= self.seed < 2**63:
            raise ConfigError("seed must fit in 64 bits")
