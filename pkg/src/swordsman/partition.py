"""Block partitioning: entropy-shift boundaries and per-block statistics.

A block is a contiguous run of still-masked positions. In adaptive mode the
right boundary is placed at the largest positive entropy shift in the
remaining region (the block keeps the shift position itself; the next block
starts right after). When no shift clears the floor the remainder is merged
into one final block and partitioning terminates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .core import ContractViolationError
from .entropy import EntropyProfile, ShiftProfile, block_mean_entropy


@dataclass(frozen=True)
class Block:
    """One decoding block plus the statistics the threshold schedule needs.

    ``mean_entropy`` is the block's mean profile entropy at creation time and
    ``start_mean`` records the same value as the schedule's reference point;
    ``lam`` is the block's threshold-decay weight in [0, 1].
    """

    index: int
    start: int
    end: int
    mean_entropy: float
    lam: float
    start_mean: float

    @property
    def span(self) -> int:
        return self.end - self.start + 1

    def positions(self) -> range:
        return range(self.start, self.end + 1)


@dataclass(frozen=True)
class PartitionState:
    """Running partition bookkeeping across blocks."""

    next_start: int
    max_mean_entropy: float = 0.0
    terminated: bool = False


def adaptive_boundary(
    profile: EntropyProfile,
    shifts: ShiftProfile,
    tau_min: float,
    last_position: int,
) -> tuple[int, bool, float | None]:
    """Pick the right boundary of the next block from an entropy-shift profile.

    Returns ``(end, terminated, max_shift)``. The boundary is the position of
    the largest shift if that shift reaches ``tau_min`` (ties break to the
    lowest position); otherwise the whole remainder becomes the final block
    and ``terminated`` is True. A single-position remainder has no shifts and
    reports ``max_shift`` as None.
    """
    if len(profile) == 0:
        raise ContractViolationError("adaptive boundary needs a non-empty profile")
    if not shifts.pairs:
        return last_position, True, None
    best_pos, best_shift = shifts.pairs[0]
    for pos, shift in shifts.pairs[1:]:
        if shift > best_shift:
            best_pos, best_shift = pos, shift
    if best_shift >= tau_min:
        return best_pos, False, best_shift
    return last_position, True, best_shift


def fixed_boundary(next_start: int, block_size: int, last_position: int) -> int:
    """Right boundary of a fixed-size block, clipped to the region end."""
    if block_size < 1:
        raise ContractViolationError(f"block size must be >= 1, got {block_size}")
    if next_start > last_position:
        raise ContractViolationError("next_start is past the end of the region")
    return min(next_start + block_size - 1, last_position)


def make_block(
    index: int,
    start: int,
    end: int,
    profile: EntropyProfile,
    state: PartitionState,
) -> tuple[Block, PartitionState]:
    """Build block ``[start, end]`` and roll the partition state forward.

    The block's decay weight is ``lam = 1 - mean / max_mean`` against the
    running maximum of block means (including this block, so the hardest
    block so far always gets lam = 0; an all-zero-entropy history keeps
    lam = 0 as well).
    """
    if end < start:
        raise ContractViolationError(f"block end {end} precedes start {start}")
    mean = block_mean_entropy(profile, range(start, end + 1))
    max_mean = max(state.max_mean_entropy, mean)
    lam = 0.0 if max_mean <= 0.0 else 1.0 - mean / max_mean
    block = Block(
        index=index,
        start=start,
        end=end,
        mean_entropy=mean,
        lam=lam,
        start_mean=mean,
    )
    new_state = replace(state, next_start=end + 1, max_mean_entropy=max_mean)
    return block, new_state
