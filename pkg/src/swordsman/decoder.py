"""Block-wise decoding loops for masked-token models.

The main entry point is :func:`decode`, which repeats three phases until the
generation region is filled: query the model over the whole remaining masked
tail (a refresh), cut one block off the front of that tail, then fill the
block with threshold-gated parallel unmask steps. The distributions from the
refresh double as the block's first inner step, so a block of one step costs
no forward pass beyond its refresh.

:func:`decode_baseline_full_diffusion` fills the region one token per step
with no block structure, as a comparison arm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BackendFaultError,
    ConfigError,
    DecodeConfig,
    ModelBackend,
    PositionDistribution,
    SequenceState,
    apply_unmask,
    argmax_token,
    confidence,
)
from .entropy import block_mean_entropy, entropy_profile, entropy_shifts
from .partition import Block, PartitionState, adaptive_boundary, fixed_boundary, make_block
from .threshold import dynamic_tau, select_unmask
from .trace import DecodeTrace, TraceEvent, TraceSink


@dataclass(frozen=True)
class DecodeMetrics:
    """Per-run compute summary, reconstructible from the run's trace."""

    gen_len: int
    steps: int
    blocks: int
    forward_passes: int
    token_compute: int
    block_sizes: dict[int, int]

    @property
    def tokens_per_step(self) -> float:
        return self.gen_len / self.steps if self.steps else 0.0

    def to_dict(self) -> dict:
        return {
            "gen_len": self.gen_len,
            "steps": self.steps,
            "blocks": self.blocks,
            "forward_passes": self.forward_passes,
            "token_compute": self.token_compute,
            "tokens_per_step": self.tokens_per_step,
            "block_sizes": {str(k): self.block_sizes[k] for k in sorted(self.block_sizes)},
        }


@dataclass(frozen=True)
class DecodeResult:
    state: SequenceState
    metrics: DecodeMetrics
    trace: DecodeTrace

    @property
    def output(self) -> list[int]:
        return [int(t) for t in self.state.tokens[self.state.prompt_len :]]


def account_forward(
    cache_mode: str,
    prompt_len: int,
    decoded_len: int,
    block_span: int,
    remaining_span: int,
    kind: str,
) -> int:
    """Token positions processed by one forward pass under a cache policy.

    ``decoded_len`` counts generated tokens that sit before the current
    block. A refresh pass has no current block (``block_span`` must be 0)
    and covers the whole remaining tail. With no cache every pass covers
    the full sequence; a prefix cache skips prompt and decoded tokens; a
    dual cache additionally reuses the suffix between refreshes, so an
    inner block step touches only the block itself.
    """
    if kind not in ("refresh", "block_step"):
        raise ConfigError(f"unknown forward pass kind {kind!r}")
    if kind == "refresh" and block_span != 0:
        raise ConfigError("a refresh pass has no block span")
    if cache_mode == "none":
        return prompt_len + decoded_len + block_span + remaining_span
    if cache_mode == "prefix":
        return block_span + remaining_span
    if cache_mode == "dual":
        return remaining_span if kind == "refresh" else block_span
    raise ConfigError(f"unknown cache mode {cache_mode!r}")


def _validated_query(
    backend: ModelBackend, state: SequenceState, positions: list[int]
) -> dict[int, PositionDistribution]:
    dists = backend.query(state, positions)
    if set(dists) != set(positions):
        raise BackendFaultError(
            f"backend answered positions {sorted(dists)} for query {sorted(positions)}"
        )
    size = state.vocab.size
    for pos in positions:
        d = dists[pos]
        if not isinstance(d, PositionDistribution) or d.position != pos:
            raise BackendFaultError("backend returned a mislabeled distribution", position=pos)
        if d.probs.shape[0] != size:
            raise BackendFaultError(
                f"backend distribution has {d.probs.shape[0]} entries, vocab has {size}",
                position=pos,
            )
    return dists


def _emit(trace: DecodeTrace, sink: TraceSink | None, kind: str, payload: dict) -> None:
    event = TraceEvent(kind, payload)
    trace.append(event)
    if sink is not None:
        sink(event)


def _run_start_payload(
    state: SequenceState, config: DecodeConfig, algorithm: str
) -> dict:
    return {
        "algorithm": algorithm,
        "prompt_len": state.prompt_len,
        "gen_len": config.gen_len,
        "vocab_size": state.vocab.size,
        "mask_id": state.vocab.mask_id,
        "partition_mode": config.partition_mode,
        "fixed_block_size": config.fixed_block_size,
        "tau_min": config.tau_min,
        "threshold_mode": config.threshold_mode,
        "tau_fixed": config.tau_fixed,
        "tau_init": config.tau_init,
        "cache_mode": config.cache_mode,
        "seed": config.seed,
    }


def _refresh_payload(positions: list[int], values: np.ndarray) -> dict:
    return {
        "positions": len(positions),
        "start": positions[0],
        "end": positions[-1],
        "mean_entropy": float(np.mean(values)),
        "min_entropy": float(np.min(values)),
        "max_entropy": float(np.max(values)),
    }


def decode(
    backend: ModelBackend,
    prompt: list[int],
    config: DecodeConfig,
    sink: TraceSink | None = None,
) -> DecodeResult:
    """Fill ``config.gen_len`` masked positions after ``prompt``.

    Deterministic for a given backend and config. ``sink``, when given,
    receives each trace event as it is emitted. A zero-length generation
    returns the prompt unchanged with an empty trace.
    """
    state = SequenceState.initial(backend.vocab, prompt, config.gen_len)
    trace = DecodeTrace()
    if config.gen_len == 0:
        metrics = DecodeMetrics(0, 0, 0, 0, 0, {})
        return DecodeResult(state, metrics, trace)

    prompt_len = state.prompt_len
    region_end = prompt_len + config.gen_len - 1
    fixed_mode = config.threshold_mode == "fixed"
    # A fixed threshold of exactly 1.0 is the degenerate greedy regime:
    # nothing clears the gate, so every step takes the fallback token.
    tau_gate = math.inf if fixed_mode and config.tau_fixed == 1.0 else config.tau_fixed

    _emit(trace, sink, "run_start", _run_start_payload(state, config, "blockwise"))

    steps = 0
    blocks = 0
    token_compute = 0
    refreshes = 0
    block_sizes: dict[int, int] = {}
    part_state = PartitionState(next_start=prompt_len)

    while state.masked:
        remaining = state.masked_sorted()
        next_start = remaining[0]
        remaining_span = len(remaining)
        dists = _validated_query(backend, state, remaining)
        token_compute += account_forward(
            config.cache_mode, prompt_len, next_start - prompt_len, 0, remaining_span, "refresh"
        )
        refreshes += 1
        profile = entropy_profile([dists[p] for p in remaining])
        _emit(trace, sink, "refresh", _refresh_payload(remaining, profile.values))

        if config.partition_mode == "adaptive":
            shifts = entropy_shifts(profile)
            end, terminated, max_shift = adaptive_boundary(
                profile, shifts, config.tau_min, region_end
            )
        else:
            end = fixed_boundary(next_start, config.fixed_block_size, region_end)
            terminated, max_shift = False, None
        _emit(
            trace,
            sink,
            "boundary",
            {"position": end, "max_shift": max_shift, "terminated": terminated},
        )

        block, part_state = make_block(blocks + 1, next_start, end, profile, part_state)
        _emit(
            trace,
            sink,
            "block_start",
            {
                "index": block.index,
                "start": block.start,
                "end": block.end,
                "span": block.span,
                "mean_entropy": block.mean_entropy,
                "lam": block.lam,
            },
        )

        first_inner = True
        while any(p in state.masked for p in block.positions()):
            block_masked = [p for p in state.masked_sorted() if p <= block.end]
            if first_inner:
                block_dists = {p: dists[p] for p in block_masked}
                first_inner = False
            else:
                block_dists = _validated_query(backend, state, block_masked)
                token_compute += account_forward(
                    config.cache_mode,
                    prompt_len,
                    block.start - prompt_len,
                    block.span,
                    region_end - block.end,
                    "block_step",
                )
            block_profile = entropy_profile([block_dists[p] for p in block_masked])
            mean_now = block_mean_entropy(block_profile, block_masked)
            if fixed_mode:
                tau = tau_gate
            else:
                tau = dynamic_tau(config.tau_init, block.lam, mean_now, block.start_mean)
            confs = {p: confidence(block_dists[p]) for p in block_masked}
            chosen = select_unmask(confs, tau)
            fills = {p: argmax_token(block_dists[p]) for p in chosen}
            state = apply_unmask(state, fills)
            steps += 1
            ordered = sorted(chosen)
            _emit(
                trace,
                sink,
                "unmask_step",
                {
                    "step": steps,
                    "block": block.index,
                    "tau": tau,
                    "block_mean": mean_now,
                    "positions": ordered,
                    "tokens": [fills[p] for p in ordered],
                    "confidences": [confs[p] for p in ordered],
                },
            )

        _emit(trace, sink, "block_end", {"index": block.index})
        blocks += 1
        block_sizes[block.span] = block_sizes.get(block.span, 0) + 1

    forward_passes = refreshes + steps - blocks
    metrics = DecodeMetrics(
        config.gen_len, steps, blocks, forward_passes, token_compute, block_sizes
    )
    _emit(
        trace,
        sink,
        "run_end",
        {**metrics.to_dict(), "output": [int(t) for t in state.tokens[prompt_len:]]},
    )
    return DecodeResult(state, metrics, trace)


def decode_baseline_full_diffusion(
    backend: ModelBackend,
    prompt: list[int],
    gen_len: int,
    cache_mode: str = "none",
    sink: TraceSink | None = None,
) -> DecodeResult:
    """One token per step over the whole region, most confident first.

    The run is traced as a single block spanning the region so the same
    grammar and accounting identities hold: ``gen_len`` steps, one block,
    and ``gen_len`` forward passes.
    """
    config = DecodeConfig(gen_len=gen_len, cache_mode=cache_mode)
    state = SequenceState.initial(backend.vocab, prompt, gen_len)
    trace = DecodeTrace()
    if gen_len == 0:
        return DecodeResult(state, DecodeMetrics(0, 0, 0, 0, 0, {}), trace)

    prompt_len = state.prompt_len
    region_end = prompt_len + gen_len - 1
    _emit(trace, sink, "run_start", _run_start_payload(state, config, "full_diffusion"))

    remaining = state.masked_sorted()
    dists = _validated_query(backend, state, remaining)
    token_compute = account_forward(config.cache_mode, prompt_len, 0, 0, gen_len, "refresh")
    profile = entropy_profile([dists[p] for p in remaining])
    _emit(trace, sink, "refresh", _refresh_payload(remaining, profile.values))
    _emit(
        trace, sink, "boundary", {"position": region_end, "max_shift": None, "terminated": True}
    )
    _emit(
        trace,
        sink,
        "block_start",
        {
            "index": 1,
            "start": prompt_len,
            "end": region_end,
            "span": gen_len,
            "mean_entropy": float(np.mean(profile.values)),
            "lam": 0.0,
        },
    )

    steps = 0
    first_inner = True
    while state.masked:
        masked = state.masked_sorted()
        if first_inner:
            first_inner = False
        else:
            dists = _validated_query(backend, state, masked)
            token_compute += account_forward(
                config.cache_mode, prompt_len, 0, gen_len, 0, "block_step"
            )
        confs = {p: confidence(dists[p]) for p in masked}
        best = max(masked, key=lambda p: (confs[p], -p))
        token = argmax_token(dists[best])
        state = apply_unmask(state, {best: token})
        steps += 1
        _emit(
            trace,
            sink,
            "unmask_step",
            {
                "step": steps,
                "block": 1,
                "tau": None,
                "block_mean": None,
                "positions": [best],
                "tokens": [token],
                "confidences": [confs[best]],
            },
        )

    _emit(trace, sink, "block_end", {"index": 1})
    metrics = DecodeMetrics(gen_len, steps, 1, 1 + steps - 1, token_compute, {gen_len: 1})
    _emit(
        trace,
        sink,
        "run_end",
        {**metrics.to_dict(), "output": [int(t) for t in state.tokens[prompt_len:]]},
    )
    return DecodeResult(state, metrics, trace)
