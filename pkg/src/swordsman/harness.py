"""Experiment harness: metrics reconstruction, the strategy matrix, analysis.

This module owns everything operational that is not the decode loop itself:
rebuilding metrics from a trace (the cross-check behind trace validation),
the four-arm strategy comparison matrix over generated corpora, per-run
boundary recall against planted ground truth, aligned-text tables, and the
per-refresh entropy-profile replay behind the analysis command.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .core import ConfigError, DecodeConfig, ModelBackend, SequenceState, apply_unmask
from .decoder import DecodeResult, account_forward, decode, decode_baseline_full_diffusion
from .entropy import entropy_profile
from .synth import PlantedCorpusSpec, SynthBackend, make_comparison_spec, ml_completion, planted_boundaries
from .trace import DecodeTrace, TraceEvent, TraceError, validate_trace


def recompute_metrics(events) -> dict:
    """Rebuild the run's metrics dict from its events alone.

    Uses only event payloads plus the cache accounting rules, so comparing
    the result against the emitted metrics document proves the document and
    the trace agree. Assumes a grammatical trace (see validate_trace).
    """
    events = list(events)
    if not events or events[0].kind != "run_start":
        raise TraceError("metrics reconstruction needs a trace opening with run_start")
    start = events[0].payload
    prompt_len = start["prompt_len"]
    gen_len = start["gen_len"]
    cache = start["cache_mode"]
    region_end = prompt_len + gen_len - 1

    steps = 0
    blocks = 0
    refreshes = 0
    token_compute = 0
    block_sizes: dict[int, int] = {}
    block = None
    first_step = False
    fills: dict[int, int] = {}
    for event in events[1:]:
        if event.kind == "refresh":
            refreshes += 1
            token_compute += account_forward(
                cache,
                prompt_len,
                event.payload["start"] - prompt_len,
                0,
                event.payload["positions"],
                "refresh",
            )
        elif event.kind == "block_start":
            blocks += 1
            block = event.payload
            first_step = True
            span = block["end"] - block["start"] + 1
            block_sizes[span] = block_sizes.get(span, 0) + 1
        elif event.kind == "unmask_step":
            steps += 1
            fills.update(zip(event.payload["positions"], event.payload["tokens"]))
            if first_step:
                first_step = False  # served by the refresh pass
            else:
                span = block["end"] - block["start"] + 1
                token_compute += account_forward(
                    cache,
                    prompt_len,
                    block["start"] - prompt_len,
                    span,
                    region_end - block["end"],
                    "block_step",
                )
    if sorted(fills) != list(range(prompt_len, prompt_len + gen_len)):
        raise TraceError("unmask steps do not cover the generation region exactly")
    return {
        "gen_len": gen_len,
        "steps": steps,
        "blocks": blocks,
        "forward_passes": refreshes + steps - blocks,
        "token_compute": token_compute,
        "tokens_per_step": gen_len / steps if steps else 0.0,
        "block_sizes": {str(k): block_sizes[k] for k in sorted(block_sizes)},
        "output": [fills[p] for p in range(prompt_len, prompt_len + gen_len)],
    }


def check_trace_consistency(events) -> dict:
    """Grammar-validate a trace and confirm its run_end metrics recompute.

    Returns the recomputed metrics dict; raises TraceError on any mismatch.
    """
    events = list(events)
    validate_trace(events)
    recomputed = recompute_metrics(events)
    reported = dict(events[-1].payload)
    for key, value in recomputed.items():
        if reported.get(key) != value:
            raise TraceError(
                f"run_end reports {key}={reported.get(key)!r}, events give {value!r}"
            )
    return recomputed


def first_divergence(a, b) -> int | None:
    """Index of the first differing event between two traces, None if equal."""
    a = list(a)
    b = list(b)
    for i, (ea, eb) in enumerate(zip(a, b)):
        if ea.kind != eb.kind or ea.payload != eb.payload:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


# The four strategy arms of the standard comparison, in table order.
ARM_NAMES = ("full_diffusion", "sequential", "fixed_parallel", "adaptive_dynamic")


def arm_config(
    arm: str,
    gen_len: int,
    cache_mode: str = "none",
    tau_init: float = 0.9,
    tau_fixed: float = 0.9,
    seed: int = 0,
) -> DecodeConfig | None:
    """DecodeConfig for a named arm; None means the full-diffusion baseline.

    sequential is the fixed grid with the threshold pinned at 1.0, which
    degrades every step to the single-token fallback; fixed_parallel is the
    fixed grid with a working threshold; adaptive_dynamic is the full method.
    """
    if arm == "full_diffusion":
        return None
    if arm == "sequential":
        return DecodeConfig(
            gen_len=gen_len,
            partition_mode="fixed",
            fixed_block_size=min(32, gen_len) if gen_len else 32,
            threshold_mode="fixed",
            tau_fixed=1.0,
            cache_mode=cache_mode,
            seed=seed,
        )
    if arm == "fixed_parallel":
        return DecodeConfig(
            gen_len=gen_len,
            partition_mode="fixed",
            fixed_block_size=min(32, gen_len) if gen_len else 32,
            threshold_mode="fixed",
            tau_fixed=tau_fixed,
            cache_mode=cache_mode,
            seed=seed,
        )
    if arm == "adaptive_dynamic":
        return DecodeConfig(
            gen_len=gen_len,
            partition_mode="adaptive",
            tau_min=0.1,
            threshold_mode="dynamic",
            tau_init=tau_init,
            cache_mode=cache_mode,
            seed=seed,
        )
    raise ConfigError(f"unknown comparison arm {arm!r}")


def detected_boundaries(trace: DecodeTrace, region_end: int) -> list[int]:
    """Block ends the partitioner actively chose (not forced or terminal)."""
    out = []
    for event in trace.of_kind("boundary"):
        pos = event.payload["position"]
        if not event.payload["terminated"] and pos != region_end:
            out.append(pos)
    return out


@dataclass(frozen=True)
class ExperimentRow:
    """One cell of the strategy matrix: arm x corpus, with quality columns."""

    corpus_seed: int
    arm: str
    partition_mode: str
    threshold_mode: str
    cache_mode: str
    tau_init: float | None
    tau_fixed: float | None
    tau_min: float | None
    gen_len: int
    steps: int
    blocks: int
    forward_passes: int
    token_compute: int
    tokens_per_step: float
    exact_match: bool
    boundary_recall: float | None
    boundary_precision: float | None

    def to_dict(self) -> dict:
        return {
            "corpus_seed": self.corpus_seed,
            "arm": self.arm,
            "partition_mode": self.partition_mode,
            "threshold_mode": self.threshold_mode,
            "cache_mode": self.cache_mode,
            "tau_init": self.tau_init,
            "tau_fixed": self.tau_fixed,
            "tau_min": self.tau_min,
            "gen_len": self.gen_len,
            "steps": self.steps,
            "blocks": self.blocks,
            "forward_passes": self.forward_passes,
            "token_compute": self.token_compute,
            "tokens_per_step": self.tokens_per_step,
            "exact_match": self.exact_match,
            "boundary_recall": self.boundary_recall,
            "boundary_precision": self.boundary_precision,
        }


def run_arm(spec: PlantedCorpusSpec, arm: str, **knobs) -> tuple[ExperimentRow, DecodeResult]:
    """Decode one corpus under one arm and score the result."""
    backend = SynthBackend(spec)
    prompt = list(spec.prompt)
    gen_len = spec.gen_len
    config = arm_config(arm, gen_len, **knobs)
    if config is None:
        result = decode_baseline_full_diffusion(
            backend, prompt, gen_len, cache_mode=knobs.get("cache_mode", "none")
        )
        partition_mode, threshold_mode = "none", "none"
        tau_init = tau_fixed = tau_min = None
        cache_mode = knobs.get("cache_mode", "none")
    else:
        result = decode(backend, prompt, config)
        partition_mode, threshold_mode = config.partition_mode, config.threshold_mode
        tau_init = config.tau_init if threshold_mode == "dynamic" else None
        tau_fixed = config.tau_fixed if threshold_mode == "fixed" else None
        tau_min = config.tau_min if partition_mode == "adaptive" else None
        cache_mode = config.cache_mode

    planted = planted_boundaries(spec)
    internal = set(planted[:-1])
    detected = set(detected_boundaries(result.trace, spec.region_end))
    hits = len(detected & internal)
    recall = hits / len(internal) if internal else None
    precision = hits / len(detected) if detected else None
    row = ExperimentRow(
        corpus_seed=spec.seed if spec.seed is not None else -1,
        arm=arm,
        partition_mode=partition_mode,
        threshold_mode=threshold_mode,
        cache_mode=cache_mode,
        tau_init=tau_init,
        tau_fixed=tau_fixed,
        tau_min=tau_min,
        gen_len=gen_len,
        steps=result.metrics.steps,
        blocks=result.metrics.blocks,
        forward_passes=result.metrics.forward_passes,
        token_compute=result.metrics.token_compute,
        tokens_per_step=result.metrics.tokens_per_step,
        exact_match=result.output == ml_completion(spec),
        boundary_recall=recall,
        boundary_precision=precision,
    )
    return row, result


def _matrix_cell(args) -> ExperimentRow:
    seed, arm, knobs = args
    spec = make_comparison_spec(seed)
    row, _ = run_arm(spec, arm, **knobs)
    return row


def comparison_matrix(
    corpus_seeds,
    arms=ARM_NAMES,
    jobs: int = 1,
    **knobs,
) -> list[ExperimentRow]:
    """Run every (corpus, arm) cell; deterministic row order regardless of jobs."""
    cells = [(seed, arm, knobs) for seed in corpus_seeds for arm in arms]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_matrix_cell, cells))
    return [_matrix_cell(cell) for cell in cells]


def aggregate_matrix(rows) -> dict[str, dict]:
    """Per-arm totals: steps, compute, match rate, mean tokens per step."""
    arms: dict[str, dict] = {}
    for row in rows:
        agg = arms.setdefault(
            row.arm,
            {"cells": 0, "steps": 0, "forward_passes": 0, "token_compute": 0, "matches": 0},
        )
        agg["cells"] += 1
        agg["steps"] += row.steps
        agg["forward_passes"] += row.forward_passes
        agg["token_compute"] += row.token_compute
        agg["matches"] += int(row.exact_match)
    for agg in arms.values():
        agg["match_rate"] = agg["matches"] / agg["cells"]
        agg["mean_steps"] = agg["steps"] / agg["cells"]
    return arms


_TABLE_COLUMNS = (
    ("corpus", lambda r: str(r.corpus_seed)),
    ("arm", lambda r: r.arm),
    ("cache", lambda r: r.cache_mode),
    ("tau", lambda r: _format_tau(r)),
    ("steps", lambda r: str(r.steps)),
    ("blocks", lambda r: str(r.blocks)),
    ("fwd", lambda r: str(r.forward_passes)),
    ("tok_compute", lambda r: str(r.token_compute)),
    ("tok/step", lambda r: f"{r.tokens_per_step:.2f}"),
    ("match", lambda r: "yes" if r.exact_match else "no"),
    ("recall", lambda r: _format_optional(r.boundary_recall)),
    ("precision", lambda r: _format_optional(r.boundary_precision)),
)


def _format_tau(row: ExperimentRow) -> str:
    if row.tau_fixed is not None:
        return f"fixed {row.tau_fixed:g}"
    if row.tau_init is not None:
        return f"init {row.tau_init:g}"
    return "-"


def _format_optional(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def format_rows_table(rows) -> str:
    """Aligned text table of experiment rows, one line per cell."""
    cells = [[name for name, _ in _TABLE_COLUMNS]]
    cells += [[fmt(row) for _, fmt in _TABLE_COLUMNS] for row in rows]
    widths = [max(len(line[i]) for line in cells) for i in range(len(_TABLE_COLUMNS))]
    lines = []
    for k, line in enumerate(cells):
        lines.append("  ".join(value.ljust(w) for value, w in zip(line, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_aggregate_table(aggregates: dict[str, dict]) -> str:
    header = ["arm", "cells", "steps", "fwd", "tok_compute", "match_rate"]
    body = [
        [
            arm,
            str(agg["cells"]),
            str(agg["steps"]),
            str(agg["forward_passes"]),
            str(agg["token_compute"]),
            f"{agg['match_rate']:.3f}",
        ]
        for arm, agg in aggregates.items()
    ]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip() for line in body]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProfileRow:
    """One position of one refresh in an entropy-analysis replay."""

    refresh: int
    position: int
    entropy: float
    shift: float | None
    planted_end: bool
    chosen_end: bool


def analyze_profiles(
    backend: ModelBackend,
    prompt: list[int],
    config: DecodeConfig,
    spec: PlantedCorpusSpec | None = None,
) -> tuple[DecodeResult, list[ProfileRow], dict]:
    """Decode once, then replay each refresh to capture full profiles.

    The decode trace pins down the exact sequence state at every refresh;
    replaying those states against the (deterministic) backend reproduces
    each refresh's entropy profile position by position. With a planted spec
    the summary includes boundary recall/precision at the configured tau_min.
    """
    result = decode(backend, prompt, config)
    planted_ends = set(planted_boundaries(spec)) if spec is not None else set()

    rows: list[ProfileRow] = []
    state = SequenceState.initial(backend.vocab, prompt, config.gen_len)
    refresh_index = 0
    events = list(result.trace)
    for k, event in enumerate(events):
        if event.kind == "unmask_step":
            fills = dict(zip(event.payload["positions"], event.payload["tokens"]))
            state = apply_unmask(state, fills)
        elif event.kind == "refresh":
            refresh_index += 1
            remaining = state.masked_sorted()
            dists = backend.query(state, remaining)
            profile = entropy_profile([dists[p] for p in remaining])
            boundary = events[k + 1].payload
            for i, pos in enumerate(remaining):
                shift = (
                    float(profile.values[i + 1] - profile.values[i])
                    if i + 1 < len(remaining)
                    else None
                )
                rows.append(
                    ProfileRow(
                        refresh=refresh_index,
                        position=pos,
                        entropy=float(profile.values[i]),
                        shift=shift,
                        planted_end=pos in planted_ends,
                        chosen_end=pos == boundary["position"],
                    )
                )

    summary: dict = {
        "refreshes": refresh_index,
        "steps": result.metrics.steps,
        "blocks": result.metrics.blocks,
    }
    if spec is not None:
        internal = set(planted_boundaries(spec)[:-1])
        detected = set(detected_boundaries(result.trace, spec.region_end))
        hits = len(detected & internal)
        summary["planted_boundaries"] = len(internal)
        summary["detected_boundaries"] = len(detected)
        summary["boundary_recall"] = hits / len(internal) if internal and detected else None
        summary["boundary_precision"] = hits / len(detected) if detected else None
        summary["exact_match"] = result.output == ml_completion(spec)
    return result, rows, summary


def format_profile_rows(rows) -> str:
    """Tab-separated profile dump, one line per (refresh, position)."""
    lines = ["refresh\tposition\tentropy\tshift\tplanted_end\tchosen_end"]
    for r in rows:
        shift = "" if r.shift is None else format(r.shift, ".17g")
        lines.append(
            f"{r.refresh}\t{r.position}\t{format(r.entropy, '.17g')}\t{shift}"
            f"\t{int(r.planted_end)}\t{int(r.chosen_end)}"
        )
    return "\n".join(lines) + "\n"


def sweep_values(text: str) -> list[float]:
    """Parse a comma-separated sweep list, e.g. ``0.5,0.6,0.7``."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value list {text!r}: {exc}") from None
    if not values:
        raise ConfigError("sweep needs at least one value")
    for v in values:
        if not (0.0 < v <= 1.0) or math.isnan(v):
            raise ConfigError(f"sweep values must lie in (0, 1], got {v}")
    return values
