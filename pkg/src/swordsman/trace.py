"""Decode traces: typed events, a deterministic text encoding, and a validator.

One event per line, JSON-shaped, with every float printed to 17 significant
digits so that identical runs produce byte-identical files. Non-finite floats
use the ``Infinity``/``-Infinity``/``NaN`` literals, which ``json.loads``
accepts. Wall-clock timing never enters a trace; the harness keeps it in a
sidecar file.

Event grammar for one run::

    run_start (refresh boundary block_start unmask_step+ block_end)+ run_end
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

EVENT_KINDS = (
    "run_start",
    "refresh",
    "boundary",
    "block_start",
    "unmask_step",
    "block_end",
    "run_end",
)


class TraceError(ValueError):
    """A trace file does not conform to the event grammar."""


@dataclass(frozen=True)
class TraceEvent:
    kind: str
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise TraceError(f"unknown trace event kind {self.kind!r}")


@dataclass
class DecodeTrace:
    """In-memory event list for one decode run."""

    events: list[TraceEvent] = field(default_factory=list)

    def append(self, event: TraceEvent) -> None:
        self.events.append(event)

    def __iter__(self) -> Iterator[TraceEvent]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]


TraceSink = Callable[[TraceEvent], None]


def _format_float(value: float) -> str:
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    if math.isnan(value):
        return "NaN"
    return format(value, ".17g")


def _to_json(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {_to_json(v)}" for k, v in value.items())
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_to_json(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__} into a trace")


def canonical_json(value) -> str:
    """Deterministic JSON text: 17-significant-digit floats, insertion order.

    The same encoding traces use, so metrics documents byte-match across
    reruns and non-finite values survive a round trip through json.loads.
    """
    return _to_json(value)


def serialize_event(event: TraceEvent) -> str:
    body = ", ".join(
        [f'"kind": {json.dumps(event.kind)}']
        + [f"{json.dumps(k)}: {_to_json(v)}" for k, v in event.payload.items()]
    )
    return "{" + body + "}"


def write_trace(path, trace: Iterable[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in trace:
            fh.write(serialize_event(event))
            fh.write("\n")


def parse_trace_line(line: str) -> TraceEvent:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceError(f"unparseable trace line: {exc}") from None
    if not isinstance(record, dict) or "kind" not in record:
        raise TraceError("trace line is not an event record")
    kind = record.pop("kind")
    return TraceEvent(kind, record)


def read_trace(path) -> DecodeTrace:
    trace = DecodeTrace()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                trace.append(parse_trace_line(line))
    return trace


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise TraceError(message)


def validate_trace(events: Iterable[TraceEvent]) -> dict:
    """Check an event stream against the grammar and its internal consistency.

    Verifies the event order, that blocks tile the generation region from
    left to right, that every unmask step stays inside its block and makes
    progress, and that the run_end summary matches the events. Returns a
    small summary dict (steps, blocks, per-block sizes).
    """
    events = list(events)
    _check(bool(events), "empty trace")
    _check(events[0].kind == "run_start", "trace must open with run_start")
    _check(events[-1].kind == "run_end", "trace must close with run_end")
    start = events[0].payload
    for key in ("prompt_len", "gen_len", "cache_mode"):
        _check(key in start, f"run_start is missing {key!r}")
    prompt_len = start["prompt_len"]
    gen_len = start["gen_len"]
    region_end = prompt_len + gen_len - 1

    state = "need_refresh"
    groups = 0
    steps = 0
    block_sizes: dict[int, int] = {}
    next_start = prompt_len
    block = None
    steps_in_block = 0
    unmasked: set[int] = set()

    for event in events[1:-1]:
        kind = event.kind
        if state == "need_refresh":
            _check(kind == "refresh", f"expected refresh, found {kind}")
            state = "need_boundary"
        elif state == "need_boundary":
            _check(kind == "boundary", f"expected boundary, found {kind}")
            _check(
                next_start <= event.payload["position"] <= region_end,
                "boundary outside the remaining region",
            )
            state = "need_block_start"
        elif state == "need_block_start":
            _check(kind == "block_start", f"expected block_start, found {kind}")
            block = event.payload
            _check(block["start"] == next_start, "block does not continue the partition")
            _check(block["end"] <= region_end, "block overruns the generation region")
            steps_in_block = 0
            state = "in_block"
        elif state == "in_block":
            if kind == "unmask_step":
                steps += 1
                steps_in_block += 1
                positions = event.payload["positions"]
                _check(bool(positions), "unmask step with no positions")
                for p in positions:
                    _check(
                        block["start"] <= p <= block["end"],
                        f"unmask position {p} outside block",
                    )
                    _check(p not in unmasked, f"position {p} unmasked twice")
                    unmasked.add(p)
            elif kind == "block_end":
                _check(steps_in_block > 0, "block closed without any unmask step")
                span = block["end"] - block["start"] + 1
                block_sizes[span] = block_sizes.get(span, 0) + 1
                next_start = block["end"] + 1
                groups += 1
                state = "need_refresh"
            else:
                raise TraceError(f"unexpected {kind} inside a block")
        else:  # pragma: no cover - defensive
            raise TraceError("validator reached an impossible state")

    _check(state == "need_refresh", "trace ends with an unclosed block")
    _check(groups >= 1, "trace contains no decoded blocks")
    _check(next_start == prompt_len + gen_len, "blocks do not cover the region")
    _check(len(unmasked) == gen_len, "unmasked positions do not cover the region")

    summary = events[-1].payload
    _check(summary.get("steps") == steps, "run_end step count disagrees with events")
    _check(summary.get("blocks") == groups, "run_end block count disagrees with events")
    reported = {int(k): v for k, v in summary.get("block_sizes", {}).items()}
    _check(reported == block_sizes, "run_end block sizes disagree with events")
    return {"steps": steps, "blocks": groups, "block_sizes": block_sizes}
