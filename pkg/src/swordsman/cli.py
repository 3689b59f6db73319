"""Command-line front end.

Four subcommands: ``run`` decodes once against a model and writes trace and
metrics documents; ``compare`` runs the standard four-arm strategy matrix
over generated corpora (optionally sweeping one threshold knob); ``analyze-
entropy`` replays a decode's refreshes to dump per-position entropy
profiles; ``validate-trace`` checks a trace file against the event grammar
and recomputes its metrics.

Exit codes: 0 success, 2 configuration problem, 3 backend fault. A trace
that fails validation exits 1, the conventional check-failed status, since
the tool itself ran fine. Output files are byte-identical across reruns
with the same inputs; wall-clock timings go to a ``.wallclock.json``
sidecar so they never perturb the main documents.

The ``SWORDSMAN_LOG`` environment variable sets diagnostic verbosity
(debug, info, warning, error; default warning), written to stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from .core import BackendFaultError, ConfigError, DecodeConfig, ModelBackend
from .decoder import decode
from .harness import (
    ARM_NAMES,
    aggregate_matrix,
    analyze_profiles,
    check_trace_consistency,
    comparison_matrix,
    format_aggregate_table,
    format_profile_rows,
    format_rows_table,
    sweep_values,
)
from .synth import PlantedCorpusSpec, SynthBackend, load_spec
from .trace import TraceError, canonical_json, read_trace, serialize_event

log = logging.getLogger("swordsman.cli")


def _configure_logging() -> None:
    level = os.environ.get("SWORDSMAN_LOG", "warning").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        level = "WARNING"
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, level),
        format="%(name)s: %(message)s",
    )


def _add_decode_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--partition", choices=("fixed", "adaptive"), default="adaptive")
    parser.add_argument("--block-size", type=int, default=32, metavar="N")
    parser.add_argument("--tau-min", type=float, default=0.1, metavar="F")
    parser.add_argument("--threshold", choices=("fixed", "dynamic"), default="dynamic")
    parser.add_argument("--tau-fixed", type=float, default=0.9, metavar="F")
    parser.add_argument("--tau-init", type=float, default=0.9, metavar="F")
    parser.add_argument("--cache", choices=("none", "prefix", "dual"), default="none")
    parser.add_argument("--seed", type=int, default=0, metavar="N")


def _add_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trace", metavar="PATH", help="write the decode trace here (JSON lines)")
    parser.add_argument("--metrics", metavar="PATH", help="write the metrics document here (JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swordsman",
        description="Block-wise decoding for masked diffusion models, desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="decode once and report metrics")
    run.add_argument("--model", required=True, metavar="synth:PATH|bridge:CMD")
    run.add_argument("--prompt-file", metavar="PATH", help="whitespace-separated token ids")
    run.add_argument("--gen-len", type=int, default=None, metavar="N")
    _add_decode_flags(run)
    _add_io_flags(run)

    compare = sub.add_parser("compare", help="run the four-arm strategy matrix")
    compare.add_argument("--corpora", type=int, default=20, metavar="N",
                         help="number of generated comparison corpora (default 20)")
    compare.add_argument("--seed", type=int, default=0, metavar="N",
                         help="base seed; corpus k uses seed+k")
    compare.add_argument("--cache", choices=("none", "prefix", "dual"), default="none")
    compare.add_argument("--jobs", type=int, default=1, metavar="N")
    compare.add_argument("--sweep", nargs=2, metavar=("KNOB", "VALUES"),
                         help="sweep tau-init or tau-fixed over comma-separated values")
    compare.add_argument("--metrics", metavar="PATH",
                         help="write the machine-readable matrix document here (JSON)")

    analyze = sub.add_parser("analyze-entropy", help="dump per-refresh entropy profiles")
    analyze.add_argument("--model", required=True, metavar="synth:PATH|bridge:CMD")
    analyze.add_argument("--prompt-file", metavar="PATH")
    analyze.add_argument("--gen-len", type=int, default=None, metavar="N")
    analyze.add_argument("--profiles", metavar="PATH",
                         help="write the columnar profile table here (default stdout)")
    _add_decode_flags(analyze)
    _add_io_flags(analyze)

    validate = sub.add_parser("validate-trace", help="check a trace file")
    validate.add_argument("--trace", required=True, metavar="PATH")

    return parser


def _read_prompt_file(path: str) -> list[int]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            fields = fh.read().split()
    except OSError as exc:
        raise ConfigError(f"cannot read prompt file: {exc}") from None
    try:
        return [int(f) for f in fields]
    except ValueError as exc:
        raise ConfigError(f"prompt file must hold integer token ids: {exc}") from None


def _open_model(args) -> tuple[ModelBackend, PlantedCorpusSpec | None]:
    """Resolve --model into a live backend, plus the corpus spec for synth."""
    model = args.model
    if model.startswith("synth:"):
        spec = load_spec(model[len("synth:") :])
        return SynthBackend(spec), spec
    if model.startswith("bridge:"):
        from .bridge_client import BridgeBackend

        return BridgeBackend(model[len("bridge:") :]), None
    raise ConfigError(f"--model must start with synth: or bridge:, got {model!r}")


def _resolve_run_inputs(args, spec: PlantedCorpusSpec | None) -> tuple[list[int], int]:
    """Prompt tokens and generation length, defaulted from the synth spec."""
    if spec is not None:
        prompt = list(spec.prompt)
        if args.prompt_file is not None:
            supplied = _read_prompt_file(args.prompt_file)
            if supplied != prompt:
                raise ConfigError("prompt file disagrees with the corpus's planted prompt")
        gen_len = args.gen_len if args.gen_len is not None else spec.gen_len
        if gen_len > spec.gen_len:
            raise ConfigError(
                f"gen-len {gen_len} exceeds the corpus's generation region ({spec.gen_len})"
            )
    else:
        if args.prompt_file is None:
            raise ConfigError("bridge models need --prompt-file")
        if args.gen_len is None:
            raise ConfigError("bridge models need --gen-len")
        prompt = _read_prompt_file(args.prompt_file)
        gen_len = args.gen_len
    if gen_len < 1:
        raise ConfigError(f"gen-len must be >= 1, got {gen_len}")
    return prompt, gen_len


def _decode_config(args, gen_len: int) -> DecodeConfig:
    return DecodeConfig(
        gen_len=gen_len,
        partition_mode=args.partition,
        fixed_block_size=args.block_size,
        tau_min=args.tau_min,
        threshold_mode=args.threshold,
        tau_fixed=args.tau_fixed,
        tau_init=args.tau_init,
        cache_mode=args.cache,
        seed=args.seed,
    )


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _write_sidecar(metrics_path: str, wall_seconds: float) -> None:
    body = canonical_json({"wall_seconds": wall_seconds}) + "\n"
    _write_text(metrics_path + ".wallclock.json", body)


def _close_backend(backend) -> None:
    close = getattr(backend, "close", None)
    if close is not None:
        close()


def _cmd_run(args) -> int:
    backend, spec = _open_model(args)
    try:
        prompt, gen_len = _resolve_run_inputs(args, spec)
        config = _decode_config(args, gen_len)
        started = time.monotonic()
        result = decode(backend, prompt, config)
        wall = time.monotonic() - started
    finally:
        _close_backend(backend)
    log.info("decode finished in %.3f s", wall)

    if args.trace:
        _write_text(
            args.trace, "".join(serialize_event(e) + "\n" for e in result.trace)
        )
    metrics_text = canonical_json(result.metrics.to_dict()) + "\n"
    if args.metrics:
        _write_text(args.metrics, metrics_text)
        _write_sidecar(args.metrics, wall)
    else:
        sys.stdout.write(metrics_text)
    return 0


def _cmd_compare(args) -> int:
    if args.corpora < 1:
        raise ConfigError("compare needs at least one corpus")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    seeds = [args.seed + k for k in range(args.corpora)]
    started = time.monotonic()

    if args.sweep:
        knob, values_text = args.sweep
        if knob not in ("tau-init", "tau-fixed"):
            raise ConfigError(f"--sweep knob must be tau-init or tau-fixed, got {knob!r}")
        values = sweep_values(values_text)
        arm = "adaptive_dynamic" if knob == "tau-init" else "fixed_parallel"
        rows = []
        aggregates_by_value = {}
        for value in values:
            knobs = {"cache_mode": args.cache}
            knobs["tau_init" if knob == "tau-init" else "tau_fixed"] = value
            cell_rows = comparison_matrix(seeds, arms=(arm,), jobs=args.jobs, **knobs)
            rows.extend(cell_rows)
            aggregates_by_value[format(value, "g")] = aggregate_matrix(cell_rows)[arm]
        wall = time.monotonic() - started
        sys.stdout.write(format_rows_table(rows))
        sys.stdout.write("\nsweep of %s over the %s arm:\n" % (knob, arm))
        sys.stdout.write(
            format_aggregate_table(
                {f"{knob}={value}": agg for value, agg in aggregates_by_value.items()}
            )
        )
        document = {
            "sweep": {"knob": knob, "values": values},
            "rows": [r.to_dict() for r in rows],
            "aggregates_by_value": aggregates_by_value,
        }
    else:
        rows = comparison_matrix(seeds, arms=ARM_NAMES, jobs=args.jobs, cache_mode=args.cache)
        wall = time.monotonic() - started
        aggregates = aggregate_matrix(rows)
        sys.stdout.write(format_rows_table(rows))
        sys.stdout.write("\n")
        sys.stdout.write(format_aggregate_table(aggregates))
        document = {
            "corpus_seeds": seeds,
            "rows": [r.to_dict() for r in rows],
            "aggregates": aggregates,
        }
    log.info("matrix finished in %.3f s", wall)

    if args.metrics:
        _write_text(args.metrics, canonical_json(document) + "\n")
        _write_sidecar(args.metrics, wall)
    return 0


def _cmd_analyze_entropy(args) -> int:
    backend, spec = _open_model(args)
    try:
        prompt, gen_len = _resolve_run_inputs(args, spec)
        config = _decode_config(args, gen_len)
        started = time.monotonic()
        result, rows, summary = analyze_profiles(backend, prompt, config, spec)
        wall = time.monotonic() - started
    finally:
        _close_backend(backend)
    log.info("analysis finished in %.3f s", wall)

    table = format_profile_rows(rows)
    if args.profiles:
        _write_text(args.profiles, table)
    else:
        sys.stdout.write(table)

    if args.trace:
        _write_text(
            args.trace, "".join(serialize_event(e) + "\n" for e in result.trace)
        )
    summary_text = canonical_json(summary) + "\n"
    if args.metrics:
        _write_text(args.metrics, summary_text)
        _write_sidecar(args.metrics, wall)
    else:
        sys.stdout.write(summary_text)
    recall = summary.get("boundary_recall")
    log.info(
        "boundary recall: %s", "n/a" if recall is None else format(recall, ".3f")
    )
    return 0


def _cmd_validate_trace(args) -> int:
    try:
        trace = read_trace(args.trace)
    except OSError as exc:
        raise ConfigError(f"cannot read trace file: {exc}") from None
    try:
        summary = check_trace_consistency(trace)
    except TraceError as exc:
        sys.stderr.write(f"invalid trace: {exc}\n")
        return 1
    sys.stdout.write(
        "ok: %d events, %d steps, %d blocks\n"
        % (len(trace), summary["steps"], summary["blocks"])
    )
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "compare": _cmd_compare,
    "analyze-entropy": _cmd_analyze_entropy,
    "validate-trace": _cmd_validate_trace,
}


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except BackendFaultError as exc:
        sys.stderr.write(f"backend fault: {exc}\n")
        return 3
    except TraceError as exc:
        sys.stderr.write(f"trace error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
