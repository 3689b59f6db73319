"""Line-delimited JSON model server for the decoding engine.

The transport is the process's standard streams. The server speaks first
with a handshake announcing the vocabulary, then answers queries one at a
time, in order:

    server -> {"type": "hello", "vocab_size": V, "mask_id": M}
    client -> {"type": "query", "id": n, "tokens": [...], "masked": [...]}
    server -> {"type": "dists", "id": n, "probs": [[...], ...]}
    server -> {"type": "error", "id": n, "message": "..."}

``probs`` carries one full row of length ``vocab_size`` per masked position,
in ``masked`` order; floats are emitted as shortest round-trip literals so
the client reconstructs them bit for bit. A request the model cannot answer
produces an error record and the server keeps going; EOF on stdin is the
shutdown signal and produces nothing.

The ``serve`` loop also takes probe knobs used by fault-path tests: lying in
the handshake, dying after a fixed number of answers, or refusing queries
with error records past a cutoff. They are plumbing for exercising the
client's error handling and are off by default.
"""
from __future__ import annotations

import argparse
import json
import sys

from .mirror import MirrorModel, QueryError, SpecError


def _emit(stream, record: dict) -> None:
    stream.write(json.dumps(record, separators=(",", ":")) + "\n")
    stream.flush()


def _error(stream, request_id, message: str) -> None:
    _emit(stream, {"type": "error", "id": request_id, "message": message})


def serve(
    model: MirrorModel,
    stdin,
    stdout,
    *,
    hello_vocab_size: int | None = None,
    hello_mask_id: int | None = None,
    die_after: int | None = None,
    error_after: int | None = None,
) -> None:
    """Answer queries until EOF. Returns normally on shutdown."""
    _emit(stdout, {
        "type": "hello",
        "vocab_size": model.vocab_size if hello_vocab_size is None else hello_vocab_size,
        "mask_id": model.mask_id if hello_mask_id is None else hello_mask_id,
    })
    answered = 0
    if die_after is not None and answered >= die_after:
        return
    for line in stdin:
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            _error(stdout, None, f"cannot parse request line: {exc}")
            continue
        request_id = record.get("id") if isinstance(record, dict) else None
        if not isinstance(record, dict) or record.get("type") != "query":
            _error(stdout, request_id, "expected a query record")
            continue
        if error_after is not None and answered >= error_after:
            _error(stdout, request_id, "probe: refusing further queries")
            continue
        try:
            rows = model.marginals(record.get("tokens"), record.get("masked"))
        except QueryError as exc:
            _error(stdout, request_id, str(exc))
            continue
        _emit(stdout, {"type": "dists", "id": request_id, "probs": rows})
        answered += 1
        if die_after is not None and answered >= die_after:
            return


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="swordsman-bridge",
        description="Serve a planted corpus to the decoding engine over stdio.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    srv = sub.add_parser("serve", help="answer queries on stdin until EOF")
    srv.add_argument("--spec", required=True, metavar="PATH",
                     help="planted-corpus-v1 JSON document")
    probe = srv.add_argument_group("fault-injection probes (testing only)")
    probe.add_argument("--hello-vocab-size", type=int, default=None, metavar="N",
                       help="announce this vocab_size instead of the spec's")
    probe.add_argument("--hello-mask-id", type=int, default=None, metavar="N",
                       help="announce this mask_id instead of the spec's")
    probe.add_argument("--die-after", type=int, default=None, metavar="K",
                       help="exit silently after answering K queries")
    probe.add_argument("--error-after", type=int, default=None, metavar="K",
                       help="refuse queries with error records after the first K")
    args = parser.parse_args(argv)

    try:
        model = MirrorModel.from_file(args.spec)
    except SpecError as exc:
        print(f"swordsman-bridge: {exc}", file=sys.stderr)
        return 2
    serve(
        model,
        sys.stdin,
        sys.stdout,
        hello_vocab_size=args.hello_vocab_size,
        hello_mask_id=args.hello_mask_id,
        die_after=args.die_after,
        error_after=args.error_after,
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
