"""Client side of the line-delimited JSON model protocol.

A bridge backend launches a server subprocess and speaks newline-separated
JSON records over its standard streams: the server opens with a handshake
record announcing its vocabulary, after which the client sends one query at
a time and reads exactly one response. This realizes the in-process
ModelBackend contract against any external model that can serve full
per-position probability vectors.

Wire records (one JSON object per line, UTF-8):

    {"type": "hello", "vocab_size": V, "mask_id": M}
    {"type": "query", "id": n, "tokens": [...], "masked": [p0, p1, ...]}
    {"type": "dists", "id": n, "probs": [[...], ...]}   one row per masked
    {"type": "error", "id": n, "message": "..."}

Probability rows arrive in ``masked`` order and must each have length
``vocab_size``. Floats survive the round trip exactly: both sides emit
shortest round-trip decimal literals.
"""
from __future__ import annotations

import json
import logging
import shlex
import subprocess
from typing import Sequence

import numpy as np

from .core import (
    BackendFaultError,
    ConfigError,
    ContractViolationError,
    PositionDistribution,
    SequenceState,
    Vocab,
)

log = logging.getLogger("swordsman.bridge")


class BridgeBackend:
    """ModelBackend served by a subprocess over the line protocol.

    The server is launched eagerly and its handshake is read before the
    constructor returns, so a misconfigured vocabulary surfaces as a
    ConfigError up front. Protocol violations and an unexpectedly dead
    server raise BackendFaultError. Use as a context manager, or call
    ``close`` when done; the server is told to stop by closing its stdin.
    """

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise ConfigError("bridge command line is empty")
        self._argv = argv
        log.debug("launching bridge server: %s", argv)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ConfigError(f"cannot launch bridge server {argv[0]!r}: {exc}") from None
        self._next_id = 0
        self._vocab = self._read_hello()
        log.debug("bridge handshake: vocab_size=%d mask_id=%d", self._vocab.size, self._vocab.mask_id)

    @property
    def vocab(self) -> Vocab:
        return self._vocab

    def _read_line(self, expecting: str) -> dict:
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise BackendFaultError(
                f"bridge server closed the stream while the client waited for {expecting}"
                + (f" (exit status {code})" if code is not None else "")
            )
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise BackendFaultError(f"bridge server sent unparseable {expecting}: {exc}") from None
        if not isinstance(record, dict) or "type" not in record:
            raise BackendFaultError(f"bridge server sent a malformed record for {expecting}")
        return record

    def _read_hello(self) -> Vocab:
        record = self._read_line("the handshake")
        if record["type"] != "hello":
            raise BackendFaultError(
                f"bridge server opened with {record['type']!r} instead of the handshake"
            )
        try:
            size, mask = int(record["vocab_size"]), int(record["mask_id"])
        except (KeyError, TypeError, ValueError):
            raise BackendFaultError("bridge handshake lacks integer vocab_size/mask_id") from None
        try:
            return Vocab(size, mask)
        except ContractViolationError as exc:
            # The server spoke the protocol but announced an unusable token
            # space; that is a setup problem, not a wire fault.
            raise ConfigError(f"bridge handshake invalid: {exc}") from None

    def query(
        self, state: SequenceState, positions: Sequence[int]
    ) -> dict[int, PositionDistribution]:
        positions = [int(p) for p in positions]
        request_id = self._next_id
        self._next_id += 1
        request = {
            "type": "query",
            "id": request_id,
            "tokens": [int(t) for t in state.tokens],
            "masked": positions,
        }
        try:
            self._proc.stdin.write(json.dumps(request, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            code = self._proc.poll()
            raise BackendFaultError(
                "bridge server is gone mid-decode"
                + (f" (exit status {code})" if code is not None else "")
            ) from None

        record = self._read_line(f"the response to query {request_id}")
        if record["type"] == "error":
            raise BackendFaultError(f"bridge server error: {record.get('message', '?')}")
        if record["type"] != "dists":
            raise BackendFaultError(f"bridge server answered with {record['type']!r}")
        if record.get("id") != request_id:
            raise BackendFaultError(
                f"bridge response id {record.get('id')!r} does not match request {request_id}"
            )
        probs = record.get("probs")
        if not isinstance(probs, list) or len(probs) != len(positions):
            got = len(probs) if isinstance(probs, list) else "no"
            raise BackendFaultError(
                f"bridge sent {got} probability rows for {len(positions)} positions"
            )
        out: dict[int, PositionDistribution] = {}
        for pos, row in zip(positions, probs):
            if not isinstance(row, list) or len(row) != self._vocab.size:
                raise BackendFaultError(
                    f"bridge probability row has wrong width at position {pos}"
                )
            try:
                out[pos] = PositionDistribution(pos, np.asarray(row, dtype=np.float64))
            except (ContractViolationError, TypeError, ValueError) as exc:
                raise BackendFaultError(f"bridge sent a bad distribution: {exc}") from None
        return out

    def close(self) -> None:
        """Shut the server down: EOF on its stdin, then wait briefly."""
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        log.debug("bridge server stopped (exit status %s)", self._proc.returncode)

    def __enter__(self) -> "BridgeBackend":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
