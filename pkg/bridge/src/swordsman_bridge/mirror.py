"""Planted-corpus posteriors, reimplemented from the file format alone.

This module is an independent second implementation of the planted-corpus
model: it reads the ``planted-corpus-v1`` JSON document and answers marginal
queries with exact rational arithmetic, sharing no code with the decoding
engine. Serving it over the wire protocol and comparing traces against the
engine's in-process backend is what makes the bridge's conformance suite a
real cross-check rather than a tautology.

The model: the generation region is tiled by constituents, each a weighted
mixture of a handful of fixed token strings. Given the visible tokens inside
a constituent's span, the realizations that disagree with any visible token
drop out, the survivors renormalize, and the marginal at a masked offset is
the per-token mass of the survivors. Weights are ``Fraction``s end to end;
each probability is converted to float exactly once, so identical queries
yield bit-identical rows no matter who computes them.
"""
from __future__ import annotations

import json
from fractions import Fraction

SPEC_FORMAT = "planted-corpus-v1"


class SpecError(ValueError):
    """The spec document is unreadable or malformed; refuse to start."""


class QueryError(ValueError):
    """A request that cannot be answered; reported as a wire error record."""


def _int_list(value, what: str) -> list[int]:
    if not isinstance(value, list) or not all(
        isinstance(t, int) and not isinstance(t, bool) for t in value
    ):
        raise QueryError(f"{what} must be a list of integers")
    return value


class _Constituent:
    __slots__ = ("start", "length", "realizations", "weights")

    def __init__(self, start: int, realizations, weights) -> None:
        self.start = start
        self.length = len(realizations[0])
        self.realizations = realizations
        self.weights = weights


class MirrorModel:
    """Exact marginal server state for one planted corpus."""

    def __init__(self, doc) -> None:
        if not isinstance(doc, dict) or doc.get("format") != SPEC_FORMAT:
            raise SpecError(f"not a {SPEC_FORMAT} document")
        try:
            self.vocab_size = int(doc["vocab_size"])
            self.mask_id = int(doc["mask_id"])
            self.prompt = [int(t) for t in doc["prompt"]]
            raw = list(doc["constituents"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"malformed corpus spec: {exc}") from None
        if self.vocab_size < 2 or not 0 <= self.mask_id < self.vocab_size:
            raise SpecError("vocabulary must have size >= 2 and contain mask_id")

        self._constituents: list[_Constituent] = []
        cursor = len(self.prompt)
        for c in raw:
            try:
                start = int(c["start"])
                realizations = [[int(t) for t in r] for r in c["realizations"]]
                weights = [Fraction(w) for w in c["weights"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise SpecError(f"malformed constituent: {exc}") from None
            if not realizations or not realizations[0]:
                raise SpecError("constituent needs at least one non-empty realization")
            length = len(realizations[0])
            if any(len(r) != length for r in realizations):
                raise SpecError("realizations within a constituent differ in length")
            if len(weights) != len(realizations):
                raise SpecError("one weight per realization, please")
            if sum(weights) != 1:
                raise SpecError("realization weights must sum to exactly 1")
            if any(w <= 0 for w in weights):
                raise SpecError("realization weights must be positive")
            if start != cursor:
                raise SpecError(
                    f"constituents must tile the region: expected start {cursor}, got {start}"
                )
            for r in realizations:
                for t in r:
                    if not 0 <= t < self.vocab_size or t == self.mask_id:
                        raise SpecError("realization token outside the usable vocabulary")
            self._constituents.append(_Constituent(start, realizations, weights))
            cursor += length
        if not self._constituents:
            raise SpecError("corpus has no constituents")
        self.length = cursor

        self._owner: dict[int, int] = {}
        for idx, c in enumerate(self._constituents):
            for pos in range(c.start, c.start + c.length):
                self._owner[pos] = idx
        # (constituent index, evidence signature) -> (survivors, offset -> row)
        self._memo: dict[tuple, tuple[list[int], dict[int, list[float]]]] = {}

    @classmethod
    def from_file(cls, path: str) -> "MirrorModel":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise SpecError(f"cannot read corpus spec: {exc}") from None
        except json.JSONDecodeError as exc:
            raise SpecError(f"corpus spec {path} is not JSON: {exc}") from None
        return cls(doc)

    def _row(self, c: _Constituent, survivors: list[int], offset: int) -> list[float]:
        total = Fraction(0)
        for i in survivors:
            total += c.weights[i]
        mass: dict[int, Fraction] = {}
        for i in survivors:
            token = c.realizations[i][offset]
            mass[token] = mass.get(token, Fraction(0)) + c.weights[i]
        row = [0.0] * self.vocab_size
        for token, weight in mass.items():
            row[token] = float(weight / total)
        return row

    def marginals(self, tokens, masked) -> list[list[float]]:
        """One probability row per entry of ``masked``, in that order."""
        tokens = _int_list(tokens, "tokens")
        masked = _int_list(masked, "masked")
        if len(tokens) != self.length:
            raise QueryError(
                f"tokens has length {len(tokens)}, the corpus spans {self.length}"
            )
        rows: list[list[float]] = []
        for pos in masked:
            idx = self._owner.get(pos)
            if idx is None:
                raise QueryError(f"position {pos} is outside the generation region")
            if tokens[pos] != self.mask_id:
                raise QueryError(f"position {pos} is not masked")
            c = self._constituents[idx]
            span = tokens[c.start : c.start + c.length]
            evidence = tuple(
                (j, t) for j, t in enumerate(span) if t != self.mask_id
            )
            entry = self._memo.get((idx, evidence))
            if entry is None:
                survivors = [
                    i
                    for i, r in enumerate(c.realizations)
                    if all(r[j] == t for j, t in evidence)
                ]
                if not survivors:
                    raise QueryError(
                        "visible tokens match no realization of the constituent "
                        f"spanning [{c.start}, {c.start + c.length - 1}]"
                    )
                entry = (survivors, {})
                self._memo[(idx, evidence)] = entry
            survivors, known = entry
            offset = pos - c.start
            row = known.get(offset)
            if row is None:
                row = self._row(c, survivors, offset)
                known[offset] = row
            rows.append(row)
        return rows
