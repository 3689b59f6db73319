"""Unit tests for the independent planted-corpus implementation.

Expected marginals here are worked out by hand from tiny corpora, so the
mirror is checked against arithmetic, not against itself.
"""

import json
from fractions import Fraction

import pytest

from swordsman_bridge import MirrorModel, QueryError, SpecError

MASK = 7


def tiny_doc():
    # prompt [1], then a three-way mixture over positions 1..2, then a
    # single forced token at position 3.
    return {
        "format": "planted-corpus-v1",
        "vocab_size": 8,
        "mask_id": MASK,
        "prompt": [1],
        "constituents": [
            {
                "start": 1,
                "length": 2,
                "realizations": [[2, 3], [2, 4], [5, 6]],
                "weights": ["2/5", "2/5", "1/5"],
            },
            {
                "start": 3,
                "length": 1,
                "realizations": [[0]],
                "weights": ["1"],
            },
        ],
    }


def test_untouched_marginals_are_exact():
    model = MirrorModel(tiny_doc())
    tokens = [1, MASK, MASK, MASK]
    rows = model.marginals(tokens, [1, 2, 3])
    assert rows[0] == [0.0, 0.0, 0.8, 0.0, 0.0, 0.2, 0.0, 0.0]
    assert rows[1] == [0.0, 0.0, 0.0, 0.4, 0.4, 0.0, 0.2, 0.0]
    assert rows[2] == [1.0] + [0.0] * 7


def test_evidence_conditions_the_mixture():
    model = MirrorModel(tiny_doc())
    # Seeing token 2 at position 1 keeps the first two realizations alive.
    rows = model.marginals([1, 2, MASK, MASK], [2])
    assert rows == [[0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0]]
    # Seeing 3 at position 2 pins the whole constituent.
    rows = model.marginals([1, MASK, 3, MASK], [1])
    assert rows == [[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]
    # Seeing 5 pins the third realization.
    rows = model.marginals([1, 5, MASK, MASK], [2])
    assert rows == [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]]


def test_probabilities_are_single_rounded_floats():
    doc = tiny_doc()
    doc["constituents"][0] = {
        "start": 1,
        "length": 2,
        "realizations": [[2, 3], [3, 4], [4, 6]],
        "weights": ["1/3", "1/3", "1/3"],
    }
    model = MirrorModel(doc)
    third = float(Fraction(1, 3))
    rows = model.marginals([1, MASK, MASK, MASK], [1])
    assert rows == [[0.0, 0.0, third, third, third, 0.0, 0.0, 0.0]]


def test_row_order_follows_masked_order():
    model = MirrorModel(tiny_doc())
    tokens = [1, MASK, MASK, MASK]
    forward = model.marginals(tokens, [1, 3])
    backward = model.marginals(tokens, [3, 1])
    assert forward == list(reversed(backward))
    assert model.marginals(tokens, []) == []
    assert model.marginals(tokens, [2, 2]) == model.marginals(tokens, [2]) * 2


def test_incompatible_evidence_is_a_query_error():
    model = MirrorModel(tiny_doc())
    with pytest.raises(QueryError, match="no realization"):
        model.marginals([1, 6, MASK, MASK], [2])


@pytest.mark.parametrize(
    "tokens, masked, match",
    [
        ([1, MASK, MASK], [1], "length"),
        ([1, MASK, MASK, MASK], [0], "outside"),
        ([1, MASK, MASK, MASK], [9], "outside"),
        ([1, 2, MASK, MASK], [1], "not masked"),
        ("nope", [1], "list of integers"),
        ([1, MASK, MASK, MASK], [1.5], "list of integers"),
        ([1, MASK, MASK, MASK], [True], "list of integers"),
    ],
)
def test_bad_queries_are_rejected(tokens, masked, match):
    model = MirrorModel(tiny_doc())
    with pytest.raises(QueryError, match=match):
        model.marginals(tokens, masked)


def break_doc(mutate):
    doc = tiny_doc()
    mutate(doc)
    return doc


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: d.update(format="something-else"), "not a planted-corpus-v1"),
        (lambda d: d.update(vocab_size=1), "size >= 2"),
        (lambda d: d.update(mask_id=8), "contain mask_id"),
        (lambda d: d["constituents"][0].update(start=2), "tile the region"),
        (lambda d: d["constituents"][0]["weights"].pop(), "one weight per realization"),
        (lambda d: d["constituents"][0].update(weights=["1/2", "1/4", "1/5"]), "sum to exactly 1"),
        (lambda d: d["constituents"][0].update(weights=["1/2", "1/2", "0"]), "positive"),
        (lambda d: d["constituents"][0]["realizations"][1].append(9), "differ in length"),
        (lambda d: d["constituents"][0]["realizations"].__setitem__(0, [2, MASK]), "usable vocabulary"),
        (lambda d: d["constituents"][0]["realizations"].__setitem__(0, [2, 8]), "usable vocabulary"),
        (lambda d: d.update(constituents=[]), "no constituents"),
        (lambda d: d.pop("prompt"), "malformed"),
    ],
)
def test_bad_specs_refuse_to_load(mutate, match):
    with pytest.raises(SpecError, match=match):
        MirrorModel(break_doc(mutate))


def test_from_file_round_trip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(tiny_doc()))
    model = MirrorModel.from_file(str(path))
    assert model.vocab_size == 8
    assert model.length == 4

    with pytest.raises(SpecError, match="cannot read"):
        MirrorModel.from_file(str(tmp_path / "absent.json"))
    junk = tmp_path / "junk.json"
    junk.write_text("{[")
    with pytest.raises(SpecError, match="not JSON"):
        MirrorModel.from_file(str(junk))


def test_fixture_corpora_load(fixture_paths):
    # The committed conformance corpora must all be valid documents.
    assert len(fixture_paths) == 5
    for path in fixture_paths:
        model = MirrorModel.from_file(str(path))
        tokens = model.prompt + [model.mask_id] * (model.length - len(model.prompt))
        rows = model.marginals(tokens, [len(model.prompt)])
        assert len(rows[0]) == model.vocab_size
        assert abs(sum(rows[0]) - 1.0) < 1e-12
