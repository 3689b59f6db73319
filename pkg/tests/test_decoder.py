"""The block decode loop, its cost accounting, and its failure modes.

The toy corpus is small enough that every number asserted here (step
positions, block edges, token-compute totals per cache mode) was derived by
hand from the marginals documented in tests/corpora.py.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from swordsman import (
    BackendFaultError,
    ConfigError,
    DecodeConfig,
    PositionDistribution,
    SynthBackend,
    Vocab,
    account_forward,
    decode,
    decode_baseline_full_diffusion,
    validate_trace,
)

from corpora import toy_spec
from oracles import greedy_decode

TOY_ML = [3, 0, 5, 6, 1]


def adaptive_config(**overrides) -> DecodeConfig:
    base = dict(
        gen_len=5,
        partition_mode="adaptive",
        tau_min=0.1,
        threshold_mode="dynamic",
        tau_init=0.9,
        cache_mode="none",
    )
    base.update(overrides)
    return DecodeConfig(**base)


def decode_toy(**overrides):
    spec = toy_spec()
    backend = SynthBackend(spec)
    return decode(backend, list(spec.prompt), adaptive_config(**overrides))


def test_toy_adaptive_run_structure():
    result = decode_toy()
    assert result.output == TOY_ML
    m = result.metrics
    assert (m.steps, m.blocks, m.forward_passes) == (4, 2, 4)
    assert m.block_sizes == {3: 1, 2: 1}
    assert m.gen_len == 5
    assert m.tokens_per_step == 5 / 4

    steps = result.trace.of_kind("unmask_step")
    assert [s.payload["positions"] for s in steps] == [[3, 4], [2], [6], [5]]

    boundaries = result.trace.of_kind("boundary")
    assert [b.payload["position"] for b in boundaries] == [4, 6]
    assert [b.payload["terminated"] for b in boundaries] == [False, True]
    # The first boundary sits on the only entropy rise; the second refresh
    # has no rise left, so the remainder is merged.
    assert boundaries[0].payload["max_shift"] > 0.6
    assert boundaries[1].payload["max_shift"] < 0.0

    validate_trace(result.trace)


def test_toy_block_lambda_values():
    result = decode_toy()
    blocks = result.trace.of_kind("block_start")
    # Block 2's mean entropy exceeds block 1's, so both set the running
    # maximum at creation time and both decay weights collapse to zero.
    assert [b.payload["lam"] for b in blocks] == [0.0, 0.0]
    assert blocks[0].payload["mean_entropy"] < blocks[1].payload["mean_entropy"]


def test_toy_token_compute_by_cache_mode():
    # Four passes (two refreshes, one extra step per block). Hand tally:
    #   none:   7 + 7 + 7 + 7 = 28
    #   prefix: 5 + 5 + 2 + 2 = 14
    #   dual:   5 + 3 + 2 + 2 = 12
    totals = {}
    outputs = set()
    for mode in ("none", "prefix", "dual"):
        result = decode_toy(cache_mode=mode)
        totals[mode] = result.metrics.token_compute
        outputs.add(tuple(result.output))
    assert totals == {"none": 28, "prefix": 14, "dual": 12}
    assert len(outputs) == 1  # accounting never touches the decoded tokens


def test_zero_length_decode_is_identity():
    spec = toy_spec()
    backend = SynthBackend(spec)
    result = decode(backend, list(spec.prompt), adaptive_config(gen_len=0))
    assert result.output == []
    assert len(result.trace) == 0
    m = result.metrics
    assert (m.steps, m.blocks, m.forward_passes, m.token_compute) == (0, 0, 0, 0)
    assert list(result.state.tokens) == list(spec.prompt)


def test_decode_is_deterministic():
    a = decode_toy()
    b = decode_toy()
    assert a.output == b.output
    assert len(a.trace) == len(b.trace)
    for ea, eb in zip(a.trace, b.trace):
        assert ea.kind == eb.kind
        assert ea.payload == eb.payload


def test_sink_receives_every_event():
    spec = toy_spec()
    backend = SynthBackend(spec)
    seen = []
    result = decode(backend, list(spec.prompt), adaptive_config(), sink=seen.append)
    assert seen == list(result.trace)


def test_degenerate_fixed_threshold_decodes_one_token_per_step():
    # tau_fixed pinned at 1.0 swaps the gate for +inf: even exact one-hot
    # confidences fall back to single-token steps.
    result = decode_toy(
        partition_mode="fixed",
        fixed_block_size=5,
        threshold_mode="fixed",
        tau_fixed=1.0,
    )
    steps = result.trace.of_kind("unmask_step")
    assert all(len(s.payload["positions"]) == 1 for s in steps)
    assert [s.payload["positions"][0] for s in steps] == [3, 4, 6, 2, 5]
    assert all(s.payload["tau"] == math.inf for s in steps)
    assert result.metrics.steps == 5
    assert result.output == TOY_ML


def test_degenerate_regime_matches_greedy_oracle():
    spec = toy_spec()
    result = decode_toy(
        partition_mode="fixed",
        fixed_block_size=5,
        threshold_mode="fixed",
        tau_fixed=1.0,
    )
    order = [s.payload["positions"][0] for s in result.trace.of_kind("unmask_step")]
    oracle_order, oracle_output = greedy_decode(SynthBackend(spec), spec.prompt, 5)
    assert order == oracle_order
    assert result.output == oracle_output


def test_dynamic_threshold_at_one_keeps_literal_semantics():
    # In dynamic mode 1.0 is a real threshold: exact certainties clear it.
    result = decode_toy(tau_min=math.inf, tau_init=1.0)
    assert result.metrics.blocks == 1
    sizes = [len(s.payload["positions"]) for s in result.trace.of_kind("unmask_step")]
    assert max(sizes) == 3  # the three one-hot positions commit together
    assert result.output == TOY_ML


def test_fixed_grid_tiles_the_region():
    result = decode_toy(
        partition_mode="fixed",
        fixed_block_size=2,
        threshold_mode="fixed",
        tau_fixed=0.9,
    )
    blocks = result.trace.of_kind("block_start")
    assert [(b.payload["start"], b.payload["end"]) for b in blocks] == [
        (2, 3),
        (4, 5),
        (6, 6),
    ]
    assert result.metrics.block_sizes == {2: 2, 1: 1}
    assert result.output == TOY_ML
    validate_trace(result.trace)


def test_baseline_uses_one_step_per_token():
    spec = toy_spec()
    result = decode_baseline_full_diffusion(SynthBackend(spec), list(spec.prompt), 5)
    m = result.metrics
    assert (m.steps, m.blocks, m.forward_passes) == (5, 1, 5)
    assert m.block_sizes == {5: 1}
    assert m.token_compute == 7 * 5  # every pass covers prompt plus region
    assert result.output == TOY_ML
    validate_trace(result.trace)
    order = [s.payload["positions"][0] for s in result.trace.of_kind("unmask_step")]
    oracle_order, _ = greedy_decode(SynthBackend(spec), spec.prompt, 5)
    assert order == oracle_order


def test_baseline_zero_length():
    spec = toy_spec()
    result = decode_baseline_full_diffusion(SynthBackend(spec), list(spec.prompt), 0)
    assert result.output == []
    assert len(result.trace) == 0


def test_decode_rejects_bad_prompts():
    spec = toy_spec()
    backend = SynthBackend(spec)
    with pytest.raises(ConfigError):
        decode(backend, [], adaptive_config())
    with pytest.raises(ConfigError):
        decode(backend, [7], adaptive_config())  # the mask id
    with pytest.raises(ConfigError):
        decode(backend, [12], adaptive_config())  # out of vocabulary


class _MissingPositionBackend:
    vocab = Vocab(8, 7)

    def query(self, state, positions):
        good = SynthBackend(toy_spec()).query(state, positions)
        return {p: d for p, d in list(good.items())[:-1]}


class _WrongWidthBackend:
    vocab = Vocab(8, 7)

    def query(self, state, positions):
        return {
            p: PositionDistribution(p, np.full(4, 0.25)) for p in positions
        }


class _MislabeledBackend:
    vocab = Vocab(8, 7)

    def query(self, state, positions):
        probs = np.zeros(8)
        probs[0] = 1.0
        return {p: PositionDistribution(p + 1, probs) for p in positions}


@pytest.mark.parametrize(
    "backend_cls",
    [_MissingPositionBackend, _WrongWidthBackend, _MislabeledBackend],
)
def test_backend_contract_violations_surface_as_faults(backend_cls):
    with pytest.raises(BackendFaultError):
        decode(backend_cls(), [1, 2], adaptive_config())


def test_account_forward_cost_table():
    # One refresh and one inner step, spelled out for every cache mode.
    # prompt 8, 100 tokens already decoded, block of 32, 280 still ahead.
    assert account_forward("none", 8, 100, 0, 412, "refresh") == 520
    assert account_forward("prefix", 8, 100, 0, 412, "refresh") == 412
    assert account_forward("dual", 8, 100, 0, 412, "refresh") == 412
    assert account_forward("none", 8, 100, 32, 280, "block_step") == 420
    assert account_forward("prefix", 8, 100, 32, 280, "block_step") == 312
    assert account_forward("dual", 8, 100, 32, 280, "block_step") == 32


def test_account_forward_contracts():
    with pytest.raises(ConfigError):
        account_forward("none", 8, 0, 0, 10, "warmup")
    with pytest.raises(ConfigError):
        account_forward("none", 8, 0, 4, 10, "refresh")
    with pytest.raises(ConfigError):
        account_forward("l2", 8, 0, 0, 10, "refresh")


def test_forward_pass_identity_holds_on_traces():
    for overrides in (
        {},
        {"cache_mode": "dual"},
        {"partition_mode": "fixed", "fixed_block_size": 2, "threshold_mode": "fixed"},
    ):
        result = decode_toy(**overrides)
        refreshes = len(result.trace.of_kind("refresh"))
        m = result.metrics
        assert m.forward_passes == refreshes + m.steps - m.blocks
