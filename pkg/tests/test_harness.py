"""Experiment harness: arm configs, scored rows, profiles, aggregation."""
from __future__ import annotations

import math

import pytest

from swordsman import (
    ConfigError,
    DecodeConfig,
    ExperimentRow,
    SynthBackend,
    aggregate_matrix,
    analyze_profiles,
    arm_config,
    comparison_matrix,
    run_arm,
)
from swordsman.harness import (
    format_aggregate_table,
    format_profile_rows,
    format_rows_table,
    sweep_values,
)

from corpora import comparison, single_span_spec, toy_spec


def test_arm_configs():
    assert arm_config("full_diffusion", 512) is None

    seq = arm_config("sequential", 512)
    assert seq.partition_mode == "fixed" and seq.fixed_block_size == 32
    assert seq.threshold_mode == "fixed" and seq.tau_fixed == 1.0

    par = arm_config("fixed_parallel", 512, tau_fixed=0.85)
    assert par.fixed_block_size == 32 and par.tau_fixed == 0.85

    ada = arm_config("adaptive_dynamic", 512, tau_init=0.8, cache_mode="dual")
    assert ada.partition_mode == "adaptive" and ada.tau_min == 0.1
    assert ada.threshold_mode == "dynamic" and ada.tau_init == 0.8
    assert ada.cache_mode == "dual"

    # Tiny regions shrink the fixed grid instead of failing validation.
    assert arm_config("sequential", 5).fixed_block_size == 5

    with pytest.raises(ConfigError):
        arm_config("beam_search", 512)


def test_run_arm_scores_the_adaptive_row():
    spec = comparison(0)
    row, result = run_arm(spec, "adaptive_dynamic")
    assert row.arm == "adaptive_dynamic"
    assert row.corpus_seed == 0
    assert (row.steps, row.blocks, row.forward_passes) == (115, 17, 115)
    assert row.exact_match
    assert row.boundary_precision == 1.0
    assert row.boundary_recall == 16 / 72
    assert row.steps == result.metrics.steps
    assert row.tokens_per_step == 512 / 115


def test_run_arm_scores_the_degenerate_rows():
    spec = comparison(0)
    base, _ = run_arm(spec, "full_diffusion")
    assert (base.steps, base.blocks) == (512, 1)
    assert base.exact_match
    assert base.boundary_recall == 0.0  # nothing detected, plenty planted
    assert base.boundary_precision is None
    assert base.tau_init is None and base.tau_fixed is None

    seq, _ = run_arm(spec, "sequential")
    assert seq.steps == 512 and seq.blocks == 16
    assert not seq.exact_match  # a fixed grid always straddles some trap


def test_matrix_rows_are_identical_across_job_counts():
    serial = comparison_matrix([0, 1], jobs=1)
    parallel = comparison_matrix([0, 1], jobs=2)
    assert serial == parallel
    assert [r.arm for r in serial[:4]] == list(
        ("full_diffusion", "sequential", "fixed_parallel", "adaptive_dynamic")
    )


def fake_row(arm: str, steps: int, match: bool) -> ExperimentRow:
    return ExperimentRow(
        corpus_seed=0,
        arm=arm,
        partition_mode="fixed",
        threshold_mode="fixed",
        cache_mode="none",
        tau_init=None,
        tau_fixed=0.9,
        tau_min=None,
        gen_len=10,
        steps=steps,
        blocks=2,
        forward_passes=steps,
        token_compute=steps * 10,
        tokens_per_step=10 / steps,
        exact_match=match,
        boundary_recall=None,
        boundary_precision=None,
    )


def test_aggregate_matrix_math():
    rows = [
        fake_row("a", 10, True),
        fake_row("a", 20, False),
        fake_row("b", 4, True),
    ]
    agg = aggregate_matrix(rows)
    assert agg["a"]["cells"] == 2
    assert agg["a"]["steps"] == 30
    assert agg["a"]["mean_steps"] == 15.0
    assert agg["a"]["match_rate"] == 0.5
    assert agg["a"]["token_compute"] == 300
    assert agg["b"]["match_rate"] == 1.0


def test_tables_render_every_row():
    spec = comparison(0)
    rows = [run_arm(spec, arm)[0] for arm in ("full_diffusion", "adaptive_dynamic")]
    table = format_rows_table(rows)
    lines = table.splitlines()
    assert lines[0].split() == [
        "corpus", "arm", "cache", "tau", "steps", "blocks", "fwd",
        "tok_compute", "tok/step", "match", "recall", "precision",
    ]
    assert len(lines) == 4  # header, rule, two rows
    assert "n/a" in lines[2]  # baseline precision
    assert "init 0.9" in lines[3]
    assert "yes" in lines[2] and "yes" in lines[3]

    agg_table = format_aggregate_table(aggregate_matrix(rows))
    assert agg_table.splitlines()[0].split() == [
        "arm", "cells", "steps", "fwd", "tok_compute", "match_rate",
    ]
    assert "1.000" in agg_table


def toy_adaptive_config():
    return DecodeConfig(
        gen_len=5,
        partition_mode="adaptive",
        tau_min=0.1,
        threshold_mode="dynamic",
        tau_init=0.9,
        cache_mode="none",
    )


def test_analyze_profiles_replays_each_refresh():
    spec = toy_spec()
    result, rows, summary = analyze_profiles(
        SynthBackend(spec), list(spec.prompt), toy_adaptive_config(), spec
    )
    assert [r.refresh for r in rows] == [1, 1, 1, 1, 1, 2, 2]
    assert [r.position for r in rows] == [2, 3, 4, 5, 6, 5, 6]
    # Last position of each refresh has no forward shift.
    assert [r.shift is None for r in rows] == [
        False, False, False, False, True, False, True,
    ]
    chosen = [(r.refresh, r.position) for r in rows if r.chosen_end]
    assert chosen == [(1, 4), (2, 6)]
    assert [r.position for r in rows if r.planted_end and r.refresh == 1] == [4, 6]
    # Interior one-hot positions carry exactly zero entropy.
    assert [r.entropy for r in rows if r.position in (3, 4) and r.refresh == 1] == [
        0.0,
        0.0,
    ]
    assert summary["refreshes"] == 2
    assert summary["steps"] == 4
    assert summary["blocks"] == 2
    assert summary["planted_boundaries"] == 1
    assert summary["detected_boundaries"] == 1
    assert summary["boundary_recall"] == 1.0
    assert summary["boundary_precision"] == 1.0
    assert summary["exact_match"] is True
    assert result.output == [3, 0, 5, 6, 1]


def test_analyze_profiles_reports_none_when_nothing_is_scorable():
    spec = single_span_spec()
    config = DecodeConfig(
        gen_len=2,
        partition_mode="adaptive",
        tau_min=0.1,
        threshold_mode="dynamic",
        tau_init=0.9,
        cache_mode="none",
    )
    _, rows, summary = analyze_profiles(SynthBackend(spec), [0], config, spec)
    assert summary["planted_boundaries"] == 0
    assert summary["detected_boundaries"] == 0
    assert summary["boundary_recall"] is None
    assert summary["boundary_precision"] is None
    assert [r.refresh for r in rows] == [1, 1]


def test_analyze_profiles_without_a_spec_skips_scoring():
    spec = toy_spec()
    _, rows, summary = analyze_profiles(
        SynthBackend(spec), list(spec.prompt), toy_adaptive_config()
    )
    assert "boundary_recall" not in summary
    assert all(not r.planted_end for r in rows)


def test_format_profile_rows_is_tab_separated():
    spec = toy_spec()
    _, rows, _ = analyze_profiles(
        SynthBackend(spec), list(spec.prompt), toy_adaptive_config(), spec
    )
    text = format_profile_rows(rows)
    lines = text.splitlines()
    assert lines[0] == "refresh\tposition\tentropy\tshift\tplanted_end\tchosen_end"
    assert len(lines) == 1 + len(rows)
    first = lines[1].split("\t")
    assert first[0] == "1" and first[1] == "2"
    assert first[4] == "0" and first[5] == "0"
    # The refresh's final row leaves the shift column empty.
    assert lines[5].split("\t")[3] == ""


def test_sweep_values():
    assert sweep_values("0.5,0.6,0.7") == [0.5, 0.6, 0.7]
    assert sweep_values("1") == [1.0]
    assert sweep_values("0.9, 0.8,") == [0.9, 0.8]
    with pytest.raises(ConfigError):
        sweep_values("")
    with pytest.raises(ConfigError):
        sweep_values("abc")
    with pytest.raises(ConfigError):
        sweep_values("0.5,1.5")
    with pytest.raises(ConfigError):
        sweep_values("0")
    with pytest.raises(ConfigError):
        sweep_values("nan")
