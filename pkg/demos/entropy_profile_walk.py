#!/usr/bin/env python3
"""Walk the full-mask entropy profile of a planted corpus.

A planted corpus is a mixture of multi-token constituents. Under the fully
masked state, positions inside a constituent are certain (the realization
body is forced once you know where you are), while the first position of
each constituent carries the branch choice and shows up as an entropy spike.
This script queries the synthetic backend on the all-mask state, renders the
per-position profile as an ASCII strip, and checks the spike locations
against the planted layout.

Run it directly; it needs nothing beyond the installed package.
"""

import math

from swordsman import (
    SequenceState,
    SynthBackend,
    Vocab,
    boundary_contrast,
    entropy_profile,
    entropy_shifts,
    generate_spec,
    planted_boundaries,
)

BAR_WIDTH = 40


def render_bar(value: float, peak: float) -> str:
    if peak <= 0.0:
        return ""
    filled = int(round(BAR_WIDTH * value / peak))
    return "#" * filled


def main() -> None:
    spec = generate_spec(seed=11, gen_len=96, prompt_len=6, vocab_size=48)
    backend = SynthBackend(spec)
    vocab = Vocab(spec.vocab_size, spec.mask_id)
    state = SequenceState.initial(vocab, list(spec.prompt), spec.gen_len)

    positions = state.masked_sorted()
    dists = backend.query(state, positions)
    profile = entropy_profile([dists[p] for p in positions])

    starts = {c.start for c in spec.constituents}
    branch = {c.start: len(c.realizations) for c in spec.constituents}

    print(f"corpus seed 11: {len(spec.constituents)} constituents over "
          f"{spec.gen_len} generated positions")
    print()
    print("pos  entropy  profile")
    peak = max(profile.values)
    for pos, h in zip(profile.positions, profile.values):
        mark = ""
        if pos in starts:
            mark = f"  <- constituent start, {branch[pos]} branches" \
                   f" (ln {branch[pos]} = {math.log(branch[pos]):.4f})"
        print(f"{pos:4d}  {h:7.4f}  {render_bar(h, peak):<{BAR_WIDTH}}{mark}")

    shifts = entropy_shifts(profile)
    ends = planted_boundaries(spec)
    internal = [e for e in ends if e != positions[-1]]
    print()
    print("entropy shifts at planted internal boundaries (H[next] - H[here]):")
    shift_at = dict(shifts.pairs)
    for end in internal:
        print(f"  position {end:3d}: {shift_at[end]:+.4f}")

    contrast = boundary_contrast(spec, profile)
    print()
    print(f"mean boundary shift   {contrast.mean_boundary_shift:.6f} "
          f"({contrast.boundary_count} boundary positions)")
    print(f"mean |intra| shift    {contrast.mean_intra_shift:.6f} "
          f"({contrast.intra_count} interior positions)")
    print(f"contrast ratio        {contrast.ratio:.1f}")
    print()
    print("Interior positions are deterministic given their constituent, so the")
    print("profile is flat between spikes and every spike sits on a planted start.")


if __name__ == "__main__":
    main()
