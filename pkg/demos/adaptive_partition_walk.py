#!/usr/bin/env python3
"""Narrate one adaptive decode, block by block.

The partitioner refreshes the entropy profile over the remaining region, cuts
the next block just before the largest upward entropy shift (or runs to the
end of the region when every shift stays under tau_min), and hands the block
to the threshold scheduler. Here we capture the trace of a single adaptive
run and retell it: where each boundary landed, what shift argued for it, and
how the chosen cuts line up with the planted constituent layout.
"""

from swordsman import DecodeConfig, SynthBackend, decode, generate_spec, planted_boundaries


def main() -> None:
    spec = generate_spec(seed=4, gen_len=64, prompt_len=4, vocab_size=48)
    backend = SynthBackend(spec)
    config = DecodeConfig(gen_len=spec.gen_len, partition_mode="adaptive",
                          threshold_mode="dynamic", tau_min=0.1)

    events = []
    result = decode(backend, list(spec.prompt), config, sink=events.append)

    prompt_len = len(spec.prompt)
    region_end = prompt_len + spec.gen_len - 1
    planted = [e for e in planted_boundaries(spec) if e != region_end]
    print(f"corpus seed 4: gen_len {spec.gen_len}, planted internal cuts at")
    print(f"  {planted}")
    print()

    chosen = []
    for ev in events:
        if ev.kind == "boundary":
            pos = ev.payload["position"]
            shift = ev.payload["max_shift"]
            if ev.payload["terminated"]:
                print(f"boundary search: no shift above tau_min remains, "
                      f"block runs to the region end ({pos})")
            else:
                chosen.append(pos)
                print(f"boundary search: max upward shift {shift:+.4f} "
                      f"after position {pos}, cut there")
        elif ev.kind == "block_start":
            p = ev.payload
            print(f"  block {p['index']}: positions {p['start']}..{p['end']} "
                  f"(span {p['span']}, mean entropy {p['mean_entropy']:.4f}, "
                  f"lam {p['lam']:.4f})")
        elif ev.kind == "unmask_step":
            p = ev.payload
            print(f"    step {p['step']}: tau {p['tau']:.4f}, "
                  f"commits {p['positions']}")

    print()
    print(f"chosen cuts:  {chosen}")
    print(f"planted cuts: {planted}")
    print(f"agreement:    {'exact' if chosen == planted else 'partial'}")
    m = result.metrics
    print()
    print(f"{m.steps} steps over {m.blocks} blocks for {m.gen_len} tokens "
          f"({m.tokens_per_step:.2f} tokens per step, "
          f"{m.forward_passes} forward passes)")


if __name__ == "__main__":
    main()
