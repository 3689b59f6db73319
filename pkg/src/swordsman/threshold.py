"""Confidence thresholds: the entropy-tracking schedule and the unmask rule."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .core import ConfigError, ContractViolationError

# Block mean entropies below this are treated as already-resolved context,
# pinning the schedule at its starting value.
MEAN_FLOOR = 1e-9


@dataclass(frozen=True)
class ThresholdPolicy:
    """Threshold behaviour for one run: fixed value or entropy-tracking decay."""

    mode: str
    tau_fixed: float = 0.9
    tau_init: float = 0.9

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "dynamic"):
            raise ConfigError(f"unknown threshold mode {self.mode!r}")
        for name in ("tau_fixed", "tau_init"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")


def dynamic_tau(tau_init: float, lam: float, mean_now: float, mean_start: float) -> float:
    """Entropy-tracking threshold for one inner decoding step.

    The ratio r = mean_now / mean_start is clamped to [0, 1] (and pinned to 1
    when the starting mean is below ``MEAN_FLOOR``); the threshold then decays
    from tau_init toward tau_init * (1 - lam) along sqrt(r):

        tau = tau_init * ((1 - lam) + lam * sqrt(r))
    """
    if not 0.0 < tau_init <= 1.0:
        raise ContractViolationError(f"tau_init must lie in (0, 1], got {tau_init}")
    if not 0.0 <= lam <= 1.0:
        raise ContractViolationError(f"lam must lie in [0, 1], got {lam}")
    if mean_now < 0.0 or mean_start < 0.0:
        raise ContractViolationError("block mean entropies must be non-negative")
    if mean_start < MEAN_FLOOR:
        ratio = 1.0
    else:
        ratio = min(max(mean_now / mean_start, 0.0), 1.0)
    return tau_init * ((1.0 - lam) + lam * math.sqrt(ratio))


def select_unmask(confidences: Mapping[int, float], tau: float) -> set[int]:
    """Positions to unmask this step: everything at or above the threshold.

    Never returns an empty set: when nothing clears ``tau`` the single most
    confident position is taken instead (ties break to the lowest position),
    which guarantees per-step progress.
    """
    if not confidences:
        raise ContractViolationError("select_unmask needs at least one candidate")
    chosen = {p for p, c in confidences.items() if c >= tau}
    if chosen:
        return chosen
    best = max(confidences.items(), key=lambda item: (item[1], -item[0]))
    return {best[0]}
