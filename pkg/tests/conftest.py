"""Suite-wide pytest configuration."""
from __future__ import annotations

from hypothesis import HealthCheck, settings

# Property tests here lean on fsum-heavy numerics whose first call can be
# slow under coverage or a cold numpy; wall-clock deadlines would only add
# flakiness on loaded machines.
settings.register_profile(
    "swordsman",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("swordsman")
