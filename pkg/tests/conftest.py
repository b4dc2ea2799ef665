"""Shared test configuration."""

from hypothesis import HealthCheck, settings

# JIT warm-up and first-call caching make wall-clock deadlines flaky on a
# single core, so judge examples purely by their assertions.
settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")
