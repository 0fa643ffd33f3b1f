from hypothesis import HealthCheck, settings

# Reproducible property tests: the suite asserts determinism everywhere else,
# so the example generator should not be a source of run-to-run variation.
settings.register_profile(
    "ci",
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")
