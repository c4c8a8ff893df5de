import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from interference_lab.synth import ManifoldConfig, sample_corpus, token_corpus

settings.register_profile("lab", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture(scope="session")
def small_corpus():
    """A 40-target, 2000-item corpus on a 12-d manifold in 128 dims."""
    cfg = ManifoldConfig(d_loc=12, d_nom=128, n=0)
    c = sample_corpus(cfg, 40, 2000, 0.75, np.random.default_rng(7))
    tokens = token_corpus(np.vstack([c.targets, c.pool]), np.random.default_rng(8), vocab_size=500)
    return c, tokens


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        terminalreporter.write_line(lines[num])
