import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dcan.model import ModelConfig, init_params  # noqa: E402
from dcan.numcore import RngStream  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    return ModelConfig(vocab_size=12, num_labels=4, embed_dim=5, kernel_size=2, num_levels=2,
                       channels=(4, 3), projection_dim=3, dropout_rate=0.0, max_len=64)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, RngStream(7))


# ---------------------------------------------------------------------------
# acceptance ledger: every acceptance test records one line, printed at the end

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Call ``criterion(ok, detail)`` once per acceptance test to log PASS/FAIL."""
    name = request.node.name

    def record(ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
