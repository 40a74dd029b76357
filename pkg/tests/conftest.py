import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hawk.evaluation import CopyTaskBuilder, copy_task_config  # noqa: E402
from hawk.model import ModelConfig, init_random_weights  # noqa: E402
from hawk.tensor import make_rng  # noqa: E402


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def small_config():
    return ModelConfig(d_model=16, n_layers=2, n_heads=4, d_k=4, vocab_size=11)


@pytest.fixture
def small_model(small_config):
    return init_random_weights(small_config, make_rng(7))


@pytest.fixture
def copy_builder():
    return CopyTaskBuilder.create(copy_task_config(), make_rng(11))


@pytest.fixture
def copy_model(copy_builder):
    return copy_builder.build_weights()


def random_instance(seed):
    """A random scoring instance drawn within N<=8, M<=64, N_h<=4, d_k<=16."""
    from hawk.model import MultimodalSequence

    r = make_rng(seed)
    n_h = int(r.integers(1, 5))
    d_k = int(r.integers(1, 9)) * 2
    n = int(r.integers(1, 9))
    m = int(r.integers(1, 65))
    config = ModelConfig(d_model=n_h * d_k, n_layers=1, n_heads=n_h, d_k=d_k, vocab_size=5)
    weights = init_random_weights(config, r)
    seq = MultimodalSequence(r.standard_normal((n, config.d_model)), r.standard_normal((m, config.d_model)))
    w = r.random(n_h)
    w /= w.sum()
    keep = int(r.integers(1, m + 1))
    return weights, seq, w, keep


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
