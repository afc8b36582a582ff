from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")

from l3tc import _textgen, rwkv, tokenizer  # noqa: E402


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per end-to-end criterion, plus throughput notes."""
    tr = terminalreporter
    rows = [r for key in ("passed", "failed")
            for r in tr.stats.get(key, [])
            if r.when == "call" and "test_acceptance" in r.nodeid]
    if not rows:
        return
    tr.section("acceptance")
    for r in rows:
        tag = "PASS" if r.passed else "FAIL"
        tr.write_line(f"{tag} {r.nodeid.split('::')[-1]}")
    for line in getattr(config, "_acceptance_notes", []):
        tr.write_line(line)


@pytest.fixture(scope="session")
def text_400k() -> str:
    return _textgen.desk_corpus(400_000, seed=9).decode("utf-8")


@pytest.fixture(scope="session")
def vocab_small(text_400k) -> tokenizer.Vocabulary:
    return tokenizer.train_vocabulary(text_400k, 384, coverage=0.999)


@pytest.fixture(scope="session")
def model_small(vocab_small) -> rwkv.ModelWeights:
    cfg = rwkv.ModelConfig(2, 32, 32, vocab_small.size)
    return rwkv.random_weights(cfg, seed=5)


@pytest.fixture(scope="session")
def tiny_cfg() -> rwkv.ModelConfig:
    return rwkv.ModelConfig(2, 16, 24, 64)


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg) -> rwkv.ModelWeights:
    return rwkv.random_weights(tiny_cfg, seed=11)
