from pathlib import Path

import numpy as np
import pytest

from mlscale import kernels

ROOT = Path(__file__).resolve().parent.parent
ML100K = ROOT / "data" / "ml-100k" / "u.data"
WORDNET = ROOT / "data" / "wordnet" / "noun_glosses.tsv"

BACKENDS = kernels.available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def ml100k_path():
    if not ML100K.exists():
        pytest.skip("MovieLens-100k not present; run scripts/fetch_data.py ml-100k")
    return ML100K


@pytest.fixture
def wordnet_path():
    if not WORDNET.exists():
        pytest.skip("WordNet gloss corpus not present; run scripts/fetch_data.py wordnet")
    return WORDNET


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _report(criterion, ok, measured, tolerance):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {measured}  [{tolerance}]"
        lines.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
