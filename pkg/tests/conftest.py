import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    d = tmp_path / "null-cache"
    monkeypatch.setenv("OTRANKS_CACHE", str(d))
    return d
