import numpy as np
import pytest

NESTED = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0]])


@pytest.fixture
def nested():
    return NESTED.copy()


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(20160601)
