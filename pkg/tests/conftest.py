import numpy as np
import pytest

from fedsim.rng import SeededRng
from fedsim.textgen import generate_corpus


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Small synthetic corpus shared by orchestrator/CLI tests."""
    root = tmp_path_factory.mktemp("tiny-corpus")
    return generate_corpus(
        root, n_train=30_000, n_valid=4_000, n_test=4_000, n_types=800, seed=7
    )


@pytest.fixture
def rng():
    return SeededRng(99)


def random_paramset(rng: np.random.Generator, n_tensors=3, max_dim=6):
    """Helper used across aggregation/simulation tests."""
    from fedsim.params import ParamSet

    ps = ParamSet()
    for i in range(n_tensors):
        r = int(rng.integers(1, max_dim + 1))
        c = int(rng.integers(1, max_dim + 1))
        ps.add(f"t{i}", rng.standard_normal((r, c)))
    return ps
