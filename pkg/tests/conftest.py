import numpy as np
import pytest

from soprbt.pipeline import run_pipeline
from soprbt.so_model import generate_triple_chain


@pytest.fixture(scope="session")
def chain10():
    return generate_triple_chain(10)


@pytest.fixture(scope="session")
def chain10_r12(chain10):
    return run_pipeline(chain10, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
