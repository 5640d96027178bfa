import numpy as np
import pytest

from app.model import ModelParams, sample_instance
from app.moments import MomentParams
from app.multigraph import Template


@pytest.fixture
def double_edge():
    return Template.from_text("nodes 2\n1 2\n1 2\n")


@pytest.fixture
def single_edge():
    return Template.from_text("nodes 2\n1 2\n")


@pytest.fixture
def quadruple_edge():
    return Template.from_text("nodes 2\n1 2\n1 2\n1 2\n1 2\n")


@pytest.fixture
def degree2_path():
    return Template.from_text("nodes 3\n1 3\n3 2\n")


@pytest.fixture
def small_params():
    return MomentParams(n=6, d=2, K=2, delta=1.0)


@pytest.fixture
def small_instance():
    return sample_instance(ModelParams(n=12, d=3, K=2, delta=2.0), seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
