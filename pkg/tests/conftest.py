import pytest

import helpers
from roadrisk.ingest import build_dataset
from roadrisk.synth import SynthSpec, generate


@pytest.fixture
def cross_graph():
    return helpers.cross_graph()


@pytest.fixture(scope="session")
def small_synth():
    return generate(SynthSpec(grid_w=6, grid_h=5, seed=3, risk_weights=(-3.0, 1.0, 0.3, 3.0)))


@pytest.fixture(scope="session")
def small_dataset(small_synth):
    return build_dataset(small_synth.graph, small_synth.accidents, seed=0)


@pytest.fixture(scope="session")
def default_synth():
    return generate(SynthSpec())


@pytest.fixture(scope="session")
def default_dataset(default_synth):
    return build_dataset(default_synth.graph, default_synth.accidents, seed=0)

