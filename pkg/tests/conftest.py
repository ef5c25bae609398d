import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

from qnav.fixtures import cycle4, diamond, small_world, star
from qnav.navgraph import line_graph
from qnav.worldgen import WorldConfig, generate

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=8, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def line():
    return line_graph(5, 3)


@pytest.fixture
def star4():
    return star(4)


@pytest.fixture
def square():
    return cycle4()


@pytest.fixture
def dia():
    return diamond()


@pytest.fixture(scope="session")
def grid_world():
    return generate(WorldConfig(seed=3))


@st.composite
def small_graphs(draw, min_nodes=4, max_nodes=14):
    n = draw(st.integers(min_nodes, max_nodes))
    seed = draw(st.integers(0, 2**32 - 1))
    kind = draw(st.sampled_from(["random-geometric", "random-tree"]))
    return small_world(n, seed, kind)


@st.composite
def graph_and_edge(draw, **kw):
    g = draw(small_graphs(**kw))
    origin = draw(st.integers(0, g.n - 1))
    cand = draw(st.sampled_from(g.adjacency[origin]))
    return g, origin, cand


def pairs(g):
    return [(o, c) for o in range(g.n) for c in g.adjacency[o]]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# criterion lines collected by test_acceptance.py, echoed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
