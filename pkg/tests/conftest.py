import numpy as np
import pytest

from amrforge.graph import parse_penman

# The running example used throughout: a raw graph with a wiki tag, its
# wiki-free serialization, and the prefixed input text (all byte-exact).
INVEST_SENTENCE = (
    "Statistics also revealed that Taiwanese business investments in the "
    "mainland is tending to increase"
)

INVEST_GRAPH = """(r / reveal-01
    :ARG0 (s / statistic)
    :ARG1 (t / tend-02
        :ARG1 (t2 / thing
            :ARG1-of (i / invest-01
            :ARG0 (c / country
                :wiki "Taiwan"
                :name (n / name
                      :op1 "Taiwan"))
            :ARG2 (m / mainland)
            :mod (b / business)))
    :ARG2 (i2 / increase-01
            :ARG1 t2))
    :mod (a / also))"""

INVEST_SERIALIZED = (
    '( reveal-01 :ARG0 ( statistic ) :ARG1 ( tend-02 :ARG1 ( thing :ARG1-of '
    '( invest-01 :ARG0 ( country :name ( name :op1 "Taiwan" ) ) :ARG2 '
    '( mainland ) :mod ( business ) ) ) :ARG2 ( increase-01 :ARG1 thing ) ) '
    ':mod ( also ) )'
)

INVEST_INPUT = (
    "amr generation ; Statistics also revealed that Taiwanese business "
    "investments in the mainland is tending to increase"
)


@pytest.fixture(scope="session")
def invest_graph():
    return parse_penman(INVEST_GRAPH)


def random_graph_text(rng, n_nodes, concepts=None, roles=None):
    """Random connected Penman text with optional re-entrancies and
    attributes; used by round-trip and alignment tests."""
    concepts = concepts or ["dog", "cat", "see-01", "want-01", "thing", "city"]
    roles = roles or [":ARG0", ":ARG1", ":ARG2", ":mod", ":ARG1-of"]
    names = [f"x{i}" for i in range(n_nodes)]
    parents = {i: int(rng.integers(i)) for i in range(1, n_nodes)}

    def build(i):
        text = f"({names[i]} / {concepts[int(rng.integers(len(concepts)))]}"
        for j in sorted(k for k, p in parents.items() if p == i):
            text += f" {roles[int(rng.integers(len(roles)))]} {build(j)}"
        if rng.random() < 0.3:
            text += " :polarity -"
        if rng.random() < 0.25:
            text += f" :quant {int(rng.integers(1, 9))}"
        if i > 0 and rng.random() < 0.3:
            text += f" :ARG3 {names[int(rng.integers(i))]}"
        return text + ")"

    return build(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
