import numpy as np
import pytest

from amrforge.graph import (
    AmrGraph,
    GraphError,
    PenmanParseError,
    emit_penman,
    format_block,
    normalize_triple,
    parse_amr_file_text,
    parse_penman,
    to_triples,
)
from amrforge.smatch import smatch

from conftest import INVEST_GRAPH, random_graph_text


class TestParse:
    def test_minimal_graph(self):
        g = parse_penman("(a / thing)")
        assert g.nodes == (("a", "thing"),)
        assert g.top == "a"
        assert g.edges == ()

    def test_running_example_structure(self, invest_graph):
        g = invest_graph
        assert len(g.nodes) == 11
        assert g.top == "r"
        assert ("t2", ":ARG1-of", "i") in g.edges
        assert (":ARG1", "i2", "t2") in to_triples(g).relations

    def test_reentrant_reference_resolves_to_declared_node(self):
        g = parse_penman("(a / a1 :op1 (b / b1) :op2 b)")
        triples = to_triples(g)
        # hand-enumerated oracle
        assert triples.instances == frozenset({("a", "a1"), ("b", "b1")})
        assert triples.relations == frozenset({(":op1", "a", "b"), (":op2", "a", "b")})
        assert triples.attributes == frozenset({(":TOP", "a", "a1")})

    def test_forward_reference(self):
        g = parse_penman("(a / a1 :op1 b :op2 (b / b1))")
        assert (":op1", "a", "b") in to_triples(g).relations

    def test_metadata_side_channel(self):
        g = parse_penman("# ::id 7 ::snt A dog.\n# plain comment\n(d / dog)")
        assert g.metadata == (("id", "7"), ("snt", "A dog."), ("", "plain comment"))
        assert g.metadata_value("snt") == "A dog."

    def test_quoted_constants_keep_quotes(self):
        g = parse_penman('(c / city :name (n / name :op1 "New" :op2 "York"))')
        assert ("n", ":op1", '"New"') in g.attributes

    def test_numeric_and_symbol_constants(self):
        g = parse_penman("(r / see-01 :polarity - :quant 5)")
        triples = to_triples(g)
        assert (":polarity", "r", "-") in triples.attributes
        assert (":quant", "r", "5") in triples.attributes

    def test_undeclared_bare_token_is_constant(self):
        g = parse_penman("(a / thing :mod fast)")
        assert ("a", ":mod", "fast") in g.attributes

    def test_duplicate_roles_allowed(self):
        g = parse_penman("(a / and :op1 (b / b1) :op1 (c / c1))")
        assert len(g.edges) == 2

    def test_compact_spacing(self):
        g = parse_penman("(a/thing :ARG0(b/dog))")
        assert g.nodes == (("a", "thing"), ("b", "dog"))


class TestParseErrors:
    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("(a / thing", "unbalanced"),
            ("(a / thing))", "unbalanced"),
            ("(a / thing :ARG0 (a / other))", "duplicate variable"),
            ("(a thing)", "missing '/'"),
            ("(a)", "missing '/'"),
            ("(a / thing :ARG0-of zz)", "undeclared variable"),
            ("", "empty input"),
            ('(a / thing :wiki "unterminated)', "unterminated quoted"),
            ("(a / thing) junk", "trailing"),
        ],
    )
    def test_named_errors_carry_offsets(self, text, fragment):
        with pytest.raises(PenmanParseError) as err:
            parse_penman(text)
        assert fragment in str(err.value)
        assert err.value.offset >= 0
        assert err.value.offset <= len(text)

    def test_totality_on_fuzzed_strings(self, rng):
        alphabet = list('()/:"- ab1\n')
        for _ in range(2000):
            text = "".join(
                alphabet[int(rng.integers(len(alphabet)))]
                for _ in range(int(rng.integers(0, 40)))
            )
            try:
                parse_penman(text)
            except PenmanParseError:
                pass  # positioned error is the contract; crashes are not

    def test_deep_nesting_does_not_crash(self):
        depth = 4000
        text = "(a0 / c" + "".join(f" :x (a{i} / c" for i in range(1, depth))
        text += ")" * depth
        assert len(parse_penman(text).nodes) == depth


class TestGraphInvariants:
    def test_duplicate_variable_rejected(self):
        with pytest.raises(GraphError):
            AmrGraph("a", [("a", "x"), ("a", "y")])

    def test_undeclared_edge_target_rejected(self):
        with pytest.raises(GraphError):
            AmrGraph.from_parts("a", [("a", "x")], edges=[("a", ":mod", "zz")])

    def test_disconnected_rejected(self):
        with pytest.raises(GraphError):
            AmrGraph("a", [("a", "x"), ("b", "y")])

    def test_connected_through_inverse_direction(self):
        g = AmrGraph.from_parts(
            "a", [("a", "x"), ("b", "y")], edges=[("b", ":ARG0", "a")]
        )
        assert g.top == "a"


class TestEmit:
    def test_round_trip_minimal(self):
        assert emit_penman(parse_penman("(a / thing)")) == "(a / thing)"

    def test_running_example_isomorphic(self, invest_graph):
        text = emit_penman(invest_graph)
        assert to_triples(parse_penman(text)) == to_triples(invest_graph)

    def test_first_mention_carries_concept(self):
        g = parse_penman("(a / a1 :op1 (b / b1) :op2 b)")
        out = emit_penman(g, indent=False)
        assert out == "(a / a1 :op1 (b / b1) :op2 b)"

    def test_hundred_random_graphs_round_trip(self, rng):
        graphs = []
        for _ in range(100):
            graphs.append(parse_penman(random_graph_text(rng, int(rng.integers(1, 11)))))
        reparsed = [parse_penman(emit_penman(g)) for g in graphs]
        score = smatch(reparsed, graphs, seed=0)
        assert score.f1 == 1.0

    def test_unreachable_forward_node_attached_inverted(self):
        g = AmrGraph.from_parts(
            "a", [("a", "run-02"), ("b", "fast-02")], edges=[("b", ":ARG1", "a")]
        )
        text = emit_penman(g)
        assert ":ARG1-of" in text
        assert to_triples(parse_penman(text)) == to_triples(g)


class TestTriples:
    def test_minimal(self):
        t = to_triples(parse_penman("(a / thing)"))
        assert t.instances == frozenset({("a", "thing")})
        assert t.attributes == frozenset({(":TOP", "a", "thing")})
        assert t.relations == frozenset()

    def test_polarity_attribute(self):
        t = to_triples(parse_penman("(r / see-01 :polarity -)"))
        assert (":polarity", "r", "-") in t.attributes

    def test_inverse_normalization(self, invest_graph):
        t = to_triples(invest_graph)
        assert (":ARG1", "i", "t2") in t.relations
        assert not any(role.endswith("-of") for role, _, _ in t.relations)

    def test_instance_count_equals_node_count(self, invest_graph):
        assert len(to_triples(invest_graph).instances) == len(invest_graph.nodes)

    def test_normalization_idempotent(self):
        for role, s, t in [(":ARG0-of", "a", "b"), (":mod", "a", "b")]:
            once = normalize_triple(role, s, t)
            assert normalize_triple(*once) == once


class TestBlockFiles:
    def test_blocks_split_on_blank_lines(self):
        text = "# ::snt One.\n(a / thing)\n\n# ::snt Two.\n(b / stuff)\n"
        graphs = parse_amr_file_text(text)
        assert [g.top for g in graphs] == ["a", "b"]
        assert graphs[1].metadata_value("snt") == "Two."

    def test_format_block_round_trips(self):
        g = parse_penman("# ::id 1 ::snt Hi.\n(a / thing :mod (b / fast))")
        block = format_block(g)
        again = parse_amr_file_text(block)[0]
        assert again == g
