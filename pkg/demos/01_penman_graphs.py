"""Working with Penman-notation AMR graphs.

Parse a graph, look at its pieces, flatten it to the triples that scoring
operates on, and print it back out.
"""

from amrforge.graph import emit_penman, parse_penman, to_triples

# A graph with a named entity, a wiki link, and a re-entrancy: the variable
# t2 ("thing") is referenced both by tend-02 and by increase-01.
text = """(r / reveal-01
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

graph = parse_penman(text)
print("top:", graph.top)
print("nodes:", len(graph.nodes))
for var, concept in graph.nodes:
    print(f"  {var} / {concept}")

print("\nedges (surface roles, inverse kept as written):")
for source, role, target in graph.edges:
    print(f"  {source} {role} {target}")

print("\nattributes (constants):")
for source, role, constant in graph.attributes:
    print(f"  {source} {role} {constant}")

# The triple view normalizes inverse roles (:ARG1-of flips direction) and
# records the root as a (:TOP, var, concept) attribute.
triples = to_triples(graph)
print("\nnormalized relation triples:")
for role, a, b in sorted(triples.relations):
    print(f"  ({role}, {a}, {b})")

# Printing: first mention carries the concept, later mentions are bare
# variables; the output re-parses to the same triple set.
print("\nprinted form:")
print(emit_penman(graph))
assert to_triples(parse_penman(emit_penman(graph))) == triples

# The parser reports errors with byte offsets.
from amrforge.graph import PenmanParseError

for bad in ["(a / thing", "(a / thing :ARG0 (a / other))", "(a thing)"]:
    try:
        parse_penman(bad)
    except PenmanParseError as err:
        print(f"\n{bad!r}\n  -> {err}")
