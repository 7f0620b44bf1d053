"""The graph <-> text pipeline used for seq2seq training.

Pre-processing: strip wiki tags, flatten the graph depth-first with
variables removed (concept spans keep their parentheses, duplicated
concepts get _1/_2 indices), and prefix the sentence with the task string.

Post-processing: repair arbitrary decoder output into a well-formed token
sequence, rebuild a graph with fresh variables, and restore wiki tags from
a lookup table built over the training corpus.
"""

from amrforge.corpus import generate_synthetic
from amrforge.graph import emit_penman, parse_penman
from amrforge.linearize import (
    build_wiki_table,
    deserialize,
    make_pair,
    repair,
    restore_wiki,
    serialize,
    strip_wiki,
)
from amrforge.smatch import smatch

sentence = (
    "Statistics also revealed that Taiwanese business investments in the "
    "mainland is tending to increase"
)
graph = parse_penman("""(r / reveal-01
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
    :mod (a / also))""")

stripped, wiki_entries = strip_wiki(graph)
print("removed wiki entries:", wiki_entries)

flat = serialize(stripped)
print("\nserialized graph (variables gone, spans parenthesized,")
print("re-entrant thing mentioned as a bare token):")
print(flat.text)

pair = make_pair(sentence, stripped)
print("\nmodel input :", pair.input)
print("model target:", pair.target)

# Duplicated concepts get indices so mentions stay unambiguous.
two_dogs = parse_penman("(c / chase-01 :ARG0 (d / dog) :ARG1 (d2 / dog))")
print("\ntwo dog nodes:", serialize(two_dogs).text)

# Decoder output is never trusted: repair balances parentheses and drops
# dangling roles, then deserialization assigns fresh variables.
messy = "( see-01 :ARG0 ( dog :ARG1"
print("\nmessy decode :", messy)
print("repaired     :", " ".join(repair(messy)))
print("as a graph   :", emit_penman(deserialize(messy), indent=False))

# Full cycle on a synthetic corpus: strip -> serialize -> deserialize ->
# restore scores Smatch 1.0 against the original graphs.
pairs = generate_synthetic(seed=7, n=50)
graphs = [g for _, g in pairs]
table = build_wiki_table(graphs)
rebuilt = [
    restore_wiki(deserialize(serialize(strip_wiki(g)[0]).tokens), table)
    for g in graphs
]
print("\nfull-cycle corpus Smatch:", smatch(rebuilt, graphs, seed=0).f1)
