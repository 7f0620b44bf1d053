"""Corpus ingestion, synthetic corpus generation, and manifest statistics.

Corpora are AMR block files: graphs separated by blank lines, each preceded
by "# ::key value" metadata lines, with "::snt" carrying the source
sentence. Licensed treebanks are loaded from user-supplied paths only; all
bundled workflows and tests run on synthetic corpora drawn from a small
compositional grammar whose graphs exercise every evaluation category
(argument frames, negation, named entities with wiki links, quantities,
re-entrancies, duplicated concepts).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from amrforge.graph import (
    ATTR,
    EDGE,
    AmrGraph,
    PenmanParseError,
    format_block,
    iter_blocks,
    parse_penman,
)

SPLIT_KINDS = ("human", "silver-std", "silver-bio")


class CorpusError(Exception):
    pass


@dataclass
class CorpusManifest:
    """Sentence/token statistics for one corpus file."""

    name: str
    split: str = "human"
    sents: int = 0
    tokens: int = 0
    files: list = field(default_factory=list)

    def __post_init__(self):
        if self.split not in SPLIT_KINDS:
            raise CorpusError(f"unknown split kind {self.split!r}")

    def to_dict(self):
        return {
            "name": self.name,
            "split": self.split,
            "sents": self.sents,
            "tokens": self.tokens,
            "files": list(self.files),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["split"], d["sents"], d["tokens"], d.get("files", []))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


def load_corpus(path, name=None, split="human"):
    """Read an AMR block file into (sentence, graph) pairs plus a manifest.

    Every graph is validated on load; a malformed block is reported with its
    1-based position. Each block must carry "::snt" metadata.
    """
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    pairs = []
    for index, block in enumerate(iter_blocks(text), start=1):
        try:
            graph = parse_penman(block)
        except PenmanParseError as err:
            raise CorpusError(f"graph #{index}: {err}") from err
        sentence = graph.metadata_value("snt")
        if sentence is None:
            raise CorpusError(f"graph #{index}: missing ::snt metadata")
        pairs.append((sentence, graph))
    manifest = CorpusManifest(
        name=name or str(path),
        split=split,
        sents=len(pairs),
        tokens=sum(len(s.split()) for s, _ in pairs),
        files=[str(path)],
    )
    return pairs, manifest


def save_corpus(pairs, path):
    """Write (sentence, graph) pairs as a block file, one ::snt line each."""
    blocks = []
    for index, (sentence, graph) in enumerate(pairs):
        metadata = list(graph.metadata)
        keys = {k for k, _ in metadata}
        if "id" not in keys:
            metadata.insert(0, ("id", str(index)))
        if "snt" not in keys:
            metadata.append(("snt", sentence))
        blocks.append(format_block(graph.with_metadata(metadata)))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n\n".join(blocks))
        if blocks:
            handle.write("\n")


# ---------------------------------------------------------------------------
# Synthetic grammar
# ---------------------------------------------------------------------------

PERSONS = (
    ("Ann", "Ann"),
    ("Bob", "-"),
    ("Carol", "Carol"),
    ("Dave", "-"),
    ("Eve", "Eve"),
    ("Frank", "Frank"),
    ("Grace", "-"),
    ("Hugo", "Hugo"),
)

PLACES = (
    ("Taiwan", "Taiwan", "country"),
    ("France", "France", "country"),
    ("Boston", "Boston", "city"),
    ("Paris", "Paris", "city"),
    ("Tokyo", "Tokyo", "city"),
    ("New York", "New_York", "city"),
)

NOUNS = ("dog", "cat", "bird", "child", "farmer", "doctor", "robot", "horse")

TRANSITIVE = (
    ("sees", "see", "see-01"),
    ("helps", "help", "help-01"),
    ("chases", "chase", "chase-01"),
    ("finds", "find", "find-01"),
    ("hears", "hear", "hear-01"),
)

INTRANSITIVE = (
    ("sleeps", "sleep", "sleep-01"),
    ("laughs", "laugh", "laugh-01"),
    ("works", "work", "work-01"),
    ("waits", "wait", "wait-01"),
)

WIKI_BY_NAME = {name: wiki for name, wiki in PERSONS}
WIKI_BY_NAME.update({name: wiki for name, wiki, _ in PLACES})


class _Builder:
    """Accumulates nodes/items with AMR-style variable names (c, c2, ...)."""

    def __init__(self):
        self.nodes = []
        self.items = []
        self.used = {}

    def node(self, concept):
        letter = concept[0].lower() if concept[0].isalpha() else "x"
        count = self.used.get(letter, 0) + 1
        self.used[letter] = count
        var = letter if count == 1 else f"{letter}{count}"
        self.nodes.append((var, concept))
        return var

    def edge(self, source, role, target):
        self.items.append((source, role, target, EDGE))

    def attr(self, source, role, constant):
        self.items.append((source, role, constant, ATTR))

    def graph(self, top, metadata=()):
        return AmrGraph(top, self.nodes, self.items, metadata)


def _named_entity(b, concept, name):
    """Entity node with :wiki and :name substructure for a known name."""
    entity = b.node(concept)
    wiki = WIKI_BY_NAME[name]
    b.attr(entity, ":wiki", "-" if wiki == "-" else f'"{wiki}"')
    name_node = b.node("name")
    b.edge(entity, ":name", name_node)
    for i, part in enumerate(name.split(), start=1):
        b.attr(name_node, f":op{i}", f'"{part}"')
    return entity


def _noun_phrase(b, rng, duplicate_of=None):
    """Returns (text, variable). duplicate_of forces a repeated concept."""
    if duplicate_of is not None:
        return f"a {duplicate_of}", b.node(duplicate_of)
    if rng.random() < 0.35:
        name = PERSONS[rng.integers(len(PERSONS))][0]
        return name, _named_entity(b, "person", name)
    noun = NOUNS[rng.integers(len(NOUNS))]
    return f"the {noun}", b.node(noun)


def _sample_sentence(rng):
    b = _Builder()
    transitive = rng.random() < 0.66
    verbs = TRANSITIVE if transitive else INTRANSITIVE
    surface, base, frame = verbs[rng.integers(len(verbs))]

    wants = rng.random() < 0.22
    negated = not wants and rng.random() < 0.22
    also = rng.random() < 0.18

    subj_text, subj = _noun_phrase(b, rng)
    verb_node = b.node(frame)

    words = [subj_text]
    if also:
        words.append("also")
    if wants:
        want = b.node("want-01")
        b.edge(want, ":ARG0", subj)
        b.edge(want, ":ARG1", verb_node)
        b.edge(verb_node, ":ARG0", subj)  # control re-entrancy
        words += ["wants", "to", base]
        top = want
    elif negated:
        b.edge(verb_node, ":ARG0", subj)
        b.attr(verb_node, ":polarity", "-")
        words += ["does", "not", base]
        top = verb_node
    else:
        b.edge(verb_node, ":ARG0", subj)
        words.append(surface)
        top = verb_node

    if transitive:
        roll = rng.random()
        if roll < 0.14:
            b.edge(verb_node, ":ARG1", subj)  # reflexive re-entrancy
            words.append("itself")
        elif roll < 0.32:
            count = int(rng.integers(2, 6))
            noun = NOUNS[rng.integers(len(NOUNS))]
            obj = b.node(noun)
            b.attr(obj, ":quant", str(count))
            b.edge(verb_node, ":ARG1", obj)
            words += [str(count), noun + "s"]
        else:
            duplicate = None
            if roll < 0.45:
                subj_concept = dict(b.nodes)[subj]
                if subj_concept in NOUNS:
                    duplicate = subj_concept
            obj_text, obj = _noun_phrase(b, rng, duplicate_of=duplicate)
            b.edge(verb_node, ":ARG1", obj)
            words.append(obj_text)

    if rng.random() < 0.22:
        name, _, concept = PLACES[rng.integers(len(PLACES))]
        place = _named_entity(b, concept, name)
        b.edge(verb_node, ":location", place)
        words += ["in", name]

    if also:
        mod = b.node("also")
        b.edge(top, ":mod", mod)

    return " ".join(words), b.graph(top)


def generate_synthetic(seed, n):
    """Deterministic synthetic corpus of n (sentence, graph) pairs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for index in range(n):
        sentence, graph = _sample_sentence(rng)
        metadata = (("id", f"synth-{seed}-{index}"), ("snt", sentence))
        pairs.append((sentence, graph.with_metadata(metadata)))
    return pairs
