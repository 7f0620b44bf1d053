"""Graph-to-text pre-processing and text-to-graph post-processing.

The training-side pipeline turns a corpus graph into a seq2seq example:
wiki attributes are removed, the graph is flattened depth-first with
variables dropped and concept spans kept in parentheses, concepts naming
more than one node get "_1", "_2", ... suffixes in first-visit order, and
the source sentence receives the task prefix "amr generation ; ".

The decoding-side pipeline inverts this on arbitrary model output: repair
makes any whitespace token sequence a well-formed serialization (balanced
parentheses, no dangling roles), deserialize rebuilds a graph with fresh
variables where a repeated concept token becomes a re-entrant edge, and
restore_wiki re-attaches ":wiki" values from a lookup table built over the
training corpora. repair and deserialize are total: no token sequence makes
them fail.

All operations are pure; a WikiTable is immutable once built.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from amrforge.graph import (
    ATTR,
    EDGE,
    AmrGraph,
    spanning_children,
)

TASK_PREFIX = "amr generation ; "

SENTINEL_GRAPH = AmrGraph("a", [("a", "amr-empty")])
UNKNOWN_CONCEPT = "amr-unknown"
DEFAULT_ROLE = ":mod"

_ROLE_RE = re.compile(r"^:[^\s]+$")
_IDX_RE = re.compile(r"^(.*)_(\d+)$")
_OP_RE = re.compile(r"^:op(\d+)$")
_FORBIDDEN = set('()/:"')


@dataclass(frozen=True)
class TrainingPair:
    """One seq2seq example: prefixed input text and serialized graph text."""

    input: str
    target: str


@dataclass(frozen=True)
class SerializedGraph:
    """Whitespace token sequence of a flattened graph."""

    tokens: tuple

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


# ---------------------------------------------------------------------------
# Token classification (whitespace-delimited serialization alphabet)
# ---------------------------------------------------------------------------


def _is_role(token: str) -> bool:
    return (
        len(token) > 1
        and token.startswith(":")
        and not any(c in token for c in '()/"')
    )


def _is_quoted(token: str) -> bool:
    return (
        len(token) >= 2
        and token[0] == '"'
        and token[-1] == '"'
        and '"' not in token[1:-1]
    )


def _is_bare(token: str) -> bool:
    return bool(token) and not any(c in _FORBIDDEN for c in token)


def escape_indexed(concept: str) -> str:
    """Protect a concept that already ends in "_<digits>" before indexing."""
    return re.sub(r"_(\d+)$", r"__\1", concept)


def strip_index(token: str) -> str:
    """Undo serialization indexing on a concept token.

    "thing_2" -> "thing" (index), "thing__1" -> "thing_1" (escape),
    "thing__1_2" -> "thing_1" (both). Tokens without a suffix pass through.
    """
    m = _IDX_RE.match(token)
    if not m or not m.group(1):
        return token
    head, digits = m.group(1), m.group(2)
    if head.endswith("_"):
        return head[:-1] + "_" + digits
    m2 = _IDX_RE.match(head)
    if m2 and m2.group(1) and m2.group(1).endswith("_"):
        return m2.group(1)[:-1] + "_" + m2.group(2)
    return head


# ---------------------------------------------------------------------------
# Wiki handling
# ---------------------------------------------------------------------------


def unquote(value: str) -> str:
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        return value[1:-1]
    return value


def name_string(graph: AmrGraph, var: str):
    """Concatenated ":opN" constants of var's name node, or None without one."""
    name_node = None
    for source, role, target, kind in graph.items:
        if source == var and role == ":name" and kind == EDGE:
            name_node = target
            break
    if name_node is None:
        return None
    ops = []
    for source, role, target, kind in graph.items:
        if source == name_node and kind == ATTR:
            m = _OP_RE.match(role)
            if m:
                ops.append((int(m.group(1)), unquote(target)))
    return " ".join(value for _, value in sorted(ops))


def strip_wiki(graph: AmrGraph):
    """Remove every ":wiki" attribute.

    Returns the stripped graph and one (name string, wiki value) entry per
    removed attribute, pairing the value with the owning node's name ops
    (empty string when the node has no ":name"). Values are unquoted.
    """
    kept = []
    entries = []
    for source, role, target, kind in graph.items:
        if kind == ATTR and role == ":wiki":
            entries.append((name_string(graph, source) or "", unquote(target)))
        else:
            kept.append((source, role, target, kind))
    return AmrGraph(graph.top, graph.nodes, kept, graph.metadata), entries


class WikiTable:
    """Frequency table mapping entity name strings to wiki values.

    Lookup returns the most frequent value for a name, breaking ties by
    lexicographically smallest value. Stored as TSV: name, value, count.
    """

    def __init__(self):
        self._counts = {}

    def add(self, name: str, value: str, count: int = 1):
        by_value = self._counts.setdefault(name, {})
        by_value[value] = by_value.get(value, 0) + count

    def lookup(self, name: str):
        by_value = self._counts.get(name)
        if not by_value:
            return None
        return min(by_value, key=lambda v: (-by_value[v], v))

    def __len__(self):
        return len(self._counts)

    def __contains__(self, name):
        return name in self._counts

    def entries(self):
        for name in sorted(self._counts):
            by_value = self._counts[name]
            for value in sorted(by_value, key=lambda v: (-by_value[v], v)):
                yield name, value, by_value[value]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            for name, value, count in self.entries():
                handle.write(f"{name}\t{value}\t{count}\n")

    @classmethod
    def load(cls, path):
        table = cls()
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line:
                    continue
                name, value, count = line.split("\t")
                table.add(name, value, int(count))
        return table


def build_wiki_table(graphs) -> WikiTable:
    """Aggregate wiki entries over training graphs into a lookup table."""
    table = WikiTable()
    for graph in graphs:
        for name, value in strip_wiki(graph)[1]:
            if name:
                table.add(name, value)
    return table


def restore_wiki(graph: AmrGraph, table: WikiTable) -> AmrGraph:
    """Attach ":wiki" to every node with a ":name" substructure.

    The value is the table lookup of the node's concatenated op string,
    quoted, or the bare constant "-" when the table has no entry. Nodes that
    already carry ":wiki" are left untouched, so the operation is idempotent.
    """
    has_wiki = {s for s, r, _, k in graph.items if k == ATTR and r == ":wiki"}
    named_done = set()
    items = []
    for source, role, target, kind in graph.items:
        if (
            kind == EDGE
            and role == ":name"
            and source not in has_wiki
            and source not in named_done
        ):
            named_done.add(source)
            value = table.lookup(name_string(graph, source) or "")
            constant = "-" if value in (None, "-") else f'"{value}"'
            items.append((source, ":wiki", constant, ATTR))
        items.append((source, role, target, kind))
    return AmrGraph(graph.top, graph.nodes, items, graph.metadata)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize(graph: AmrGraph) -> SerializedGraph:
    """Flatten a graph depth-first from the top, dropping variables.

    Parentheses delimit each expanded node span; a re-entrant mention is the
    bare concept token. When one concept names several nodes, every mention
    carries a "_k" suffix numbered in first-visit order. Expects a
    wiki-stripped graph (any remaining attributes are emitted verbatim).
    """
    children = spanning_children(graph)
    visit_order = []
    stack = [graph.top]
    while stack:
        var = stack.pop()
        visit_order.append(var)
        stack.extend(
            target
            for role, target, kind in reversed(children[var])
            if kind == EDGE
        )

    concept_vars = {}
    for var in visit_order:
        concept_vars.setdefault(graph.concept_of(var), []).append(var)
    token_of = {}
    for concept, variables in concept_vars.items():
        base = escape_indexed(concept)
        if len(variables) == 1:
            token_of[variables[0]] = base
        else:
            for k, var in enumerate(variables, start=1):
                token_of[var] = f"{base}_{k}"

    tokens = []

    def emit(var):
        tokens.append("(")
        tokens.append(token_of[var])
        for role, target, kind in children[var]:
            tokens.append(role)
            if kind == EDGE:
                emit(target)
            elif kind == ATTR:
                tokens.append(target)
            else:
                tokens.append(token_of[target])
        tokens.append(")")

    emit(graph.top)
    return SerializedGraph(tuple(tokens))


def make_pair(sentence: str, graph: AmrGraph) -> TrainingPair:
    """Build the seq2seq example: prefixed sentence in, serialized graph out."""
    if not sentence or not sentence.strip():
        raise ValueError("empty sentence")
    return TrainingPair(TASK_PREFIX + sentence, serialize(graph).text)


# ---------------------------------------------------------------------------
# Repair and de-serialization
# ---------------------------------------------------------------------------


def write_pairs(pairs_with_ids, path):
    """JSON-lines pair file: {"input", "target", "id"} per line, in order."""
    with open(path, "w", encoding="utf-8") as handle:
        for pair, pair_id in pairs_with_ids:
            record = {"input": pair.input, "target": pair.target, "id": str(pair_id)}
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def read_pairs(path):
    """Returns a list of (TrainingPair, id) in file order."""
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            out.append((TrainingPair(record["input"], record["target"]), record["id"]))
    return out


class _Span:
    __slots__ = ("concept", "children")

    def __init__(self):
        self.concept = None
        self.children = []  # (role, child) with child a _Span or (tag, token)


def _tokens_of(s):
    if isinstance(s, str):
        return s.split()
    if isinstance(s, SerializedGraph):
        return list(s.tokens)
    return [str(t) for t in s]


def _lenient_parse(tokens):
    """Force an arbitrary token sequence into a single well-formed span tree.

    Orphan closers and trailing material after the first complete top-level
    span are dropped; unclosed spans are closed at the end; a role with no
    usable argument is dropped (together with the argument when the argument
    token itself is malformed); a span with no concept gets a placeholder; a
    nested span with no role is attached with a default role. Returns None
    when nothing parseable remains.
    """
    root = None
    stack = []
    pending = None

    def attach(child):
        nonlocal pending, root
        if stack:
            role = pending if pending is not None else DEFAULT_ROLE
            stack[-1].children.append((role, child))
        pending = None

    def close_one():
        nonlocal root, pending
        span = stack.pop()
        if span.concept is None:
            span.concept = UNKNOWN_CONCEPT
        pending = None
        if not stack:
            root = span

    for token in tokens:
        if root is not None:
            break
        if token == "(":
            span = _Span()
            if stack:
                attach(span)
            stack.append(span)
        elif token == ")":
            if stack:
                close_one()
        elif _is_role(token):
            if stack:
                pending = token
        elif _is_quoted(token):
            if stack and pending is not None:
                if stack[-1].concept is None:
                    stack[-1].concept = UNKNOWN_CONCEPT
                attach(("quoted", token))
        elif _is_bare(token):
            if not stack:
                span = _Span()
                span.concept = token
                stack.append(span)
            elif stack[-1].concept is None and pending is None:
                stack[-1].concept = token
            elif pending is not None:
                if stack[-1].concept is None:
                    stack[-1].concept = UNKNOWN_CONCEPT
                attach(("bare", token))
            # else: junk token outside any argument position, dropped
        else:
            # malformed token: drop it, and the role it would have filled
            pending = None

    while stack:
        close_one()
    return root


def _walk_preorder(root):
    """Pre-order spans of a lenient tree, iteratively (fuzz can nest deeply)."""
    spans = []
    stack = [root]
    while stack:
        span = stack.pop()
        spans.append(span)
        stack.extend(
            child for _, child in reversed(span.children) if isinstance(child, _Span)
        )
    return spans


def repair(s):
    """Make any token sequence a well-formed serialization. Total, idempotent."""
    root = _lenient_parse(_tokens_of(s))
    if root is None:
        return []
    out = []
    stack = [("open", root)]
    while stack:
        action, payload = stack.pop()
        if action == "open":
            out.append("(")
            out.append(payload.concept)
            stack.append(("close", None))
            for role, child in reversed(payload.children):
                if isinstance(child, _Span):
                    stack.append(("open", child))
                else:
                    stack.append(("token", child[1]))
                stack.append(("token", role))
        elif action == "close":
            out.append(")")
        else:
            out.append(payload)
    return out


def deserialize(s) -> AmrGraph:
    """Rebuild a graph from a serialized token sequence. Never fails.

    Fresh variables v0, v1, ... are assigned in first-visit order. A bare
    token matching an already-introduced (possibly suffixed) concept token
    becomes a re-entrant edge to that node; other bare and quoted tokens are
    constants. Index suffixes are stripped from final concepts. Empty or
    unusable input yields the sentinel graph "(a / amr-empty)".
    """
    root = _lenient_parse(_tokens_of(s))
    if root is None:
        return SENTINEL_GRAPH

    # Stream-order walk: concepts count as introduced at their "(", so a bare
    # token only resolves to a node that opened earlier in the token stream.
    span_index = {}
    introduced = {}  # concept token -> span index of first introduction
    raw_items = []  # (source index, role, target index | token, kind) in order
    constants = set()

    def introduce(span):
        index = len(span_index)
        span_index[id(span)] = index
        introduced.setdefault(span.concept, index)
        return index

    introduce(root)
    stack = [(root, 0)]
    while stack:
        span, cursor = stack.pop()
        if cursor >= len(span.children):
            continue
        stack.append((span, cursor + 1))
        source = span_index[id(span)]
        role, child = span.children[cursor]
        if isinstance(child, _Span):
            raw_items.append((source, role, introduce(child), EDGE))
            stack.append((child, 0))
        else:
            tag, token = child
            if tag == "bare" and token in introduced:
                raw_items.append((source, role, introduced[token], EDGE))
            else:
                constants.add(token)
                # a constant has no node to reverse: force the direct role
                if role.endswith("-of") and len(role) > 4:
                    role = role[:-3]
                raw_items.append((source, role, token, ATTR))

    spans = _walk_preorder(root)
    names = []
    counter = 0
    for _ in spans:
        while f"v{counter}" in constants:
            counter += 1
        names.append(f"v{counter}")
        counter += 1

    nodes = [(names[i], strip_index(span.concept)) for i, span in enumerate(spans)]
    items = [
        (names[s_], r, names[t] if k == EDGE else t, k)
        for s_, r, t, k in raw_items
    ]
    return AmrGraph(names[0], nodes, items)
