"""Penman-notation AMR graphs: parsing, printing, and triple extraction.

An AMR is a rooted, directed, labeled graph. Nodes are variables bound to
concepts ("(d / dog)"), edges carry role labels (":ARG0"), and attributes
attach constants (numbers, quoted strings, "-") to nodes. This module keeps
the surface form of a graph intact: edges are stored with the role exactly
as written (":ARG1-of" stays inverted) and child order is preserved, so a
parsed graph prints back in its original shape. Inverse roles are only
normalized when a graph is flattened to triples for scoring.

The parser is total over strings: every input yields either an AmrGraph or
a PenmanParseError carrying the byte offset of the offending token. A bare
token in argument position resolves to a declared variable when one exists
anywhere in the graph (re-entrancy, forward references included) and is
treated as a constant otherwise, so graphs emitted by the generation
pipeline always re-parse. Metadata comment lines ("# ::snt ...") preceding
a graph are preserved on the graph as an ordered (key, value) side channel.

Graphs and TripleSets are immutable after construction and safe to share
across workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class AmrError(Exception):
    """Base class for AMR graph errors."""


class PenmanParseError(AmrError):
    """Syntax or reference error in Penman text, located by byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.message = message
        self.offset = offset


class GraphError(AmrError):
    """Violation of an AmrGraph structural invariant."""


_NUMERIC_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_METADATA_RE = re.compile(r"::(\S+)\s?([^:]*(?::(?!:)[^:]*)*)")

EDGE = "edge"
ATTR = "attr"


def is_constant_token(token: str) -> bool:
    """True for tokens that can never be variable references (numbers, quoted strings)."""
    return token.startswith('"') or bool(_NUMERIC_RE.match(token))


def invert_role(role: str) -> str:
    """Flip a role between its direct and inverse spelling (":ARG0" <-> ":ARG0-of")."""
    if role.endswith("-of") and len(role) > 4:
        return role[:-3]
    return role + "-of"


def normalize_triple(role: str, source: str, target: str):
    """Rewrite an inverse-role edge to its direct form: x :R-of y  ==>  (:R, y, x)."""
    if role.endswith("-of") and len(role) > 4:
        return (role[:-3], target, source)
    return (role, source, target)


@dataclass(frozen=True)
class TripleSet:
    """The Smatch view of a graph: instance, attribute, and relation triples.

    Inverse roles are normalized (x :R-of y is stored as (:R, y, x)) and the
    root is recorded as the attribute (":TOP", top, concept-of-top).
    """

    instances: frozenset  # of (variable, concept)
    attributes: frozenset  # of (role, variable, constant)
    relations: frozenset  # of (role, variable, variable)

    def size(self) -> int:
        return len(self.instances) + len(self.attributes) + len(self.relations)


class AmrGraph:
    """Immutable rooted AMR graph in surface orientation.

    Args:
        top: variable of the root node.
        nodes: iterable of (variable, concept) in first-mention order.
        items: iterable of (source, role, target, kind) in surface order,
            where kind is EDGE (target is a variable) or ATTR (target is a
            constant string, quotes retained for quoted literals).
        metadata: ordered (key, value) pairs from "# ::key value" lines.
    """

    __slots__ = ("top", "nodes", "items", "metadata", "_concepts")

    def __init__(self, top, nodes, items=(), metadata=()):
        self.top = top
        self.nodes = tuple((str(v), str(c)) for v, c in nodes)
        self.items = tuple(
            (str(s), str(r), str(t), k) for s, r, t, k in items
        )
        self.metadata = tuple((str(k), str(v)) for k, v in metadata)
        self._concepts = dict(self.nodes)
        self._validate()

    @classmethod
    def from_parts(cls, top, nodes, edges=(), attributes=(), metadata=()):
        """Build from separate edge and attribute lists (edges first, then attributes)."""
        items = [(s, r, t, EDGE) for s, r, t in edges]
        items += [(s, r, t, ATTR) for s, r, t in attributes]
        return cls(top, nodes, items, metadata)

    @property
    def edges(self):
        """Edges (source, role, target) in surface order, roles as written."""
        return tuple((s, r, t) for s, r, t, k in self.items if k == EDGE)

    @property
    def attributes(self):
        """Attributes (source, role, constant) in surface order."""
        return tuple((s, r, t) for s, r, t, k in self.items if k == ATTR)

    def variables(self):
        return tuple(v for v, _ in self.nodes)

    def concept_of(self, var: str) -> str:
        return self._concepts[var]

    def metadata_value(self, key: str):
        """Last value recorded for a metadata key, or None."""
        value = None
        for k, v in self.metadata:
            if k == key:
                value = v
        return value

    def with_metadata(self, metadata) -> "AmrGraph":
        return AmrGraph(self.top, self.nodes, self.items, metadata)

    def _validate(self):
        if not self.nodes:
            raise GraphError("graph has no nodes")
        seen = set()
        for var, _ in self.nodes:
            if var in seen:
                raise GraphError(f"duplicate variable declaration: {var}")
            seen.add(var)
        if self.top not in seen:
            raise GraphError(f"top {self.top!r} is not a declared variable")
        for source, role, target, kind in self.items:
            if source not in seen:
                raise GraphError(
                    f"reference to undeclared variable {source!r} in {role}"
                )
            if kind == EDGE and target not in seen:
                raise GraphError(
                    f"reference to undeclared variable {target!r} in {role}"
                )
        # connected from top, edges followed in either direction
        neighbors = {v: [] for v in seen}
        for source, _, target, kind in self.items:
            if kind == EDGE:
                neighbors[source].append(target)
                neighbors[target].append(source)
        reached = {self.top}
        stack = [self.top]
        while stack:
            for other in neighbors[stack.pop()]:
                if other not in reached:
                    reached.add(other)
                    stack.append(other)
        if len(reached) != len(seen):
            missing = sorted(seen - reached)
            raise GraphError(f"graph not connected from top: unreachable {missing}")

    def __eq__(self, other):
        if not isinstance(other, AmrGraph):
            return NotImplemented
        return (
            self.top == other.top
            and self.nodes == other.nodes
            and self.items == other.items
            and self.metadata == other.metadata
        )

    def __hash__(self):
        return hash((self.top, self.nodes, self.items))

    def __repr__(self):
        return f"AmrGraph(top={self.top!r}, nodes={len(self.nodes)}, items={len(self.items)})"


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_LP, _RP, _SLASH, _SYM, _QUOTED = "(", ")", "/", "sym", "quoted"


def _lex(text: str):
    """Tokenize Penman text into (kind, value, byte offset) triples."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()/":
            tokens.append((ch, ch, i))
            i += 1
        elif ch == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise PenmanParseError("unterminated quoted constant", i)
            tokens.append((_QUOTED, text[i : j + 1], i))
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '()/"':
                j += 1
            tokens.append((_SYM, text[i:j], i))
            i = j
    return tokens


def _split_metadata(text: str):
    """Separate leading '#' comment lines from graph text, keeping byte offsets.

    Comment lines are blanked out (replaced by spaces) rather than removed so
    offsets reported by the lexer refer to positions in the original string.
    """
    metadata = []
    masked = []
    pos = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            pairs = _METADATA_RE.findall(body) if "::" in body else []
            if pairs:
                for key, value in pairs:
                    metadata.append((key, value.strip()))
            elif body:
                metadata.append(("", body))
            masked.append(" " * len(line.rstrip("\n")) + line[len(line.rstrip("\n")):])
        else:
            masked.append(line)
        pos += len(line)
    return "".join(masked), metadata


def parse_penman(text: str) -> AmrGraph:
    """Parse a single Penman expression (optionally preceded by '# ::' lines).

    A bare symbol in argument position becomes a re-entrant edge when it names
    a variable declared anywhere in the graph; numeric and quoted tokens are
    always constants; any other undeclared symbol is kept as a constant so
    that generated output never fails to re-parse. An undeclared symbol under
    an inverse role is an error (the implied reversed edge has no source).

    Raises:
        PenmanParseError: unbalanced parentheses, duplicate variable
            declaration, reference to an undeclared variable, or a missing
            "/" concept separator, each located by byte offset.
    """
    graph_text, metadata = _split_metadata(text)
    tokens = _lex(graph_text)
    if not tokens:
        raise PenmanParseError("empty input, expected '('", 0)

    declared = {}
    node_order = []
    items = []  # (source, role, target, kind) with deferred symbol targets
    deferred = []  # (item index, offset) of bare-symbol arguments
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None, len(graph_text))

    def take():
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    # Explicit-stack node parser: fuzzed input can nest arbitrarily deep, so
    # no recursion. A frame is [var, link] where link is the (parent, role)
    # this node will attach to once its ')' is seen.
    NEED_VAR, NEED_SLASH, NEED_CONCEPT, BODY = range(4)

    def parse_node():
        kind, value, offset = take()
        if kind != _LP:
            raise PenmanParseError("expected '('", offset)
        stack = [[None, None]]
        state = NEED_VAR
        while stack:
            kind, value, offset = take()
            if kind is None:
                raise PenmanParseError("unbalanced parentheses: unclosed '('", offset)
            if state == NEED_VAR:
                if kind != _SYM or value.startswith(":"):
                    raise PenmanParseError("expected variable after '('", offset)
                if value in declared:
                    raise PenmanParseError(
                        f"duplicate variable declaration {value!r}", offset
                    )
                stack[-1][0] = value
                state = NEED_SLASH
            elif state == NEED_SLASH:
                if kind != _SLASH:
                    raise PenmanParseError("missing '/' concept separator", offset)
                state = NEED_CONCEPT
            elif state == NEED_CONCEPT:
                if kind != _SYM or value.startswith(":"):
                    raise PenmanParseError("expected concept after '/'", offset)
                declared[stack[-1][0]] = value
                node_order.append((stack[-1][0], value))
                state = BODY
            else:  # BODY
                if kind == _RP:
                    var, link = stack.pop()
                    if link is not None:
                        items.append((link[0], link[1], var, EDGE))
                    if not stack:
                        return var
                elif kind == _SYM and value.startswith(":") and len(value) > 1:
                    role = value
                    var = stack[-1][0]
                    akind, avalue, aoffset = peek()
                    if akind == _LP:
                        take()
                        stack.append([None, (var, role)])
                        state = NEED_VAR
                    elif akind == _QUOTED:
                        take()
                        items.append((var, role, avalue, ATTR))
                    elif akind == _SYM and not avalue.startswith(":"):
                        take()
                        deferred.append((len(items), aoffset))
                        items.append((var, role, avalue, None))
                    else:
                        raise PenmanParseError(f"expected argument after {role}", aoffset)
                else:
                    raise PenmanParseError(f"expected role or ')', got {value!r}", offset)
        raise PenmanParseError("unbalanced parentheses", len(graph_text))

    top = parse_node()
    if pos < len(tokens):
        kind, value, offset = peek()
        if kind == _RP:
            raise PenmanParseError("unbalanced parentheses: extra ')'", offset)
        raise PenmanParseError(f"unexpected trailing content {value!r}", offset)

    resolved = list(items)
    for index, offset in deferred:
        source, role, target, _ = items[index]
        if not is_constant_token(target) and target in declared:
            resolved[index] = (source, role, target, EDGE)
        elif role.endswith("-of") and len(role) > 4:
            raise PenmanParseError(
                f"reference to undeclared variable {target!r}", offset
            )
        else:
            resolved[index] = (source, role, target, ATTR)

    return AmrGraph(top, node_order, resolved, metadata)


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def spanning_children(graph: AmrGraph):
    """Orient the graph as a tree rooted at top for printing.

    A forward pass follows stored edge direction in surface order; the first
    arrival at a node expands it, later arrivals become re-entrant mentions.
    Nodes a forward walk cannot reach (possible only for programmatically
    built graphs) are then attached beneath a reached node with the inverted
    role. Returns, per variable, the ordered child list [(role, target,
    kind)] where kind is EDGE for a tree child, "ref" for a re-entrant
    mention, or ATTR for a constant.
    """
    out_items = {v: [] for v in graph.variables()}
    for index, (source, role, target, kind) in enumerate(graph.items):
        out_items[source].append((index, role, target, kind))

    visited = set()
    consumed = set()
    children = {v: [] for v in graph.variables()}

    def forward(start):
        visited.add(start)
        stack = [iter(out_items[start])]
        frames = [start]
        while stack:
            try:
                index, role, target, kind = next(stack[-1])
            except StopIteration:
                stack.pop()
                frames.pop()
                continue
            if index in consumed:
                continue
            consumed.add(index)
            var = frames[-1]
            if kind == ATTR:
                children[var].append((role, target, ATTR))
            elif target in visited:
                children[var].append((role, target, "ref"))
            else:
                children[var].append((role, target, EDGE))
                visited.add(target)
                stack.append(iter(out_items[target]))
                frames.append(target)

    forward(graph.top)
    while len(visited) < len(graph.variables()):
        for index, (source, role, target, kind) in enumerate(graph.items):
            if kind == EDGE and target in visited and source not in visited:
                consumed.add(index)
                children[target].append((invert_role(role), source, EDGE))
                forward(source)
                break
        else:
            break  # unreachable given the connectivity invariant
    return children


def emit_penman(graph: AmrGraph, indent: bool = True) -> str:
    """Print a graph in Penman notation.

    The first textual mention of a node carries its concept; later mentions
    are bare variables. Children appear in insertion order. The result
    re-parses to a graph with an identical TripleSet.
    """
    children = spanning_children(graph)

    def render(var, depth):
        parts = [f"({var} / {graph.concept_of(var)}"]
        pad = "\n" + "    " * (depth + 1) if indent else " "
        for role, target, kind in children[var]:
            if kind == ATTR:
                parts.append(f"{pad}{role} {target}")
            elif kind == "ref":
                parts.append(f"{pad}{role} {target}")
            else:
                parts.append(f"{pad}{role} {render(target, depth + 1)}")
        parts.append(")")
        return "".join(parts)

    return render(graph.top, 0)


def to_triples(graph: AmrGraph) -> TripleSet:
    """Flatten a graph to the triple sets Smatch aligns.

    Inverse roles are normalized to direct form; the top is recorded as an
    attribute (":TOP", top, concept). Normalization is idempotent: applying
    it to already-normalized relations changes nothing.
    """
    instances = frozenset(graph.nodes)
    attributes = {(":TOP", graph.top, graph.concept_of(graph.top))}
    relations = set()
    for source, role, target, kind in graph.items:
        if kind == EDGE:
            relations.add(normalize_triple(role, source, target))
        else:
            attributes.add((role, source, target))
    return TripleSet(instances, frozenset(attributes), frozenset(relations))


# ---------------------------------------------------------------------------
# Block file format
# ---------------------------------------------------------------------------


def iter_blocks(text: str):
    """Yield non-empty blocks of an AMR file (graphs separated by blank lines)."""
    block = []
    for line in text.splitlines():
        if line.strip():
            block.append(line)
        elif block:
            yield "\n".join(block)
            block = []
    if block:
        yield "\n".join(block)


def parse_amr_file_text(text: str):
    """Parse every graph block in the text. Returns a list of AmrGraphs."""
    return [parse_penman(block) for block in iter_blocks(text)]


def read_amr_file(path):
    with open(path, encoding="utf-8") as handle:
        return parse_amr_file_text(handle.read())


def format_block(graph: AmrGraph) -> str:
    """Render one graph as a file block: metadata lines then the Penman text."""
    lines = []
    for key, value in graph.metadata:
        if key:
            lines.append(f"# ::{key} {value}".rstrip())
        else:
            lines.append(f"# {value}")
    lines.append(emit_penman(graph))
    return "\n".join(lines)


def write_amr_file(graphs, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n\n".join(format_block(g) for g in graphs))
        if graphs:
            handle.write("\n")
