"""Smatch scoring, fine-grained category F1, and bootstrap significance.

Smatch aligns the variables of a predicted graph to those of a gold graph
so that the number of matching instance/attribute/relation triples is
maximized, then reports micro-averaged precision, recall, and F1 over a
corpus (sum of matched over sum of totals). The alignment search is greedy
hill-climbing over single reassignments and swaps, restarted from one
concept-matching initialization plus a configurable number of random
initializations; ties and all randomness are controlled by the seed, so
scores are reproducible bit for bit.

Fine-grained categories follow the conventions shared by AMR evaluation
suites and are frozen here so scores are reproducible:

- Unlabel: Smatch with relation roles ignored. Implemented by renaming the
  relations between each ordered node pair to positional labels, which
  preserves multiplicity, keeps totals identical to Smatch, and makes
  "Unlabel >= Smatch" hold for every alignment.
- NoWSD: Smatch with "-NN" sense suffixes stripped from concepts (instances
  and the ":TOP" attribute value).
- Concepts: bag F1 over instance concepts.
- NER: bag F1 over named-entity signatures (entity concept, tuple of its
  name's ":opN" constants in op order).
- Neg: bag F1 over concepts of nodes carrying ":polarity -".
- Wiki: bag F1 over ":wiki" attribute values.
- Reentrancy: Smatch restricted to relations into variables of relation
  in-degree >= 2, plus the instances of the variables involved.
- SRL: Smatch restricted to ":ARGn" relations plus involved instances.

A category with zero items on both sides reports precision, recall, and F1
of 0 with zero counts. Per-pair alignment is independent; pass workers > 1
to fan pairs out over processes (results are identical to serial).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from amrforge.graph import AmrGraph, TripleSet, to_triples

_SENSE_RE = re.compile(r"-\d{2,}$")
_ARG_RE = re.compile(r"^:ARG\d+$")
_OP_RE = re.compile(r"^:op(\d+)$")

CATEGORIES = (
    "Smatch",
    "Unlabel",
    "NoWSD",
    "Concepts",
    "NER",
    "Neg",
    "Wiki",
    "Reentrancy",
    "SRL",
)


@dataclass(frozen=True)
class PairCounts:
    """Matched and total triple counts for one prediction/gold pair."""

    matched: int
    pred_total: int
    gold_total: int


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float

    def to_dict(self):
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class EvalReport:
    """Per-category precision/recall/F1 plus the per-pair count lists."""

    scores: dict  # category name -> Score
    counts: dict  # category name -> list of PairCounts

    def __getitem__(self, category) -> Score:
        return self.scores[category]

    def to_dict(self):
        return {name: self.scores[name].to_dict() for name in CATEGORIES}


def f1_from_counts(matched, pred_total, gold_total) -> Score:
    precision = matched / pred_total if pred_total else 0.0
    recall = matched / gold_total if gold_total else 0.0
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return Score(precision, recall, f1)


def micro_score(counts) -> Score:
    """Micro-averaged corpus score: sum matched over sum totals."""
    return f1_from_counts(
        sum(c.matched for c in counts),
        sum(c.pred_total for c in counts),
        sum(c.gold_total for c in counts),
    )


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------


class _Matcher:
    """Hill-climbing triple alignment between one pred/gold TripleSet pair."""

    def __init__(self, pred: TripleSet, gold: TripleSet):
        self.pred_vars = sorted({v for v, _ in pred.instances})
        self.gold_vars = sorted({v for v, _ in gold.instances})
        self.np_ = len(self.pred_vars)
        self.ng = len(self.gold_vars)
        p_index = {v: i for i, v in enumerate(self.pred_vars)}
        g_index = {v: i for i, v in enumerate(self.gold_vars)}

        # unary[p][g]: matches decided by the single assignment p -> g
        self.unary = [[0] * self.ng for _ in range(self.np_)]
        gold_by_concept = {}
        for v, concept in gold.instances:
            gold_by_concept.setdefault(concept, []).append(g_index[v])
        for v, concept in pred.instances:
            for g in gold_by_concept.get(concept, ()):
                self.unary[p_index[v]][g] += 1
        gold_attrs = {}
        for role, v, const in gold.attributes:
            gold_attrs.setdefault((role, const), []).append(g_index[v])
        for role, v, const in pred.attributes:
            for g in gold_attrs.get((role, const), ()):
                self.unary[p_index[v]][g] += 1

        self.gold_rels = {
            (role, g_index[a], g_index[b]) for role, a, b in gold.relations
        }
        self.pred_rels = [
            (role, p_index[a], p_index[b]) for role, a, b in pred.relations
        ]
        self.rels_of = [[] for _ in range(self.np_)]
        for rel in self.pred_rels:
            _, a, b = rel
            self.rels_of[a].append(rel)
            if b != a:
                self.rels_of[b].append(rel)

        candidates = [set() for _ in range(self.np_)]
        for p in range(self.np_):
            for g in range(self.ng):
                if self.unary[p][g]:
                    candidates[p].add(g)
        gold_by_role = {}
        for role, ga, gb in self.gold_rels:
            gold_by_role.setdefault(role, []).append((ga, gb))
        for role, a, b in self.pred_rels:
            for ga, gb in gold_by_role.get(role, ()):
                candidates[a].add(ga)
                candidates[b].add(gb)
        self.candidates = [sorted(c) for c in candidates]

        self.pred_concepts = dict(pred.instances)
        self.gold_concept_index = gold_by_concept
        self.pred_total = pred.size()
        self.gold_total = gold.size()

    def score(self, mapping):
        total = 0
        for p, g in enumerate(mapping):
            if g >= 0:
                total += self.unary[p][g]
        for role, a, b in self.pred_rels:
            if mapping[a] >= 0 and mapping[b] >= 0:
                if (role, mapping[a], mapping[b]) in self.gold_rels:
                    total += 1
        return total

    def _rel_score_at(self, rels, mapping):
        total = 0
        for role, a, b in rels:
            ga, gb = mapping[a], mapping[b]
            if ga >= 0 and gb >= 0 and (role, ga, gb) in self.gold_rels:
                total += 1
        return total

    def climb(self, mapping):
        """Greedy best-improvement over reassign and swap moves."""
        mapping = list(mapping)
        used = {g for g in mapping if g >= 0}
        current = self.score(mapping)
        while True:
            best_gain = 0
            best_move = None
            for p in range(self.np_):
                g_old = mapping[p]
                options = [g for g in self.candidates[p] if g not in used]
                if g_old >= 0:
                    options.append(-1)
                before = (self.unary[p][g_old] if g_old >= 0 else 0) + \
                    self._rel_score_at(self.rels_of[p], mapping)
                for g_new in options:
                    if g_new == g_old:
                        continue
                    mapping[p] = g_new
                    after = (self.unary[p][g_new] if g_new >= 0 else 0) + \
                        self._rel_score_at(self.rels_of[p], mapping)
                    gain = after - before
                    if gain > best_gain:
                        best_gain = gain
                        best_move = ("assign", p, g_new)
                mapping[p] = g_old
            for p1 in range(self.np_):
                for p2 in range(p1 + 1, self.np_):
                    g1, g2 = mapping[p1], mapping[p2]
                    if g1 == g2:
                        continue
                    touched = set(self.rels_of[p1]) | set(self.rels_of[p2])
                    before = self._rel_score_at(touched, mapping) + \
                        (self.unary[p1][g1] if g1 >= 0 else 0) + \
                        (self.unary[p2][g2] if g2 >= 0 else 0)
                    mapping[p1], mapping[p2] = g2, g1
                    after = self._rel_score_at(touched, mapping) + \
                        (self.unary[p1][g2] if g2 >= 0 else 0) + \
                        (self.unary[p2][g1] if g1 >= 0 else 0)
                    mapping[p1], mapping[p2] = g1, g2
                    gain = after - before
                    if gain > best_gain:
                        best_gain = gain
                        best_move = ("swap", p1, p2)
            if best_move is None:
                return mapping, current
            kind, x, y = best_move
            if kind == "assign":
                if mapping[x] >= 0:
                    used.discard(mapping[x])
                mapping[x] = y
                if y >= 0:
                    used.add(y)
            else:
                mapping[x], mapping[y] = mapping[y], mapping[x]
            current += best_gain

    def smart_init(self):
        """Concept-driven start: assign each variable to an unused gold
        variable sharing its concept, preferring the strongest unary tie."""
        mapping = [-1] * self.np_
        used = set()
        for p, var in enumerate(self.pred_vars):
            concept = self.pred_concepts[var]
            options = [
                g
                for g in self.gold_concept_index.get(concept, ())
                if g not in used
            ]
            if options:
                best = max(options, key=lambda g: (self.unary[p][g], -g))
                mapping[p] = best
                used.add(best)
        return mapping

    def random_init(self, rng):
        mapping = [-1] * self.np_
        used = set()
        for p in range(self.np_):
            options = [g for g in self.candidates[p] if g not in used]
            pick = int(rng.integers(len(options) + 1)) - 1
            if pick >= 0:
                mapping[p] = options[pick]
                used.add(options[pick])
        return mapping

    def sanitize(self, mapping):
        """Clip an externally supplied mapping to a valid partial injection."""
        clean = [-1] * self.np_
        used = set()
        for p, g in enumerate(mapping[: self.np_]):
            if 0 <= g < self.ng and g not in used:
                clean[p] = g
                used.add(g)
        return clean


def align_best(pred: TripleSet, gold: TripleSet, restarts, rng, seed_mappings=()):
    """Best alignment over hill-climbing runs.

    One concept-seeded run, `restarts` random-start runs, and one run per
    entry of seed_mappings. Returns (mapping, matched count): mapping[i] is
    the gold variable index for the i-th sorted pred variable, or -1.
    """
    matcher = _Matcher(pred, gold)
    inits = [matcher.smart_init()]
    for _ in range(restarts):
        inits.append(matcher.random_init(rng))
    for seed_mapping in seed_mappings:
        inits.append(matcher.sanitize(seed_mapping))
    best_mapping, best_matched = None, -1
    for init in inits:
        mapping, matched = matcher.climb(init)
        if matched > best_matched:
            best_mapping, best_matched = mapping, matched
    return best_mapping, best_matched


def _as_triples(value) -> TripleSet:
    if isinstance(value, AmrGraph):
        return to_triples(value)
    return value


def pair_counts(pred, gold, restarts=4, seed=0, seed_mappings=()) -> PairCounts:
    """Smatch counts for a single pair."""
    pred, gold = _as_triples(pred), _as_triples(gold)
    rng = np.random.default_rng(seed)
    _, matched = align_best(pred, gold, restarts, rng, seed_mappings)
    return PairCounts(matched, pred.size(), gold.size())


def _check_lengths(preds, golds):
    if len(preds) != len(golds):
        raise ValueError(
            f"prediction/gold length mismatch: {len(preds)} vs {len(golds)}"
        )
    if not preds:
        raise ValueError("empty corpus")


def _pair_seeds(seed, n):
    return [s.generate_state(1)[0] for s in np.random.SeedSequence(seed).spawn(n)]


def _smatch_one(args):
    pred, gold, restarts, pair_seed = args
    return pair_counts(pred, gold, restarts, pair_seed)


def smatch_counts(preds, golds, restarts=4, seed=0, workers=1):
    """Per-pair Smatch counts for id-aligned corpora. Deterministic in seed,
    independent of worker count."""
    _check_lengths(preds, golds)
    preds = [_as_triples(p) for p in preds]
    golds = [_as_triples(g) for g in golds]
    seeds = _pair_seeds(seed, len(preds))
    jobs = [(p, g, restarts, s) for p, g, s in zip(preds, golds, seeds)]
    if workers > 1:
        with Pool(workers) as pool:
            return pool.map(_smatch_one, jobs)
    return [_smatch_one(job) for job in jobs]


def smatch(preds, golds, restarts=4, seed=0, workers=1) -> Score:
    """Corpus Smatch: micro-averaged precision, recall, F1 in [0, 1]."""
    return micro_score(smatch_counts(preds, golds, restarts, seed, workers))


# ---------------------------------------------------------------------------
# Fine-grained categories
# ---------------------------------------------------------------------------


def strip_sense(concept: str) -> str:
    return _SENSE_RE.sub("", concept)


def _unlabel(ts: TripleSet) -> TripleSet:
    by_pair = {}
    for role, a, b in sorted(ts.relations):
        by_pair.setdefault((a, b), []).append(role)
    relations = set()
    for (a, b), roles in by_pair.items():
        for i in range(len(roles)):
            relations.add((f":rel{i}", a, b))
    return TripleSet(ts.instances, ts.attributes, frozenset(relations))


def _nowsd(ts: TripleSet) -> TripleSet:
    instances = frozenset((v, strip_sense(c)) for v, c in ts.instances)
    attributes = frozenset(
        (r, v, strip_sense(c) if r == ":TOP" else c) for r, v, c in ts.attributes
    )
    return TripleSet(instances, attributes, ts.relations)


def _restrict(ts: TripleSet, relations) -> TripleSet:
    relations = frozenset(relations)
    involved = {a for _, a, _ in relations} | {b for _, _, b in relations}
    instances = frozenset((v, c) for v, c in ts.instances if v in involved)
    return TripleSet(instances, frozenset(), relations)


def _reentrancy_part(ts: TripleSet) -> TripleSet:
    indegree = {}
    for _, _, b in ts.relations:
        indegree[b] = indegree.get(b, 0) + 1
    reentrant = {v for v, n in indegree.items() if n >= 2}
    return _restrict(ts, (t for t in ts.relations if t[2] in reentrant))


def _srl_part(ts: TripleSet) -> TripleSet:
    return _restrict(ts, (t for t in ts.relations if _ARG_RE.match(t[0])))


def _bag_counts(pred_bag, gold_bag) -> PairCounts:
    matched = 0
    gold_remaining = {}
    for item in gold_bag:
        gold_remaining[item] = gold_remaining.get(item, 0) + 1
    for item in pred_bag:
        if gold_remaining.get(item, 0) > 0:
            gold_remaining[item] -= 1
            matched += 1
    return PairCounts(matched, len(pred_bag), len(gold_bag))


def _concept_bag(ts: TripleSet):
    return sorted(c for _, c in ts.instances)


def _entity_signatures(ts: TripleSet):
    concepts = dict(ts.instances)
    ops = {}
    for role, v, const in ts.attributes:
        m = _OP_RE.match(role)
        if m:
            ops.setdefault(v, []).append((int(m.group(1)), const))
    signatures = []
    for role, entity, name_node in ts.relations:
        if role == ":name":
            parts = tuple(c for _, c in sorted(ops.get(name_node, ())))
            signatures.append((concepts.get(entity, ""), parts))
    return sorted(signatures)


def _negation_bag(ts: TripleSet):
    concepts = dict(ts.instances)
    return sorted(
        concepts.get(v, "")
        for role, v, const in ts.attributes
        if role == ":polarity" and const == "-"
    )


def _wiki_bag(ts: TripleSet):
    return sorted(const for role, _, const in ts.attributes if role == ":wiki")


def fine_grained(preds, golds, restarts=4, seed=0, workers=1) -> EvalReport:
    """Nine-category evaluation report over id-aligned corpora.

    Alignment-based categories re-run the alignment on transformed triples,
    seeded with the plain-Smatch best mapping, which makes
    Unlabel >= Smatch and NoWSD >= Smatch structural guarantees.
    """
    _check_lengths(preds, golds)
    preds = [_as_triples(p) for p in preds]
    golds = [_as_triples(g) for g in golds]
    seeds = _pair_seeds(seed, len(preds))
    jobs = [
        (p, g, restarts, s) for p, g, s in zip(preds, golds, seeds)
    ]
    if workers > 1:
        with Pool(workers) as pool:
            rows = pool.map(_fine_grained_one, jobs)
    else:
        rows = [_fine_grained_one(job) for job in jobs]
    counts = {name: [row[name] for row in rows] for name in CATEGORIES}
    scores = {name: micro_score(counts[name]) for name in CATEGORIES}
    return EvalReport(scores, counts)


def _fine_grained_one(args):
    pred, gold, restarts, pair_seed = args
    rng = np.random.default_rng(pair_seed)
    base_mapping, base_matched = align_best(pred, gold, restarts, rng)
    row = {"Smatch": PairCounts(base_matched, pred.size(), gold.size())}

    def aligned(pred_ts, gold_ts):
        if pred_ts.size() == 0 and gold_ts.size() == 0:
            return PairCounts(0, 0, 0)
        seed_maps = [_project_mapping(pred, gold, pred_ts, gold_ts, base_mapping)]
        _, matched = align_best(
            pred_ts, gold_ts, restarts, np.random.default_rng(pair_seed), seed_maps
        )
        return PairCounts(matched, pred_ts.size(), gold_ts.size())

    row["Unlabel"] = aligned(_unlabel(pred), _unlabel(gold))
    row["NoWSD"] = aligned(_nowsd(pred), _nowsd(gold))
    row["Concepts"] = _bag_counts(_concept_bag(pred), _concept_bag(gold))
    row["NER"] = _bag_counts(_entity_signatures(pred), _entity_signatures(gold))
    row["Neg"] = _bag_counts(_negation_bag(pred), _negation_bag(gold))
    row["Wiki"] = _bag_counts(_wiki_bag(pred), _wiki_bag(gold))
    row["Reentrancy"] = aligned(_reentrancy_part(pred), _reentrancy_part(gold))
    row["SRL"] = aligned(_srl_part(pred), _srl_part(gold))
    return row


def _project_mapping(pred_full, gold_full, pred_sub, gold_sub, mapping):
    """Re-index a full-graph alignment onto the variables of reduced sets."""
    full_pred_vars = sorted({v for v, _ in pred_full.instances})
    full_gold_vars = sorted({v for v, _ in gold_full.instances})
    sub_pred_vars = sorted({v for v, _ in pred_sub.instances})
    sub_gold_index = {
        v: i for i, v in enumerate(sorted({v for v, _ in gold_sub.instances}))
    }
    full_gold = dict(enumerate(full_gold_vars))
    projected = []
    full_pred_index = {v: i for i, v in enumerate(full_pred_vars)}
    for v in sub_pred_vars:
        g = mapping[full_pred_index[v]] if v in full_pred_index else -1
        gold_var = full_gold.get(g)
        projected.append(sub_gold_index.get(gold_var, -1))
    return projected


# ---------------------------------------------------------------------------
# Paired bootstrap significance
# ---------------------------------------------------------------------------

_BOOTSTRAP_CHUNK = 512


def _f1_vector(matched, pred_tot, gold_tot):
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_tot > 0, matched / pred_tot, 0.0)
        recall = np.where(gold_tot > 0, matched / gold_tot, 0.0)
        denom = precision + recall
        return np.where(denom > 0, 2 * precision * recall / np.maximum(denom, 1e-300), 0.0)


def bootstrap_significance(counts_a, counts_b, resamples=10_000, seed=0) -> float:
    """Paired bootstrap p-value for "system A beats system B".

    Sentence indices are resampled with replacement; per resample both
    systems' corpus F1 is recomputed from the resampled counts. The p-value
    is the fraction of resamples where B's F1 >= A's F1 (one-sided,
    ties counted, so identical systems give p = 1). Deterministic in seed.
    """
    if len(counts_a) != len(counts_b):
        raise ValueError("per-sentence count lists differ in length")
    if not counts_a:
        raise ValueError("empty count lists")
    n = len(counts_a)
    ma = np.array([c.matched for c in counts_a], dtype=np.float64)
    pa = np.array([c.pred_total for c in counts_a], dtype=np.float64)
    ga = np.array([c.gold_total for c in counts_a], dtype=np.float64)
    mb = np.array([c.matched for c in counts_b], dtype=np.float64)
    pb = np.array([c.pred_total for c in counts_b], dtype=np.float64)
    gb = np.array([c.gold_total for c in counts_b], dtype=np.float64)

    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < resamples:
        size = min(_BOOTSTRAP_CHUNK, resamples - done)
        idx = rng.integers(0, n, size=(size, n))
        f1_a = _f1_vector(ma[idx].sum(1), pa[idx].sum(1), ga[idx].sum(1))
        f1_b = _f1_vector(mb[idx].sum(1), pb[idx].sum(1), gb[idx].sum(1))
        hits += int(np.count_nonzero(f1_b >= f1_a))
        done += size
    return hits / resamples
