"""Scoring parses: Smatch, the nine fine-grained categories, and the
paired bootstrap significance test.
"""

import numpy as np

from amrforge.graph import parse_penman
from amrforge.smatch import (
    CATEGORIES,
    bootstrap_significance,
    fine_grained,
    smatch,
    smatch_counts,
)

gold = parse_penman(
    "(w / want-01 :polarity -"
    ' :ARG0 (p / person :wiki "Ann" :name (n / name :op1 "Ann"))'
    " :ARG1 (s / sleep-01 :ARG0 p))"
)

# A slightly wrong parse: negation lost, wrong sleep sense.
pred = parse_penman(
    "(w / want-01"
    ' :ARG0 (p / person :wiki "Ann" :name (n / name :op1 "Ann"))'
    " :ARG1 (s / sleep-02 :ARG0 p))"
)

score = smatch([pred], [gold], seed=0)
print(f"smatch: P={score.precision:.3f} R={score.recall:.3f} F1={score.f1:.3f}")

report = fine_grained([pred], [gold], seed=0)
print("\nfine-grained categories:")
for name in CATEGORIES:
    s = report[name]
    print(f"  {name:<11} P={s.precision:.3f} R={s.recall:.3f} F1={s.f1:.3f}")
# Note NoWSD forgives the sense error and Neg pinpoints the lost negation.

# Paired bootstrap: does system A beat system B beyond resampling noise?
# Per-sentence matched/total counts feed the resampler.
rng = np.random.default_rng(0)
golds, preds_a, preds_b = [], [], []
for i in range(200):
    g = parse_penman(f"(s / see-01 :ARG0 (d / dog) :quant {i % 7})")
    golds.append(g)
    preds_a.append(g)  # system A: always right
    wrong = parse_penman(f"(s / see-01 :ARG0 (d / cat) :quant {i % 7})")
    preds_b.append(g if rng.random() < 0.7 else wrong)  # B: wrong 30%

counts_a = smatch_counts(preds_a, golds, seed=0)
counts_b = smatch_counts(preds_b, golds, seed=0)
p_value = bootstrap_significance(counts_a, counts_b, resamples=10_000, seed=0)
print(f"\nA vs B paired bootstrap p-value: {p_value:.5f}")
print("significant at 0.05:", p_value <= 0.05)

p_self = bootstrap_significance(counts_a, counts_a, resamples=10_000, seed=0)
print(f"A vs itself: p = {p_self} (ties count, never significant)")
