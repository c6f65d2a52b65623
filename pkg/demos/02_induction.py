"""Learn a grammar from raw activity sentences.

A hidden "true" process generates sentences; the learner sees only the
token sequences (wrapped in the SIL delimiter, as corpus sentences always
are) and recovers structure: repeated motifs become And-nodes,
interchangeable fillers become Or-classes, and a root Or covers every
distilled sentence form.

Run:  python3 demos/02_induction.py
"""

import actgram as ag

true_process = ag.Pcfg.from_rules(
    "S",
    [
        ("S", "expose DISSECT clip cut", 0.7),
        ("S", "expose DISSECT clip cut irrigate", 0.3),
        ("DISSECT", "hook_dissect", 0.5),
        ("DISSECT", "blunt_dissect", 0.3),
        ("DISSECT", "scissor_dissect", 0.2),
    ],
)

corpus = [
    ag.wrap_sil(true_process.tokens_to_names(ag.sample(true_process, seed=i)))
    for i in range(25)
]
print("first few training sentences:")
for s in corpus[:4]:
    print("  ", " ".join(s))

params = ag.AdiosParams(eta=0.9, alpha=0.08, context_window=3, bootstrap_threshold=0.65)
g = ag.induce(corpus, params)
g = ag.estimate_probs(g, corpus)          # Viterbi counts + add-one smoothing
print("\ninduced grammar:")
print(ag.format_grammar(g))

# Every training sentence is inside the language, and fresh samples from
# the true process usually are too (the Or-class generalizes fillers).
cnf = ag.to_cnf(g)
train_cover = sum(
    ag.inside(cnf, g.names_to_tokens(s)) > 0 for s in corpus
)
held = [
    ag.wrap_sil(true_process.tokens_to_names(ag.sample(true_process, seed=500 + i)))
    for i in range(100)
]
held_cover = sum(ag.inside(cnf, g.names_to_tokens(s)) > 0 for s in held)
print(f"training coverage: {train_cover}/{len(corpus)}")
print(f"held-out coverage: {held_cover}/100")
print("corpus log-likelihood:", ag.log_likelihood(g, [g.names_to_tokens(s) for s in corpus]))
