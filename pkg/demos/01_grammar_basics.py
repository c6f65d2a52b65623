"""Build a small And-Or grammar by hand and poke at it.

Run:  python3 demos/01_grammar_basics.py
"""

import actgram as ag

# An Or-node chooses one branch per its probability; an And-node expands
# all children in order.  from_rules infers which is which: a name with a
# single probability-1 rule is an And-node, anything else an Or-node.
g = ag.Pcfg.from_rules(
    "S",
    [
        ("S", "prep CORE close", 1.0),          # And: fixed ordering
        ("CORE", "dissect", 0.6),               # Or: two ways to do the core
        ("CORE", "dissect irrigate dissect", 0.4),
    ],
    name="demo",
)
print("violations:", ag.validate(g))  # -> []

# Sampling walks top-down, Or choices drawn from branch probabilities.
for seed in range(4):
    print("sample", seed, "->", " ".join(g.tokens_to_names(ag.sample(g, seed=seed))))

# inside() sums the probability of every parse tree of a sentence; it needs
# Chomsky normal form, which to_cnf produces without changing any sentence
# probability.
cnf = ag.to_cnf(g)
s = g.names_to_tokens("prep dissect close".split())
print("P(prep dissect close) =", ag.inside(cnf, s))          # 0.6
s2 = g.names_to_tokens("prep dissect irrigate dissect close".split())
print("P(long variant)       =", ag.inside(cnf, s2))         # 0.4
print("P(out of language)    =", ag.inside(cnf, g.names_to_tokens("close prep".split())))

# viterbi() returns the single most probable tree.
tree, p = ag.viterbi(cnf, s2)
print("viterbi prob:", p, "| leaves:", g.tokens_to_names(tree.leaves()))

# Grammars serialize to a line-oriented text format (round-trip safe) and
# to Graphviz DOT (And = box, Or = ellipse, probabilities on Or edges).
print()
print(ag.format_grammar(g))
print(ag.to_dot(g))
