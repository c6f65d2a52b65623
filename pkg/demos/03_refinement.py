"""Grammar-guided refinement of noisy frame-wise predictions.

A classifier emits a per-frame probability row over K classes.  Taking the
argmax frame by frame produces flicker: single-frame errors inside long
runs, and sometimes whole sequences the process grammar could never
generate.  The parser finds the most probable frame labeling whose
segment structure the grammar accepts.

Run:  python3 demos/03_refinement.py
"""

import numpy as np

import actgram as ag

g = ag.Pcfg.from_rules("S", [("S", "approach work retreat", 1.0)])
names = ("approach", "work", "retreat")

# 12 frames of a clean episode: 4 approach, 5 work, 3 retreat, with the
# classifier confident except for two flipped frames inside the runs.
rows = (
    [[0.8, 0.1, 0.1]] * 4
    + [[0.1, 0.8, 0.1]] * 5
    + [[0.1, 0.1, 0.8]] * 3
)
rows[2] = [0.15, 0.7, 0.15]   # flicker inside the approach run
rows[6] = [0.1, 0.2, 0.7]     # flicker inside the work run
m = ag.ProbMatrix.from_rows(np.array(rows), names)

argmax = m.values.argmax(axis=1)
print("argmax labels: ", " ".join(names[i][0] for i in argmax))
print("collapse:      ", [names[i] for i in ag.collapse_segments(argmax.tolist())])

res = ag.refine(m, g)
print("refined labels:", " ".join(names[i][0] for i in res.frame_labels))
print("sentence:      ", [names[i] for i in res.sentence])
print("data prob:     ", res.data_prob)
print("fallback used: ", res.fallback_used)

# Prefix probabilities are the search's currency: g(l) is the total mass
# of labelings whose segment collapse starts with l.
for prefix in [(0,), (0, 1), (1,)]:
    ps = ag.prefix_probabilities(m, prefix)
    print(f"g({'.'.join(names[i] for i in prefix)}) = {ps.g:.6f}")
