"""What the four mutation operators do to a genome.

Applies mutation repeatedly to the default ansatz and prints each log, then
checks the statistics the search relies on: the rotation count never
changes and replacements average 8 x 0.2 = 1.6 per call.
"""
import numpy as np

from qaenas import GAConfig, build_initial_genome, describe_genome, mutate

config = GAConfig()
rng = np.random.default_rng(3)
genome, params = build_initial_genome(4, 2), np.zeros(8)

for step in range(1, 4):
    genome, params, log = mutate(genome, params, rng, config)
    print(f"mutation {step}:")
    for entry in log or [{"op": "no-op"}]:
        print("   ", entry)
print()
print(describe_genome(genome, params))

counts, rotations = [], set()
fresh = build_initial_genome(4, 2)
for _ in range(1000):
    g, _, log = mutate(fresh, np.zeros(8), rng, config)
    rotations.add(g.n_rotations)
    counts.append(sum(e["op"] in ("replace_axis", "reassign_qubit") for e in log))
print(f"\nrotation counts seen over 1000 mutations: {sorted(rotations)}")
print(f"mean replacements per mutation: {np.mean(counts):.3f} (binomial mean 1.6)")
