"""
The halving chain
=================

From x the chain jumps to 1 with probability p(x) and otherwise halves.  When
sum_j p(2^-j) diverges it keeps coming back to 1; when the weighted sum is
finite it drifts to 0 after a few early returns.  Levels j with x = 2^-j are
tracked as integers.
"""

import numpy as np

from zvmc import classify_experiment, divergent_spec, simulate_halving, summable_spec

run = simulate_halving(divergent_spec(), 2000, seed=0)
print("divergent, first visit times:", run.visit_times[:10], "... total", run.visits_to_one)

for spec in (divergent_spec(), summable_spec()):
    s = classify_experiment(spec, 100_000, 100, seed=0)
    print(f"{spec.label:>9}: mean visits {s.visits.mean():8.1f}, "
          f"median final level {np.median(s.final_levels):8.0f}, "
          f">=5 visits in {s.fraction_at_least(5):.0%} of runs")
