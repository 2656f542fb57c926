"""
Sequential stopping rules on an exceedance stream
=================================================

Walks through the five regimes on synthetic exceedance indicators, then
prints the boundary anchors and operating characteristics of SPRT and SAPT.
Run with ``python3 demos/stopping_rules_tour.py``.
"""

# %%
# One stream, five regimes.  An exceedance is a permuted statistic at least
# as large as the observed one; here they arrive with probability 0.02.
import numpy as np

from seqvimp.monitor import (
    SequentialSpec,
    average_expected_permutations,
    effective_alpha,
    expected_permutations,
    final_hypothesis,
    power_function,
    replay,
    sprt_boundaries,
)

rng = np.random.default_rng(3)
stream = rng.random(500) < 0.02
specs = [SequentialSpec.sprt(), SequentialSpec.sapt(), SequentialSpec.pval(),
         SequentialSpec.certain(), SequentialSpec.complete()]
for spec in specs:
    state = replay(stream, spec)
    print(f"{spec.label:<9} stops at m={state.m:<4} d={state.d_m:<3} -> "
          f"{final_hypothesis(state, spec).value}")

# %%
# Boundaries.  H1 needs d_m below the lower line, H0 needs it above the upper.
sapt = SequentialSpec.sapt()
for m in (6, 50, 110, 200):
    upper, lower = sprt_boundaries(sapt, m)
    print(f"SAPT m={m:<4} accept H0 if d >= {upper:7.3f}, accept H1 if d <= {lower:7.3f}")

# %%
# Operating characteristics from Wald's approximations.
for spec in specs[:2]:
    print(f"{spec.label}: L(p0)={power_function(spec.p0, spec):.4f}  "
          f"E(m | p0)={expected_permutations(spec.p0, spec):.1f}  "
          f"effective alpha={effective_alpha(spec):.4f}  "
          f"mean cost under uniform p={average_expected_permutations(spec):.1f}")
