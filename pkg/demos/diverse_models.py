#!/usr/bin/env python3
"""How one aggregated model becomes K different-but-close client models.

Every federation round the server mutates the aggregate once per client:
each filter of each layer moves along one of the two most recent global
update directions, with a sign and scale drawn from a shuffled selector
list over {-1, +1, -2, +2}. The walk below builds a tiny two-layer model,
fakes two past global aggregates, and prints what the mutation actually
does to the numbers.
"""

import numpy as np

from sbpu import params as P
from sbpu import seeds
from sbpu.mutation import (DiversityRates, GlobalHistory,
                           build_stochastic_list, check_neighborhood_bound,
                           generate_diverse_models, stochastic_multiset)

rng = np.random.default_rng(42)

# a model with an 8-filter layer and a 4-filter layer
w_now = P.from_arrays([rng.standard_normal((8, 3)), rng.standard_normal((4, 5))])
step = P.from_arrays([0.1 * rng.standard_normal((8, 3)),
                      0.1 * rng.standard_normal((4, 5))])
w_prev = P.add_scaled(w_now, -1.0, step)          # where the model was last round
# keeping both lagged slots equal ties the two lagged gradients together,
# which is the regime where the closeness envelope below is guaranteed
history = GlobalHistory(w_glb=w_now, w_prev=w_prev, w_prev2=w_prev, round=7)

print("selector multiset for an 8-filter layer:", stochastic_multiset(8))
print("one shuffle of it:",
      [int(v) for v in build_stochastic_list(8, seeds.stream(42, "demo"))])
print()

# alpha controls how far the mutants may stray; the closeness guarantee
# needs beta1 = alpha and beta2 in [alpha/2, alpha] (the conventional
# beta2 = beta1**2 pairing drops below that range for small alpha)
alpha = 0.2
rates = DiversityRates(beta1=alpha, beta2=0.75 * alpha)
K = 5
models = generate_diverse_models(history, K, rates, seed=42)

print(f"K = {K} mutants of the same aggregate (alpha = {alpha}):")
delta_sq = P.sq_distance(w_now, w_prev)
for k, m in enumerate(models):
    rep = check_neighborhood_bound(m, history, alpha)
    print(f"  client {k}: ||w_k - w_glb||^2 = {rep.dist_sq:.6f}   "
          f"in [{rep.lower:.6f}, {rep.upper:.6f}]  -> {'ok' if rep.holds else 'VIOLATION'}")
print(f"  (envelope is [alpha^2, 4 alpha^2] x ||last global step||^2,"
      f" ||step||^2 = {delta_sq:.6f})")
print()

# the mutants are pairwise distinct, so no two clients ever see the same model
print("pairwise squared distances between dispatched models:")
for i in range(K):
    row = " ".join(f"{P.sq_distance(models[i], models[j]):9.5f}" for j in range(K))
    print(f"  client {i}: {row}")
print()

# and the mutation is centered: averaging over many selector shuffles
# recovers the aggregate (so no systematic drift is introduced)
many = generate_diverse_models(history, 2000, rates, seed=7)
mean = P.scale(many[0], 1.0 / len(many))
for m in many[1:]:
    mean = P.add_scaled(mean, 1.0 / len(many), m)
print(f"||mean of 2000 mutants - aggregate||^2 = {P.sq_distance(mean, w_now):.2e}"
      f"  (shrinks with the population size)")
