"""Stochastic bidirectional parameter updates.

The server keeps the current aggregate plus the two previous ones and forms
two lagged gradients, g = w_glb - w_prev and g' = w_glb - w_prev2.  For each
layer a shuffled list over {-1, +1, -2, +2} assigns every filter a signed
branch: +-1 entries add beta1 * s * g to that filter, +-2 entries add
beta2 * s * g'.  Repeating this with independent shuffles per client yields
K diverse models in a close neighborhood of the aggregate.

The list holds floor(f/4) copies of each element type; when f is not a
multiple of 4 the remaining r = f - 4*floor(f/4) slots are filled from the
fixed cycle [-1, +1, -2, +2] before shuffling, which keeps the multiset
deterministic and near-balanced (and covers tiny layers with f < 4).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import params as P
from . import seeds
from .params import LayeredParams

PAD_CYCLE = (-1, 1, -2, 2)
BOUND_SLACK = 1e-9   # relative slack for double-precision summation noise


@dataclass(frozen=True)
class DiversityRates:
    """Scales of the +-1 and +-2 branches."""

    beta1: float
    beta2: float

    def __post_init__(self):
        if self.beta1 < 0.0 or self.beta2 < 0.0:
            raise ValueError("diversity rates must be >= 0")

    @classmethod
    def from_beta(cls, beta: float) -> "DiversityRates":
        """Conventional single-knob form: beta1 = beta, beta2 = beta^2."""
        return cls(beta1=beta, beta2=beta * beta)


@dataclass(frozen=True)
class GlobalHistory:
    """Current aggregate plus the two previous ones, with the round counter."""

    w_glb: LayeredParams
    w_prev: LayeredParams
    w_prev2: LayeredParams
    round: int = 0

    def __post_init__(self):
        P.check_same_shape(self.w_glb, self.w_prev)
        P.check_same_shape(self.w_glb, self.w_prev2)
        if self.round < 0:
            raise ValueError("round must be >= 0")
        if self.round < 2:
            if not (self.w_prev == self.w_glb and self.w_prev2 == self.w_glb):
                raise ValueError("bootstrap rounds require all three models equal")

    @classmethod
    def bootstrap(cls, w0: LayeredParams) -> "GlobalHistory":
        return cls(w_glb=w0, w_prev=w0, w_prev2=w0, round=0)

    def rotated(self, new_glb: LayeredParams, tie_gradients: bool = False) -> "GlobalHistory":
        """Advance one round.

        Normally w_prev2 <- w_prev and w_prev <- old w_glb.  With
        tie_gradients both lagged slots get the old aggregate so the two
        lagged gradients coincide (the compliant-bound regime).
        """
        nxt = self.round + 1
        if nxt < 2:
            # the two lagged slots track the fresh aggregate until round 2
            return GlobalHistory(w_glb=new_glb, w_prev=new_glb, w_prev2=new_glb, round=nxt)
        w_prev = self.w_glb
        w_prev2 = self.w_glb if tie_gradients else self.w_prev
        return GlobalHistory(w_glb=new_glb, w_prev=w_prev, w_prev2=w_prev2, round=nxt)

    def lagged_gradients(self) -> tuple[LayeredParams, LayeredParams]:
        return P.diff(self.w_glb, self.w_prev), P.diff(self.w_glb, self.w_prev2)


@dataclass(frozen=True)
class BoundReport:
    """One neighborhood-bound measurement for a single diverse model."""

    dist_sq: float
    delta_sq: float
    lower: float
    upper: float
    holds: bool


def stochastic_multiset(f: int) -> list[int]:
    """The deterministic multiset before shuffling (counts + padding rule)."""
    if f < 1:
        raise ValueError("f must be >= 1")
    q = f // 4
    base = [-1] * q + [1] * q + [-2] * q + [2] * q
    base += list(PAD_CYCLE[: f - 4 * q])
    return base


def build_stochastic_list(f: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffled branch selector for a layer of f filters (length f)."""
    return seeds.fisher_yates(stochastic_multiset(f), rng)


def apply_stochastic_lists(w_glb: LayeredParams, g_glb: LayeredParams,
                           g_prev: LayeredParams, rates: DiversityRates,
                           lists: Sequence[Sequence[int]]) -> LayeredParams:
    """Per-filter branch update for explicitly supplied selector lists."""
    P.check_same_shape(w_glb, g_glb)
    P.check_same_shape(w_glb, g_prev)
    if len(lists) != len(w_glb.layers):
        raise ValueError(f"need one list per layer, got {len(lists)} for {len(w_glb.layers)}")
    arrays = []
    for i, (lw, lg, lgp) in enumerate(zip(w_glb.layers, g_glb.layers, g_prev.layers)):
        sel = np.asarray(lists[i], dtype=np.int64)
        if sel.size != lw.n_filters:
            raise ValueError(f"layer {i}: list length {sel.size} != {lw.n_filters} filters")
        if not np.all(np.isin(sel, (-1, 1, -2, 2))):
            raise ValueError(f"layer {i}: entries must come from {{-1, +1, -2, +2}}")
        out = lw.filters.copy()
        one = np.abs(sel) == 1
        if np.any(one):
            out[one] += rates.beta1 * sel[one, None] * lg.filters[one]
        two = ~one
        if np.any(two):
            out[two] += rates.beta2 * sel[two, None] * lgp.filters[two]
        arrays.append(out)
    return P.from_arrays(arrays, [l.kind for l in w_glb.layers])


def sbpu_mutate(w_glb: LayeredParams, g_glb: LayeredParams, g_prev: LayeredParams,
                rates: DiversityRates, rng: np.random.Generator) -> LayeredParams:
    """One diverse model: fresh shuffled list per layer, then the branch update."""
    lists = [build_stochastic_list(l.n_filters, rng) for l in w_glb.layers]
    return apply_stochastic_lists(w_glb, g_glb, g_prev, rates, lists)


def generate_diverse_models(h: GlobalHistory, K: int, rates: DiversityRates,
                            seed: int) -> list[LayeredParams]:
    """K independently mutated copies of the aggregate, ordered by client.

    Each client consumes its own RNG stream derived from (seed, round,
    client index), so results are identical under any evaluation order.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    g_glb, g_prev = h.lagged_gradients()
    return [
        sbpu_mutate(w_glb=h.w_glb, g_glb=g_glb, g_prev=g_prev, rates=rates,
                    rng=seeds.stream(seed, "sbpu", h.round, k))
        for k in range(K)
    ]


def check_neighborhood_bound(w_loc: LayeredParams, h: GlobalHistory,
                             alpha: float) -> BoundReport:
    """Measure alpha^2*||delta||^2 <= ||w_loc - w_glb||^2 <= 4*alpha^2*||delta||^2."""
    if alpha <= 0.0:
        raise ValueError("alpha must be > 0")
    dist_sq = P.sq_distance(w_loc, h.w_glb)
    delta_sq = P.sq_distance(h.w_glb, h.w_prev)
    lower = alpha * alpha * delta_sq
    upper = 4.0 * alpha * alpha * delta_sq
    slack = BOUND_SLACK * max(dist_sq, upper, 1e-300)
    holds = (lower - slack) <= dist_sq <= (upper + slack)
    return BoundReport(dist_sq=dist_sq, delta_sq=delta_sq, lower=lower,
                       upper=upper, holds=bool(holds))
