"""Round orchestration for the simulated federation.

One round: (1) generate a diverse model per client from the global history,
(2) run E local SGD iterations on each client, (3) apply the configured
defense to each uploaded parameter delta and aggregate by sample fraction,
(4) rotate the history and advance the round counter.

All randomness flows through streams derived from the master seed, so
concurrent and serial client schedules produce bit-identical results.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import params as P
from . import seeds
from .mutation import (BoundReport, DiversityRates, GlobalHistory,
                       check_neighborhood_bound, generate_diverse_models)
from .objectives import (ClassifierObjective, LrSchedule, QuadraticObjective,
                         sgd_step)
from .params import LayeredParams

DP_DELTA = 1e-5  # delta used by the Gaussian-mechanism noise calibration


class DivergenceError(RuntimeError):
    """Local training produced a non-finite loss."""

    def __init__(self, client_id: int, iteration: int):
        self.client_id = client_id
        self.iteration = iteration
        super().__init__(f"client {client_id} diverged at local iteration {iteration}")


@dataclass(frozen=True)
class ClientState:
    id: int
    n_k: int
    objective: QuadraticObjective | ClassifierObjective
    E: int
    batch_size: int = 1

    def __post_init__(self):
        if self.n_k < 1:
            raise ValueError("n_k must be >= 1")
        if self.E < 1:
            raise ValueError("E must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class DefensePolicy:
    """Upload defense: none, clipped Gaussian noise (dp), or pruning (gc)."""

    tag: str = "none"
    epsilon_per_round: float = 0.0
    clip: float = 1.0
    prune_fraction: float = 0.0

    def __post_init__(self):
        if self.tag not in ("none", "dp", "gc"):
            raise ValueError(f"unknown defense tag {self.tag!r}")
        if self.tag == "dp":
            if self.clip <= 0.0:
                raise ValueError("dp clip bound C must be > 0")
            if self.epsilon_per_round <= 0.0:
                raise ValueError("dp epsilon_per_round must be > 0")
        if self.tag == "gc" and not (0.0 <= self.prune_fraction < 1.0):
            raise ValueError("gc prune fraction must lie in [0, 1)")

    def noise_std(self) -> float:
        """Per-coordinate std of the Gaussian mechanism at (epsilon, C)."""
        return self.clip * math.sqrt(2.0 * math.log(1.25 / DP_DELTA)) / self.epsilon_per_round


@dataclass(frozen=True)
class RoundRecord:
    round: int
    global_loss: float
    client_losses: tuple[float, ...]
    divergence: float
    bound_reports: tuple[BoundReport, ...]
    wall_clock: float
    trajectories: tuple[tuple[LayeredParams, ...], ...] | None = None


def local_train(c: ClientState, w_init: LayeredParams, schedule: LrSchedule,
                global_step_offset: int, rng: np.random.Generator,
                record_trajectory: bool = False):
    """E SGD iterations from w_init with the shared step-count schedule.

    Quadratic clients draw a fresh sphere-noise stochastic gradient per
    iteration and project back onto their radius-R ball; classifier clients
    sample one batch uniformly with replacement per iteration.

    Returns the final weights, or (final, trajectory) when recording; the
    trajectory holds the post-step weights of each of the E iterations.
    """
    obj = c.objective
    quadratic = isinstance(obj, QuadraticObjective)
    w = obj.project(w_init) if quadratic else w_init
    traj = []
    for s in range(c.E):
        eta = schedule.lr_at(global_step_offset + s)
        if quadratic:
            g = obj.stochastic_grad(w, rng)
            w = sgd_step(w, g, eta, ball=(obj.center, obj.radius))
        else:
            idx = rng.integers(0, obj.n_samples, size=c.batch_size)
            batch = (obj.data_x[idx], obj.data_y[idx])
            g = obj.grad(w, batch)
            w = sgd_step(w, g, eta)
        if not math.isfinite(obj.loss(w)):
            raise DivergenceError(c.id, s)
        if record_trajectory:
            traj.append(w)
    if record_trajectory:
        return w, tuple(traj)
    return w


def aggregate(updates: Sequence[LayeredParams], sizes: Sequence[int]) -> LayeredParams:
    """Sample-fraction weighted average, sum_k (n_k / N) * update_k.

    Computed as anchor + weighted deviations from the first update, which
    makes the aggregate of identical inputs bit-for-bit that input.
    """
    if not updates:
        raise ValueError("no updates to aggregate")
    if len(updates) != len(sizes):
        raise ValueError(f"{len(updates)} updates but {len(sizes)} sizes")
    if any(s <= 0 for s in sizes):
        raise ValueError("client sizes must be positive")
    for u in updates[1:]:
        P.check_same_shape(updates[0], u)
    total = float(sum(sizes))
    base = updates[0]
    acc = [l.filters.copy() for l in base.layers]
    for u, nk in zip(updates[1:], sizes[1:]):
        w = nk / total
        for j, (lu, lb) in enumerate(zip(u.layers, base.layers)):
            acc[j] += w * (lu.filters - lb.filters)
    return P.from_arrays(acc, [l.kind for l in base.layers])


def apply_defense(g: LayeredParams, policy: DefensePolicy,
                  rng: np.random.Generator) -> LayeredParams:
    """Defend an uploaded delta: identity, clip+noise, or magnitude pruning."""
    if policy.tag == "none":
        return g
    v = P.as_vector(g)
    if policy.tag == "dp":
        norm = float(np.linalg.norm(v))
        if norm > policy.clip:
            v = v * (policy.clip / norm)
        v = v + policy.noise_std() * rng.standard_normal(v.size)
        return P.from_vector(v, g)
    # gc: zero the smallest-magnitude fraction, ties broken by flat index
    n_zero = int(math.floor(policy.prune_fraction * v.size))
    if n_zero > 0:
        order = np.argsort(np.abs(v), kind="stable")
        out = v.copy()
        out[order[:n_zero]] = 0.0
        v = out
    return P.from_vector(v, g)


def run_round(h: GlobalHistory, clients: Sequence[ClientState], rates: DiversityRates,
              schedule: LrSchedule, policy: DefensePolicy, seed: int,
              alpha: float | None = None, tie_gradients: bool = False,
              record_trajectories: bool = False) -> tuple[GlobalHistory, RoundRecord]:
    """Execute one full federation round and rotate the history."""
    t0 = time.perf_counter()
    K = len(clients)
    sizes = [c.n_k for c in clients]
    E = clients[0].E
    if any(c.E != E for c in clients):
        raise ValueError("all clients must share one E")

    dispatched = generate_diverse_models(h, K, rates, seed)

    reports = []
    if alpha is not None:
        reports = [check_neighborhood_bound(w, h, alpha) for w in dispatched]

    trained, trajs = [], []
    offset = h.round * E
    for c, w0 in zip(clients, dispatched):
        rng = seeds.stream(seed, "train", h.round, c.id)
        if record_trajectories:
            w, traj = local_train(c, w0, schedule, offset, rng, record_trajectory=True)
            trajs.append(traj)
        else:
            w = local_train(c, w0, schedule, offset, rng)
        trained.append(w)

    if policy.tag == "none":
        uploads = list(trained)   # identity defense: avoid the delta round-trip
    else:
        uploads = []
        for c, w0, w in zip(clients, dispatched, trained):
            delta = P.diff(w, w0)
            defended = apply_defense(delta, policy,
                                     seeds.stream(seed, "defense", h.round, c.id))
            uploads.append(P.add_scaled(w0, 1.0, defended))

    new_glb = aggregate(uploads, sizes)
    mean_local = aggregate(trained, sizes)
    total = float(sum(sizes))
    divergence = math.fsum((n / total) * P.sq_distance(mean_local, w)
                           for n, w in zip(sizes, trained))
    global_loss = math.fsum((c.n_k / total) * c.objective.loss(new_glb) for c in clients)
    client_losses = tuple(c.objective.loss(w) for c, w in zip(clients, trained))

    record = RoundRecord(
        round=h.round,
        global_loss=global_loss,
        client_losses=client_losses,
        divergence=divergence,
        bound_reports=tuple(reports),
        wall_clock=time.perf_counter() - t0,
        trajectories=tuple(trajs) if record_trajectories else None,
    )
    return h.rotated(new_glb, tie_gradients=tie_gradients), record


@dataclass(frozen=True)
class RunPlan:
    """Fully resolved inputs for a deterministic multi-round run."""

    clients: tuple[ClientState, ...]
    rates: DiversityRates
    schedule: LrSchedule
    policy: DefensePolicy
    rounds: int
    seed: int
    w_init: LayeredParams
    alpha: float | None = None
    tie_gradients: bool = False
    record_trajectories: bool = False

    def __post_init__(self):
        if not self.clients:
            raise ValueError("need at least one client")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")


def run_federation(plan: RunPlan, history_out: list | None = None) -> list[RoundRecord]:
    """Run all rounds; T = rounds * E SGD iterations per client in total.

    history_out, when given, receives the final GlobalHistory (and starts
    with the bootstrap history if rounds == 0).
    """
    h = GlobalHistory.bootstrap(plan.w_init)
    records = []
    for _ in range(plan.rounds):
        h, rec = run_round(h, plan.clients, plan.rates, plan.schedule, plan.policy,
                           plan.seed, alpha=plan.alpha, tie_gradients=plan.tie_gradients,
                           record_trajectories=plan.record_trajectories)
        records.append(rec)
    if history_out is not None:
        history_out.clear()
        history_out.append(h)
    return records
