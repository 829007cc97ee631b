"""Closed-loop Monte Carlo validation of synthesized controllers.

Trajectory ``i`` draws its disturbances from its own Philox stream keyed by
``(seed, i)``, so results do not depend on batching or worker count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import beta

from .rdp import Controller
from .system import DisturbanceModel, Dynamics


def substream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def clopper_pearson(k: int, n: int, alpha: float = 0.05):
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class Trajectory:
    states: np.ndarray  # (len, dim); shorter than T + 1 after an early stop
    actions: list
    trace: list  # label sets
    zs: list  # automaton state after each observation
    satisfied: bool
    exited_domain: bool


def simulate(dyn: Dynamics, dist: DisturbanceModel, controller: Controller, x0, T: int,
             rng: np.random.Generator) -> Trajectory:
    dfa = controller.dfa
    part = controller.partition
    controller.reset()
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    states, actions, trace, zs = [x.copy()], [], [], []
    satisfied = exited = False
    for t in range(T + 1):
        z = controller.observe(x)
        trace.append(part.regions.label(x, dfa.ap))
        zs.append(z)
        safe = bool(part.regions.is_safe(x))
        if dfa.accepting[z] and safe:
            satisfied = True
            break
        if z == dfa.reject or not safe or t == T:
            break
        if not part.domain.contains(x):
            exited = True
            break
        a = controller.choose(t, x)
        w = dist.from_uniform(rng.random(dist.dim))
        x = dyn(x, a, w)
        actions.append(a)
        states.append(x.copy())
    return Trajectory(np.array(states), actions, trace, zs, satisfied, exited)


def run_batch(dyn: Dynamics, dist: DisturbanceModel, controller: Controller, x0, T: int, n: int, seed: int,
              offset: int = 0):
    """Vectorised equivalent of ``simulate`` for ``n`` trajectories from ``x0``.

    Returns ``(satisfied, exited)`` boolean arrays.
    """
    dfa = controller.dfa
    part = controller.partition
    regions = part.regions
    strat = controller.strategy.actions
    u = np.stack([substream(seed, offset + i).random((T, dist.dim)) for i in range(n)]) if T else None
    x = np.tile(np.atleast_1d(np.asarray(x0, dtype=float)), (n, 1))
    z = np.full(n, dfa.init, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    sat = np.zeros(n, dtype=bool)
    exited = np.zeros(n, dtype=bool)
    for t in range(T + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        xs = x[idx]
        safe = regions.is_safe(xs)
        zn = dfa.delta[z[idx], regions.label_masks(xs, dfa.ap)]
        if dfa.reject >= 0:
            zn = np.where(safe, zn, dfa.reject)
        z[idx] = zn
        acc = dfa.accepting[zn] & safe  # unsafe states are losing in the abstraction too
        sat[idx[acc]] = True
        stop = acc | ~safe | (zn == dfa.reject)
        if t == T:
            break
        out = ~part.domain.contains(xs)
        exited[idx[out & ~stop]] = True
        stop |= out
        active[idx[stop]] = False
        idx = idx[~stop]
        if len(idx) == 0:
            break
        cells = part.locate(x[idx])
        a = strat[t, cells, z[idx]].astype(np.int64)
        w = dist.from_uniform(u[idx, t])
        x[idx] = dyn(x[idx], a, w)
    return sat, exited


def estimate_probability(dyn, dist, controller, x0, T: int, N: int, seed: int = 0, offset: int = 0):
    if N < 100:
        raise ValueError("N must be at least 100")
    sat, exited = run_batch(dyn, dist, controller, x0, T, N, seed, offset)
    k = int(sat.sum())
    lo, hi = clopper_pearson(k, N)
    return {"p_hat": k / N, "ci_low": lo, "ci_high": hi, "n": N, "successes": k, "exited": int(exited.sum())}
