"""Robust dynamic programming on the implicit abstraction x DFA product.

Value fields are arrays ``v[state, z]``. For the grid abstractions ``state``
is a flat cell index; for ``ReducedSmdp`` it is a reduced state id. Unsafe
states hold 0 for every ``z``; on safe states accepting ``z`` are pinned to 1
and the rejecting sink to 0. A backup folds the automaton step inline: the
successor ``s'`` is read at ``z' = delta(z, L(s'))``.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .abstraction import Imdp, ReducedSmdp, Smdp, greedy_fill
from .errors import InfeasibleIntervals, InstanceTooLarge, OutOfDomain
from .ltlf import Dfa

PESSIMISTIC, OPTIMISTIC = "pessimistic", "optimistic"
_ROW_CHUNK = 1 << 12


@dataclass
class BoundsPair:
    lower: np.ndarray  # per cell
    upper: np.ndarray
    safe_mask: np.ndarray

    @property
    def gap(self) -> float:
        if not self.safe_mask.any():
            return 0.0
        return float(np.max(self.upper[self.safe_mask] - self.lower[self.safe_mask]))


@dataclass
class Strategy:
    actions: np.ndarray  # (T, n_cells, n_z) int16

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def __call__(self, t: int, cell: int, z: int) -> int:
        return int(self.actions[t, cell, z])


def _check_mode(mode):
    if mode not in (PESSIMISTIC, OPTIMISTIC):
        raise ValueError(f"mode must be {PESSIMISTIC!r} or {OPTIMISTIC!r}")


def next_states(dfa: Dfa, labels) -> np.ndarray:
    """``delta(z, L(s))`` for every z and cell: shape (n_z, n_cells)."""
    return dfa.delta[:, np.asarray(labels)]


def mapped_values(v, nz_table) -> np.ndarray:
    """``w[z, s] = v[s, delta(z, L(s))]``."""
    return v[np.arange(v.shape[0])[None, :], nz_table]


def _pin(vnew, dfa, safe_mask):
    vnew[:, dfa.accepting] = 1.0
    if dfa.reject >= 0:
        vnew[:, dfa.reject] = 0.0
    vnew[~safe_mask] = 0.0
    return vnew


def live_states(dfa: Dfa) -> np.ndarray:
    """Automaton states whose value is not pinned."""
    live = ~dfa.accepting.copy()
    if dfa.reject >= 0:
        live[dfa.reject] = False
    return np.flatnonzero(live)


def _finish(q, live, n_actions, dfa, n_total, safe_index, safe_mask):
    """``q`` is (n_live, n_rows); fold the action max into a full value field."""
    q = q.reshape(len(live), len(safe_index), n_actions)
    v = np.zeros((n_total, dfa.n_states))
    act = np.zeros((n_total, dfa.n_states), dtype=np.int16)
    v[np.ix_(safe_index, live)] = q.max(axis=2).T
    act[np.ix_(safe_index, live)] = q.argmax(axis=2).T  # first maximiser = lowest action index
    _pin(v, dfa, safe_mask)
    return v, act


def _map_rows(fn, n_rows, n_live, pool):
    bounds = [(i, min(i + _ROW_CHUNK, n_rows)) for i in range(0, n_rows, _ROW_CHUNK)]
    if pool is not None and len(bounds) > 1:
        parts = list(pool.map(lambda b: fn(*b), bounds))
    else:
        parts = [fn(*b) for b in bounds]
    return np.concatenate(parts, axis=1) if parts else np.zeros((n_live, 0))


# -- SMDP (rectangle clusters) -------------------------------------------------------

def _window_extremes(smdp: Smdp, w, mode):
    """Per cluster extent, the min (or max) of ``w`` over every placement of that rectangle."""
    nz = w.shape[0]
    grid = w.reshape((nz,) + tuple(smdp.counts))
    red = np.min if mode == PESSIMISTIC else np.max
    out = []
    for extent, ids, widx in smdp.shape_groups:
        g = grid
        for d, k in enumerate(extent):
            if k > 1:
                g = red(sliding_window_view(g, k, axis=1 + d), axis=-1)
        out.append((ids, widx, g.reshape(nz, -1)))
    return out


def backup_smdp(v, smdp: Smdp, dfa: Dfa, labels=None, mode=PESSIMISTIC, pool=None):
    _check_mode(mode)
    labels = smdp.labels if labels is None else labels
    live = live_states(dfa)
    w = mapped_values(v, next_states(dfa, labels)[live])
    windows = _window_extremes(smdp, w, mode)
    ptr = smdp.row_ptr

    def rows(r0, r1):
        c0, c1 = ptr[r0], ptr[r1]
        ext = np.empty((len(live), c1 - c0))
        for ids, widx, win in windows:
            i0, i1 = np.searchsorted(ids, [c0, c1])
            ext[:, ids[i0:i1] - c0] = win[:, widx[i0:i1]]
        ext *= smdp.mass[None, c0:c1]
        return np.add.reduceat(ext, ptr[r0:r1] - c0, axis=1)

    q = _map_rows(rows, smdp.n_rows, len(live), pool)
    return _finish(q, live, smdp.n_actions, dfa, smdp.n_cells, smdp.safe_cells, smdp.safe_mask)


# -- reduced SMDP (explicit members) -------------------------------------------------

def reduced_labels(red: ReducedSmdp, labels=None) -> np.ndarray:
    labels = red.labels if labels is None else np.asarray(labels)
    return np.append(labels[red.safe_cells], 0)


def backup_reduced(v, red: ReducedSmdp, dfa: Dfa, labels=None, mode=PESSIMISTIC, pool=None):
    """Backup on the single-unsafe-state abstraction; ``v`` is (n_safe + 1, n_z)."""
    _check_mode(mode)
    live = live_states(dfa)
    w = mapped_values(v, next_states(dfa, reduced_labels(red, labels))[live])
    red_op = np.minimum if mode == PESSIMISTIC else np.maximum
    ptr, cptr = red.row_ptr, red.cl_ptr

    def rows(r0, r1):
        c0, c1 = ptr[r0], ptr[r1]
        m0, m1 = cptr[c0], cptr[c1]
        vals = w[:, red.members[m0:m1]]
        ext = red_op.reduceat(vals, cptr[c0:c1] - m0, axis=1) * red.mass[None, c0:c1]
        return np.add.reduceat(ext, ptr[r0:r1] - c0, axis=1)

    q = _map_rows(rows, red.n_rows, len(live), pool)
    safe_mask = np.r_[np.ones(red.n_safe, dtype=bool), False]
    return _finish(q, live, red.n_actions, dfa, red.n_states, np.arange(red.n_safe), safe_mask)


# -- IMDP (interval rows) ------------------------------------------------------------

def backup_imdp(v, imdp: Imdp, dfa: Dfa, labels=None, mode=PESSIMISTIC, pool=None):
    """Inner problem solved by the ordered greedy: start from the lower bounds
    and hand the remaining mass to successors in value order (ascending for the
    pessimistic case), each up to its upper bound."""
    _check_mode(mode)
    labels = imdp.labels if labels is None else labels
    live = live_states(dfa)
    w = mapped_values(v, next_states(dfa, labels)[live])
    ptr = imdp.row_ptr
    row_of = imdp.row_of_entry

    def rows(r0, r1):
        e0, e1 = ptr[r0], ptr[r1]
        succ = imdp.succ[e0:e1]
        lo, hi = imdp.p_lo[e0:e1], imdp.p_hi[e0:e1]
        rid = row_of[e0:e1] - r0
        starts = ptr[r0:r1] - e0
        slack = 1.0 - np.add.reduceat(lo, starts)
        if np.any(slack < -1e-12) or np.any(np.add.reduceat(hi, starts) < 1 - 1e-12):
            raise InfeasibleIntervals("infeasible interval row in backup")
        lengths = np.diff(np.r_[starts, len(succ)])
        out = np.empty((len(live), r1 - r0))
        for j in range(len(live)):
            vals = w[j, succ]
            key = vals if mode == PESSIMISTIC else -vals
            order = np.lexsort((succ, key, rid))
            cap = (hi - lo)[order]
            csum = np.cumsum(cap)
            before = csum - cap - np.repeat(np.r_[0.0, csum][starts], lengths)
            extra = np.clip(slack[rid[order]] - before, 0.0, cap)
            out[j] = np.add.reduceat((lo[order] + extra) * vals[order], starts)
        return out

    q = _map_rows(rows, imdp.n_rows, len(live), pool)
    return _finish(q, live, imdp.n_actions, dfa, imdp.n_cells, imdp.safe_cells, imdp.safe_mask)


# -- brute force ------------------------------------------------------------------------

_ORACLE_CELLS, _ORACLE_ACTIONS, _ORACLE_SUPPORT = 8, 2, 4


def backup_oracle(v, abst, dfa: Dfa, labels=None, mode=PESSIMISTIC):
    """Enumerates every vertex of each ambiguity set (slow, tiny instances only).

    SMDP: one Dirac per cluster. IMDP: the greedy vertex induced by every
    permutation of the successors.
    """
    _check_mode(mode)
    n_cells = int(np.prod(abst.counts))
    if n_cells > _ORACLE_CELLS or abst.n_actions > _ORACLE_ACTIONS:
        raise InstanceTooLarge(f"{n_cells} cells / {abst.n_actions} actions exceed the oracle limits")
    labels = abst.labels if labels is None else np.asarray(labels)
    pick = min if mode == PESSIMISTIC else max
    safe = set(int(s) for s in abst.safe_cells)
    out = np.zeros((n_cells, dfa.n_states))
    for s in sorted(safe):
        for z in range(dfa.n_states):
            if dfa.accepting[z]:
                out[s, z] = 1.0
                continue
            if z == dfa.reject:
                continue

            def val(c):
                return 0.0 if c not in safe else v[c, dfa.delta[z, labels[c]]]

            best = -np.inf
            for a in range(abst.n_actions):
                if isinstance(abst, Smdp):
                    cls = abst.clusters(s, a)
                    if any(len(m) > _ORACLE_SUPPORT for m, _ in cls):
                        raise InstanceTooLarge("cluster support above oracle limit")
                    cands = []
                    for choice in itertools.product(*[list(m) for m, _ in cls]):
                        dist: dict = {}
                        for (m, p), c in zip(cls, choice):
                            dist[int(c)] = dist.get(int(c), 0.0) + p
                        cands.append(sum(p * val(c) for c, p in sorted(dist.items())))
                else:
                    succ, lo, hi = abst.row(s, a)
                    if len(succ) > _ORACLE_SUPPORT:
                        raise InstanceTooLarge("row support above oracle limit")
                    cands = []
                    for perm in itertools.permutations(range(len(succ))):
                        g = greedy_fill(lo, hi, perm)
                        cands.append(sum(g[j] * val(int(succ[j])) for j in range(len(succ))))
                best = max(best, pick(cands))
            out[s, z] = best
    return out


# -- value iteration ---------------------------------------------------------------------

def _backup_for(abst):
    if isinstance(abst, Smdp):
        return backup_smdp
    if isinstance(abst, ReducedSmdp):
        return backup_reduced
    if isinstance(abst, Imdp):
        return backup_imdp
    raise TypeError(f"unsupported abstraction {type(abst).__name__}")


def initial_field(abst, dfa: Dfa) -> np.ndarray:
    if isinstance(abst, ReducedSmdp):
        n, safe = abst.n_states, np.r_[np.ones(abst.n_safe, dtype=bool), False]
    else:
        n, safe = abst.n_cells, abst.safe_mask
    v = np.zeros((n, dfa.n_states))
    v[np.ix_(safe, dfa.accepting)] = 1.0
    return v


def value_iteration(abst, dfa: Dfa, T: int, mode=PESSIMISTIC, labels=None, threads=1, record=True):
    """Returns ``(v_T, strategy)``; ``strategy[t]`` is the maximiser used to
    compute ``v_{T-t}`` from ``v_{T-t-1}``."""
    if T < 1:
        raise ValueError("horizon must be at least 1")
    backup = _backup_for(abst)
    v = initial_field(abst, dfa)
    acts = np.zeros((T,) + v.shape, dtype=np.int16) if record else None
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for k in range(T):
            v, act = backup(v, abst, dfa, labels, mode, pool)
            if record:
                acts[T - 1 - k] = act
    finally:
        if pool is not None:
            pool.shutdown()
    return v, (Strategy(acts) if record else None)


def initial_probability(v, abst, dfa: Dfa, labels=None) -> np.ndarray:
    """``p(s) = v(s, delta(z_init, L(s)))`` per grid cell (0 off the safe set)."""
    labels = abst.labels if labels is None else np.asarray(labels)
    z0 = dfa.delta[dfa.init, labels]
    if isinstance(abst, ReducedSmdp):
        p = np.zeros(len(labels))
        p[abst.safe_cells] = v[np.arange(abst.n_safe), z0[abst.safe_cells]]
        return p
    p = v[np.arange(len(labels)), z0]
    return np.where(abst.safe_mask, p, 0.0)


def rdp_run(abst, dfa: Dfa, T: int, labels=None, threads=1):
    """Pessimistic and optimistic iteration; the strategy comes from the pessimistic pass."""
    v_lo, strat = value_iteration(abst, dfa, T, PESSIMISTIC, labels, threads, record=True)
    v_hi, _ = value_iteration(abst, dfa, T, OPTIMISTIC, labels, threads, record=False)
    lower = initial_probability(v_lo, abst, dfa, labels)
    upper = initial_probability(v_hi, abst, dfa, labels)
    safe = np.zeros(len(lower), dtype=bool)
    safe[abst.safe_cells] = True
    return BoundsPair(lower, upper, safe), strat


# -- controller ---------------------------------------------------------------------------

class Controller:
    """Runs the automaton on observed labels and looks up the strategy.

    ``act(t, x)`` first advances ``z`` with the label of ``x`` (at ``t = 0``
    from the initial state) and then returns ``sigma[t][cell(x)][z]``. Entering
    the unsafe set sends ``z`` to the rejecting sink. Points outside the grid
    get ``default_action`` and set ``exited``.
    """

    def __init__(self, strategy: Strategy, partition, dfa: Dfa, default_action: int = 0):
        self.strategy = strategy
        self.partition = partition
        self.dfa = dfa
        self.default_action = default_action
        self.reset()

    def reset(self):
        self.z = self.dfa.init
        self.exited = False

    def observe(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        regions = self.partition.regions
        if self.dfa.accepting[self.z]:
            return self.z
        if not regions.is_safe(x) and self.dfa.reject >= 0:
            self.z = self.dfa.reject
        else:
            self.z = int(self.dfa.delta[self.z, int(regions.label_masks(x, self.dfa.ap))])
        return self.z

    def choose(self, t: int, x) -> int:
        if t >= self.strategy.horizon or self.dfa.accepting[self.z] or self.z == self.dfa.reject:
            return self.default_action  # the outcome is already decided
        try:
            cell = self.partition.locate(np.atleast_1d(np.asarray(x, dtype=float)))
        except OutOfDomain:
            self.exited = True
            return self.default_action
        return self.strategy(t, cell, self.z)

    def act(self, t: int, x) -> int:
        self.observe(x)
        return self.choose(t, x)


def refine_controller(strategy: Strategy, partition, dfa: Dfa, default_action: int = 0) -> Controller:
    return Controller(strategy, partition, dfa, default_action)
