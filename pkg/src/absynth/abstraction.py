"""Finite uncertain-MDP abstractions over grid partitions.

Every builder starts from the same reach table: for each safe cell ``s``,
action ``a`` and disturbance cell ``c`` the over-approximated reach box is
turned into the index range of grid cells it meets. Reach boxes are first
widened by a small rounding guard, so a box ending exactly on a shared face
keeps the cells on both sides of it.

* ``Smdp`` keeps each cluster as an index rectangle ``[lo, hi]`` (clusters with
  equal rectangles are merged by summing their masses).
* ``ReducedSmdp`` keeps the safe cells plus one absorbing unsafe state and
  stores every cluster as an explicit sorted member list.
* ``Imdp`` stores per-successor probability intervals.

Rows are numbered ``i * n_actions + a`` where ``i`` indexes ``safe_cells``.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InfeasibleIntervals, ReachOutsideDomain
from .geometry import Partition
from .system import DisturbanceModel, Dynamics, reach_boxes
from .transport import wasserstein_discrete

_ROUND = 1e-12
_ELEMENT_BUDGET = 1 << 21  # (row, disturbance cell) pairs handled per chunk


@dataclass
class Smdp:
    counts: tuple
    n_actions: int
    safe_cells: np.ndarray  # sorted flat cell indices
    labels: np.ndarray  # atom bitmask per cell
    row_ptr: np.ndarray  # (n_rows + 1,)
    lo: np.ndarray  # (n_clusters, dim) int32, inclusive
    hi: np.ndarray
    mass: np.ndarray
    cell_width: np.ndarray = None  # per-dimension, for distances
    lipschitz: float = float("nan")
    eta: float = float("nan")
    meta: dict = field(default_factory=dict)
    partition: Optional[Partition] = None

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def n_rows(self) -> int:
        return len(self.row_ptr) - 1

    @property
    def n_clusters(self) -> int:
        return len(self.mass)

    @cached_property
    def safe_mask(self) -> np.ndarray:
        m = np.zeros(self.n_cells, dtype=bool)
        m[self.safe_cells] = True
        return m

    @cached_property
    def shape_groups(self):
        """Clusters grouped by rectangle extent: ``[(extent, cluster ids, window index)]``."""
        ext = self.hi - self.lo + 1
        keys, inv = np.unique(ext, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        groups = []
        for g, e in enumerate(keys):
            ids = np.flatnonzero(inv == g)
            wshape = tuple(int(n - k + 1) for n, k in zip(self.counts, e))
            widx = np.ravel_multi_index(tuple(self.lo[ids].T), wshape)
            groups.append((tuple(int(k) for k in e), ids, widx))
        return groups

    def members(self, k: int) -> np.ndarray:
        """Flat cell indices of cluster ``k`` in ascending order."""
        axes = [np.arange(l, h + 1) for l, h in zip(self.lo[k], self.hi[k])]
        mi = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes))
        return np.ravel_multi_index(tuple(mi.T), self.counts)

    def clusters(self, s: int, a: int):
        """``[(members, mass)]`` for safe cell ``s`` (flat index) and action ``a``."""
        i = int(np.searchsorted(self.safe_cells, s))
        if i >= len(self.safe_cells) or self.safe_cells[i] != s:
            return [(np.array([s]), 1.0)]
        r = i * self.n_actions + a
        return [(self.members(k), float(self.mass[k])) for k in range(self.row_ptr[r], self.row_ptr[r + 1])]

    def save(self, path):
        path = Path(path)
        np.savez(path.with_suffix(".npz"), safe_cells=self.safe_cells, labels=self.labels, row_ptr=self.row_ptr,
                 lo=self.lo, hi=self.hi, mass=self.mass, cell_width=self.cell_width)
        manifest = dict(kind="smdp", counts=list(self.counts), n_actions=self.n_actions, lipschitz=self.lipschitz,
                        eta=self.eta, n_clusters=self.n_clusters, meta=self.meta)
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Smdp":
        path = Path(path)
        man = json.loads(path.with_suffix(".json").read_text())
        z = np.load(path.with_suffix(".npz"))
        return cls(tuple(man["counts"]), man["n_actions"], z["safe_cells"], z["labels"], z["row_ptr"], z["lo"],
                   z["hi"], z["mass"], z["cell_width"], man["lipschitz"], man["eta"], man["meta"])


@dataclass
class ReducedSmdp:
    """Safe cells ``0..n_safe-1`` (in ``safe_cells`` order) plus ``unsafe = n_safe``."""

    counts: tuple
    n_actions: int
    safe_cells: np.ndarray
    labels: np.ndarray  # atom bitmask per full-grid cell
    row_ptr: np.ndarray
    cl_ptr: np.ndarray  # (n_clusters + 1,)
    members: np.ndarray  # reduced state ids, ascending within a cluster
    mass: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_safe(self) -> int:
        return len(self.safe_cells)

    @property
    def unsafe(self) -> int:
        return self.n_safe

    @property
    def n_states(self) -> int:
        return self.n_safe + 1

    @property
    def n_rows(self) -> int:
        return len(self.row_ptr) - 1

    def clusters(self, i: int, a: int):
        r = i * self.n_actions + a
        return [(self.members[self.cl_ptr[k]:self.cl_ptr[k + 1]], float(self.mass[k]))
                for k in range(self.row_ptr[r], self.row_ptr[r + 1])]


@dataclass
class Imdp:
    counts: tuple
    n_actions: int
    safe_cells: np.ndarray
    labels: np.ndarray
    row_ptr: np.ndarray
    succ: np.ndarray  # flat successor cells, ascending within a row
    p_lo: np.ndarray
    p_hi: np.ndarray
    cell_width: np.ndarray = None
    meta: dict = field(default_factory=dict)
    partition: Optional[Partition] = None

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def n_rows(self) -> int:
        return len(self.row_ptr) - 1

    @cached_property
    def safe_mask(self) -> np.ndarray:
        m = np.zeros(self.n_cells, dtype=bool)
        m[self.safe_cells] = True
        return m

    @cached_property
    def row_of_entry(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))

    def row(self, s: int, a: int):
        i = int(np.searchsorted(self.safe_cells, s))
        if i >= len(self.safe_cells) or self.safe_cells[i] != s:
            return np.array([s]), np.ones(1), np.ones(1)
        r = i * self.n_actions + a
        sl = slice(self.row_ptr[r], self.row_ptr[r + 1])
        return self.succ[sl], self.p_lo[sl], self.p_hi[sl]

    def check_feasible(self, tol=1e-12):
        if np.any(self.p_lo < -tol) or np.any(self.p_lo > self.p_hi + tol) or np.any(self.p_hi > 1 + tol):
            raise InfeasibleIntervals("interval entries violate 0 <= lower <= upper <= 1")
        starts = self.row_ptr[:-1]
        lo_sum = np.add.reduceat(self.p_lo, starts)
        hi_sum = np.add.reduceat(self.p_hi, starts)
        bad = np.flatnonzero((lo_sum > 1 + tol) | (hi_sum < 1 - tol))
        if len(bad):
            r = int(bad[0])
            raise InfeasibleIntervals(f"row {r}: sum lower {lo_sum[r]:.6g}, sum upper {hi_sum[r]:.6g}")

    def save(self, path):
        path = Path(path)
        np.savez(path.with_suffix(".npz"), safe_cells=self.safe_cells, labels=self.labels, row_ptr=self.row_ptr,
                 succ=self.succ, p_lo=self.p_lo, p_hi=self.p_hi, cell_width=self.cell_width)
        manifest = dict(kind="imdp", counts=list(self.counts), n_actions=self.n_actions, meta=self.meta)
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Imdp":
        path = Path(path)
        man = json.loads(path.with_suffix(".json").read_text())
        z = np.load(path.with_suffix(".npz"))
        return cls(tuple(man["counts"]), man["n_actions"], z["safe_cells"], z["labels"], z["row_ptr"], z["succ"],
                   z["p_lo"], z["p_hi"], z["cell_width"], man["meta"])


# -- reach table ----------------------------------------------------------------

def _index_ranges(part: Partition, lo, hi):
    """Inclusive cell index ranges met by boxes ``[lo, hi]`` plus an escape flag."""
    dom_lo, dom_hi = part.domain.lo_arr, part.domain.hi_arr
    guard = _ROUND * np.maximum(1.0, np.maximum(np.abs(dom_lo), np.abs(dom_hi)))
    escaped = np.any((lo < dom_lo - guard) | (hi > dom_hi + guard), axis=-1)
    lo = lo - guard
    hi = hi + guard
    i_lo = np.empty(lo.shape, dtype=np.int64)
    i_hi = np.empty(hi.shape, dtype=np.int64)
    for d in range(part.dim):
        e = part.edges(d)
        n = part.counts[d]
        a = np.clip(np.searchsorted(e, lo[..., d], side="right") - 1, 0, n - 1)
        b = np.clip(np.searchsorted(e, hi[..., d], side="left") - 1, 0, n - 1)
        i_lo[..., d] = a
        i_hi[..., d] = np.maximum(a, b)
    return i_lo, i_hi, escaped


def _flat(multi, counts):
    out = np.zeros(multi.shape[:-1], dtype=np.int64)
    for d, n in enumerate(counts):
        out = out * n + multi[..., d]
    return out


def _chunk_table(dyn, part, cells, w_lo, w_hi, w_mass, method):
    """Merged clusters for ``cells`` x all actions; rows in (cell, action) order."""
    b_lo, b_hi = part.cell_bounds(cells)
    n_cells = part.n_cells
    keys = []
    for a in range(dyn.n_actions):
        r_lo, r_hi = reach_boxes(dyn, b_lo[:, None, :], b_hi[:, None, :], a, w_lo[None], w_hi[None], method)
        i_lo, i_hi, esc = _index_ranges(part, r_lo, r_hi)
        k = (_flat(i_lo, part.counts) * n_cells + _flat(i_hi, part.counts)) * 2 + esc
        keys.append(k)
    keys = np.stack(keys, axis=1).reshape(len(cells) * dyn.n_actions, -1)
    n_rows, n_w = keys.shape
    order = np.argsort(keys, axis=1, kind="stable")
    sk = np.take_along_axis(keys, order, axis=1)
    sm = w_mass[order]
    new = np.ones_like(sk, dtype=bool)
    new[:, 1:] = sk[:, 1:] != sk[:, :-1]
    flat_new = new.ravel()
    starts = np.flatnonzero(flat_new)
    mass = np.add.reduceat(sm.ravel(), starts)
    ckeys = sk.ravel()[starts]
    per_row = new.sum(axis=1)
    return per_row, ckeys, mass


def _reach_table(dyn: Dynamics, dist: DisturbanceModel, part: Partition, w_counts, method="auto", threads=1):
    if dyn.dim != part.dim or dist.dim != dyn.w_dim:
        raise ValueError("dimension mismatch between dynamics, partition and disturbance")
    w_lo, w_hi, w_mass = dist.grid(w_counts)
    cells = part.safe_cells
    n_w = len(w_mass)
    step = max(1, _ELEMENT_BUDGET // (n_w * dyn.n_actions))
    chunks = [cells[i:i + step] for i in range(0, len(cells), step)]

    def work(ch):
        return _chunk_table(dyn, part, ch, w_lo, w_hi, w_mass, method)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(ch) for ch in chunks]
    per_row = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    ckeys = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    mass = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0)
    row_ptr = np.zeros(len(per_row) + 1, dtype=np.int64)
    np.cumsum(per_row, out=row_ptr[1:])
    esc = (ckeys & 1).astype(bool)
    box = ckeys >> 1
    n = part.n_cells
    lo = np.stack(np.unravel_index(box // n, part.counts), -1).astype(np.int32)
    hi = np.stack(np.unravel_index(box % n, part.counts), -1).astype(np.int32)
    meta = dict(n_w=int(n_w), raw_clusters=int(len(per_row) * n_w), merged_clusters=int(len(mass)),
                reach=method if dyn.interval is not None or method == "lipschitz" else "lipschitz")
    return row_ptr, lo, hi, esc, mass, meta


# -- builders ---------------------------------------------------------------------

def build_smdp(dyn: Dynamics, dist: DisturbanceModel, part: Partition, w_counts, method="auto", threads=1) -> Smdp:
    row_ptr, lo, hi, esc, mass, meta = _reach_table(dyn, dist, part, w_counts, method, threads)
    if np.any(esc):
        k = int(np.flatnonzero(esc)[0])
        r = int(np.searchsorted(row_ptr, k, side="right") - 1)
        s = int(part.safe_cells[r // dyn.n_actions])
        raise ReachOutsideDomain(f"reach set of cell {s} under action {r % dyn.n_actions} leaves {part.domain.to_dict()}")
    return Smdp(part.counts, dyn.n_actions, part.safe_cells.copy(), part.label_mask.copy(), row_ptr, lo, hi, mass,
                part.widths, dyn.lipschitz, part.eta, meta, part)


def _expand(lo, hi, counts):
    """Members of each rectangle, grouped by extent: yields (cluster ids, (k, vol) flat cells)."""
    ext = hi - lo + 1
    keys, inv = np.unique(ext, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    for g, e in enumerate(keys):
        ids = np.flatnonzero(inv == g)
        offs = np.stack(np.meshgrid(*[np.arange(k) for k in e], indexing="ij"), -1).reshape(-1, len(e))
        multi = lo[ids][:, None, :] + offs[None]
        yield ids, _flat(multi.astype(np.int64), counts)


def _collapse(counts, safe_cells, row_ptr, lo, hi, esc, mass, n_actions, labels, meta) -> ReducedSmdp:
    n_safe = len(safe_cells)
    red = np.full(int(np.prod(counts)), n_safe, dtype=np.int64)
    red[safe_cells] = np.arange(n_safe)
    lists = [None] * len(mass)
    # map to reduced ids, sort, keep one copy of the unsafe id, add it on escape
    for ids, cells in _expand(lo, hi, counts):
        m = np.sort(red[cells], axis=1)
        for j, k in enumerate(ids):
            row = m[j]
            if row[-1] == n_safe:
                row = row[: np.searchsorted(row, n_safe) + 1]
            elif esc[k]:
                row = np.append(row, n_safe)
            lists[k] = row
    sizes = np.array([len(x) for x in lists], dtype=np.int64)
    cl_ptr = np.zeros(len(mass) + 1, dtype=np.int64)
    np.cumsum(sizes, out=cl_ptr[1:])
    members = np.concatenate(lists) if lists else np.zeros(0, dtype=np.int64)
    meta = dict(meta, reduced=True, escaped_clusters=int(np.sum(esc)))
    return ReducedSmdp(tuple(counts), n_actions, np.array(safe_cells), np.array(labels), row_ptr, cl_ptr, members,
                       mass, meta)


def build_smdp_reduced(dyn: Dynamics, dist: DisturbanceModel, part: Partition, w_counts, method="auto",
                       threads=1) -> ReducedSmdp:
    """Unlike ``build_smdp`` this tolerates reach sets leaving the grid: the
    escaped part lands in the single unsafe state."""
    row_ptr, lo, hi, esc, mass, meta = _reach_table(dyn, dist, part, w_counts, method, threads)
    return _collapse(part.counts, part.safe_cells, row_ptr, lo, hi, esc, mass, dyn.n_actions, part.label_mask, meta)


def reduce_smdp(smdp: Smdp) -> ReducedSmdp:
    """Single-unsafe-state version of an existing rectangle-cluster SMDP."""
    esc = np.zeros(smdp.n_clusters, dtype=bool)
    return _collapse(smdp.counts, smdp.safe_cells, smdp.row_ptr, smdp.lo, smdp.hi, esc, smdp.mass, smdp.n_actions,
                     smdp.labels, smdp.meta)


def build_imdp(dyn: Dynamics, dist: DisturbanceModel, part: Partition, w_counts, method="auto", threads=1) -> Imdp:
    row_ptr, lo, hi, esc, mass, meta = _reach_table(dyn, dist, part, w_counts, method, threads)
    if np.any(esc):
        raise InfeasibleIntervals("reach sets leave the partitioned domain; upper bounds cannot sum to 1")
    n = part.n_cells
    row_of = np.repeat(np.arange(len(row_ptr) - 1), np.diff(row_ptr))
    keys, up, low = [], [], []
    for ids, cells in _expand(lo, hi, part.counts):
        k = row_of[ids][:, None] * n + cells
        keys.append(k.ravel())
        up.append(np.repeat(mass[ids], cells.shape[1]))
        single = 1.0 if cells.shape[1] == 1 else 0.0
        low.append(np.repeat(mass[ids] * single, cells.shape[1]))
    keys = np.concatenate(keys)
    up = np.concatenate(up)
    low = np.concatenate(low)
    order = np.argsort(keys, kind="stable")
    keys, up, low = keys[order], up[order], low[order]
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    ukeys = keys[starts]
    p_hi = np.minimum(np.add.reduceat(up, starts), 1.0)
    p_lo = np.minimum(np.add.reduceat(low, starts), p_hi)
    rows = ukeys // n
    succ = ukeys % n
    ptr = np.zeros(len(row_ptr), dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=len(row_ptr) - 1), out=ptr[1:])
    imdp = Imdp(part.counts, dyn.n_actions, part.safe_cells.copy(), part.label_mask.copy(), ptr, succ, p_lo, p_hi,
                part.widths, dict(meta, entries=int(len(succ))), part)
    imdp.check_feasible()
    return imdp


def build(kind: str, dyn, dist, part, w_counts, method="auto", threads=1):
    builders = {"smdp": build_smdp, "smdp-reduced": build_smdp_reduced, "imdp": build_imdp}
    if kind not in builders:
        raise ValueError(f"unknown abstraction kind {kind!r}")
    return builders[kind](dyn, dist, part, w_counts, method, threads)


# -- diameter diagnostics ------------------------------------------------------------

def smdp_diameter_bound(smdp: Smdp):
    """Mass-weighted largest representative distance inside each cluster, per row.

    Representatives are cell centres, so the largest max-norm distance inside a
    rectangle cluster is its widest index span times the cell width. Returns
    ``(per_row, global_max, ceiling)`` with ceiling ``(4 L_f + 2) eta``.
    """
    span = np.max((smdp.hi - smdp.lo) * np.asarray(smdp.cell_width)[None, :], axis=1)
    per_row = np.add.reduceat(smdp.mass * span, smdp.row_ptr[:-1]) if smdp.n_clusters else np.zeros(0)
    glob = float(per_row.max()) if len(per_row) else 0.0
    return per_row, glob, (4 * smdp.lipschitz + 2) * smdp.eta


def greedy_fill(p_lo, p_hi, order):
    """Vertex of the interval polytope that grants slack to ``order`` first."""
    g = np.array(p_lo, dtype=float)
    slack = 1.0 - g.sum()
    if slack < -1e-12 or np.sum(p_hi) < 1 - 1e-12:
        raise InfeasibleIntervals("row intervals are infeasible")
    for j in order:
        if slack <= 0:
            break
        take = min(max(p_hi[j] - g[j], 0.0), slack)
        g[j] += take
        slack -= take
    return g


def imdp_diameter_witness(imdp: Imdp, s: int, a: int) -> float:
    """Lower bound on the Wasserstein diameter of one interval ambiguity set."""
    succ, p_lo, p_hi = imdp.row(s, a)
    if len(succ) == 1:
        return 0.0
    counts = imdp.counts
    width = np.asarray(imdp.cell_width)
    pts = (np.stack(np.unravel_index(succ, counts), -1) + 0.5) * width[None, :]
    # C-ordered flat indices already sort the representatives lexicographically
    order = np.lexsort(pts.T[::-1])
    g1 = greedy_fill(p_lo, p_hi, order)
    g2 = greedy_fill(p_lo, p_hi, order[::-1])
    g1 = g1 / g1.sum()
    g2 = g2 / g2.sum()
    return wasserstein_discrete(pts, g1, pts, g2)
