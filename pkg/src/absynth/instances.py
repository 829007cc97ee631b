"""Random tiny abstractions for cross-checking the fast backups against brute force."""
from __future__ import annotations

import numpy as np

from .abstraction import Imdp, Smdp, reduce_smdp
from .ltlf import Dfa, build_dfa, parse
from .rdp import OPTIMISTIC, PESSIMISTIC, _pin, backup_imdp, backup_oracle, backup_reduced, backup_smdp

AP = ("a", "b", "safe")
FORMULAS = ("F a & G safe", "(!b U a) & G safe", "F (a & X F b)", "G safe", "a U b")


def _grid(rng):
    if rng.random() < 0.5:
        return (int(rng.integers(2, 9)),)
    return (2, int(rng.integers(2, 5)))


def _safe_and_labels(rng, n):
    safe = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
    labels = rng.integers(0, 4, size=n)  # bits for "a" and "b"
    labels[safe] |= 4
    return safe, labels.astype(np.int64)


def random_smdp(rng: np.random.Generator) -> Smdp:
    counts = _grid(rng)
    n = int(np.prod(counts))
    n_actions = int(rng.integers(1, 3))
    safe, labels = _safe_and_labels(rng, n)
    max_ext = 4 if len(counts) == 1 else 2
    row_ptr, lo, hi, mass = [0], [], [], []
    for _ in range(len(safe) * n_actions):
        k = int(rng.integers(1, 4))
        for p in rng.dirichlet(np.ones(k)):
            ext = np.array([rng.integers(1, min(max_ext, c) + 1) for c in counts])
            start = np.array([rng.integers(0, c - e + 1) for c, e in zip(counts, ext)])
            lo.append(start)
            hi.append(start + ext - 1)
            mass.append(p)
        row_ptr.append(len(mass))
    return Smdp(counts, n_actions, safe, labels, np.array(row_ptr), np.array(lo, dtype=np.int32),
                np.array(hi, dtype=np.int32), np.array(mass), np.ones(len(counts)), 1.0, 0.5)


def random_imdp(rng: np.random.Generator) -> Imdp:
    counts = _grid(rng)
    n = int(np.prod(counts))
    n_actions = int(rng.integers(1, 3))
    safe, labels = _safe_and_labels(rng, n)
    row_ptr, succ, p_lo, p_hi = [0], [], [], []
    for _ in range(len(safe) * n_actions):
        k = int(rng.integers(1, min(4, n) + 1))
        s = np.sort(rng.choice(n, size=k, replace=False))
        p = rng.dirichlet(np.ones(k))
        lo = p * rng.random(k)
        up = np.minimum(1.0, p + rng.random(k) * 0.5)
        tight = rng.random(k) < 0.2  # degenerate intervals
        lo[tight] = up[tight] = p[tight]
        succ.extend(s)
        p_lo.extend(lo)
        p_hi.extend(up)
        row_ptr.append(len(succ))
    imdp = Imdp(counts, n_actions, safe, labels, np.array(row_ptr), np.array(succ, dtype=np.int64),
                np.array(p_lo), np.array(p_hi), np.ones(len(counts)))
    imdp.check_feasible()
    return imdp


def random_dfa(rng: np.random.Generator) -> Dfa:
    return build_dfa(parse(FORMULAS[int(rng.integers(len(FORMULAS)))]), AP)


def random_field(rng, abst, dfa: Dfa) -> np.ndarray:
    v = rng.random((int(np.prod(abst.counts)), dfa.n_states))
    mask = np.zeros(len(v), dtype=bool)
    mask[abst.safe_cells] = True
    return _pin(v, dfa, mask)


def to_reduced_field(v, safe_cells) -> np.ndarray:
    return np.vstack([v[safe_cells], np.zeros((1, v.shape[1]))])


def oracle_check(n_instances: int = 200, seed: int = 0) -> dict:
    """Largest deviation of each fast backup from vertex enumeration over random instances."""
    rng = np.random.Generator(np.random.Philox(seed))
    worst = {"smdp": 0.0, "smdp-reduced": 0.0, "imdp": 0.0}
    for _ in range(n_instances):
        dfa = random_dfa(rng)
        smdp = random_smdp(rng)
        red = reduce_smdp(smdp)
        v = random_field(rng, smdp, dfa)
        for mode in (PESSIMISTIC, OPTIMISTIC):
            ref = backup_oracle(v, smdp, dfa, mode=mode)
            got, _ = backup_smdp(v, smdp, dfa, mode=mode)
            worst["smdp"] = max(worst["smdp"], float(np.max(np.abs(got - ref))))
            got_r, _ = backup_reduced(to_reduced_field(v, smdp.safe_cells), red, dfa, mode=mode)
            d = np.abs(got_r[:-1] - ref[smdp.safe_cells])
            worst["smdp-reduced"] = max(worst["smdp-reduced"], float(np.max(d)))
        imdp = random_imdp(rng)
        v = random_field(rng, imdp, dfa)
        for mode in (PESSIMISTIC, OPTIMISTIC):
            ref = backup_oracle(v, imdp, dfa, mode=mode)
            got, _ = backup_imdp(v, imdp, dfa, mode=mode)
            worst["imdp"] = max(worst["imdp"], float(np.max(np.abs(got - ref))))
    return worst
