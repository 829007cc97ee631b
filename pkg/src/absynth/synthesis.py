"""Abstraction-refinement loop: refine, abstract, solve, stop once the bounds are tight."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .abstraction import Imdp, Smdp, build, imdp_diameter_witness, smdp_diameter_bound
from .errors import SupportTooLarge
from .geometry import Box, Partition, RegionSet, build_partition
from .ltlf import Dfa, Formula, build_dfa
from .rdp import BoundsPair, Controller, Strategy, rdp_run, refine_controller
from .system import DisturbanceModel, Dynamics

CONVERGED, CAP_REACHED = "converged", "iteration-cap-reached"
_WITNESS_ROWS = 64


@dataclass(frozen=True)
class Schedule:
    counts: tuple
    w_counts: tuple
    factor: int = 2
    max_iterations: int = 8

    def level(self, i: int):
        """State and disturbance grid counts at iteration ``i`` (0-based)."""
        f = self.factor**i
        return tuple(c * f for c in self.counts), tuple(c * f for c in self.w_counts)


@dataclass
class SynthesisResult:
    status: str
    epsilon: float
    horizon: int
    kind: str
    formula: str
    iterations: list
    bounds: BoundsPair
    strategy: Strategy
    partition: Partition
    dfa: Dfa
    designated: Optional[tuple] = None
    timings: list = field(default_factory=list)
    abstraction: object = None

    @property
    def gap(self) -> float:
        return self.iterations[-1]["gap"]

    def controller(self, default_action: int = 0) -> Controller:
        return refine_controller(self.strategy, self.partition, self.dfa, default_action)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "epsilon": self.epsilon,
            "horizon": self.horizon,
            "kind": self.kind,
            "formula": self.formula,
            "dfa_states": self.dfa.n_states,
            "designated": list(self.designated) if self.designated is not None else None,
            "iterations": self.iterations,
            "final": {
                "counts": list(self.partition.counts),
                "eta": self.partition.eta,
                "gap": self.gap,
                "mean_gap": float(np.mean((self.bounds.upper - self.bounds.lower)[self.bounds.safe_mask])),
                "lower_mean": float(np.mean(self.bounds.lower[self.bounds.safe_mask])),
                "upper_mean": float(np.mean(self.bounds.upper[self.bounds.safe_mask])),
            },
        }


def _w_cell_width(dist: DisturbanceModel, w_counts) -> float:
    return float(np.max(dist.support.widths / np.array(w_counts)))


def _diameter(abst, part: Partition, designated):
    if isinstance(abst, Smdp):
        _, glob, ceiling = smdp_diameter_bound(abst)
        return {"diameter_kind": "smdp-bound", "diameter": glob, "diameter_ceiling": ceiling}
    if isinstance(abst, Imdp):
        safe = abst.safe_cells
        if designated is not None:
            cells = [part.locate(np.asarray(designated, float))]
        elif part.dim == 1 or len(safe) <= _WITNESS_ROWS:
            cells = safe
        else:
            cells = safe[np.linspace(0, len(safe) - 1, _WITNESS_ROWS).astype(int)]
        best = 0.0
        for s in cells:
            for a in range(abst.n_actions):
                try:
                    best = max(best, imdp_diameter_witness(abst, int(s), a))
                except SupportTooLarge:
                    continue
        return {"diameter_kind": "imdp-witness", "diameter": best}
    return {"diameter_kind": "none", "diameter": None}


def synthesize(dyn: Dynamics, dist: DisturbanceModel, regions: RegionSet, x_abs: Box, formula: Formula, T: int,
               epsilon: float, schedule: Schedule, kind: str = "smdp", designated=None, threads: int = 1,
               method: str = "auto", keep_abstraction: bool = False, log=None) -> SynthesisResult:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if schedule.max_iterations < 1:
        raise ValueError("at least one iteration is required")
    if schedule.factor < 2:
        raise ValueError("refinement factor must be >= 2")
    part0 = build_partition(regions, x_abs, schedule.counts)
    dfa = build_dfa(formula, part0.atoms)
    gap = 1.0  # the loop test needs a value before the first abstraction exists
    iterations, timings = [], []
    status = CAP_REACHED
    for i in range(schedule.max_iterations):
        counts, w_counts = schedule.level(i)
        part = build_partition(regions, x_abs, counts)
        hw = _w_cell_width(dist, w_counts)
        if hw > 2 * part.eta * (1 + 1e-9):
            raise ValueError(f"disturbance cells of width {hw} exceed 2*eta = {2 * part.eta}")
        t0 = time.perf_counter()
        abst = build(kind, dyn, dist, part, w_counts, method, threads)
        t1 = time.perf_counter()
        bounds, strat = rdp_run(abst, dfa, T, threads=threads)
        t2 = time.perf_counter()
        gap = bounds.gap
        rec = {
            "iteration": i + 1,
            "eta": part.eta,
            "counts": list(counts),
            "n_cells": part.n_cells,
            "n_safe": int(len(part.safe_cells)),
            "w_counts": list(w_counts),
            "n_w": int(np.prod(w_counts)),
            "gap": gap,
            "mean_gap": float(np.mean((bounds.upper - bounds.lower)[bounds.safe_mask])),
        }
        rec.update(_diameter(abst, part, designated))
        if designated is not None:
            c = part.locate(np.asarray(designated, float))
            rec["designated_cell"] = int(c)
            rec["designated_lower"] = float(bounds.lower[c])
            rec["designated_upper"] = float(bounds.upper[c])
        if isinstance(abst, Smdp):
            rec["clusters"] = abst.n_clusters
        iterations.append(rec)
        timings.append({"iteration": i + 1, "build_s": t1 - t0, "rdp_s": t2 - t1})
        if log is not None:
            log(f"iteration {i + 1}: cells={part.n_cells} eta={part.eta:.6g} gap={gap:.6g} ({t2 - t0:.2f}s)")
        if gap <= epsilon:
            status = CONVERGED
            break
    return SynthesisResult(status, epsilon, T, kind, str(formula), iterations, bounds, strat, part, dfa,
                           tuple(designated) if designated is not None else None, timings,
                           abst if keep_abstraction else None)


def gap_report(result: SynthesisResult) -> list:
    """Rows of (iteration, eta, gap, diameter diagnostic)."""
    return [
        {"iteration": r["iteration"], "eta": r["eta"], "gap": r["gap"], "diameter": r["diameter"]}
        for r in result.iterations
    ]
