"""Axis-aligned boxes, labelled regions and uniform grid partitions.

Distances on the state space use the max-norm throughout, so a cell's radius
is half its widest side and the partition size ``eta`` is the largest cell
radius.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import CapacityExceeded, OutOfDomain, RegionNotGridAligned

SAFE = "safe"
_ALIGN_TOL = 1e-9
_MAX_CELLS = 2**31 - 1


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("lo and hi differ in dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"inverted box {lo} > {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x) -> "Box":
        x = tuple(np.atleast_1d(x).astype(float))
        return cls(x, x)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_arr(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def center(self) -> np.ndarray:
        return (self.lo_arr + self.hi_arr) / 2

    @property
    def widths(self) -> np.ndarray:
        return self.hi_arr - self.lo_arr

    @property
    def radius(self) -> float:
        return float(self.widths.max() / 2) if self.dim else 0.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x, tol=0.0) -> np.ndarray:
        """Closed membership test; ``x`` may be a single point or a (N, dim) array."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo_arr - tol) & (x <= self.hi_arr + tol), axis=-1)

    def contains_box(self, other: "Box", tol=0.0) -> bool:
        return bool(np.all(other.lo_arr >= self.lo_arr - tol) and np.all(other.hi_arr <= self.hi_arr + tol))

    def intersects(self, other: "Box") -> bool:
        return bool(np.all(self.lo_arr <= other.hi_arr) and np.all(other.lo_arr <= self.hi_arr))

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d) -> "Box":
        return cls(tuple(d["lo"]), tuple(d["hi"]))


@dataclass(frozen=True)
class RegionSet:
    """Labelled regions of interest plus the safe set.

    ``regions`` is an ordered list of ``(atom, boxes)``. The safe set is the
    union of ``safe`` boxes minus the ``obstacles``; everything else is unsafe
    and carries no ``safe`` atom.
    """

    regions: tuple[tuple[str, tuple[Box, ...]], ...]
    safe: tuple[Box, ...]
    obstacles: tuple[Box, ...] = ()

    def __post_init__(self):
        regions = tuple((str(name), tuple(boxes)) for name, boxes in self.regions)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "safe", tuple(self.safe))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if any(name == SAFE for name, _ in regions):
            raise ValueError("'safe' is reserved for the safe set")

    @property
    def atoms(self) -> tuple[str, ...]:
        seen = [SAFE]
        for name, _ in self.regions:
            if name not in seen:
                seen.append(name)
        return tuple(seen)

    def all_boxes(self):
        for _, boxes in self.regions:
            yield from boxes
        yield from self.safe
        yield from self.obstacles

    def is_safe(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for b in self.safe:
            inside |= b.contains(x)
        for b in self.obstacles:
            inside &= ~_open_contains(b, x)
        return inside

    def label_masks(self, x, atoms: Sequence[str] | None = None) -> np.ndarray:
        """Bitmask of true atoms per point; bit ``i`` is ``atoms[i]``."""
        atoms = tuple(atoms) if atoms is not None else self.atoms
        x = np.asarray(x, dtype=float)
        mask = np.zeros(x.shape[:-1], dtype=np.int64)
        if SAFE in atoms:
            mask |= self.is_safe(x).astype(np.int64) << atoms.index(SAFE)
        for name, boxes in self.regions:
            if name not in atoms:
                continue
            hit = np.zeros(x.shape[:-1], dtype=bool)
            for b in boxes:
                hit |= b.contains(x)
            mask |= hit.astype(np.int64) << atoms.index(name)
        return mask

    def label(self, x, atoms: Sequence[str] | None = None) -> frozenset[str]:
        atoms = tuple(atoms) if atoms is not None else self.atoms
        m = int(self.label_masks(np.atleast_1d(np.asarray(x, dtype=float)), atoms))
        return frozenset(a for i, a in enumerate(atoms) if m >> i & 1)

    def to_dict(self):
        return {
            "regions": [{"label": n, "boxes": [b.to_dict() for b in bs]} for n, bs in self.regions],
            "safe": [b.to_dict() for b in self.safe],
            "obstacles": [b.to_dict() for b in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d) -> "RegionSet":
        return cls(
            regions=tuple((r["label"], tuple(Box.from_dict(b) for b in r["boxes"])) for r in d["regions"]),
            safe=tuple(Box.from_dict(b) for b in d["safe"]),
            obstacles=tuple(Box.from_dict(b) for b in d.get("obstacles", ())),
        )


def _open_contains(b: Box, x):
    return np.all((x > b.lo_arr) & (x < b.hi_arr), axis=-1)


@dataclass(frozen=True)
class Partition:
    """Uniform grid over ``domain``; cells are numbered in C order."""

    domain: Box
    counts: tuple[int, ...]
    regions: RegionSet
    atoms: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not self.atoms:
            object.__setattr__(self, "atoms", self.regions.atoms)
        else:
            object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def widths(self) -> np.ndarray:
        return self.domain.widths / np.array(self.counts)

    @property
    def eta(self) -> float:
        return float(self.widths.max() / 2)

    def edges(self, d: int) -> np.ndarray:
        n = self.counts[d]
        lo, hi = self.domain.lo[d], self.domain.hi[d]
        return lo + (hi - lo) * np.arange(n + 1) / n

    @cached_property
    def _edges(self) -> tuple[np.ndarray, ...]:
        return tuple(self.edges(d) for d in range(self.dim))

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.counts), axis=-1)

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(multi[..., d] for d in range(self.dim)), self.counts)

    def cell_bounds(self, flat=None) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the given cells (all cells by default)."""
        if flat is None:
            flat = np.arange(self.n_cells)
        mi = self.multi_index(flat)
        lo = np.stack([self._edges[d][mi[..., d]] for d in range(self.dim)], axis=-1)
        hi = np.stack([self._edges[d][mi[..., d] + 1] for d in range(self.dim)], axis=-1)
        return lo, hi

    def cell_box(self, i: int) -> Box:
        lo, hi = self.cell_bounds(np.array([i]))
        return Box(tuple(lo[0]), tuple(hi[0]))

    @cached_property
    def centers(self) -> np.ndarray:
        lo, hi = self.cell_bounds()
        return (lo + hi) / 2

    def representative(self, i) -> np.ndarray:
        return self.centers[i]

    @cached_property
    def label_mask(self) -> np.ndarray:
        """Atom bitmask of each cell, read at the cell centre."""
        return self.regions.label_masks(self.centers, self.atoms)

    @cached_property
    def safe_mask(self) -> np.ndarray:
        return self.regions.is_safe(self.centers)

    @cached_property
    def safe_cells(self) -> np.ndarray:
        return np.flatnonzero(self.safe_mask)

    @cached_property
    def region_of_cell(self) -> np.ndarray:
        """Dense label id per cell; ids index ``label_sets``."""
        return np.unique(self.label_mask, return_inverse=True)[1].reshape(-1)

    @cached_property
    def label_sets(self) -> list[frozenset[str]]:
        return [self.mask_to_label(int(m)) for m in np.unique(self.label_mask)]

    def mask_to_label(self, m: int) -> frozenset[str]:
        return frozenset(a for i, a in enumerate(self.atoms) if m >> i & 1)

    def locate(self, x) -> np.ndarray | int:
        """Cell index of each point. A point on a shared face goes to the cell
        whose lower face it lies on; the upper domain boundary goes to the last cell."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xs = np.atleast_2d(x)
        if not np.all(self.domain.contains(xs)):
            bad = xs[~self.domain.contains(xs)][0]
            raise OutOfDomain(f"point {bad.tolist()} outside {self.domain.to_dict()}")
        multi = np.empty(xs.shape, dtype=np.int64)
        for d in range(self.dim):
            multi[:, d] = _axis_index(xs[:, d], self._edges[d])
        flat = self.flat_index(multi)
        return int(flat[0]) if single else flat

    def to_dict(self):
        return {
            "domain": self.domain.to_dict(),
            "counts": list(self.counts),
            "atoms": list(self.atoms),
            "regions": self.regions.to_dict(),
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, d) -> "Partition":
        return build_partition(RegionSet.from_dict(d["regions"]), Box.from_dict(d["domain"]), d["counts"], d["atoms"])


def _axis_index(v: np.ndarray, edges: np.ndarray) -> np.ndarray:
    n = len(edges) - 1
    # side="right" sends a value equal to an edge to the cell starting there
    idx = np.searchsorted(edges, v, side="right") - 1
    return np.clip(idx, 0, n - 1)


def _check_aligned(regions: RegionSet, domain: Box, counts):
    for box in regions.all_boxes():
        if box.dim != domain.dim:
            raise RegionNotGridAligned(f"region box of dimension {box.dim} in a {domain.dim}-D domain")
        for d in range(domain.dim):
            lo, hi, n = domain.lo[d], domain.hi[d], counts[d]
            for face in (box.lo[d], box.hi[d]):
                if face <= lo or face >= hi:
                    continue
                t = (face - lo) * n / (hi - lo)
                if abs(t - round(t)) > _ALIGN_TOL * max(1.0, abs(t)):
                    raise RegionNotGridAligned(
                        f"face {face} in dimension {d} falls inside a cell of width {(hi - lo) / n}"
                    )


def build_partition(regions: RegionSet, x_abs: Box, counts, atoms=None) -> Partition:
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != x_abs.dim:
        raise ValueError("counts and domain dimensions differ")
    if any(c < 1 for c in counts):
        raise ValueError("cell counts must be positive")
    if int(np.prod([float(c) for c in counts])) > _MAX_CELLS:
        raise CapacityExceeded(f"{counts} exceeds {_MAX_CELLS} cells")
    _check_aligned(regions, x_abs, counts)
    return Partition(x_abs, counts, regions, tuple(atoms) if atoms else ())


def refine(p: Partition, factor: int) -> Partition:
    if factor < 2:
        raise ValueError("refinement factor must be >= 2")
    counts = tuple(c * factor for c in p.counts)
    if np.prod([float(c) for c in counts]) > _MAX_CELLS:
        raise CapacityExceeded(f"refining {p.counts} by {factor} exceeds {_MAX_CELLS} cells")
    return Partition(p.domain, counts, p.regions, p.atoms)


def locate(p: Partition, x):
    return p.locate(x)


def grid_boxes(box: Box, counts) -> tuple[np.ndarray, np.ndarray]:
    """Corners of a uniform grid over ``box`` (used for disturbance partitions)."""
    part = Partition(box, tuple(np.atleast_1d(counts)), RegionSet((), (box,)))
    return part.cell_bounds()
