"""Dynamics, compact disturbance models and one-step reach over-approximation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import CellOutsideSupport
from .geometry import Box

_SUPPORT_TOL = 1e-12


@dataclass(frozen=True)
class Dynamics:
    """Discrete-time map ``x' = f(x, a, w)`` over a finite action list.

    ``f`` is vectorised: ``x`` has shape (..., dim), ``w`` shape (..., w_dim) and
    ``a`` is an action index (scalar or array broadcastable to the batch).
    ``lipschitz`` is the joint max-norm constant in (x, w). ``interval``, when
    given, maps ``(x_lo, x_hi, a, w_lo, w_hi)`` to an enclosing box of the
    image and is preferred over the Lipschitz padding.
    """

    name: str
    dim: int
    w_dim: int
    actions: tuple
    f: Callable
    lipschitz: float
    interval: Optional[Callable] = None
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x, a, w):
        return self.f(np.asarray(x, dtype=float), a, np.asarray(w, dtype=float))

    @property
    def n_actions(self) -> int:
        return len(self.actions)


def _max_radius(lo, hi):
    return np.max(hi - lo, axis=-1) / 2


def reach_lipschitz(dyn: Dynamics, b_lo, b_hi, a, c_lo, c_hi):
    xc = (b_lo + b_hi) / 2
    wc = (c_lo + c_hi) / 2
    img = dyn.f(xc, a, wc)
    pad = dyn.lipschitz * (_max_radius(b_lo, b_hi) + _max_radius(c_lo, c_hi))
    return img - pad[..., None], img + pad[..., None]


def reach_boxes(dyn: Dynamics, b_lo, b_hi, a, c_lo, c_hi, method: str = "auto"):
    """Vectorised reach over-approximation; all corner arrays broadcast."""
    b_lo, b_hi, c_lo, c_hi = (np.asarray(v, dtype=float) for v in (b_lo, b_hi, c_lo, c_hi))
    if method == "lipschitz" or (method == "auto" and dyn.interval is None):
        return reach_lipschitz(dyn, b_lo, b_hi, a, c_lo, c_hi)
    return dyn.interval(b_lo, b_hi, a, c_lo, c_hi)


def reach_over(dyn: Dynamics, b: Box, a: int, c: Box, method: str = "auto") -> Box:
    lo, hi = reach_boxes(dyn, b.lo_arr, b.hi_arr, a, c.lo_arr, c.hi_arr, method)
    return Box(tuple(lo), tuple(hi))


def step(dyn: Dynamics, x, a, w):
    return dyn(x, a, w)


def sample_step(dyn: Dynamics, dist: "DisturbanceModel", x, a, rng: np.random.Generator):
    x = np.asarray(x, dtype=float)
    w = dist.sample(rng, x.shape[:-1])
    return dyn(x, a, w)


@dataclass(frozen=True)
class DisturbanceModel:
    """Product distribution on a compact box: uniform or truncated Gaussian.

    For ``truncnorm`` the per-axis mean/std describe the untruncated Gaussian
    which is then restricted to ``support`` and renormalised.
    """

    support: Box
    kind: str = "uniform"
    mean: tuple = ()
    std: tuple = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "truncnorm"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "truncnorm":
            object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
            object.__setattr__(self, "std", tuple(float(v) for v in self.std))
            if len(self.mean) != self.dim or len(self.std) != self.dim:
                raise ValueError("mean/std dimension mismatch")

    @property
    def dim(self) -> int:
        return self.support.dim

    def axis_cdf(self, d: int, v):
        """Normalised CDF along axis ``d``; exactly 0 and 1 at the support ends."""
        a, b = self.support.lo[d], self.support.hi[d]
        v = np.clip(np.asarray(v, dtype=float), a, b)
        if self.kind == "uniform":
            out = (v - a) / (b - a) if b > a else np.ones_like(v)
        else:
            mu, sd = self.mean[d], self.std[d]
            fa, fb = ndtr((a - mu) / sd), ndtr((b - mu) / sd)
            out = (ndtr((v - mu) / sd) - fa) / (fb - fa)
        out = np.where(v >= b, 1.0, out)
        return np.where(v <= a, 0.0, out) if b > a else out

    def axis_ppf(self, d: int, u):
        a, b = self.support.lo[d], self.support.hi[d]
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            w = a + (b - a) * u
        else:
            mu, sd = self.mean[d], self.std[d]
            fa, fb = ndtr((a - mu) / sd), ndtr((b - mu) / sd)
            w = mu + sd * ndtri(fa + u * (fb - fa))
        return np.clip(w, a, b)

    def mass(self, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        m = np.ones(lo.shape[:-1])
        for d in range(self.dim):
            if self.support.hi[d] == self.support.lo[d]:
                continue  # point mass along this axis
            m = m * (self.axis_cdf(d, hi[..., d]) - self.axis_cdf(d, lo[..., d]))
        return m

    def grid(self, counts):
        """Uniform grid over the support: corners and masses, C-ordered cells."""
        counts = tuple(int(c) for c in np.atleast_1d(counts))
        axis_edges, axis_mass = [], []
        for d, n in enumerate(counts):
            a, b = self.support.lo[d], self.support.hi[d]
            e = a + (b - a) * np.arange(n + 1) / n
            axis_edges.append(e)
            axis_mass.append(np.diff(self.axis_cdf(d, e)) if b > a else np.full(n, 1.0 / n))
        mi = np.stack(np.meshgrid(*[np.arange(n) for n in counts], indexing="ij"), -1).reshape(-1, len(counts))
        lo = np.stack([axis_edges[d][mi[:, d]] for d in range(len(counts))], -1)
        hi = np.stack([axis_edges[d][mi[:, d] + 1] for d in range(len(counts))], -1)
        mass = np.ones(len(mi))
        for d in range(len(counts)):
            mass = mass * axis_mass[d][mi[:, d]]
        return lo, hi, mass

    def from_uniform(self, u):
        u = np.asarray(u, dtype=float)
        return np.stack([self.axis_ppf(d, u[..., d]) for d in range(self.dim)], axis=-1)

    def sample(self, rng: np.random.Generator, size=()):
        size = tuple(np.atleast_1d(size)) if size != () else ()
        return self.from_uniform(rng.random(size + (self.dim,)))

    def to_dict(self):
        d = {"kind": self.kind, "support": self.support.to_dict()}
        if self.kind == "truncnorm":
            d.update(mean=list(self.mean), std=list(self.std))
        return d


def cell_mass(dist: DisturbanceModel, c: Box) -> float:
    if not dist.support.contains_box(c, tol=_SUPPORT_TOL):
        raise CellOutsideSupport(f"{c.to_dict()} not inside support {dist.support.to_dict()}")
    return float(dist.mass(c.lo_arr[None], c.hi_arr[None])[0])
