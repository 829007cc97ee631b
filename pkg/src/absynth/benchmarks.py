"""Builtin systems: 1-D thermal model, 2-D cart and the 1-D expander.

Each builder takes keyword overrides for its parameters and returns a
``Benchmark`` bundling dynamics, disturbance, regions, abstraction domain,
starting grid counts and the default specification.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Box, RegionSet
from .system import DisturbanceModel, Dynamics


@dataclass(frozen=True)
class Benchmark:
    dynamics: Dynamics
    disturbance: DisturbanceModel
    regions: RegionSet
    x_abs: Box
    counts: tuple
    w_counts: tuple
    formula: str
    horizon: int
    designated: Optional[tuple] = None
    notes: dict = field(default_factory=dict, compare=False)


# -- thermal ---------------------------------------------------------------

THERMAL_DEFAULTS = dict(ae=0.06, ah=0.08, te=15.0, th=45.0, w_bound=0.1)


def thermal_dynamics(ae=0.06, ah=0.08, te=15.0, th=45.0, w_bound=0.1, lipschitz=None) -> Dynamics:
    gain = np.array([1.0 - ae, 1.0 - ae - ah])
    offset = np.array([ae * te, ae * te + ah * th])

    def f(x, a, w):
        a = np.asarray(a)
        return gain[a][..., None] * x + offset[a][..., None] + w if a.ndim else gain[a] * x + offset[a] + w

    def interval(x_lo, x_hi, a, w_lo, w_hi):
        k, b = gain[a], offset[a]
        if np.ndim(k):
            k, b = k[..., None], b[..., None]
        lo = np.minimum(k * x_lo, k * x_hi) + b + w_lo
        hi = np.maximum(k * x_lo, k * x_hi) + b + w_hi
        return lo, hi

    if lipschitz is None:
        lipschitz = max(1.0, float(np.abs(gain).max()))
    params = dict(ae=ae, ah=ah, te=te, th=th, w_bound=w_bound)
    return Dynamics("thermal1d", 1, 1, ("off", "on"), f, float(lipschitz), interval, params)


def thermal1d(**kw) -> Benchmark:
    p = {**THERMAL_DEFAULTS, **kw}
    dyn = thermal_dynamics(**p)
    wb = p["w_bound"]
    dist = DisturbanceModel(Box((-wb,), (wb,)), "uniform")
    regions = RegionSet(regions=(("goal", (Box((20.75,), (21.25,)),)),), safe=(Box((19.0,), (22.0,)),))
    # 21 cells of width 0.25; the 12 inside [19, 22] are safe
    return Benchmark(dyn, dist, regions, Box((18.5,), (23.75,)), (21,), (2,), "F goal & G safe", 20)


# -- 2-D cart ----------------------------------------------------------------

CART_DEFAULTS = dict(v=0.08, cd=0.25, amp=0.4, rate=100.0, sigma=0.1, trunc=3.0, n_headings=8)


def cart_lipschitz(cd, amp, rate, w_max) -> float:
    # max-norm row sum of the state Jacobian: 1 + cd*|w|*||grad c_m||_1, and
    # ||grad c_m||_1 peaks at 2*amp*sqrt(rate)*exp(-1/2) on the diagonal
    lx = 1.0 + cd * w_max * 2 * amp * np.sqrt(rate) * np.exp(-0.5)
    return float(max(lx, cd))


def cart_dynamics(v=0.08, cd=0.25, amp=0.4, rate=100.0, sigma=0.1, trunc=3.0, n_headings=8, lipschitz=None) -> Dynamics:
    headings = -np.pi + 2 * np.pi * np.arange(n_headings) / n_headings
    vel = v * np.stack([np.cos(headings), np.sin(headings)], -1)
    centre = np.array([0.5, 0.5])

    def drag(x):
        return 1.0 - amp * np.exp(-rate * np.sum((x - centre) ** 2, axis=-1))

    def f(x, a, w):
        return x + vel[a] + cd * np.tanh(drag(x)[..., None] * w)

    def interval(x_lo, x_hi, a, w_lo, w_hi):
        # distance range of the box to the drag centre, then monotone pieces
        near = np.clip(centre, x_lo, x_hi) - centre
        far = np.maximum(np.abs(x_lo - centre), np.abs(x_hi - centre))
        c_lo = 1.0 - amp * np.exp(-rate * np.sum(near**2, axis=-1))
        c_hi = 1.0 - amp * np.exp(-rate * np.sum(far**2, axis=-1))
        c_lo, c_hi = c_lo[..., None], c_hi[..., None]
        prods = np.stack([c_lo * w_lo, c_lo * w_hi, c_hi * w_lo, c_hi * w_hi])
        lo = x_lo + vel[a] + cd * np.tanh(prods.min(0))
        hi = x_hi + vel[a] + cd * np.tanh(prods.max(0))
        return lo, hi

    if lipschitz is None:
        lipschitz = cart_lipschitz(cd, amp, rate, trunc * sigma)
    params = dict(v=v, cd=cd, amp=amp, rate=rate, sigma=sigma, trunc=trunc, n_headings=n_headings)
    labels = tuple(f"{h:.4f}" for h in headings)
    return Dynamics("cart2d", 2, 2, labels, f, float(lipschitz), interval, params)


def cart2d(**kw) -> Benchmark:
    p = {**CART_DEFAULTS, **kw}
    dyn = cart_dynamics(**p)
    half = p["trunc"] * p["sigma"]
    dist = DisturbanceModel(Box((-half, -half), (half, half)), "truncnorm", (0.0, 0.0), (p["sigma"], p["sigma"]))
    regions = RegionSet(
        regions=(
            ("charge", (Box((0.75, 0.75), (0.95, 0.95)),)),
            ("water", (Box((0.05, 0.65), (0.3, 0.9)),)),
            ("carpet", (Box((0.35, 0.85), (0.6, 1.0)),)),
        ),
        safe=(Box((0.0, 0.0), (1.0, 1.0)),),
        obstacles=(Box((0.2, 0.3), (0.4, 0.5)), Box((0.6, 0.15), (0.8, 0.55))),
    )
    formula = "G safe & G (water -> (!charge U carpet)) & F charge"
    # a 60x60 grid over [-0.25, 1.25]^2 puts 40x40 cells on the unit square
    counts = (60, 60)
    w_cells = int(np.ceil(2 * half * 40 - 1e-9))
    return Benchmark(dyn, dist, regions, Box((-0.25, -0.25), (1.25, 1.25)), counts, (w_cells, w_cells), formula, 60)


# -- expander ----------------------------------------------------------------

def expander_dynamics(gain=1.5, lipschitz=None) -> Dynamics:
    def f(x, a, w):
        return gain * x + w

    def interval(x_lo, x_hi, a, w_lo, w_hi):
        return np.minimum(gain * x_lo, gain * x_hi) + w_lo, np.maximum(gain * x_lo, gain * x_hi) + w_hi

    if lipschitz is None:
        lipschitz = max(abs(gain), 1.0)
    return Dynamics("expander1d", 1, 1, ("go",), f, float(lipschitz), interval, dict(gain=gain))


def expander1d(**kw) -> Benchmark:
    dyn = expander_dynamics(**kw)
    dist = DisturbanceModel(Box((0.0,), (0.5,)), "uniform")
    # from x = 0.5 the images 0.75 + w split evenly between the goal [0.75, 1]
    # and the unsafe band (1, 1.25]
    regions = RegionSet(regions=(("goal", (Box((0.75,), (1.0,)),)),), safe=(Box((0.0,), (1.0,)),))
    return Benchmark(dyn, dist, regions, Box((0.0,), (2.0,)), (32,), (8,), "F goal & G safe", 1, designated=(0.5,))


BUILTINS = {"thermal1d": thermal1d, "cart2d": cart2d, "expander1d": expander1d}
