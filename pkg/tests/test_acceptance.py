"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``CRITERION n: PASS|FAIL`` line (also repeated in the
terminal summary). Lines tagged ``supplementary`` report extra runs on the
wider-noise thermal configuration and do not replace the primary check.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from test_golden import numeric_diff
from test_ltlf import FIXED, FORMULAS, exhaustive_agreement, labels_of

from absynth.abstraction import build_imdp, build_smdp, build_smdp_reduced, smdp_diameter_bound
from absynth.cli import _start_points, run
from absynth.config import load_config, resolve, schedule_of
from absynth.geometry import build_partition
from absynth.instances import oracle_check
from absynth.ltlf import build_dfa, parse
from absynth.rdp import rdp_run
from absynth.sim import estimate_probability
from absynth.synthesis import CAP_REACHED, synthesize

ROOT = Path(__file__).resolve().parents[1]
CFG = ROOT / "configs"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, supplementary=False):
        tag = f"CRITERION {n}{' (supplementary)' if supplementary else ''}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(tag)
        with capsys.disabled():
            print("\n" + tag)
        return ok
    return emit


def setup(name):
    cfg = load_config(CFG / f"{name}.json")
    bench = resolve(cfg)
    return cfg, bench, schedule_of(cfg, bench)


def level_bounds(bench, sched, level, kind="smdp"):
    """Bounds of the abstraction at one refinement level (no early stop)."""
    counts, w_counts = sched.level(level)
    part = build_partition(bench.regions, bench.x_abs, counts)
    dfa = build_dfa(parse(bench.formula), part.atoms)
    builders = {"smdp": build_smdp, "smdp-reduced": build_smdp_reduced, "imdp": build_imdp}
    abst = builders[kind](bench.dynamics, bench.disturbance, part, w_counts)
    bounds, _ = rdp_run(abst, dfa, bench.horizon)
    return part, abst, bounds


def gap_sweep(name, levels=8):
    cfg, bench, sched = setup(name)
    gaps, sizes = [], []
    for i in range(levels):
        part, abst, bounds = level_bounds(bench, sched, i)
        gaps.append(bounds.gap)
        sizes.append((len(part.safe_cells), int(np.prod(sched.level(i)[1]))))
    return gaps, sizes


def sweep_ok(gaps):
    return gaps[7] <= 0.05 and all(b <= a + 1e-12 for a, b in zip(gaps[1:], gaps[2:]))


def test_criterion_1_smdp_gap_shrinks(report):
    t0 = time.perf_counter()
    gaps, sizes = gap_sweep("thermal1d")
    dt = time.perf_counter() - t0
    ok = sweep_ok(gaps) and dt < 120
    report(1, ok, f"thermal1d gaps {[round(g, 6) for g in gaps]}, iteration 8 |S_safe|={sizes[7][0]} "
                  f"|C|={sizes[7][1]}, {dt:.1f}s")
    wide, wsizes = gap_sweep("thermal1d_wide")
    report(1, sweep_ok(wide), f"thermal1d_wide gaps {[round(g, 6) for g in wide]}", supplementary=True)
    assert ok


def test_criterion_2_imdp_not_optimal(report):
    cfg, bench, sched = setup("expander_imdp")
    t0 = time.perf_counter()
    res = synthesize(bench.dynamics, bench.disturbance, bench.regions, bench.x_abs, parse(bench.formula),
                     bench.horizon, cfg.epsilon, sched, "imdp", bench.designated)
    dt = time.perf_counter() - t0
    pairs = [(r["designated_lower"], r["designated_upper"]) for r in res.iterations]
    ok = (res.status == CAP_REACHED and len(pairs) == 6 and all(p == (0.0, 1.0) for p in pairs) and dt < 10)
    report(2, ok, f"status {res.status}, designated (lower, upper) per iteration {pairs}, {dt:.2f}s")
    assert ok


def test_criterion_3_diameter_bound(report):
    cfg, bench, sched = setup("thermal1d")
    t0 = time.perf_counter()
    glob, within = [], True
    for i in range(8):
        counts, w_counts = sched.level(i)
        part = build_partition(bench.regions, bench.x_abs, counts)
        per_row, g, ceiling = smdp_diameter_bound(build_smdp(bench.dynamics, bench.disturbance, part, w_counts))
        within &= bool(np.all(per_row <= ceiling + 1e-12))
        glob.append(g)
    dt = time.perf_counter() - t0
    ok = within and glob[4] <= glob[0] / 4 and dt < 30
    report(3, ok, f"all rows within (4L_f+2)eta: {within}; global bounds {[round(g, 5) for g in glob]}, "
                  f"after 4 refinements {glob[4]:.5f} vs initial/4 {glob[0] / 4:.5f}, {dt:.1f}s")
    assert ok


def test_criterion_4_reduced_equals_full(report):
    t0 = time.perf_counter()
    worst = {}
    for name, levels in (("thermal1d", range(6)), ("cart2d_coarse", range(1))):
        cfg, bench, sched = setup(name)
        d = 0.0
        for i in levels:
            _, _, full = level_bounds(bench, sched, i, "smdp")
            _, _, red = level_bounds(bench, sched, i, "smdp-reduced")
            s = full.safe_mask
            d = max(d, float(np.max(np.abs(full.lower - red.lower)[s])), float(np.max(np.abs(full.upper - red.upper)[s])))
        worst[name] = d
    dt = time.perf_counter() - t0
    ok = all(v <= 1e-12 for v in worst.values()) and dt < 120
    report(4, ok, f"max |full - reduced| over safe cells {worst}, {dt:.1f}s")
    assert ok


def test_criterion_5_backup_oracle(report):
    t0 = time.perf_counter()
    worst = oracle_check(200, seed=2024)
    dt = time.perf_counter() - t0
    ok = all(v <= 1e-12 for v in worst.values()) and dt < 10
    report(5, ok, f"200 SMDP + 200 IMDP instances, max deviation {worst}, {dt:.2f}s")
    assert ok


def test_criterion_6_ltlf_exhaustive(report):
    t0 = time.perf_counter()
    total = 0
    for text, ap in FORMULAS:
        fixed = FIXED.get(text, frozenset())
        labels = [lab | fixed for lab in labels_of(tuple(ap))]
        total += exhaustive_agreement(parse(text), tuple(ap) + tuple(sorted(fixed)), labels, 5)
    dt = time.perf_counter() - t0
    ok = len(FORMULAS) >= 20 and dt < 30
    report(6, ok, f"{len(FORMULAS)} formulas, {total} traces of length <= 5, 100% agreement, {dt:.1f}s")
    assert ok


def soundness(name, n=10_000):
    cfg, bench, sched = setup(name)
    res = synthesize(bench.dynamics, bench.disturbance, bench.regions, bench.x_abs, parse(bench.formula),
                     bench.horizon, cfg.epsilon, sched, cfg.abstraction)
    ctrl = res.controller()
    starts = _start_points(cfg, res.partition)
    misses = []
    for j, x0 in enumerate(starts):
        c = res.partition.locate(x0)
        est = estimate_probability(bench.dynamics, bench.disturbance, ctrl, x0, bench.horizon, n, cfg.seed, j * n)
        lo, hi = res.bounds.lower[c], res.bounds.upper[c]
        if not (est["ci_low"] <= hi + 1e-12 and est["ci_high"] >= lo - 1e-12):
            misses.append((float(x0[0]), est["p_hat"], float(lo), float(hi)))
    return res, len(starts), misses


def test_criterion_7_interval_soundness(report):
    t0 = time.perf_counter()
    res, k, misses = soundness("thermal1d")
    dt = time.perf_counter() - t0
    ok = res.status == "converged" and k == 20 and not misses and dt < 60
    report(7, ok, f"{k} start points x 10^4 trajectories, CI misses {misses}, {dt:.1f}s")
    res_w, k_w, misses_w = soundness("thermal1d_wide")
    report(7, not misses_w, f"thermal1d_wide: {k_w} start points, CI misses {misses_w}", supplementary=True)
    assert ok


def sandwich(name, levels):
    cfg, bench, sched = setup(name)
    slack = np.inf
    for i in levels:
        _, _, s = level_bounds(bench, sched, i, "smdp")
        _, _, m = level_bounds(bench, sched, i, "imdp")
        slack = min(slack, float(np.min(s.lower - m.lower)), float(np.min(m.upper - s.upper)))
    return slack


def test_criterion_8_sandwich(report):
    t0 = time.perf_counter()
    slack = sandwich("thermal1d", range(6))
    dt = time.perf_counter() - t0
    ok = slack >= -1e-12 and dt < 30
    report(8, ok, f"thermal1d min slack (SMDP lower - IMDP lower, IMDP upper - SMDP upper) = {slack:.3g}, {dt:.1f}s")
    wide = sandwich("thermal1d_wide", range(5))
    report(8, wide >= -1e-12, f"thermal1d_wide min slack {wide:.3g}", supplementary=True)
    assert ok


def test_criterion_9_cart(report, tmp_path):
    t0 = time.perf_counter()
    cfg, bench, sched = setup("cart2d")
    part, _, bounds = level_bounds(bench, sched, 0)
    assert part.widths[0] == pytest.approx(1 / 40)
    centres = part.centers
    charge = bench.regions.regions[0][1][0]
    assert bench.regions.regions[0][0] == "charge"
    near = np.all((centres >= charge.lo_arr - 0.05) & (centres <= charge.hi_arr + 0.05), axis=1)
    obst = np.zeros(part.n_cells, dtype=bool)
    for b in bench.regions.obstacles:
        obst |= np.all((centres > b.lo_arr) & (centres < b.hi_arr), axis=1)
    near_ok = bool(near.any() and np.all(bounds.lower[near] >= 0.5))
    obst_ok = bool(obst.any() and np.all(bounds.lower[obst] == 0.0))
    # full two-iteration run through the CLI (40x40 then 80x80 on the unit square)
    code = run(["synthesize", "--config", str(CFG / "cart2d.json"), "--threads", "1", "--out", str(tmp_path)])
    res = json.loads((tmp_path / "results.json").read_text())
    mg = [r["mean_gap"] for r in res["iterations"]]
    dt = time.perf_counter() - t0
    ok = near_ok and obst_ok and len(mg) == 2 and mg[1] < mg[0] and dt < 900
    report(9, ok, f"40x40: lower >= 0.5 on {int(near.sum())} cells around charge: {near_ok}, "
                  f"lower = 0 on {int(obst.sum())} obstacle cells: {obst_ok}; mean gap 40x40 {mg[0]:.5f} -> "
                  f"80x80 {mg[1]:.5f}; exit {code}; {dt:.0f}s")
    golden = (ROOT / "tests" / "golden" / "cart2d.results.json").read_text()
    same = (tmp_path / "results.json").read_text() == golden
    report(9, same, "cart2d results.json bit-identical to the committed golden file", supplementary=True)
    assert ok and same


def test_criterion_10_determinism(report, tmp_path):
    outs = []
    for i, threads in enumerate(("1", "1", "8")):
        out = tmp_path / f"run{i}"
        run(["synthesize", "--config", str(CFG / "thermal1d.json"), "--threads", threads, "--out", str(out)])
        outs.append((out / "results.json").read_text())
    bit = outs[0] == outs[1]
    diff = numeric_diff(json.loads(outs[0]), json.loads(outs[2]))
    ok = bit and diff <= 1e-12
    report(10, ok, f"threads=1 runs bit-identical: {bit}; threads=1 vs 8 max difference {diff:.3g}")
    assert ok
