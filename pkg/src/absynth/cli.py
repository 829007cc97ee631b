"""Command line entry point: ``absynth <subcommand> [options]``.

Exit codes: 0 success, 2 iteration cap reached without convergence, 1 error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .abstraction import Imdp, Smdp, build, imdp_diameter_witness, smdp_diameter_bound
from .config import RunConfig, config_hash, load_config, resolve, schedule_of
from .errors import AbsynthError, SupportTooLarge
from .geometry import build_partition
from .instances import oracle_check
from .ltlf import atoms_of, build_dfa, parse
from .sim import estimate_probability, simulate, substream
from .synthesis import CAP_REACHED, gap_report, synthesize

log = logging.getLogger("absynth")

_ORACLE_TOL = 1e-12
_CI_TOL = 1e-12
_START_STREAM = (1 << 32) - 1  # substream index reserved for picking start cells


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="absynth", description="Abstraction-refinement controller synthesis for LTLf objectives.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
        sp.add_argument("--out", default=None, help="output directory (overrides the config)")

    common(sub.add_parser("synthesize", help="run the refinement loop and write bounds and strategy"))
    sp = sub.add_parser("simulate", help="synthesize, then estimate satisfaction probabilities by simulation")
    common(sp)
    sp.add_argument("--n", type=int, default=None, help="trajectories per start cell")
    sp = sub.add_parser("dfa", help="translate an LTLf formula to a DFA")
    common(sp, config=False)
    sp.add_argument("--config", default=None)
    sp.add_argument("--formula", default=None)
    sp.add_argument("--ap", default=None, help="comma separated atoms")
    sp = sub.add_parser("diameter", help="ambiguity-set diameter diagnostics per refinement level")
    common(sp)
    sp.add_argument("--levels", type=int, default=None, help="number of refinement levels (default: schedule cap)")
    sp = sub.add_parser("oracle-check", help="compare the backups with brute force on random tiny instances")
    common(sp, config=False)
    sp.add_argument("--n", type=int, default=200)
    return p


def _out_dir(args, cfg: RunConfig | None) -> Path:
    out = Path(args.out or (cfg.output if cfg is not None else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _manifest(out: Path, args, cfg, timings, extra=None):
    man = {
        "command": args.command,
        "argv": sys.argv[1:],
        "threads": args.threads,
        "versions": io.versions(),
        "timings": timings,
    }
    if cfg is not None:
        man["config_hash"] = config_hash(cfg)
        man["config"] = cfg.model_dump(mode="json")
    man.update(extra or {})
    io.write_json(out / "manifest.json", man)


def _synthesize(cfg: RunConfig, threads: int):
    bench = resolve(cfg)
    formula = parse(bench.formula)
    return bench, synthesize(bench.dynamics, bench.disturbance, bench.regions, bench.x_abs, formula, bench.horizon,
                             cfg.epsilon, schedule_of(cfg, bench), cfg.abstraction, bench.designated, threads,
                             cfg.reach, log=log.info)


def _write_result(out: Path, cfg: RunConfig, res):
    doc = res.to_dict()
    doc["config_hash"] = config_hash(cfg)
    doc["seed"] = cfg.seed
    io.write_json(out / "results.json", doc)
    io.write_rows(out / "gap.csv", gap_report(res), ["iteration", "eta", "gap", "diameter"])
    io.write_bounds(out / "bounds.csv", res.partition, res.bounds.lower, res.bounds.upper)
    io.write_strategy(out / "strategy.bin", res.strategy.actions)
    if res.partition.dim == 2:
        io.write_pgm(out / "lower.pgm", res.partition, res.bounds.lower)
        io.write_pgm(out / "upper.pgm", res.partition, res.bounds.upper)
        io.write_pgm(out / "gap.pgm", res.partition, res.bounds.upper - res.bounds.lower)


def cmd_synthesize(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    t0 = time.perf_counter()
    _, res = _synthesize(cfg, args.threads)
    _write_result(out, cfg, res)
    _manifest(out, args, cfg, {"total_s": time.perf_counter() - t0, "iterations": res.timings},
              {"status": res.status})
    print(f"{res.status}: gap {res.gap:.6g} after {len(res.iterations)} iteration(s) -> {out}")
    return 2 if res.status == CAP_REACHED else 0


def _start_points(cfg: RunConfig, part) -> np.ndarray:
    """Configured starts, or ``n_starts`` uniform points in uniformly drawn safe cells."""
    if cfg.simulation.starts is not None:
        return np.array(cfg.simulation.starts, dtype=float)
    rng = substream(cfg.seed, _START_STREAM)
    k = cfg.simulation.n_starts
    cells = rng.choice(part.safe_cells, size=k, replace=k > len(part.safe_cells))
    lo, hi = part.cell_bounds(cells)
    return lo + (hi - lo) * rng.random(lo.shape)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    t0 = time.perf_counter()
    bench, res = _synthesize(cfg, args.threads)
    t1 = time.perf_counter()
    _write_result(out, cfg, res)
    ctrl = res.controller()
    part = res.partition
    n = args.n or cfg.simulation.n
    T = bench.horizon
    rows, traj_rows = [], []
    for j, x0 in enumerate(_start_points(cfg, part)):
        cell = int(part.locate(x0))
        est = estimate_probability(bench.dynamics, bench.disturbance, ctrl, x0, T, n, cfg.seed, offset=j * n)
        lo, hi = float(res.bounds.lower[cell]), float(res.bounds.upper[cell])
        overlap = est["ci_low"] <= hi + _CI_TOL and est["ci_high"] >= lo - _CI_TOL
        rows.append({"start": j, "x0": [float(v) for v in x0], "cell": cell, "lower": lo, "upper": hi,
                     **est, "overlaps": bool(overlap)})
        if j == 0:
            for i in range(cfg.simulation.trajectories_csv):
                tr = simulate(bench.dynamics, bench.disturbance, ctrl, x0, T, substream(cfg.seed, i))
                for t in range(len(tr.zs)):
                    u = tr.actions[t] if t < len(tr.actions) else ""
                    traj_rows.append({"trajectory": i, "t": t,
                                      **{f"x{d}": float(tr.states[t][d]) for d in range(part.dim)},
                                      "u": u, "z": tr.zs[t], "label": "+".join(sorted(tr.trace[t])),
                                      "satisfied": int(tr.satisfied)})
    header = ["trajectory", "t"] + [f"x{d}" for d in range(part.dim)] + ["u", "z", "label", "satisfied"]
    io.write_rows(out / "trajectories.csv", traj_rows, header)
    verdict = all(r["overlaps"] for r in rows)
    io.write_json(out / "summary.json", {"status": res.status, "n": n, "horizon": T, "seed": cfg.seed,
                                         "interval_check": "pass" if verdict else "fail", "starts": rows})
    _manifest(out, args, cfg, {"synthesis_s": t1 - t0, "simulation_s": time.perf_counter() - t1,
                               "iterations": res.timings})
    print(f"interval check {'pass' if verdict else 'fail'} on {len(rows)} start(s) -> {out}")
    return 0 if verdict else 1


def cmd_dfa(args) -> int:
    cfg = _load(args) if args.config else None
    if args.formula is not None:
        text = args.formula
    elif cfg is not None:
        text = resolve(cfg).formula
    else:
        raise _UsageError("dfa needs --formula or --config")
    if args.ap is not None:
        ap = tuple(a.strip() for a in args.ap.split(",") if a.strip())
    elif cfg is not None:
        b = resolve(cfg)
        ap = build_partition(b.regions, b.x_abs, b.counts).atoms
    else:
        ap = tuple(sorted({"safe"} | atoms_of(parse(text))))
    dfa = build_dfa(parse(text, ap), ap)
    out = _out_dir(args, cfg)
    (out / "dfa.dot").write_text(dfa.to_dot())
    io.write_json(out / "dfa.json", dfa.to_json())
    _manifest(out, args, cfg, {}, {"formula": text, "ap": list(ap)})
    print(f"{dfa.n_states} states -> {out / 'dfa.dot'}")
    return 0


def cmd_diameter(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    bench = resolve(cfg)
    sched = schedule_of(cfg, bench)
    rows, timings = [], []
    for i in range(args.levels or sched.max_iterations):
        counts, w_counts = sched.level(i)
        part = build_partition(bench.regions, bench.x_abs, counts)
        t0 = time.perf_counter()
        abst = build(cfg.abstraction, bench.dynamics, bench.disturbance, part, w_counts, cfg.reach, args.threads)
        row = {"iteration": i + 1, "eta": part.eta, "n_cells": part.n_cells}
        if isinstance(abst, Smdp):
            per_row, glob, ceiling = smdp_diameter_bound(abst)
            row.update(kind="smdp-bound", diameter=glob, ceiling=ceiling,
                       within_ceiling=int(np.all(per_row <= ceiling + 1e-12)))
        elif isinstance(abst, Imdp):
            best = 0.0
            for s in abst.safe_cells:
                for a in range(abst.n_actions):
                    try:
                        best = max(best, imdp_diameter_witness(abst, int(s), a))
                    except SupportTooLarge:
                        continue
            row.update(kind="imdp-witness", diameter=best, ceiling="", within_ceiling="")
        else:
            raise _UsageError("diameter needs kind smdp or imdp")
        rows.append(row)
        timings.append({"iteration": i + 1, "build_s": time.perf_counter() - t0})
        log.info(f"level {i + 1}: eta={part.eta:.6g} diameter={row['diameter']:.6g}")
    io.write_rows(out / "diameter.csv", rows,
                  ["iteration", "eta", "n_cells", "kind", "diameter", "ceiling", "within_ceiling"])
    _manifest(out, args, cfg, {"levels": timings})
    print(f"{len(rows)} level(s) -> {out / 'diameter.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    out = _out_dir(args, None)
    seed = 0 if args.seed is None else args.seed
    t0 = time.perf_counter()
    worst = oracle_check(args.n, seed)
    ok = all(v <= _ORACLE_TOL for v in worst.values())
    io.write_json(out / "oracle.json", {"instances": args.n, "seed": seed, "max_abs_diff": worst,
                                        "tolerance": _ORACLE_TOL, "pass": ok})
    _manifest(out, args, None, {"total_s": time.perf_counter() - t0})
    print(f"oracle check {'pass' if ok else 'fail'}: {worst}")
    return 0 if ok else 1


COMMANDS = {"synthesize": cmd_synthesize, "simulate": cmd_simulate, "dfa": cmd_dfa, "diameter": cmd_diameter,
            "oracle-check": cmd_oracle_check}


def run(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except AbsynthError as e:
        print(f"error {e.code}: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error E000: {e}", file=sys.stderr)
        return 1


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
