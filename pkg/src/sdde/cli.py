"""``sdde simulate|convergence|probe --config FILE --out DIR [--seed N] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 simulation error,
4 missing partial derivatives.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .harness import StudyError, fit_rate, strong_errors
from .model import CapabilityError
from .noise import BrownianStore
from .plot import fmt, rate_svg
from .probe import probe_assumption, probe_lambda_bound
from .scheme import SchemeConfigError, SimulationError, simulate, simulate_em

EXIT_CONFIG, EXIT_SIMULATION, EXIT_CAPABILITY = 2, 3, 4

TRAJECTORY_HEADER = ["k", "t", "y", "newton_iters", "truncated"]
ERRORS_HEADER = ["dt", "q_bar", "error", "stderr", "num_paths"]
PROBE_HEADER = ["assumption", "max_violation", "at_t", "at_x", "at_y", "at_xbar", "at_ybar", "samples"]


def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    spec = cfg.spec
    store = BrownianStore.generate(cfg.plan.seed, cfg.path, grid.dt, spec.delay, spec.horizon)
    sim = simulate if cfg.method == "milstein" else simulate_em
    try:
        tr = sim(spec, cfg.policy, grid, cfg.scheme, store)
    except SimulationError as e:
        print(f"simulation failed at step {e.step} (seed {cfg.plan.seed}, path {cfg.path}): {e}", file=sys.stderr)
        return EXIT_SIMULATION
    m = grid.m_delay
    fh, w = _writer(out / "trajectory.csv")
    with fh:
        w.writerow(TRAJECTORY_HEADER)
        for i, k in enumerate(range(-m, grid.m_total + 1)):
            # diagnostics belong to the step that produced Y_k
            iters = int(tr.newton_iters[k - 1]) if k > 0 else 0
            hit = int(tr.truncated[k - 1]) if k > 0 else 0
            w.writerow([k, fmt(float(grid.time(k))), fmt(float(tr.values[i])), iters, hit])
    print(f"wrote {out / 'trajectory.csv'} ({len(grid)} rows, radius {tr.radius:g})")
    return 0


def cmd_convergence(cfg: RunConfig, out: Path, threads=None) -> int:
    try:
        table = strong_errors(cfg.spec, cfg.policy, cfg.scheme, cfg.plan, reference=cfg.reference,
                              method=cfg.method, threads=threads)
    except StudyError as e:
        print(f"study failed: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    fh, w = _writer(out / "errors.csv")
    with fh:
        w.writerow(ERRORS_HEADER)
        for dt, q, err, se, n in table.rows():
            w.writerow([fmt(float(dt)), fmt(q), fmt(err), fmt(se), n])
    fits = {}
    for q in table.q_bars:
        try:
            fits[q] = fit_rate(table, q)
        except ValueError as e:
            print(f"q_bar={q:g}: no fit ({e})")
            continue
        print(f"q_bar={q:g}: slope {fits[q][0]:.4f} (r2 {fits[q][2]:.4f})")
    (out / "rate.svg").write_text(rate_svg(table, fits))
    return 0


def _cell(point, key):
    v = point.get(key)
    return "" if v is None else fmt(v)


def cmd_probe(cfg: RunConfig, out: Path) -> int:
    rows = []
    try:
        for case in cfg.cases:
            rep = probe_assumption(cfg.spec, case)
            print(rep.summary())
            rows.append((case.label, rep))
        for w in cfg.lambda_w:
            rep = probe_lambda_bound(cfg.spec, cfg.policy, [w], cfg.lambda_samples)
            print(rep.summary())
            rows.append((f"lambda-bound(w={w:g})", rep))
    except CapabilityError as e:
        print(f"capability error: {e}", file=sys.stderr)
        return EXIT_CAPABILITY
    fh, w = _writer(out / "probe.csv")
    with fh:
        w.writerow(PROBE_HEADER)
        for label, rep in rows:
            p = rep.point
            w.writerow([label, fmt(rep.max_violation), _cell(p, "t"), _cell(p, "x"), _cell(p, "y"),
                        _cell(p, "xbar"), _cell(p, "ybar"), rep.samples])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdde", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "convergence", "probe"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override study.seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $SDDE_THREADS or 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(text)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "simulate":
            dts = [cfg.grid().h]
        elif args.command == "convergence":
            dts = [g.h for g in cfg.plan.grids(cfg.spec)] + [float(cfg.plan.reference_dt)]
        else:
            dts = []
        for dt in dts:
            cfg.scheme.check(dt)
        cfg.policy.check(sorted(set(dts)))
    except (ConfigError, SchemeConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    threads = args.threads
    if threads is None and os.environ.get("SDDE_THREADS"):
        threads = int(os.environ["SDDE_THREADS"])
    args.out.mkdir(parents=True, exist_ok=True)
    if args.command == "simulate":
        return cmd_simulate(cfg, args.out)
    if args.command == "convergence":
        return cmd_convergence(cfg, args.out, threads)
    return cmd_probe(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
