"""Command-line entry points: ``run``, ``verify`` and ``icgen``.

Exit codes: 0 success, 1 configuration error, 2 the surface height left the
validity band, 3 the implicit solve did not converge.
"""

from __future__ import annotations

import argparse
import math
import shutil
import sys
from pathlib import Path

from . import analysis
from .diagnostics import record
from .io import (VERIFY_KEYS, ConfigError, CsvWriter, RunConfig, format_row,
                 load_config, write_snapshot)
from .kinematics import vertical_velocity
from .state import ValidityBandError, perturbed_ic, project_zero_momentum
from .stepper import LinearSolveError, step

EXIT_OK, EXIT_CONFIG, EXIT_BAND, EXIT_SOLVE = 0, 1, 2, 3
VERIFY_COLUMNS = ("check", "label", "lhs", "rhs", "ratio", "measured_C", "status")


def initial_state(cfg: RunConfig):
    grid, params = cfg.grid(), cfg.params()
    try:
        state = perturbed_ic(grid, params, cfg.eps, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError("eps", str(exc)) from None
    if cfg.zero_momentum:
        state = project_zero_momentum(state)
    return state


def _prepare_out_dir(cfg: RunConfig, config_path) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("out_dir", str(exc)) from None
    src = Path(config_path)
    if src.resolve() != (out / src.name).resolve():
        shutil.copyfile(src, out / src.name)
    return out


def _threads():
    try:
        analysis.worker_count()
    except ValueError as exc:
        raise ConfigError("CPE_THREADS", str(exc)) from None


def run_simulation(cfg: RunConfig, out: Path, log=None) -> int:
    """Integrate ``cfg`` writing ``diagnostics.csv`` and snapshots into ``out``."""
    log = sys.stderr if log is None else log
    state = initial_state(cfg)
    config = cfg.step_config()
    n = cfg.n_steps()

    def snapshot(i, s):
        write_snapshot(out / f"snapshot_{i:07d}.cpe", s, vertical_velocity(s.Z, s.v, s.grid))

    with CsvWriter(out / "diagnostics.csv") as csv:
        csv.write(record(state))
        if cfg.snapshot_every:
            snapshot(0, state)
        if not state.in_band():
            print(f"run stopped: initial Z outside the validity band "
                  f"(min={state.Z.min():.6g}, max={state.Z.max():.6g})", file=log)
            return EXIT_BAND
        for i in range(1, n + 1):
            try:
                state = step(state, config)
            except ValidityBandError as exc:
                print(f"run stopped: {exc}", file=log)
                return EXIT_BAND
            except LinearSolveError as exc:
                print(f"run stopped: {exc} (try a smaller 'dt')", file=log)
                return EXIT_SOLVE
            if i % cfg.diag_every == 0 or i == n:
                csv.write(record(state))
            if cfg.snapshot_every and i % cfg.snapshot_every == 0:
                snapshot(i, state)
    return EXIT_OK


def cmd_run(config_path) -> int:
    try:
        _threads()
        cfg = load_config(config_path)
        out = _prepare_out_dir(cfg, config_path)
        initial_state(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_simulation(cfg, out)


def verify_rows(cfg: RunConfig) -> list:
    """Battery rows selected by ``cfg.check``."""
    check = cfg.check.strip().lower()
    params = cfg.params()
    if check in ("poincare", "all"):
        if not 0 < params.alpha < 3:
            raise ConfigError("gamma", f"poincare check needs admissible range 0 < alpha < 3, "
                                       f"got alpha = {params.alpha:g}")
        if not 0 <= cfg.beta < 4 - params.alpha:
            raise ConfigError("beta", f"poincare check needs 0 <= beta < 4 - alpha = "
                                      f"{4 - params.alpha:g}, got {cfg.beta:g}")
    rows = []
    if check in ("hardy", "all"):
        rows += analysis.hardy_battery()
    if check in ("poincare", "all"):
        rows += analysis.poincare_battery(cfg.grid(), params, cfg.beta, eps=cfg.eps or 1e-3)
    if check in ("equivalence", "all"):
        rows += analysis.equivalence_battery(cfg.grid(), params)
    return rows


def cmd_verify(config_path) -> int:
    try:
        _threads()
        cfg = load_config(config_path, VERIFY_KEYS)
        out = _prepare_out_dir(cfg, config_path)
        rows = verify_rows(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with open(out / "verify.csv", "w", newline="", encoding="ascii") as fh:
        fh.write(",".join(VERIFY_COLUMNS) + "\n")
        for r in rows:
            fh.write(f"{r.check},{r.label.replace(',', ';')},"
                     f"{format_row([r.lhs, r.rhs, r.ratio, r.measured_C])},{r.status}\n")
    for r in rows:
        value = r.measured_C if math.isfinite(r.measured_C) else r.ratio
        print(f"{r.check:12s} {r.label:24s} {value:.6g} {r.status}")
    return EXIT_OK


def cmd_icgen(config_path, out_path) -> int:
    try:
        cfg = load_config(config_path)
        state = initial_state(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_snapshot(out_path, state, vertical_velocity(state.Z, state.v, state.grid))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbcpe", description="Free-boundary compressible primitive equations simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="integrate a configured simulation")
    p.add_argument("config")
    p = sub.add_parser("verify", help="run the inequality batteries")
    p.add_argument("config")
    p = sub.add_parser("icgen", help="write an initial-condition snapshot")
    p.add_argument("config")
    p.add_argument("out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "verify":
            return cmd_verify(args.config)
        return cmd_icgen(args.config, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
