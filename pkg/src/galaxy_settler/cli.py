"""Batch driver: generate catalogs, run campaigns, referee, score, and
dump figure data.

Subcommands
-----------
generate   synthesize a star catalog CSV
run        full campaign from a config: events.csv + report + snapshots
validate   referee an event log; exit 0 only on a fully valid log
merit      score a validated event log
figures    emit the CSV bundle the plotting package consumes

Exit codes: 0 success, 2 configuration/validation error, 3 infeasible
campaign (no generation-1 settlements).  Every error path prints a
single machine-parsable line `galaxy-settler: error: <code>: <message>`
to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import (SOL_ID, T_MAX, DensityProfile, StarCatalog,
                      generate_synthetic, load_catalog, speed_histogram,
                      write_catalog)
from .config import CampaignConfig, load_config
from .errors import (CatalogError, ConfigError, GalaxyError, InfeasibleError)
from .events import read_events, write_events
from .merit import merit_curve_closest_N, merit_report, radial_target_weights
from .strategies import run_campaign
from .tree import settlement_generations, validate

__all__ = ["main", "build_parser"]


# ---------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------


def _fail(code, message, exit_code):
    print(f"galaxy-settler: error: {code}: {message}", file=sys.stderr)
    return exit_code


def _resolve_threads(flag):
    """--threads wins, then GALAXY_SETTLER_THREADS, then the hardware count."""
    if flag is not None:
        if flag < 1:
            raise ConfigError("--threads must be >= 1")
        return flag
    env = os.environ.get("GALAXY_SETTLER_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"GALAXY_SETTLER_THREADS={env!r} is not an integer")
        if threads < 1:
            raise ConfigError("GALAXY_SETTLER_THREADS must be >= 1")
        return threads
    return os.cpu_count() or 1


def _load_inputs(args) -> tuple[CampaignConfig, StarCatalog]:
    cfg = load_config(getattr(args, "config", None))
    cat = load_catalog(args.catalog, rotation_curve=cfg.curve)
    return cfg, cat


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _parse_grid_flag(cfg: CampaignConfig, flag):
    if flag is None:
        return cfg.grid
    try:
        n_r, n_theta = (int(x) for x in flag.split(","))
        return type(cfg.grid).default(n_r=n_r, n_theta=n_theta)
    except ValueError as exc:
        raise ConfigError(f"--grid expects 'N_R,N_THETA', got {flag!r} ({exc})")


def _score(catalog, cfg, report):
    """Merit of a validated log: settled positions at the end epoch."""
    ids = [s.star for s in report.settlements]
    pos, _ = catalog.states_at(T_MAX)
    settled = pos[[catalog.index_of(i) for i in ids]] if ids else np.empty((0, 3))
    return merit_report(settled, cfg.grid, report.dv_used, report.dv_max,
                        catalog=catalog)


# ---------------------------------------------------------------------
# figure data
# ---------------------------------------------------------------------


def merit_curve_rows(catalog, grid, samples=60):
    """(n_settled, merit) survey rows for the closest-N figure.

    Scores the N innermost stars against the inward-tapering "hub"
    radial target on log-spaced N, so the curve can peak and then pay
    for overextending to the rim.
    """
    n_max = len(catalog)
    n_list = np.unique(np.rint(np.logspace(0, np.log10(n_max),
                                           samples)).astype(int))
    weights = radial_target_weights(grid, kind="hub")
    return merit_curve_closest_N(catalog, grid, n_list, radial_weights=weights)


def _generation_table(catalog, report):
    """Per-star rows (star, generation, t_settled) plus Sol, time-sorted."""
    gens = settlement_generations(report.settlements)
    rows = [(SOL_ID, 0, 0.0)]
    for s in sorted(report.settlements, key=lambda s: s.t_myr):
        rows.append((s.star, gens[s.star], s.t_myr))
    return rows


def _write_generation_snapshots(out_dir, catalog, table):
    """Cumulative settlement maps, one CSV per generation.

    Snapshot k holds every star settled in generations <= k, placed at
    the epoch the wave completed (the latest settlement time so far);
    Sol rides along as the generation-0 row.
    """
    snap_dir = Path(out_dir) / "generation_snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    header = ["star_id", "generation", "t_settled_myr", "x_kpc", "y_kpc",
              "epoch_myr"]
    max_gen = max((g for _, g, _ in table), default=0)
    written = []
    for k in range(1, max_gen + 1):
        members = [(sid, g, t) for sid, g, t in table if g <= k]
        epoch = max(t for _, _, t in members)
        pos, _ = catalog.states_at(epoch)
        rows = [(sid, g, t, float(pos[catalog.index_of(sid), 0]),
                 float(pos[catalog.index_of(sid), 1]), epoch)
                for sid, g, t in members]
        path = snap_dir / f"generation_{k:02d}.csv"
        _write_csv(path, header, rows)
        written.append(path)
    return written


def _write_figure_bundle(out_dir, catalog, cfg, report):
    """The full CSV bundle behind the figure suite."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write_csv(out / "merit_curve.csv", ["n_settled", "merit"],
               merit_curve_rows(catalog, cfg.grid))

    _write_csv(out / "speed_vs_r.csv",
               ["r_lo_kpc", "r_hi_kpc", "n_stars", "v_mean_kms"],
               speed_histogram(catalog))

    pos0, _ = catalog.states_at(0.0)
    r0 = np.hypot(pos0[:, 0], pos0[:, 1])
    th0 = np.degrees(np.arctan2(pos0[:, 1], pos0[:, 0]))
    _write_csv(out / "star_positions.csv",
               ["star_id", "r_kpc", "theta_deg", "x_kpc", "y_kpc"],
               [(int(sid), float(r0[k]), float(th0[k]),
                 float(pos0[k, 0]), float(pos0[k, 1]))
                for k, sid in enumerate(catalog.ids)])

    table = _generation_table(catalog, report)
    counts = {}
    for _, g, _ in table:
        if g > 0:
            counts[g] = counts.get(g, 0) + 1
    rows, cum = [], 0
    for g in sorted(counts):
        cum += counts[g]
        rows.append((g, counts[g], cum))
    _write_csv(out / "cumulative_by_generation.csv",
               ["generation", "new_settlements", "cumulative"], rows)

    pos_end, _ = catalog.states_at(T_MAX)
    _write_csv(out / "final_map.csv",
               ["star_id", "generation", "t_settled_myr", "x_kpc", "y_kpc"],
               [(sid, g, t, float(pos_end[catalog.index_of(sid), 0]),
                 float(pos_end[catalog.index_of(sid), 1]))
                for sid, g, t in table])

    _write_generation_snapshots(out, catalog, table)


# ---------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    profile = None
    if args.profile is not None:
        try:
            with open(args.profile) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read profile {args.profile}: {exc}")
        allowed = {"r_min", "r_max", "taper", "incl_max_deg"}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ConfigError(f"profile: unknown key(s) {', '.join(unknown)}")
        profile = DensityProfile(**doc)
    cat = generate_synthetic(args.n, seed=args.seed, profile=profile)
    write_catalog(cat, args.out)
    print(f"wrote {args.out}: {len(cat)} stars (seed {args.seed})")
    return 0


def cmd_run(args) -> int:
    threads = _resolve_threads(args.threads)
    cfg, cat = _load_inputs(args)
    if args.max_generation is not None:
        cfg = cfg.with_max_generation(args.max_generation)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_campaign(cat, cfg.fast_ships, cfg.motherships,
                          settler=cfg.settler, search=cfg.search,
                          threads=threads,
                          tof_step=cfg.tolerances.fastship_tof_step)
    write_events(result.events, out / "events.csv")

    report = validate(result.events, cat,
                      tol_pos=cfg.tolerances.validation_tol_pos,
                      threads=threads)
    report.to_json(out / "validation.json")
    if not report.valid:
        failing = [r.rule for r in report.rules if not r.passed]
        return _fail("validation-failed",
                     f"campaign log breaks rule(s): {', '.join(failing)}", 2)

    score = _score(cat, cfg, report)
    doc = {**score.to_dict(), "generations": result.tree.max_generation,
           "valid": report.valid}
    with open(out / "merit_report.json", "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

    _write_generation_snapshots(out, cat, _generation_table(cat, report))
    print(f"settled {report.n_settled} stars over "
          f"{result.tree.max_generation} generations; J = {score.J:.3f}; "
          f"outputs in {out}")
    return 0


def cmd_validate(args) -> int:
    threads = _resolve_threads(args.threads)
    cfg, cat = _load_inputs(args)
    events = read_events(args.events)
    report = validate(events, cat, tol_pos=cfg.tolerances.validation_tol_pos,
                      threads=threads)
    report.to_json(args.out)
    if not report.valid:
        failing = [r.rule for r in report.rules if not r.passed]
        return _fail("validation-failed",
                     f"log breaks rule(s): {', '.join(failing)}", 2)
    print(f"VALID: N={report.n_settled} dv_used={report.dv_used:.1f} "
          f"dv_max={report.dv_max:.1f} (report: {args.out})")
    return 0


def cmd_merit(args) -> int:
    cfg, cat = _load_inputs(args)
    grid = _parse_grid_flag(cfg, args.grid)
    events = read_events(args.events)
    report = validate(events, cat, tol_pos=cfg.tolerances.validation_tol_pos)
    if not report.valid:
        failing = [r.rule for r in report.rules if not r.passed]
        return _fail("validation-failed",
                     f"refusing to score an invalid log "
                     f"(rules: {', '.join(failing)})", 2)
    score = merit_report(
        np.empty((0, 3)) if not report.settlements else
        cat.states_at(T_MAX)[0][[cat.index_of(s.star)
                                 for s in report.settlements]],
        grid, report.dv_used, report.dv_max, catalog=cat)
    with open(args.out, "w") as fh:
        json.dump(score.to_dict(), fh, indent=2)
        fh.write("\n")
    print(f"J = {score.J:.6f} (N={score.n}, report: {args.out})")
    return 0


def cmd_figures(args) -> int:
    cfg, cat = _load_inputs(args)
    if args.grid is not None:
        cfg = replace(cfg, grid=_parse_grid_flag(cfg, args.grid))
    events = read_events(args.events)
    report = validate(events, cat, tol_pos=cfg.tolerances.validation_tol_pos)
    if not report.valid:
        failing = [r.rule for r in report.rules if not r.passed]
        return _fail("validation-failed",
                     f"refusing to plot an invalid log "
                     f"(rules: {', '.join(failing)})", 2)
    _write_figure_bundle(args.out, cat, cfg, report)
    print(f"figure data in {args.out}")
    return 0


# ---------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="galaxy-settler",
        description="Plan, referee, and score galactic settlement campaigns.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a star catalog CSV")
    p.add_argument("--n", type=int, required=True, help="number of stars")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", help="JSON density-profile overrides")
    p.add_argument("--out", default="catalog.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run a full campaign from a config")
    p.add_argument("--catalog", required=True)
    p.add_argument("--config", help="JSON config (defaults ship in-package)")
    p.add_argument("--out", default="campaign_out", help="output directory")
    p.add_argument("--max-generation", type=int, dest="max_generation")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="referee an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--config", help="JSON config (curve and tolerances)")
    p.add_argument("--out", default="validation.json")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("merit", help="score a validated event log")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--config")
    p.add_argument("--grid", help="override scoring grid as 'N_R,N_THETA'")
    p.add_argument("--out", default="merit_report.json")
    p.set_defaults(func=cmd_merit)

    p = sub.add_parser("figures", help="emit the figure-data CSV bundle")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--config")
    p.add_argument("--grid", help="override scoring grid as 'N_R,N_THETA'")
    p.add_argument("--out", default="figure_data", help="output directory")
    p.set_defaults(func=cmd_figures)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config-error", exc, 2)
    except CatalogError as exc:
        return _fail("catalog-error", exc, 2)
    except InfeasibleError as exc:
        return _fail("infeasible", exc, 3)
    except GalaxyError as exc:
        return _fail("run-error", exc, 2)
    except OSError as exc:
        return _fail("io-error", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
