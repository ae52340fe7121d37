"""CSV bundle access: schema checks and column arrays, no physics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["BundleError", "Table", "Bundle", "load_bundle", "read_table"]

# every file the renderer understands, with its exact header
HEADERS = {
    "merit_curve.csv": ["n_settled", "merit"],
    "speed_vs_r.csv": ["r_lo_kpc", "r_hi_kpc", "n_stars", "v_mean_kms"],
    "star_positions.csv": ["star_id", "r_kpc", "theta_deg", "x_kpc", "y_kpc"],
    "cumulative_by_generation.csv": ["generation", "new_settlements",
                                     "cumulative"],
    "final_map.csv": ["star_id", "generation", "t_settled_myr", "x_kpc",
                      "y_kpc"],
}
SNAPSHOT_HEADER = ["star_id", "generation", "t_settled_myr", "x_kpc",
                   "y_kpc", "epoch_myr"]

MANDATORY = ("merit_curve.csv", "speed_vs_r.csv", "star_positions.csv",
             "cumulative_by_generation.csv")


class BundleError(Exception):
    """Missing mandatory file, malformed header, or broken invariant."""


@dataclass
class Table:
    """One CSV as named float columns."""

    path: Path
    columns: dict  # name -> np.ndarray (float)

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    def __len__(self):
        return 0 if not self.columns else len(next(iter(self.columns.values())))


def read_table(path, expected_header) -> Table:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise BundleError(f"cannot read {path.name}: {exc}") from exc
    if not rows or rows[0] != list(expected_header):
        got = rows[0] if rows else []
        raise BundleError(f"{path.name}: malformed header {got!r}, "
                          f"expected {list(expected_header)!r}")
    body = rows[1:]
    cols = {}
    for j, name in enumerate(expected_header):
        try:
            cols[name] = np.array([float(r[j]) for r in body])
        except (IndexError, ValueError) as exc:
            raise BundleError(f"{path.name}: bad value in column "
                              f"{name!r} ({exc})") from exc
    return Table(path, cols)


@dataclass
class Bundle:
    """Everything found in a bundle directory, schema-checked."""

    in_dir: Path
    tables: dict  # file name -> Table (mandatory files + final_map if present)
    snapshots: list = field(default_factory=list)  # Tables, generation order

    def __getitem__(self, name) -> Table:
        return self.tables[name]

    @property
    def has_generation_maps(self):
        return bool(self.snapshots) and "final_map.csv" in self.tables


def load_bundle(in_dir) -> Bundle:
    """Read and check a bundle directory.

    Mandatory files must exist with their exact headers.  The
    generation snapshots and the final map are optional (the map
    figures degrade gracefully without them).  A decreasing cumulative
    settlement count is an upstream invariant violation and a hard
    error, not something to plot around.
    """
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise BundleError(f"bundle directory {in_dir} does not exist")
    tables = {}
    for name in MANDATORY:
        path = in_dir / name
        if not path.is_file():
            raise BundleError(f"mandatory file {name} missing from {in_dir}")
        tables[name] = read_table(path, HEADERS[name])

    cum = tables["cumulative_by_generation.csv"]["cumulative"]
    if np.any(np.diff(cum) < 0):
        raise BundleError("cumulative_by_generation.csv decreases between "
                          "rows; upstream invariant broken")

    final_path = in_dir / "final_map.csv"
    if final_path.is_file():
        tables["final_map.csv"] = read_table(final_path,
                                             HEADERS["final_map.csv"])

    snapshots = []
    snap_dir = in_dir / "generation_snapshots"
    if snap_dir.is_dir():
        for path in sorted(snap_dir.glob("generation_*.csv")):
            snapshots.append(read_table(path, SNAPSHOT_HEADER))
    return Bundle(in_dir=in_dir, tables=tables, snapshots=snapshots)
