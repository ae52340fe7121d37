"""Settlement scoring: uniformity errors, the merit value J, and the
closest-N survey.

The score rewards settling many stars, spread evenly in radius and
azimuth, for little total impulse:

    J = N / (1 + 1e-4 * N * (E_r + E_theta)) * (dv_max / dv_used)

E_r and E_theta measure binned deviation from a target density:

    E = sum_bins ((n_b - N * p_b) / max(1, N * p_b))^2

with pluggable target weights p_b.  Radial targets default to the
catalog's own bin shares (settle like the galaxy looks); angular
targets default to uniform.  All binning uses cylindrical (r, theta)
of positions at the reference epoch t = 90 Myr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import StarCatalog, T_MAX

__all__ = [
    "GridSpec",
    "MeritReport",
    "radial_target_weights",
    "angular_target_weights",
    "error_r",
    "error_theta",
    "merit_no_dv",
    "merit_J",
    "merit_report",
    "merit_curve_closest_N",
    "high_value_stars",
]

MERIT_ERROR_COEFF = 1e-4


@dataclass(eq=False)
class GridSpec:
    """Radial/angular bin edges (kpc, deg) with derived centers."""

    r_edges: np.ndarray
    theta_edges: np.ndarray

    def __post_init__(self):
        self.r_edges = np.asarray(self.r_edges, dtype=float)
        self.theta_edges = np.asarray(self.theta_edges, dtype=float)
        if np.any(np.diff(self.r_edges) <= 0) or np.any(np.diff(self.theta_edges) <= 0):
            raise ValueError("grid edges must be strictly increasing")
        if self.r_edges[0] < 2.0 - 1e-9 or self.r_edges[-1] > 32.0 + 1e-9:
            raise ValueError("radial grid must lie within [2, 32] kpc")
        if not (math.isclose(self.theta_edges[0], -180.0)
                and math.isclose(self.theta_edges[-1], 180.0)):
            raise ValueError("angular grid must cover (-180, 180] deg")
        self.r_edges.setflags(write=False)
        self.theta_edges.setflags(write=False)

    @classmethod
    def default(cls, n_r=30, n_theta=36):
        return cls(np.linspace(2.0, 32.0, n_r + 1), np.linspace(-180.0, 180.0, n_theta + 1))

    @property
    def r_centers(self):
        return 0.5 * (self.r_edges[:-1] + self.r_edges[1:])

    @property
    def theta_centers(self):
        return 0.5 * (self.theta_edges[:-1] + self.theta_edges[1:])

    @property
    def n_r(self):
        return len(self.r_edges) - 1

    @property
    def n_theta(self):
        return len(self.theta_edges) - 1


def _cylindrical(positions):
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    r = np.hypot(positions[:, 0], positions[:, 1])
    theta = np.degrees(np.arctan2(positions[:, 1], positions[:, 0]))
    return r, theta


def radial_target_weights(grid: GridSpec, catalog: StarCatalog | None = None,
                          kind="catalog", hub_scale=12.0):
    """Target radial shares p_b.

    kind "catalog": proportional to the catalog's stars per bin (the
    default scoring target).  kind "hub": an inward-tapering profile
    (34 - r) * exp(-(r - 2)/hub_scale) that prizes the dense inner disc;
    used by the closest-N survey figure.  kind "uniform": equal by bin
    width.
    """
    if kind == "catalog":
        if catalog is None:
            raise ValueError("catalog target weights need a catalog")
        # bin the same planar radii (at the reference epoch) that settled
        # positions are binned by, so full coverage scores exactly zero
        pos, _ = catalog.states_at(T_MAX)
        r, _ = _cylindrical(pos)
        counts, _ = np.histogram(np.clip(r, grid.r_edges[0], grid.r_edges[-1]),
                                 bins=grid.r_edges)
        total = counts.sum()
        if total == 0:
            raise ValueError("catalog has no stars inside the grid")
        return counts / total
    if kind == "hub":
        c = grid.r_centers
        w = (34.0 - c) * np.exp(-(c - 2.0) / hub_scale)
        return w / w.sum()
    if kind == "uniform":
        w = np.diff(grid.r_edges)
        return w / w.sum()
    raise ValueError(f"unknown radial target kind {kind!r}")


def angular_target_weights(grid: GridSpec):
    """Uniform angular target: share proportional to bin width."""
    w = np.diff(grid.theta_edges)
    return w / w.sum()


def _binned_error(values, edges, weights):
    n = len(values)
    if n == 0:
        return 0.0
    counts, _ = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)
    expected = n * np.asarray(weights, dtype=float)
    dev = (counts - expected) / np.maximum(1.0, expected)
    return float(dev @ dev)


def error_r(positions, grid: GridSpec, target_weights=None,
            catalog: StarCatalog | None = None) -> float:
    """Radial asymmetry of the settled positions (epoch t = 90 Myr frame).

    target_weights override the default; otherwise catalog-proportional
    weights are computed from `catalog` (uniform-by-width if absent).
    """
    if target_weights is None:
        if catalog is not None:
            target_weights = radial_target_weights(grid, catalog)
        else:
            target_weights = radial_target_weights(grid, kind="uniform")
    if len(positions) == 0:
        return 0.0
    r, _ = _cylindrical(positions)
    return _binned_error(r, grid.r_edges, target_weights)


def error_theta(positions, grid: GridSpec, target_weights=None) -> float:
    """Angular asymmetry of the settled positions; uniform target by default."""
    if target_weights is None:
        target_weights = angular_target_weights(grid)
    if len(positions) == 0:
        return 0.0
    _, theta = _cylindrical(positions)
    return _binned_error(theta, grid.theta_edges, target_weights)


def merit_no_dv(n, e_r, e_theta) -> float:
    """The count-and-uniformity factor of J, without the impulse ratio."""
    if n < 0:
        raise ValueError("settled count cannot be negative")
    if n == 0:
        return 0.0
    return n / (1.0 + MERIT_ERROR_COEFF * n * (e_r + e_theta))


def merit_J(n, e_r, e_theta, dv_used, dv_max) -> float:
    """Full merit value; requires dv_used > 0 when anything was settled."""
    if n == 0:
        return 0.0
    if dv_used <= 0.0:
        raise ValueError("dv_used must be positive when settlements exist")
    return merit_no_dv(n, e_r, e_theta) * (dv_max / dv_used)


@dataclass
class MeritReport:
    n: int
    e_r: float
    e_theta: float
    dv_used: float
    dv_max: float
    J: float

    def to_dict(self):
        return {"N": self.n, "E_r": self.e_r, "E_theta": self.e_theta,
                "dv_used": self.dv_used, "dv_max": self.dv_max, "J": self.J}


def merit_report(positions, grid: GridSpec, dv_used, dv_max,
                 catalog: StarCatalog | None = None) -> MeritReport:
    """Score a settled set given its positions at t = 90 Myr and the
    impulse ledger totals."""
    n = len(positions)
    e_r = error_r(positions, grid, catalog=catalog)
    e_th = error_theta(positions, grid)
    j = merit_J(n, e_r, e_th, dv_used, dv_max) if n else 0.0
    return MeritReport(n=n, e_r=e_r, e_theta=e_th,
                       dv_used=dv_used, dv_max=dv_max, J=j)


def merit_curve_closest_N(catalog: StarCatalog, grid: GridSpec, n_list,
                          radial_weights=None, angular_weights=None):
    """Survey: settle the N innermost stars and score without the
    impulse factor; returns [(N, value)] rows.

    Default targets are catalog-proportional radius and uniform angle;
    passing `radial_weights` (e.g. the "hub" target) changes what counts
    as balanced.
    """
    if radial_weights is None:
        radial_weights = radial_target_weights(grid, catalog)
    if angular_weights is None:
        angular_weights = angular_target_weights(grid)
    order = np.lexsort((catalog.ids, catalog.r))
    pos, _ = catalog.states_at(T_MAX)
    r_sorted, th_sorted = (a[order] for a in _cylindrical(pos))
    rows = []
    for n in n_list:
        n = int(n)
        if not (1 <= n <= len(catalog)):
            raise ValueError(f"N={n} outside [1, {len(catalog)}]")
        e_r = _binned_error(r_sorted[:n], grid.r_edges, radial_weights)
        e_th = _binned_error(th_sorted[:n], grid.theta_edges, angular_weights)
        rows.append((n, merit_no_dv(n, e_r, e_th)))
    return rows


def high_value_stars(catalog: StarCatalog, grid: GridSpec, incl_limit=10.0,
                     epoch=T_MAX):
    """Per grid cell, the low-inclination star nearest the cell center.

    Cells are scanned radius-major; empty cells (or cells whose stars
    all tilt >= incl_limit) are skipped.  Ties break to the lowest id.
    """
    pos, _ = catalog.states_at(epoch)
    r, theta = _cylindrical(pos)
    incl = np.array([s.incl for s in catalog.stars])

    r_idx = np.searchsorted(grid.r_edges, r, side="right") - 1
    r_idx[r == grid.r_edges[-1]] = grid.n_r - 1
    th_idx = np.searchsorted(grid.theta_edges, theta, side="right") - 1
    th_idx[theta == grid.theta_edges[-1]] = grid.n_theta - 1
    # stars outside the grid's radial span are simply not candidates
    eligible = (incl < incl_limit) & (r_idx >= 0) & (r_idx < grid.n_r)

    chosen = []
    for i in range(grid.n_r):
        rc = grid.r_centers[i]
        for j in range(grid.n_theta):
            mask = eligible & (r_idx == i) & (th_idx == j)
            if not np.any(mask):
                continue
            tc = math.radians(grid.theta_centers[j])
            center = np.array([rc * math.cos(tc), rc * math.sin(tc)])
            members = np.flatnonzero(mask)
            d2 = np.sum((pos[members, :2] - center) ** 2, axis=1)
            best = members[np.lexsort((catalog.ids[members], d2))[0]]
            chosen.append(int(catalog.ids[best]))
    return chosen
