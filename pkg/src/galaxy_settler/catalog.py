"""Star database: loading, synthesis, and exact circular-orbit ephemerides.

Every star moves on a fixed circular orbit.  With theta(t) = phase0 +
omega*t and omega = v(r)/r, the state is

    pos(t) = r [cos(theta) e1 + sin(theta) e2]
    vel(t) = v(r) [-sin(theta) e1 + cos(theta) e2]

where (e1, e2) span the orbit plane, obtained by rotating the galactic
x-y plane first about x by the inclination, then about z by the node
(both counter-clockwise for positive angles; see README for the full
orientation convention).  Motion is counter-clockwise in the orbit
plane.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import RotationCurve, ShipState
from .errors import CatalogError

log = logging.getLogger(__name__)

__all__ = [
    "T_MAX",
    "EPHEMERIS_STEP",
    "R_MIN",
    "R_MAX",
    "SOL_ID",
    "StarRecord",
    "StarCatalog",
    "EphemerisGrid",
    "DensityProfile",
    "load_catalog",
    "write_catalog",
    "generate_synthetic",
    "ephemeris",
    "speed_histogram",
]

T_MAX = 90.0  # Myr, end of the settlement window
EPHEMERIS_STEP = 0.5  # Myr
R_MIN = 2.0  # kpc
R_MAX = 32.0  # kpc
SOL_ID = 0

CSV_HEADER = ["id", "r_kpc", "incl_deg", "node_deg", "phase0_deg"]


@dataclass(frozen=True)
class StarRecord:
    """One catalog star: circular orbit radius plus orientation angles."""

    id: int
    r: float
    incl: float
    node: float
    phase0: float

    def validate(self):
        if self.id < 0:
            raise CatalogError(f"star id {self.id} is negative")
        if not (R_MIN <= self.r <= R_MAX):
            raise CatalogError(
                f"star {self.id}: radius {self.r} kpc outside [{R_MIN:g}, {R_MAX:g}]"
            )
        for name in ("r", "incl", "node", "phase0"):
            if not math.isfinite(getattr(self, name)):
                raise CatalogError(f"star {self.id}: non-finite field {name}")


@dataclass(frozen=True)
class DensityProfile:
    """Synthetic radial/inclination law: density ~ (taper - r) on [r_min, r_max]."""

    r_min: float = R_MIN
    r_max: float = R_MAX
    taper: float = 34.0
    incl_max_deg: float = 15.0

    def __post_init__(self):
        if self.taper <= self.r_max:
            raise CatalogError("taper must exceed r_max for a decreasing density")
        if not (0.0 < self.r_min < self.r_max):
            raise CatalogError("bad radial range")

    def sample_radii(self, rng, n):
        # inverse CDF of the linear density
        a = (self.taper - self.r_min) ** 2
        b = (self.taper - self.r_max) ** 2
        u = rng.random(n)
        return self.taper - np.sqrt(a - u * (a - b))


class StarCatalog:
    """Immutable, id-ordered star set bound to a rotation curve."""

    def __init__(self, stars, rotation_curve: RotationCurve):
        stars = sorted(stars, key=lambda s: s.id)
        seen = set()
        for s in stars:
            s.validate()
            if s.id in seen:
                raise CatalogError(f"duplicate star id {s.id}")
            seen.add(s.id)
        if not stars:
            raise CatalogError("empty catalog")
        self.stars = tuple(stars)
        self.curve = rotation_curve
        self._index = {s.id: k for k, s in enumerate(self.stars)}

        self.ids = np.array([s.id for s in self.stars], dtype=np.int64)
        self.r = np.array([s.r for s in self.stars])
        incl = np.radians([s.incl for s in self.stars])
        node = np.radians([s.node for s in self.stars])
        self.phase0 = np.radians([s.phase0 for s in self.stars])

        self.v_kms = np.array([rotation_curve.speed(r) for r in self.r])
        self.omega = np.array([rotation_curve.omega_internal(r) for r in self.r])  # rad/Myr

        ci, si = np.cos(incl), np.sin(incl)
        cn, sn = np.cos(node), np.sin(node)
        # orbit-plane basis: e1 = Rz(node) x_hat, e2 = Rz(node) Rx(incl) y_hat
        self.e1 = np.column_stack([cn, sn, np.zeros_like(cn)])
        self.e2 = np.column_stack([-ci * sn, ci * cn, si])
        # plane normal e3 = e1 x e2; star angular momentum is r*v(r)*e3,
        # constant in time, which the momentum search relies on
        self.e3 = np.column_stack([si * sn, -si * cn, ci])

        for a in (self.ids, self.r, self.phase0, self.v_kms, self.omega,
                  self.e1, self.e2, self.e3):
            a.setflags(write=False)

    # -- container protocol -------------------------------------------

    def __len__(self):
        return len(self.stars)

    def __iter__(self):
        return iter(self.stars)

    def __contains__(self, star_id):
        return star_id in self._index

    def record(self, star_id) -> StarRecord:
        try:
            return self.stars[self._index[star_id]]
        except KeyError:
            raise CatalogError(f"unknown star id {star_id}") from None

    def index_of(self, star_id) -> int:
        try:
            return self._index[star_id]
        except KeyError:
            raise CatalogError(f"unknown star id {star_id}") from None

    # -- kinematics ---------------------------------------------------

    def _check_epoch(self, t):
        if not (0.0 <= t <= T_MAX):
            raise CatalogError(f"epoch {t} Myr outside [0, {T_MAX:g}]")

    def star_state(self, star_id, t):
        """(pos kpc, vel km/s) of one star at epoch t in [0, 90] Myr."""
        self._check_epoch(t)
        k = self.index_of(star_id)
        th = self.phase0[k] + self.omega[k] * t
        c, s = math.cos(th), math.sin(th)
        pos = self.r[k] * (c * self.e1[k] + s * self.e2[k])
        vel = self.v_kms[k] * (-s * self.e1[k] + c * self.e2[k])
        return pos, vel

    def ship_state(self, star_id, t) -> ShipState:
        pos, vel = self.star_state(star_id, t)
        return ShipState(pos, vel, t)

    def states_at(self, t):
        """(pos, vel) arrays of shape (n, 3) for every star at epoch t."""
        self._check_epoch(t)
        th = self.phase0 + self.omega * t
        c, s = np.cos(th)[:, None], np.sin(th)[:, None]
        pos = self.r[:, None] * (c * self.e1 + s * self.e2)
        vel = self.v_kms[:, None] * (-s * self.e1 + c * self.e2)
        return pos, vel

    def angular_momenta(self):
        """Per-star pos x vel, kpc*km/s, shape (n, 3); epoch-independent."""
        return (self.r * self.v_kms)[:, None] * self.e3

    # -- hashing ------------------------------------------------------

    def content_hash(self):
        h = hashlib.sha256()
        for s in self.stars:
            h.update(f"{s.id},{s.r!r},{s.incl!r},{s.node!r},{s.phase0!r}\n".encode())
        h.update(json.dumps(self.curve.to_config(), sort_keys=True).encode())
        return h.hexdigest()


def load_catalog(path, rotation_curve: RotationCurve | None = None) -> StarCatalog:
    """Read a star CSV (header id,r_kpc,incl_deg,node_deg,phase0_deg)."""
    path = Path(path)
    curve = rotation_curve or RotationCurve.default()
    stars = []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise CatalogError(f"cannot open catalog {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != CSV_HEADER:
            raise CatalogError(f"{path}: bad header (expected {','.join(CSV_HEADER)})")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise CatalogError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                rec = StarRecord(int(row[0]), float(row[1]), float(row[2]),
                                 float(row[3]), float(row[4]))
                rec.validate()
            except (ValueError, CatalogError) as exc:
                raise CatalogError(f"{path}:{lineno}: {exc}") from None
            stars.append(rec)
    try:
        return StarCatalog(stars, curve)
    except CatalogError as exc:
        raise CatalogError(f"{path}: {exc}") from None


def write_catalog(cat: StarCatalog, path):
    """Write the catalog CSV; floats use shortest round-trip form."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in cat.stars:
            writer.writerow([s.id, repr(s.r), repr(s.incl), repr(s.node), repr(s.phase0)])


def generate_synthetic(n, seed, profile: DensityProfile | None = None,
                       rotation_curve: RotationCurve | None = None) -> StarCatalog:
    """Deterministic synthetic catalog; star 0 is the Sol stand-in at 8 kpc."""
    if n < 1:
        raise CatalogError("need at least one star")
    profile = profile or DensityProfile()
    curve = rotation_curve or RotationCurve.default()
    rng = np.random.default_rng(seed)
    radii = profile.sample_radii(rng, n - 1)
    incls = rng.uniform(0.0, profile.incl_max_deg, n - 1)
    nodes = rng.uniform(0.0, 360.0, n - 1)
    phases = rng.uniform(0.0, 360.0, n - 1)
    stars = [StarRecord(SOL_ID, 8.0, 0.0, 0.0, 0.0)]
    for k in range(n - 1):
        stars.append(StarRecord(k + 1, float(radii[k]), float(incls[k]),
                                float(nodes[k]), float(phases[k])))
    log.debug("synthesized %d stars (seed=%s)", n, seed)
    return StarCatalog(stars, curve)


@dataclass
class EphemerisGrid:
    """Precomputed star states on the fixed 0.5 Myr grid over [0, 90] Myr."""

    t_grid: np.ndarray
    pos: np.ndarray  # (n_epochs, n_stars, 3) kpc
    vel: np.ndarray  # (n_epochs, n_stars, 3) km/s

    def epoch_index(self, t):
        k = round(t / EPHEMERIS_STEP)
        if not (0 <= k < len(self.t_grid)) or abs(self.t_grid[k] - t) > 1e-9:
            raise CatalogError(f"epoch {t} Myr is not on the ephemeris grid")
        return k


def ephemeris(cat: StarCatalog, cache_dir=None) -> EphemerisGrid:
    """Build (or fetch from cache_dir) the 181-epoch ephemeris grid."""
    t_grid = np.arange(0.0, T_MAX + EPHEMERIS_STEP / 2, EPHEMERIS_STEP)
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / f"ephemeris-{cat.content_hash()[:16]}.npz"
        if cache.exists():
            data = np.load(cache)
            return EphemerisGrid(data["t_grid"], data["pos"], data["vel"])
    pos = np.empty((len(t_grid), len(cat), 3))
    vel = np.empty_like(pos)
    for k, t in enumerate(t_grid):
        pos[k], vel[k] = cat.states_at(t)
    grid = EphemerisGrid(t_grid, pos, vel)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(cache, t_grid=t_grid, pos=pos, vel=vel)
        log.debug("ephemeris cached at %s", cache)
    return grid


def speed_histogram(cat: StarCatalog, bin_edges=None):
    """Rows (r_lo, r_hi, n_stars, mean v km/s) for nonempty radial bins."""
    if bin_edges is None:
        bin_edges = np.arange(R_MIN, R_MAX + 0.5, 1.0)
    bin_edges = np.asarray(bin_edges, dtype=float)
    idx = np.digitize(cat.r, bin_edges) - 1
    rows = []
    for b in range(len(bin_edges) - 1):
        mask = idx == b
        if not np.any(mask):
            continue
        rows.append((float(bin_edges[b]), float(bin_edges[b + 1]),
                     int(mask.sum()), float(cat.v_kms[mask].mean())))
    return rows
