"""Campaign dispatch strategies.

Four cooperating pieces:

* fast ships sprint to a truncated sector near the rim (two impulses),
* motherships chain up to three steering burns, dropping a settlement
  pod at each flyby,
* settler ships branch outward from every newly settled star in
  generational waves, three ships per star,
* all target selection funnels through the momentum-shell search:
  candidates are ranked by how close their (time-invariant) angular
  momentum vector sits to the departing ship's.

Transfers are closed with the shooting solver; settler transfers go
through the min-time two-segment planner.  Every committed solution
re-propagates cleanly — the validator in the tree module holds the
whole campaign to that standard.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .bvp import ShootingOptions, coast_guess, shooting_solve
from .catalog import SOL_ID, StarCatalog, T_MAX
from .dynamics import Impulse, RotationCurve, ShipState, in_plane_direction_offset, propagate
from .errors import InfeasibleError
from .events import Event, EventLog
from .tree import (
    BudgetSpec,
    FASTSHIP_BUDGET,
    MOTHERSHIP_BUDGET,
    POD_BUDGET,
    SETTLER_BUDGET,
    SettlementTree,
)

log = logging.getLogger(__name__)

__all__ = [
    "BudgetSpec",
    "MOTHERSHIP_BUDGET",
    "POD_BUDGET",
    "FASTSHIP_BUDGET",
    "SETTLER_BUDGET",
    "FastShipParams",
    "MothershipParams",
    "SettlerParams",
    "MomentumSearchOptions",
    "TransferSolution",
    "MinTimeResult",
    "CampaignResult",
    "closest_momentum_star",
    "min_time_transfer",
    "fast_ship_select",
    "mothership_run",
    "settler_campaign",
    "run_campaign",
    "campaign_events",
]

T_GUARD = 89.5  # Myr, scheduling guard below the 90 Myr window end
TOF_STEP = 0.5  # Myr, flight-time grid used by the min-time sweep

# Propagation tolerance for the settler min-time sweep, the solver-call
# hot path.  Looser than the validation default: over the short settler
# arcs the extra drift stays orders of magnitude inside the arrival
# threshold the checker enforces.  Fast-ship and mothership arcs run
# much longer, so those solves keep the tight default.
PLAN_PROP_TOL = 1e-10


@dataclass(frozen=True)
class FastShipParams:
    """Departure epoch plus the annular sector to hunt in."""

    t_departure: float
    r_min: float
    r_max: float
    theta_min: float
    theta_max: float

    def __post_init__(self):
        if not self.r_min < self.r_max:
            raise ValueError("need r_min < r_max")
        if not self.theta_min < self.theta_max:
            raise ValueError("need theta_min < theta_max")


@dataclass(frozen=True)
class MothershipParams:
    """Departure epoch plus the per-leg nominal burn plan.

    dv_mag[i] and dtheta[i] shape the nominal post-burn velocity used to
    pick leg i's target; t_coast[i] is the planned coasting time after
    burn i.
    """

    t_departure: float
    t_coast: tuple
    dv_mag: tuple
    dtheta: tuple

    def __post_init__(self):
        object.__setattr__(self, "t_coast", tuple(float(x) for x in self.t_coast))
        object.__setattr__(self, "dv_mag", tuple(float(x) for x in self.dv_mag))
        object.__setattr__(self, "dtheta", tuple(float(x) for x in self.dtheta))
        if not (len(self.t_coast) == len(self.dv_mag) == len(self.dtheta) == 3):
            raise ValueError("mothership plans are three-legged")
        if any(dv > MOTHERSHIP_BUDGET.per_impulse for dv in self.dv_mag):
            raise ValueError("nominal impulse above the 200 km/s cap")
        if sum(self.dv_mag) > MOTHERSHIP_BUDGET.cumulative:
            raise ValueError("nominal plan exceeds the 500 km/s cumulative cap")
        if any(t < MOTHERSHIP_BUDGET.min_spacing for t in self.t_coast):
            raise ValueError("coast times must allow 1 Myr impulse spacing")


@dataclass(frozen=True)
class SettlerParams:
    """Settler-wave knobs; caps mirror the vehicle budget by default.

    exclusion_window limits the momentum search's exclusion set to the
    most recent settlements (plus Sol); None — the default — excludes
    every settled star.  The windowed mode is an alternative
    frontier-collision heuristic; double settlement stays impossible
    either way because drawn targets are re-checked before flying.
    """

    delay: float = 2.5
    per_impulse_cap: float = 175.0
    cumulative_cap: float = 400.0
    ships_per_star: int = 3
    tof_guess: float = 5.0
    tof_growth: float = 1.0
    max_retries: int = 8
    max_generation: int = 20
    exclusion_window: int | None = None

    def __post_init__(self):
        if self.delay < SETTLER_BUDGET.settle_delay:
            raise ValueError(f"settler delay below the {SETTLER_BUDGET.settle_delay}"
                             " Myr vehicle minimum")
        if self.per_impulse_cap > SETTLER_BUDGET.per_impulse:
            raise ValueError("per-impulse cap above the vehicle limit")
        if self.cumulative_cap > SETTLER_BUDGET.cumulative:
            raise ValueError("cumulative cap above the vehicle limit")
        if self.ships_per_star > 3:
            raise ValueError("at most three settler ships per settled star")


@dataclass(frozen=True)
class MomentumSearchOptions:
    shell_width: float = 0.5  # kpc
    sweep_step_deg: float = 5.0  # angular enumeration granularity inside a shell


@dataclass
class TransferSolution:
    """One vehicle's planned transfer, expressed as timed impulses."""

    kind: str
    vehicle_id: str
    parent_star: int
    target_star: int
    t_depart: float
    t_arrival: float
    impulses: list  # of Impulse
    trajectory: tuple | None = None  # optional (times, pos, vel) samples
    evaluations: list = field(default_factory=list, repr=False)  # selection audit

    @property
    def dv_total(self):
        return float(sum(imp.magnitude for imp in self.impulses))


# ---------------------------------------------------------------------
# Momentum-shell target search
# ---------------------------------------------------------------------


def closest_momentum_star(catalog: StarCatalog, s: ShipState, settled,
                          opts: MomentumSearchOptions | None = None,
                          epoch: float | None = None):
    """Id of the open star whose angular momentum best matches s's.

    The hunt expands outward from the ship: radial shells of width
    shell_width around the ship's radius, crossed with polar-angle slots
    of width sweep_step_deg around the ship's direction, swept ahead of
    the ship before behind (+offset before -offset).  The first occupied
    (shell, angle slot) cell wins, and inside it the star minimizing the
    Euclidean gap between angular-momentum vectors (ties to the lowest
    id).  Candidate angles are read at `epoch` (the ship state's own
    time by default — callers probing a later arrival pass that epoch).
    `settled` is a set of ids or a boolean exclusion mask.  None when
    everything is excluded.
    """
    opts = opts or MomentumSearchOptions()
    if isinstance(settled, np.ndarray):
        excluded = settled.copy()
    else:
        excluded = np.zeros(len(catalog), dtype=bool)
        if settled:
            excluded[np.isin(catalog.ids, list(settled))] = True
    if SOL_ID in catalog:
        excluded[catalog.index_of(SOL_ID)] = True  # home is never a target

    open_mask = ~excluded
    if not np.any(open_mask):
        return None

    l_ref = np.cross(s.pos, s.vel)
    r_ref = float(np.linalg.norm(s.pos))
    theta_ref = math.degrees(math.atan2(s.pos[1], s.pos[0]))
    pos_all, _ = catalog.states_at(s.t if epoch is None else epoch)
    dtheta = np.degrees(np.arctan2(pos_all[:, 1], pos_all[:, 0])) - theta_ref
    dtheta = (dtheta + 180.0) % 360.0 - 180.0  # wrapped to (-180, 180]

    shell = np.floor(np.abs(catalog.r - r_ref) / opts.shell_width).astype(int)
    slot = np.floor(np.abs(dtheta) / opts.sweep_step_deg).astype(int)
    behind = (dtheta < 0).astype(int)

    members = np.flatnonzero(open_mask)
    keys = (shell[members], slot[members], behind[members])
    first = min(zip(*keys))
    cell = members[(keys[0] == first[0]) & (keys[1] == first[1])
                   & (keys[2] == first[2])]
    lm = catalog.angular_momenta()
    d2 = np.sum((lm[cell] - l_ref) ** 2, axis=1)
    best = cell[np.lexsort((catalog.ids[cell], d2))[0]]
    return int(catalog.ids[best])


# ---------------------------------------------------------------------
# Min-time two-segment transfer
# ---------------------------------------------------------------------


@dataclass
class MinTimeResult:
    converged: bool
    tof: float = math.nan
    tof_split: tuple = (math.nan, math.nan)
    dv1: np.ndarray | None = None
    dv2: np.ndarray | None = None
    dv3: np.ndarray | None = None
    v0: np.ndarray | None = None  # post-burn departure velocity, km/s
    accepted: list = field(default_factory=list)  # grid tofs that closed within caps

    @property
    def dv_total(self):
        return float(sum(np.linalg.norm(d) for d in (self.dv1, self.dv2, self.dv3)))


def _caps_ok(dvs, per_cap, cum_cap):
    mags = [float(np.linalg.norm(d)) for d in dvs]
    return max(mags) <= per_cap and sum(mags) <= cum_cap


def min_time_transfer(curve: RotationCurve, s0: ShipState, target_state_fn,
                      tof_guess, per_impulse_cap=175.0, cumulative_cap=400.0,
                      step=TOF_STEP, tof_floor=None, t_limit=T_MAX,
                      refine_split=True, tol_pos=1e-6,
                      prop_tol=PLAN_PROP_TOL) -> MinTimeResult:
    """Shortest feasible two-segment transfer at or below tof_guess.

    The flight is a departure burn, an optional mid-course burn at the
    segment boundary, and a rendezvous burn.  Candidate flight times on
    a `step` grid are swept upward from tof_floor (default: one step);
    each is closed with the shooting solver as a single coast (mid burn
    zero) and the first one whose impulses fit every cap is the grid
    minimum, so the sweep stops there.  If no grid point at or below
    tof_guess closes within the caps, the best near-miss whose only sin
    is the per-impulse cap is refined by a penalty search over the mid
    burn's position and the time split, spreading impulse across three
    burns.  Returns converged=False when even that fails — callers
    typically retry with a larger guess (and pass tof_floor to skip the
    range already swept).
    """
    if tof_guess <= 0:
        raise InfeasibleError("tof_guess must be positive")
    floor = step if tof_floor is None else max(step, tof_floor)
    sopts = ShootingOptions(tol_pos=tol_pos, prop_tol=prop_tol)
    near_miss = None  # (violation, tof, solve, target)

    tof = math.ceil(floor / step - 1e-9) * step
    warm = None
    while tof <= tof_guess + 1e-9:
        if s0.t + tof > t_limit + 1e-12:
            break
        target = target_state_fn(s0.t + tof)
        guess = warm if warm is not None else coast_guess(curve, s0.pos, target.pos, tof)
        solve = shooting_solve(curve, s0.pos, target.pos, tof, guess, sopts)
        if solve.converged:
            warm = solve.v0
            dv1 = solve.v0 - s0.vel
            dv3 = target.vel - solve.vf
            dv2 = np.zeros(3)
            if _caps_ok((dv1, dv2, dv3), per_impulse_cap, cumulative_cap):
                return MinTimeResult(
                    converged=True, tof=tof, tof_split=(0.5 * tof, 0.5 * tof),
                    dv1=dv1, dv2=dv2, dv3=dv3, v0=solve.v0, accepted=[tof])
            mags = [np.linalg.norm(dv1), np.linalg.norm(dv3)]
            violation = (max(0.0, max(mags) - per_impulse_cap)
                         + max(0.0, sum(mags) - cumulative_cap))
            # a mid burn redistributes impulse, so it can only rescue
            # cases where the per-impulse cap is the sole offender
            splittable = sum(mags) <= cumulative_cap
            if splittable and (near_miss is None or violation < near_miss[0]):
                near_miss = (violation, tof, solve, target)
        tof += step
    if not refine_split or near_miss is None:
        return MinTimeResult(converged=False)
    return _refine_split(curve, s0, near_miss, per_impulse_cap, cumulative_cap, sopts)


class _SplitFound(Exception):
    """Raised inside the penalty search once a feasible split appears."""

    def __init__(self, x):
        self.x = x


def _refine_split(curve, s0, near_miss, per_cap, cum_cap, sopts):
    """Penalty search over (mid position, time split) at the best
    near-miss flight time, redistributing impulse across three burns.

    The search itself closes legs at a loose position tolerance and
    stops at the first cap-satisfying point; the winner is then
    re-closed at the caller's tolerance before being returned.
    """
    _, tof, solve, target = near_miss
    mid0 = propagate(curve, ShipState(s0.pos, solve.v0, s0.t), 0.5 * tof).pos
    loose = ShootingOptions(tol_pos=max(sopts.tol_pos, 1e-4),
                            max_iter=sopts.max_iter, prop_tol=sopts.prop_tol)
    warm = {"a": solve.v0, "b": None}

    def legs(x, opts):
        mid = x[:3]
        split = min(max(x[3], 0.15), 0.85)
        t1, t2 = split * tof, (1.0 - split) * tof
        a = shooting_solve(curve, s0.pos, mid, t1, warm["a"], opts)
        if not a.converged:
            return None
        warm["a"] = a.v0
        b_guess = warm["b"] if warm["b"] is not None else coast_guess(
            curve, mid, target.pos, t2)
        b = shooting_solve(curve, mid, target.pos, t2, b_guess, opts)
        if not b.converged:
            return None
        warm["b"] = b.v0
        dv1 = a.v0 - s0.vel
        dv2 = b.v0 - a.vf
        dv3 = target.vel - b.vf
        return (t1, t2), (dv1, dv2, dv3)

    def penalty(x):
        closed = legs(x, loose)
        if closed is None:
            return 1e6
        _, dvs = closed
        mags = [float(np.linalg.norm(d)) for d in dvs]
        pen = (sum(max(0.0, m - per_cap) for m in mags)
               + max(0.0, sum(mags) - cum_cap))
        if pen <= 1e-9:
            raise _SplitFound(x)
        return pen

    x0 = np.array([*mid0, 0.5])
    try:
        minimize(penalty, x0, method="Nelder-Mead",
                 options={"maxiter": 120, "xatol": 1e-4, "fatol": 1e-3})
        return MinTimeResult(converged=False)
    except _SplitFound as hit:
        closed = legs(hit.x, sopts)
    if closed is None:
        return MinTimeResult(converged=False)
    (t1, t2), (dv1, dv2, dv3) = closed
    if not _caps_ok((dv1, dv2, dv3), per_cap, cum_cap):
        return MinTimeResult(converged=False)
    return MinTimeResult(converged=True, tof=tof, tof_split=(t1, t2),
                         dv1=dv1, dv2=dv2, dv3=dv3, v0=s0.vel + dv1,
                         accepted=[tof])


# ---------------------------------------------------------------------
# Fast ships
# ---------------------------------------------------------------------


def _planar_angle_deg(pos):
    return math.degrees(math.atan2(pos[1], pos[0]))


def fast_ship_select(catalog: StarCatalog, params: FastShipParams, settled,
                     vehicle_id="FS", tof_step=2.5, threads=None) -> TransferSolution:
    """Minimum-flight-time rim settlement inside the params sector.

    Every star whose radius sits in the sector band is probed at growing
    flight times until its two-burn transfer fits the 1500 km/s
    allowance and it lies inside the angular window at arrival.  The
    earliest-arriving candidate wins (ties to the lowest id); the
    (star, tof) evaluation log rides along on the result.  Raises
    InfeasibleError when the band is empty or nothing closes before the
    time guard.
    """
    t0 = params.t_departure
    sol = catalog.ship_state(SOL_ID, t0)
    mask = (catalog.r >= params.r_min) & (catalog.r <= params.r_max)
    if settled:
        mask &= ~np.isin(catalog.ids, list(settled))
    cand_ids = [int(i) for i in catalog.ids[mask]]
    if not cand_ids:
        raise InfeasibleError("fast-ship sector holds no unsettled stars")

    def probe(star_id):
        tof = tof_step
        while t0 + tof <= T_GUARD:
            t_arr = t0 + tof
            pos_t, vel_t = catalog.star_state(star_id, t_arr)
            if params.theta_min <= _planar_angle_deg(pos_t) <= params.theta_max:
                solve = shooting_solve(catalog.curve, sol.pos, pos_t, tof,
                                       coast_guess(catalog.curve, sol.pos, pos_t, tof))
                if solve.converged:
                    dv1 = solve.v0 - sol.vel
                    dv2 = vel_t - solve.vf
                    total = float(np.linalg.norm(dv1) + np.linalg.norm(dv2))
                    if total <= FASTSHIP_BUDGET.cumulative:
                        return tof, dv1, dv2
            tof += tof_step
        return None

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            probed = list(pool.map(probe, cand_ids))
    else:
        probed = [probe(i) for i in cand_ids]

    evaluations = []
    feasible = []
    for star_id, hit in zip(cand_ids, probed):
        evaluations.append((star_id, None if hit is None else hit[0]))
        if hit is not None:
            feasible.append((hit[0], star_id, hit[1], hit[2]))
    if not feasible:
        raise InfeasibleError("no fast-ship candidate closes before the time guard")
    feasible.sort(key=lambda row: (row[0], row[1]))
    tof, star_id, dv1, dv2 = feasible[0]
    return TransferSolution(
        kind="fastship", vehicle_id=vehicle_id, parent_star=SOL_ID,
        target_star=star_id, t_depart=t0, t_arrival=t0 + tof,
        impulses=[Impulse(t0, dv1), Impulse(t0 + tof, dv2)],
        evaluations=evaluations)


# ---------------------------------------------------------------------
# Motherships
# ---------------------------------------------------------------------


def mothership_run(catalog: StarCatalog, params: MothershipParams, settled,
                   vehicle_id="MS", tof_step=2.5, max_violations=20,
                   search: MomentumSearchOptions | None = None):
    """Chain up to three flyby burns, dropping a pod at each target.

    Per leg: the nominal control burn (magnitude + in-plane offset
    angle) defines a reference velocity; the momentum search picks the
    target that reference implies; the shooting solver then replaces the
    nominal burn with the exact one.  A leg retries at longer flight
    times whenever the exact burn or its pod's rendezvous busts a cap;
    the run stops after max_violations retries, when a burn would
    overdraw the 500 km/s allowance, or — after committing a leg — when
    no room is left before the time guard.

    Returns a list of (flyby TransferSolution, pod TransferSolution);
    raises InfeasibleError when nothing settles at all.
    """
    search = search or MomentumSearchOptions()
    settled = set(settled)
    ship = catalog.ship_state(SOL_ID, params.t_departure)
    total_impulse = 0.0
    violations = 0
    legs = []
    stop = False

    for leg in range(3):
        if stop:
            break
        t_dep = ship.t
        nominal = in_plane_direction_offset(ship.vel, params.dtheta[leg],
                                            params.dv_mag[leg])
        ref = ShipState(ship.pos, ship.vel + nominal, t_dep)
        tof = tof_step
        while True:
            t_arr = t_dep + tof
            if t_arr > T_GUARD:
                stop = True
                break
            # candidate angles are read at the trial arrival epoch, so a
            # longer tof can change which star the search proposes
            target = closest_momentum_star(catalog, ref, settled, search,
                                           epoch=t_arr)
            if target is not None:
                pos_t, vel_t = catalog.star_state(target, t_arr)
                solve = shooting_solve(catalog.curve, ship.pos, pos_t, tof, ref.vel)
                dv1 = solve.v0 - ship.vel
                dv2 = vel_t - solve.vf
                ok = (solve.converged
                      and np.linalg.norm(dv1) <= MOTHERSHIP_BUDGET.per_impulse
                      and np.linalg.norm(dv2) <= POD_BUDGET.per_impulse)
            else:
                ok = False
            if not ok:
                tof += tof_step
                violations += 1
                if violations > max_violations:
                    stop = True
                    break
                continue

            # the cumulative allowance is gated before committing so the
            # validator never sees an overdrawn vehicle
            if total_impulse + float(np.linalg.norm(dv1)) > MOTHERSHIP_BUDGET.cumulative:
                stop = True
                break

            flyby = TransferSolution(
                kind="mothership", vehicle_id=vehicle_id, parent_star=SOL_ID,
                target_star=target, t_depart=t_dep, t_arrival=t_arr,
                impulses=[Impulse(t_dep, dv1)])
            pod = TransferSolution(
                kind="pod", vehicle_id=f"{vehicle_id}-P{leg + 1}",
                parent_star=-1, target_star=target, t_depart=t_arr,
                t_arrival=t_arr, impulses=[Impulse(t_arr, dv2)])
            legs.append((flyby, pod))
            settled.add(target)
            total_impulse += float(np.linalg.norm(dv1))

            # the settlement stands; whether another leg fits is decided now
            if t_arr + 1.5 > T_GUARD:
                stop = True
                break
            # margin left in this leg's planned coast sets the next burn epoch
            t_next = t_arr + max(1.5, params.t_coast[leg] - tof)
            if t_next + tof_step > T_GUARD:
                stop = True
                break
            ship = propagate(catalog.curve,
                             ShipState(ship.pos, solve.v0, t_dep), t_next - t_dep)
            break

    if not legs:
        raise InfeasibleError(f"{vehicle_id}: no feasible flyby targets")
    return legs


# ---------------------------------------------------------------------
# Settler waves
# ---------------------------------------------------------------------


def settler_campaign(catalog: StarCatalog, seeds, params: SettlerParams | None = None,
                     search: MomentumSearchOptions | None = None,
                     on_generation=None) -> SettlementTree:
    """Generational expansion from the seed settlements.

    seeds: TransferSolutions of kind pod/fastship from the first phase;
    they become generation 1.  Each newly settled star launches up to
    ships_per_star settlers `delay` Myr after arrival; each settler
    targets its momentum-closest open star and flies the min-time
    two-segment transfer, growing the flight-time guess while any cap is
    violated.  Expansion ends at max_generation, at an empty wave, or at
    the 90 Myr horizon.  Returns the settlement tree (Sol at the root,
    seeds at generation 1, settler waves beyond).
    """
    params = params or SettlerParams()
    search = search or MomentumSearchOptions()
    tree = SettlementTree()
    reserved = np.zeros(len(catalog), dtype=bool)
    reserved[catalog.index_of(SOL_ID)] = True
    frontier = []
    for sol in seeds:
        tree.add(sol.target_star, 1, sol.t_arrival, SOL_ID,
                 sol.vehicle_id, sol.kind, sol.impulses)
        reserved[catalog.index_of(sol.target_star)] = True
        frontier.append((sol.t_arrival, sol.target_star))

    settled_order = [sid for _, sid in sorted(frontier)]

    def exclusion_mask():
        if params.exclusion_window is None:
            return reserved
        mask = np.zeros(len(catalog), dtype=bool)
        mask[catalog.index_of(SOL_ID)] = True
        for sid in settled_order[-params.exclusion_window:]:
            mask[catalog.index_of(sid)] = True
        return mask

    seq = 0
    generation = 1
    frontier.sort()
    while generation < params.max_generation and frontier:
        wave = []
        parked = []
        for t_settled, star_id in frontier:
            t_dep = t_settled + params.delay
            if t_dep >= T_MAX - 1.0:
                continue
            pos0, vel0 = catalog.star_state(star_id, t_dep)
            s0 = ShipState(pos0, vel0, t_dep)
            exhausted = False
            for _ship in range(params.ships_per_star):
                target = None
                for _redraw in range(8):
                    cand = closest_momentum_star(catalog, s0, exclusion_mask(), search)
                    if cand is None:
                        break
                    if reserved[catalog.index_of(cand)]:
                        # windowed exclusion can re-draw an old settlement;
                        # refresh its recency and draw again
                        settled_order.append(cand)
                        continue
                    target = cand
                    break
                if target is None:
                    exhausted = True
                    break
                reserved[catalog.index_of(target)] = True
                flight = _fly_settler(catalog, s0, target, params)
                if flight is None:
                    # out of reach from here; this ship forfeits and the
                    # star is released again after the wave
                    parked.append(target)
                    settled_order.append(target)
                    continue
                tof, result = flight
                seq += 1
                t_arr = t_dep + tof
                tree.add(target, generation + 1, t_arr, star_id,
                         f"ST{seq}", "settler", _settler_impulses(t_dep, result))
                settled_order.append(target)
                wave.append((t_arr, target))
            if exhausted and not np.any(~reserved):
                break
        for sid in parked:
            reserved[catalog.index_of(sid)] = False
            settled_order.remove(sid)
        if on_generation is not None:
            on_generation(generation, sorted(wave))
        frontier = sorted(wave)
        generation += 1
    return tree


def _settler_impulses(t_dep, result: MinTimeResult):
    imps = [Impulse(t_dep, result.dv1)]
    if float(np.linalg.norm(result.dv2)) > 0.0:
        imps.append(Impulse(t_dep + result.tof_split[0], result.dv2))
    imps.append(Impulse(t_dep + result.tof, result.dv3))
    return imps


def _fly_settler(catalog: StarCatalog, s0: ShipState, target, params: SettlerParams):
    """Grow the flight-time guess until the min-time planner closes."""

    def target_state(t):
        pos, vel = catalog.star_state(target, t)
        return ShipState(pos, vel, t)

    guess = params.tof_guess
    floor = None
    for attempt in range(params.max_retries + 1):
        clamped = False
        if s0.t + guess > T_MAX:
            guess = T_MAX - s0.t
            clamped = True
            if floor is not None and guess <= floor:
                return None
        res = min_time_transfer(
            catalog.curve, s0, target_state, guess,
            per_impulse_cap=params.per_impulse_cap,
            cumulative_cap=params.cumulative_cap,
            tof_floor=floor, t_limit=T_MAX,
            refine_split=(attempt == params.max_retries or clamped))
        if res.converged:
            return res.tof, res
        if clamped:
            return None
        # next attempt resumes just past the range already swept
        floor = guess + TOF_STEP
        guess += params.tof_growth
    return None


# ---------------------------------------------------------------------
# Full campaign
# ---------------------------------------------------------------------


@dataclass
class CampaignResult:
    tree: SettlementTree
    events: EventLog
    fast_ships: list
    motherships: list  # list of per-ship leg lists


def run_campaign(catalog: StarCatalog, fast_ships, motherships,
                 settler: SettlerParams | None = None,
                 search: MomentumSearchOptions | None = None,
                 threads: int | None = None, tof_step=2.5,
                 on_generation=None) -> CampaignResult:
    """Fast ships, then motherships, then settler waves; one event log.

    fast_ships / motherships are parameter lists (one entry per
    vehicle).  Fast-ship and mothership settlements seed generation 1;
    the settler campaign expands from there.  Raises InfeasibleError if
    generation 1 comes up empty.  Deterministic for fixed inputs
    regardless of `threads`, which only fans out independent candidate
    probes.
    """
    settler = settler or SettlerParams()
    settled = set()
    seeds = []
    fs_solutions = []
    for i, params in enumerate(fast_ships, start=1):
        try:
            sol = fast_ship_select(catalog, params, settled,
                                   vehicle_id=f"FS{i}", tof_step=tof_step,
                                   threads=threads)
        except InfeasibleError as exc:
            log.warning("fast ship %d found no target: %s", i, exc)
            continue
        fs_solutions.append(sol)
        seeds.append(sol)
        settled.add(sol.target_star)

    ms_runs = []
    for i, params in enumerate(motherships, start=1):
        try:
            legs = mothership_run(catalog, params, settled,
                                  vehicle_id=f"MS{i}", tof_step=tof_step)
        except InfeasibleError as exc:
            log.warning("mothership %d settled nothing: %s", i, exc)
            continue
        ms_runs.append(legs)
        for _flyby, pod in legs:
            seeds.append(pod)
            settled.add(pod.target_star)

    if not seeds:
        raise InfeasibleError("no generation-1 settlements; campaign is infeasible")

    tree = settler_campaign(catalog, seeds, settler, search, on_generation)
    events = campaign_events(tree, ms_runs)
    return CampaignResult(tree=tree, events=events,
                          fast_ships=fs_solutions, motherships=ms_runs)


def campaign_events(tree: SettlementTree, mothership_runs=()) -> EventLog:
    """Flatten a campaign into the canonical event log.

    Mothership flyby burns come from the run legs (motherships settle
    nothing themselves); every settlement vehicle's burns come from its
    tree node.  Rows are ordered by (time, vehicle id) and numbered.
    """
    rows = []
    for legs in mothership_runs:
        for flyby, _pod in legs:
            for imp in flyby.impulses:
                rows.append((imp.t, flyby.vehicle_id, flyby.kind,
                             flyby.parent_star, flyby.target_star, imp.dv, "flyby"))
    for node in tree.nodes():
        parent = -1 if node.kind == "pod" else node.parent
        for k, imp in enumerate(node.impulses):
            note = "settle" if k == len(node.impulses) - 1 else ""
            rows.append((imp.t, node.vehicle_id, node.kind, parent,
                         node.star, imp.dv, note))
    rows.sort(key=lambda r: (r[0], r[1]))
    out = EventLog()
    for i, (t, vid, kind, parent, target, dv, note) in enumerate(rows):
        out.append(Event(event_id=i, vehicle_id=vid, vehicle_kind=kind,
                         parent_star=parent, target_star=target,
                         t_myr=t, dv=dv, note=note))
    return out
