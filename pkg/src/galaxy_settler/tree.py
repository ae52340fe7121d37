"""Settlement tree and the independent constraint validator.

The tree records settlement lineage (who settled what, when, launched
from where).  The validator is the artifact's referee: it consumes only
the event log and the catalog, reconstructs every vehicle's trajectory
with the propagator, and checks the full rulebook — impulse caps and
counts, spacing, settle-to-departure delays, fan-out limits, the time
window, and that every claimed settlement actually rendezvouses with
its star.  It shares no code with the strategy solvers beyond the
propagator itself.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import SOL_ID, StarCatalog, T_MAX
from .dynamics import apply_impulse, propagate
from .errors import GalaxyError
from .events import EventLog
from .units import KMS_PER_KPC_MYR

__all__ = [
    "BudgetSpec",
    "MOTHERSHIP_BUDGET",
    "POD_BUDGET",
    "FASTSHIP_BUDGET",
    "SETTLER_BUDGET",
    "SETTLEMENT_ALLOWANCE",
    "SettlementNode",
    "SettlementTree",
    "RuleResult",
    "Settlement",
    "ValidationReport",
    "validate",
    "generation_stats",
    "settlement_generations",
]


@dataclass(frozen=True)
class BudgetSpec:
    """Per-vehicle impulse allowances."""

    per_impulse: float  # km/s
    cumulative: float  # km/s
    max_impulses: int
    min_spacing: float = 0.0  # Myr between impulses of one vehicle
    settle_delay: float = 0.0  # Myr from settlement to allowed departure

    def __post_init__(self):
        if min(self.per_impulse, self.cumulative) <= 0 or self.max_impulses <= 0:
            raise ValueError("budget caps must be positive")


MOTHERSHIP_BUDGET = BudgetSpec(per_impulse=200.0, cumulative=500.0, max_impulses=3,
                               min_spacing=1.0)
POD_BUDGET = BudgetSpec(per_impulse=300.0, cumulative=300.0, max_impulses=1)
FASTSHIP_BUDGET = BudgetSpec(per_impulse=1500.0, cumulative=1500.0, max_impulses=2)
SETTLER_BUDGET = BudgetSpec(per_impulse=175.0, cumulative=400.0, max_impulses=5,
                            settle_delay=2.0)

BUDGETS = {
    "mothership": MOTHERSHIP_BUDGET,
    "pod": POD_BUDGET,
    "fastship": FASTSHIP_BUDGET,
    "settler": SETTLER_BUDGET,
}

# allowance credited to the merit denominator's dv_max ledger per
# settlement, keyed by the settling vehicle's kind; mothership burns
# count toward dv_used but earn no allowance of their own
SETTLEMENT_ALLOWANCE = {"pod": 300.0, "fastship": 1500.0, "settler": 400.0}

MAX_SETTLERS_PER_STAR = 3


# ---------------------------------------------------------------------
# Settlement tree
# ---------------------------------------------------------------------


@dataclass
class SettlementNode:
    star: int
    generation: int
    t_settled: float
    parent: int | None  # parent star id; None only for the root
    vehicle_id: str
    kind: str  # root | pod | fastship | settler
    impulses: list = field(default_factory=list)


class SettlementTree:
    """Rooted settlement lineage; Sol is generation 0."""

    def __init__(self, root_star: int = SOL_ID):
        root = SettlementNode(star=root_star, generation=0, t_settled=0.0,
                              parent=None, vehicle_id="SOL", kind="root")
        self._nodes = {root_star: root}
        self._order = [root_star]
        self.root = root_star

    def add(self, star, generation, t_settled, parent, vehicle_id, kind, impulses):
        if star in self._nodes:
            raise GalaxyError(f"star {star} settled twice")
        if parent not in self._nodes:
            raise GalaxyError(f"parent star {parent} of {star} is not settled")
        if t_settled <= self._nodes[parent].t_settled and parent != self.root:
            raise GalaxyError(f"star {star} settled before its parent {parent}")
        node = SettlementNode(star, generation, t_settled, parent,
                              vehicle_id, kind, list(impulses))
        self._nodes[star] = node
        self._order.append(star)
        return node

    def __len__(self):
        return len(self._order) - 1  # the root is not a settlement

    def __contains__(self, star):
        return star in self._nodes

    def node(self, star) -> SettlementNode:
        return self._nodes[star]

    def nodes(self):
        """Settlement nodes in addition order, root excluded."""
        return [self._nodes[s] for s in self._order[1:]]

    def children(self, star):
        return [n for n in self.nodes() if n.parent == star]

    @property
    def max_generation(self):
        return max((n.generation for n in self.nodes()), default=0)

    def settled_ids(self):
        return list(self._order[1:])


def generation_stats(tree: SettlementTree):
    """Rows of (generation, newly settled, cumulative), generation >= 1."""
    counts = {}
    for node in tree.nodes():
        counts[node.generation] = counts.get(node.generation, 0) + 1
    rows = []
    cumulative = 0
    for gen in sorted(counts):
        cumulative += counts[gen]
        rows.append((gen, counts[gen], cumulative))
    return rows


def settlement_generations(settlements) -> dict:
    """Star id -> generation, from referee Settlement rows.

    Pod and fast-ship settlements seed generation 1; a settler's
    generation is its parent star's plus one.  Expects a validated
    log's rows (parents settle before children there); Sol maps to 0.
    """
    gen = {SOL_ID: 0}
    for s in sorted(settlements, key=lambda s: (s.t_myr, s.vehicle_id)):
        if s.kind in ("pod", "fastship"):
            gen[s.star] = 1
        elif s.parent_star in gen:
            gen[s.star] = gen[s.parent_star] + 1
        else:
            raise GalaxyError(f"settler {s.vehicle_id}: parent star "
                              f"{s.parent_star} has no settlement")
    return gen


# ---------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------


@dataclass
class RuleResult:
    rule: str
    passed: bool
    failures: list = field(default_factory=list)  # offending event/vehicle refs


@dataclass(frozen=True)
class Settlement:
    """One registered settlement, as reconstructed by the referee."""

    star: int
    t_myr: float
    vehicle_id: str
    kind: str
    parent_star: int


@dataclass
class ValidationReport:
    rules: list
    n_settled: int = 0
    dv_used: float = 0.0
    dv_max: float = 0.0
    settlements: list = field(default_factory=list)  # Settlement records, by time

    @property
    def valid(self):
        return all(r.passed for r in self.rules)

    def rule(self, name) -> RuleResult:
        for r in self.rules:
            if r.rule == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "valid": self.valid,
            "totals": {"N": self.n_settled, "dv_used": self.dv_used,
                       "dv_max": self.dv_max},
            "rules": [{"rule": r.rule, "passed": r.passed,
                       "failures": list(r.failures)} for r in self.rules],
            "settlements": [{"star": s.star, "t_myr": s.t_myr,
                             "vehicle_id": s.vehicle_id, "kind": s.kind,
                             "parent_star": s.parent_star}
                            for s in self.settlements],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


_RULES = (
    "epoch-window",
    "consistency",
    "impulse-count",
    "per-impulse-cap",
    "cumulative-cap",
    "impulse-spacing",
    "pod-host",
    "arrival-match",
    "unique-settlement",
    "settler-delay",
    "settler-fanout",
)


class _Checker:
    def __init__(self):
        self.results = {name: RuleResult(name, True) for name in _RULES}

    def fail(self, rule, ref):
        res = self.results[rule]
        res.passed = False
        res.failures.append(ref)

    @property
    def any_failed(self):
        return any(not r.passed for r in self.results.values())

    def report(self):
        rules = [self.results[name] for name in _RULES]
        for r in rules:
            r.failures.sort()
        return rules


def _static_vehicle_checks(chk, vehicle_id, evs):
    kind = evs[0].vehicle_kind
    budget = BUDGETS[kind]
    if any(e.vehicle_kind != kind for e in evs):
        chk.fail("consistency", f"{vehicle_id}: mixed vehicle kinds")
    if kind != "mothership" and any(e.target_star != evs[0].target_star for e in evs):
        # motherships visit one target per flyby leg; settlement
        # vehicles work toward exactly one star
        chk.fail("consistency", f"{vehicle_id}: mixed target stars")
    if any(e.parent_star != evs[0].parent_star for e in evs):
        chk.fail("consistency", f"{vehicle_id}: mixed parent stars")
    if len(evs) > budget.max_impulses:
        chk.fail("impulse-count",
                 f"{vehicle_id}: {len(evs)} impulses > {budget.max_impulses}")
    for e in evs:
        if e.dv_mag > budget.per_impulse + 1e-9:
            chk.fail("per-impulse-cap",
                     f"{vehicle_id} event {e.event_id}: "
                     f"{e.dv_mag:.3f} km/s > {budget.per_impulse}")
    total = sum(e.dv_mag for e in evs)
    if total > budget.cumulative + 1e-9:
        chk.fail("cumulative-cap",
                 f"{vehicle_id}: {total:.3f} km/s > {budget.cumulative}")
    if budget.min_spacing > 0:
        for a, b in zip(evs, evs[1:]):
            if b.t_myr - a.t_myr < budget.min_spacing - 1e-9:
                chk.fail("impulse-spacing",
                         f"{vehicle_id} events {a.event_id},{b.event_id}: "
                         f"spacing {b.t_myr - a.t_myr:.3f} Myr < {budget.min_spacing}")


def _coast_and_burn(catalog, state, evs):
    """Run a vehicle through its burns; returns post-final-burn state."""
    for e in evs:
        if e.t_myr > state.t:
            state = propagate(catalog.curve, state, e.t_myr - state.t)
        state = apply_impulse(state, e.dv)
    return state


def _arrival_matches(catalog, state, star, pos_tol, vel_tol):
    pos_t, vel_t = catalog.star_state(star, state.t)
    return (float(np.linalg.norm(state.pos - pos_t)) <= pos_tol
            and float(np.linalg.norm(state.vel - vel_t)) <= vel_tol)


def validate(events: EventLog, catalog: StarCatalog, tol_pos: float = 1e-6,
             threads: int | None = None, fail_fast: bool = False) -> ValidationReport:
    """Referee an event log against the full rulebook.

    Pure function of (events, catalog, tolerances): static budget checks
    first, then trajectory reconstruction per vehicle — motherships
    before their pods, since a pod inherits its host's flyby state.
    `fail_fast` stops after the first failing rule group (the report is
    then partial but still names a genuine violation).
    """
    chk = _Checker()
    pos_tol = 10.0 * tol_pos
    vel_tol = 10.0 * tol_pos * KMS_PER_KPC_MYR

    unreconstructible = set()  # vehicles with epochs the ephemeris can't reach
    for e in events:
        if not (0.0 <= e.t_myr <= T_MAX):
            chk.fail("epoch-window",
                     f"{e.vehicle_id} event {e.event_id}: t={e.t_myr:.3f} Myr")
            unreconstructible.add(e.vehicle_id)

    vehicles = events.by_vehicle()
    for vehicle_id, evs in vehicles.items():
        _static_vehicle_checks(chk, vehicle_id, evs)
    if fail_fast and chk.any_failed:
        return ValidationReport(chk.report())

    # settlement registry: star -> (t_settled, vehicle_id, kind)
    registry = {SOL_ID: (0.0, "SOL", "root")}
    order = {"mothership": 0, "fastship": 1, "pod": 2, "settler": 3}
    sorted_ids = sorted(vehicles, key=lambda v: (order[vehicles[v][0].vehicle_kind], v))

    # pass 1: motherships; record flyby states at their pods' release epochs
    release_epochs = {}
    for vehicle_id, evs in vehicles.items():
        if evs[0].vehicle_kind == "pod":
            host = evs[0].host_vehicle()
            if host not in vehicles or vehicles[host][0].vehicle_kind != "mothership":
                chk.fail("pod-host", f"{vehicle_id}: no mothership host {host!r}")
                continue
            release_epochs.setdefault(host, []).append((evs[0].t_myr, vehicle_id))
    if fail_fast and chk.any_failed:
        return ValidationReport(chk.report())

    handoff = {}  # pod vehicle_id -> ShipState at release

    def reconstruct_mothership(vehicle_id):
        evs = vehicles[vehicle_id]
        state = catalog.ship_state(evs[0].parent_star, evs[0].t_myr)
        marks = sorted(release_epochs.get(vehicle_id, []))
        states = {}
        for e in evs:
            while marks and marks[0][0] <= e.t_myr:
                t_rel, pod_id = marks.pop(0)
                seg = propagate(catalog.curve, state, t_rel - state.t)
                states[pod_id] = seg
                state = seg
            state = _coast_and_burn(catalog, state, [e])
        for t_rel, pod_id in marks:
            state = propagate(catalog.curve, state, t_rel - state.t)
            states[pod_id] = state
        return states

    ms_ids = [v for v in sorted_ids
              if vehicles[v][0].vehicle_kind == "mothership"
              and v not in unreconstructible]
    if threads and threads > 1 and len(ms_ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for states in pool.map(reconstruct_mothership, ms_ids):
                handoff.update(states)
    else:
        for vid in ms_ids:
            handoff.update(reconstruct_mothership(vid))

    # pass 2: settlement vehicles, re-propagated leg by leg
    settlements = []
    for vehicle_id in sorted_ids:
        if vehicle_id in unreconstructible:
            continue  # flagged above; no ephemeris beyond the window
        evs = vehicles[vehicle_id]
        kind = evs[0].vehicle_kind
        if kind == "mothership":
            continue
        target = evs[0].target_star
        if kind == "pod":
            if vehicle_id not in handoff:
                continue  # host missing or skipped; already flagged
            state = handoff[vehicle_id]
            state = _coast_and_burn(catalog, state, evs)
        else:
            origin = evs[0].parent_star
            if origin not in catalog:
                chk.fail("consistency", f"{vehicle_id}: unknown origin star {origin}")
                continue
            state = catalog.ship_state(origin, evs[0].t_myr)
            state = _coast_and_burn(catalog, state, evs)
        if target == SOL_ID:
            chk.fail("unique-settlement", f"{vehicle_id}: Sol is not a settlement target")
            continue
        if target not in catalog:
            chk.fail("consistency", f"{vehicle_id}: unknown target star {target}")
            continue
        if not _arrival_matches(catalog, state, target, pos_tol, vel_tol):
            chk.fail("arrival-match",
                     f"{vehicle_id}: final state misses star {target} at "
                     f"t={state.t:.3f} Myr")
            continue
        settlements.append((state.t, vehicle_id, kind, target, evs[0].parent_star))
        if fail_fast and chk.any_failed:
            return ValidationReport(chk.report())

    settlements.sort()
    registered = []
    for t_settle, vehicle_id, kind, target, parent in settlements:
        if target in registry:
            chk.fail("unique-settlement",
                     f"{vehicle_id}: star {target} already settled by "
                     f"{registry[target][1]}")
        else:
            registry[target] = (t_settle, vehicle_id, kind)
            registered.append(Settlement(target, t_settle, vehicle_id, kind, parent))

    # settler lineage rules
    fanout = {}
    for vehicle_id in sorted_ids:
        evs = vehicles[vehicle_id]
        if evs[0].vehicle_kind != "settler":
            continue
        parent = evs[0].parent_star
        fanout[parent] = fanout.get(parent, 0) + 1
        t_dep = evs[0].t_myr
        if parent not in registry:
            chk.fail("settler-delay",
                     f"{vehicle_id}: departs star {parent} which is never settled")
        elif t_dep < registry[parent][0] + SETTLER_BUDGET.settle_delay - 1e-9:
            chk.fail("settler-delay",
                     f"{vehicle_id}: departs {t_dep:.3f} Myr, parent {parent} "
                     f"settled {registry[parent][0]:.3f} Myr")
    for star, n in sorted(fanout.items()):
        if n > MAX_SETTLERS_PER_STAR:
            chk.fail("settler-fanout",
                     f"star {star}: {n} settler ships > {MAX_SETTLERS_PER_STAR}")

    dv_used = events.total_dv()
    dv_max = sum(SETTLEMENT_ALLOWANCE[kind]
                 for star, (_t, _v, kind) in registry.items() if star != SOL_ID)
    return ValidationReport(chk.report(), n_settled=len(registry) - 1,
                            dv_used=dv_used, dv_max=dv_max,
                            settlements=registered)
