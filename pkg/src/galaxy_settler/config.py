"""Run configuration: one JSON document drives a whole campaign.

The document has seven sections — rotation_curve, budgets, fast_ships,
motherships, settler, grid, solver_tolerances — each optional and
falling back to the packaged defaults (`data/default_config.json`,
which spells out the reference fast-ship and mothership control
parameters).  Budget overrides may only tighten the vehicle rulebook:
raising a cap above its hard limit is a configuration error, because a
log flown under a looser budget could never validate.

Unknown keys anywhere in the document are rejected outright; a typo'd
knob silently reverting to its default is worse than an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

from .dynamics import RotationCurve
from .errors import ConfigError, CurveDomainError
from .merit import GridSpec
from .strategies import (FastShipParams, MomentumSearchOptions,
                         MothershipParams, SettlerParams)
from .tree import BUDGETS, BudgetSpec

__all__ = [
    "SolverTolerances",
    "CampaignConfig",
    "default_config_text",
    "load_config",
    "parse_config",
]


@dataclass(frozen=True)
class SolverTolerances:
    """Solver and referee knobs exposed to the config file."""

    shooting_tol_pos: float = 1e-6  # kpc; transfer solves
    validation_tol_pos: float = 1e-6  # kpc; referee arrival threshold
    fastship_tof_step: float = 2.5  # Myr; fast-ship flight-time scan

    def __post_init__(self):
        if min(self.shooting_tol_pos, self.validation_tol_pos) <= 0:
            raise ConfigError("solver tolerances must be positive")
        if self.fastship_tof_step <= 0:
            raise ConfigError("fastship_tof_step must be positive")


@dataclass
class CampaignConfig:
    """Everything `run_campaign` and the referee need, parsed and checked."""

    curve: RotationCurve
    budgets: dict  # vehicle kind -> BudgetSpec, never looser than the rulebook
    fast_ships: list  # FastShipParams per ship
    motherships: list  # MothershipParams per ship
    settler: SettlerParams
    search: MomentumSearchOptions
    grid: GridSpec
    tolerances: SolverTolerances
    source: dict = field(default_factory=dict, repr=False)  # parsed document

    def with_max_generation(self, n: int) -> "CampaignConfig":
        if n < 1:
            raise ConfigError("max generation must be >= 1")
        return replace(self, settler=replace(self.settler, max_generation=n))


def default_config_text() -> str:
    return (resources.files("galaxy_settler") / "data" /
            "default_config.json").read_text()


def load_config(path=None) -> CampaignConfig:
    """Parse a config file; `None` loads the packaged defaults."""
    if path is None:
        text = default_config_text()
        where = "<default config>"
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        where = str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: not valid JSON ({exc})") from exc
    return parse_config(doc)


def parse_config(doc) -> CampaignConfig:
    """Build a checked CampaignConfig from a parsed JSON document.

    Missing sections fall back to the packaged defaults, so `{}` is a
    complete (reference) configuration.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    defaults = json.loads(default_config_text())
    merged = {**defaults, **doc}
    _reject_unknown(merged, _SECTIONS, "config")

    curve = _parse_curve(merged["rotation_curve"])
    budgets = _parse_budgets(merged["budgets"])
    fast_ships = _parse_fast_ships(merged["fast_ships"])
    motherships = _parse_motherships(merged["motherships"], budgets["mothership"])
    settler, search = _parse_settler(merged["settler"], budgets["settler"])
    grid = _parse_grid(merged["grid"])
    tolerances = _parse_tolerances(merged["solver_tolerances"])
    return CampaignConfig(curve=curve, budgets=budgets, fast_ships=fast_ships,
                          motherships=motherships, settler=settler,
                          search=search, grid=grid, tolerances=tolerances,
                          source=merged)


# ---------------------------------------------------------------------
# section parsers
# ---------------------------------------------------------------------

_SECTIONS = ("rotation_curve", "budgets", "fast_ships", "motherships",
             "settler", "grid", "solver_tolerances")

_BUDGET_KEYS = ("per_impulse", "cumulative", "max_impulses", "min_spacing",
                "settle_delay")


def _reject_unknown(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _number(section, key, where, default=None):
    val = section.get(key, default)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
    return float(val)


def _parse_curve(section) -> RotationCurve:
    _reject_unknown(section, ("kind", "v_kms", "knots", "coefficients",
                              "domain"), "rotation_curve")
    try:
        return RotationCurve.from_config(section)
    except (CurveDomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"rotation_curve: {exc}") from exc


def _parse_budgets(section) -> dict:
    _reject_unknown(section, BUDGETS, "budgets")
    out = {}
    for kind, hard in BUDGETS.items():
        override = section.get(kind, {})
        where = f"budgets.{kind}"
        _reject_unknown(override, _BUDGET_KEYS, where)
        spec = BudgetSpec(
            per_impulse=_number(override, "per_impulse", where, hard.per_impulse),
            cumulative=_number(override, "cumulative", where, hard.cumulative),
            max_impulses=int(_number(override, "max_impulses", where,
                                     hard.max_impulses)),
            min_spacing=_number(override, "min_spacing", where, hard.min_spacing),
            settle_delay=_number(override, "settle_delay", where,
                                 hard.settle_delay),
        )
        # tighten-only: a looser budget than the rulebook can never validate
        for attr, sense in (("per_impulse", "<="), ("cumulative", "<="),
                            ("max_impulses", "<="), ("min_spacing", ">="),
                            ("settle_delay", ">=")):
            got, cap = getattr(spec, attr), getattr(hard, attr)
            ok = got <= cap if sense == "<=" else got >= cap
            if not ok:
                raise ConfigError(
                    f"{where}.{attr} = {got:g} is looser than the vehicle "
                    f"limit {cap:g}")
        out[kind] = spec
    return out


def _parse_fast_ships(section) -> list:
    if not isinstance(section, list):
        raise ConfigError("fast_ships: expected a list")
    ships = []
    for i, entry in enumerate(section, start=1):
        where = f"fast_ships[{i}]"
        _reject_unknown(entry, ("t_departure", "r_min", "r_max",
                                "theta_min", "theta_max"), where)
        try:
            ships.append(FastShipParams(
                t_departure=_number(entry, "t_departure", where, 0.0),
                r_min=_number(entry, "r_min", where),
                r_max=_number(entry, "r_max", where),
                theta_min=_number(entry, "theta_min", where),
                theta_max=_number(entry, "theta_max", where),
            ))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return ships


def _parse_motherships(section, budget: BudgetSpec) -> list:
    if not isinstance(section, list):
        raise ConfigError("motherships: expected a list")
    ships = []
    for i, entry in enumerate(section, start=1):
        where = f"motherships[{i}]"
        _reject_unknown(entry, ("t_departure", "t_coast", "dv_mag", "dtheta"),
                        where)
        try:
            params = MothershipParams(
                t_departure=_number(entry, "t_departure", where, 0.0),
                t_coast=entry.get("t_coast", ()),
                dv_mag=entry.get("dv_mag", ()),
                dtheta=entry.get("dtheta", ()),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if any(dv > budget.per_impulse for dv in params.dv_mag):
            raise ConfigError(f"{where}: nominal impulse above the configured "
                              f"{budget.per_impulse:g} km/s cap")
        if sum(params.dv_mag) > budget.cumulative:
            raise ConfigError(f"{where}: nominal plan exceeds the configured "
                              f"{budget.cumulative:g} km/s cumulative cap")
        ships.append(params)
    return ships


def _parse_settler(section, budget: BudgetSpec):
    where = "settler"
    _reject_unknown(section, ("delay", "per_impulse_cap", "cumulative_cap",
                              "ships_per_star", "tof_guess", "tof_growth",
                              "max_retries", "max_generation",
                              "exclusion_window", "momentum_shell_kpc",
                              "momentum_step_deg"), where)
    window = section.get("exclusion_window")
    if window is not None:
        window = int(_number(section, "exclusion_window", where))
        if window < 1:
            raise ConfigError(f"{where}.exclusion_window must be >= 1 or null")
    try:
        params = SettlerParams(
            delay=_number(section, "delay", where, 2.5),
            per_impulse_cap=min(_number(section, "per_impulse_cap", where,
                                        budget.per_impulse),
                                budget.per_impulse),
            cumulative_cap=min(_number(section, "cumulative_cap", where,
                                       budget.cumulative),
                               budget.cumulative),
            ships_per_star=int(_number(section, "ships_per_star", where, 3)),
            tof_guess=_number(section, "tof_guess", where, 5.0),
            tof_growth=_number(section, "tof_growth", where, 1.0),
            max_retries=int(_number(section, "max_retries", where, 8)),
            max_generation=int(_number(section, "max_generation", where, 20)),
            exclusion_window=window,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if params.delay < budget.settle_delay:
        raise ConfigError(f"{where}.delay below the configured "
                          f"{budget.settle_delay:g} Myr minimum")
    search = MomentumSearchOptions(
        shell_width=_number(section, "momentum_shell_kpc", where, 0.5),
        sweep_step_deg=_number(section, "momentum_step_deg", where, 5.0),
    )
    if search.shell_width <= 0 or search.sweep_step_deg <= 0:
        raise ConfigError(f"{where}: momentum search steps must be positive")
    return params, search


def _parse_grid(section) -> GridSpec:
    where = "grid"
    _reject_unknown(section, ("n_r", "n_theta", "r_edges", "theta_edges"),
                    where)
    counted = {"n_r", "n_theta"} & set(section)
    explicit = {"r_edges", "theta_edges"} & set(section)
    if counted and explicit:
        raise ConfigError(f"{where}: give either bin counts or explicit "
                          "edges, not both")
    try:
        if explicit:
            if explicit != {"r_edges", "theta_edges"}:
                raise ConfigError(f"{where}: explicit grids need both "
                                  "r_edges and theta_edges")
            return GridSpec(section["r_edges"], section["theta_edges"])
        return GridSpec.default(n_r=int(_number(section, "n_r", where, 30)),
                                n_theta=int(_number(section, "n_theta", where,
                                                    36)))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_tolerances(section) -> SolverTolerances:
    where = "solver_tolerances"
    _reject_unknown(section, ("shooting_tol_pos", "validation_tol_pos",
                              "fastship_tof_step"), where)
    return SolverTolerances(
        shooting_tol_pos=_number(section, "shooting_tol_pos", where, 1e-6),
        validation_tol_pos=_number(section, "validation_tol_pos", where, 1e-6),
        fastship_tof_step=_number(section, "fastship_tof_step", where, 2.5),
    )
