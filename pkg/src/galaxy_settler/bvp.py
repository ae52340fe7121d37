"""Two-point boundary value solver for coast arcs.

Given departure position, arrival position, and a time of flight, find
the departure velocity whose ballistic coast lands on the target.
Newton iteration on the 3-vector v0 with a central-difference Jacobian
and a damped line search; no variational equations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PropagationOptions, RotationCurve, ShipState, propagate
from .errors import InfeasibleError
from .units import KMS_PER_KPC_MYR

log = logging.getLogger(__name__)

__all__ = ["ShootingOptions", "ShootingResult", "shooting_solve", "coast_guess"]

_FD_REL = 1e-6  # Jacobian step, fraction of |v|
_FD_MIN = 1e-3  # km/s
_MAX_HALVINGS = 8


@dataclass
class ShootingOptions:
    tol_pos: float = 1e-6  # kpc
    max_iter: int = 50
    dense: bool = False  # record the solution trajectory samples
    prop_tol: float = 1e-12


@dataclass
class ShootingResult:
    v0: np.ndarray  # km/s
    vf: np.ndarray  # km/s
    residual: float  # kpc, |arrival - target|
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    trajectory: tuple | None = None  # (t, pos, vel) samples when requested

    def __bool__(self):
        return self.converged


def coast_guess(curve: RotationCurve, r0, rt, tof) -> np.ndarray:
    """Kinematic initial guess, km/s: straight-line rate plus a gravity tilt."""
    r0 = np.asarray(r0, dtype=float)
    rt = np.asarray(rt, dtype=float)
    mid = 0.5 * (r0 + rt)
    rm = float(np.linalg.norm(mid))
    rm = min(max(rm, curve.domain[0]), curve.domain[1])
    v2 = curve.speed_internal(rm) ** 2
    accel = -(v2 / rm**2) * mid  # kpc/Myr^2
    v_int = (rt - r0) / tof - 0.5 * accel * tof
    return v_int * KMS_PER_KPC_MYR


def shooting_solve(curve: RotationCurve, r0, rt, tof, v0_guess,
                   opts: ShootingOptions | None = None) -> ShootingResult:
    """Solve for the departure velocity that coasts from r0 to rt in tof Myr.

    Returns a ShootingResult whether or not the iteration converges; the
    trace carries per-iteration residuals for diagnostic dumps.  Multi-rev
    ambiguity is resolved by the guess: the solver stays in its basin.
    """
    if tof <= 0:
        raise InfeasibleError(f"time of flight must be positive, got {tof}")
    opts = opts or ShootingOptions()
    r0 = np.asarray(r0, dtype=float)
    rt = np.asarray(rt, dtype=float)
    v0 = np.asarray(v0_guess, dtype=float).copy()

    # trial arcs may wander past the curve domain; extrapolate rather than
    # fault so the Jacobian stays finite
    popts = PropagationOptions(tol=opts.prop_tol, check_domain=False)

    def shoot(v):
        out = propagate(curve, ShipState(r0, v, 0.0), tof, opts=popts)
        return out.pos - rt, out.vel

    miss, vf = shoot(v0)
    res = float(np.linalg.norm(miss))
    trace = [{"iter": 0, "residual": res, "step": 0.0}]
    iters = 0

    while res > opts.tol_pos and iters < opts.max_iter:
        iters += 1
        h = max(_FD_REL * float(np.linalg.norm(v0)), _FD_MIN)
        jac = np.empty((3, 3))
        for j in range(3):
            dv = np.zeros(3)
            dv[j] = h
            plus, _ = shoot(v0 + dv)
            minus, _ = shoot(v0 - dv)
            jac[:, j] = (plus - minus) / (2.0 * h)
        entry = {"iter": iters, "fd_step": h}
        try:
            step = np.linalg.solve(jac, -miss)
        except np.linalg.LinAlgError:
            entry["condition"] = float(np.linalg.cond(jac))
            log.warning("singular shooting Jacobian (cond=%.3g)", entry["condition"])
            step = np.linalg.lstsq(jac, -miss, rcond=None)[0]

        alpha = 1.0
        improved = False
        for _ in range(_MAX_HALVINGS + 1):
            trial = v0 + alpha * step
            trial_miss, trial_vf = shoot(trial)
            trial_res = float(np.linalg.norm(trial_miss))
            if trial_res < res:
                v0, miss, vf, res = trial, trial_miss, trial_vf, trial_res
                improved = True
                break
            alpha *= 0.5
        entry["residual"] = res
        entry["step"] = alpha if improved else 0.0
        trace.append(entry)
        if not improved:
            log.debug("shooting stagnated at residual %.3g kpc after %d iters", res, iters)
            break

    converged = res <= opts.tol_pos
    trajectory = None
    if converged and opts.dense:
        _, trajectory = propagate(curve, ShipState(r0, v0, 0.0), tof, dense=True,
                                  opts=popts)
    return ShootingResult(v0=v0, vf=vf, residual=res, iterations=iters,
                          converged=converged, trace=trace, trajectory=trajectory)
