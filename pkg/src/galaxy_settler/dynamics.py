"""Galactic force field and ship propagation.

The only force model consistent with every catalog star being an exact
circular orbit is the central field

    a(r) = -(v(r)^2 / r) * r_hat

with v(r) the rotation curve.  That inference is the largest modeling
assumption in this package and is documented in the README.

Internal propagation units are kpc and Myr; the public API uses kpc,
km/s, Myr.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import CurveDomainError, PropagationError
from .units import KMS_PER_KPC_MYR, KPC_MYR_PER_KMS

__all__ = [
    "RotationCurve",
    "ShipState",
    "Impulse",
    "circular_speed",
    "acceleration",
    "potential",
    "specific_energy",
    "propagate",
    "apply_impulse",
    "in_plane_direction_offset",
    "circular_state",
    "DEFAULT_CURVE_KNOTS",
]

# Default curve: dip near 8 kpc, single global peak inside [18, 20] kpc.
# Domain is wider than the 2-32 kpc star band so trial ship arcs do not
# fault at the first small excursion.
DEFAULT_CURVE_KNOTS = [
    [0.5, 232.0],
    [2.0, 228.0],
    [5.0, 215.0],
    [8.0, 205.0],
    [11.0, 216.0],
    [14.0, 230.0],
    [16.5, 238.0],
    [19.0, 245.0],
    [22.0, 236.0],
    [26.0, 226.0],
    [29.0, 220.0],
    [32.0, 216.0],
    [36.0, 212.0],
    [40.0, 209.0],
]


class RotationCurve:
    """Circular-orbit speed v(r), km/s, on a bounded radius domain [kpc].

    kinds: "flat" (constant), "table" (monotone cubic through knots),
    "polynomial" (coefficients in increasing degree).
    """

    def __init__(self, kind, params, domain):
        self.kind = kind
        self.params = params
        self.domain = (float(domain[0]), float(domain[1]))
        if not (0.0 < self.domain[0] < self.domain[1]):
            raise CurveDomainError(f"bad curve domain {self.domain}")
        self._prepare()
        self._check_positive()

    # -- constructors -------------------------------------------------

    @classmethod
    def flat(cls, v_kms, domain=(0.5, 40.0)):
        return cls("flat", {"v_kms": float(v_kms)}, domain)

    @classmethod
    def from_table(cls, knots, domain=None):
        knots = sorted((float(r), float(v)) for r, v in knots)
        if len(knots) < 2:
            raise CurveDomainError("table curve needs at least 2 knots")
        if domain is None:
            domain = (knots[0][0], knots[-1][0])
        return cls("table", {"knots": knots}, domain)

    @classmethod
    def from_polynomial(cls, coefficients, domain):
        return cls("polynomial", {"coefficients": [float(c) for c in coefficients]}, domain)

    @classmethod
    def default(cls):
        return cls.from_table(DEFAULT_CURVE_KNOTS)

    @classmethod
    def from_config(cls, cfg):
        kind = cfg.get("kind")
        if kind == "flat":
            return cls.flat(cfg["v_kms"], cfg.get("domain", (0.5, 40.0)))
        if kind == "table":
            return cls.from_table(cfg["knots"], cfg.get("domain"))
        if kind == "polynomial":
            return cls.from_polynomial(cfg["coefficients"], cfg["domain"])
        raise CurveDomainError(f"unknown rotation curve kind {kind!r}")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_config(json.load(fh))

    def to_config(self):
        cfg = {"kind": self.kind, "domain": list(self.domain)}
        if self.kind == "flat":
            cfg["v_kms"] = self.params["v_kms"]
        elif self.kind == "table":
            cfg["knots"] = [list(k) for k in self.params["knots"]]
        else:
            cfg["coefficients"] = list(self.params["coefficients"])
        return cfg

    # -- preparation --------------------------------------------------

    def _prepare(self):
        if self.kind == "flat":
            self._v_int = self.params["v_kms"] * KPC_MYR_PER_KMS
        elif self.kind == "table":
            knots = self.params["knots"]
            lo, hi = self.domain
            if lo < knots[0][0] or hi > knots[-1][0]:
                raise CurveDomainError("table curve domain exceeds knot span")
            xs = np.array([k[0] for k in knots])
            vs = np.array([k[1] for k in knots]) * KPC_MYR_PER_KMS
            interp = PchipInterpolator(xs, vs, extrapolate=False)
            # flattened breakpoints/coefficients for the scalar hot path
            self._bp = [float(x) for x in interp.x]
            c = interp.c
            self._c0 = [float(v) for v in c[0]]
            self._c1 = [float(v) for v in c[1]]
            self._c2 = [float(v) for v in c[2]]
            self._c3 = [float(v) for v in c[3]]
            self._interp = interp
            self._prepare_potential_table()
        elif self.kind == "polynomial":
            self._coefs_int = [c * KPC_MYR_PER_KMS for c in self.params["coefficients"]]
            self._v2_coefs = np.convolve(self._coefs_int, self._coefs_int)
        else:
            raise CurveDomainError(f"unknown rotation curve kind {self.kind!r}")

    def _check_positive(self):
        rs = np.linspace(self.domain[0], self.domain[1], 512)
        vs = self.speed_internal_array(rs)
        if not np.all(np.isfinite(vs)) or np.any(vs <= 0.0):
            raise CurveDomainError("rotation curve must be positive and finite on its domain")

    # -- evaluation ---------------------------------------------------

    def _require_domain(self, r):
        if not (self.domain[0] <= r <= self.domain[1]):
            raise CurveDomainError(
                f"radius {r:.6g} kpc outside curve domain [{self.domain[0]:g}, {self.domain[1]:g}]"
            )

    def speed_internal(self, r):
        """v(r) in kpc/Myr; r must be inside the domain (checked)."""
        self._require_domain(r)
        return self._speed_internal_unchecked(r)

    def _speed_internal_unchecked(self, r):
        if self.kind == "flat":
            return self._v_int
        if self.kind == "table":
            i = bisect_right(self._bp, r) - 1
            if i >= len(self._c0):
                i = len(self._c0) - 1
            elif i < 0:
                i = 0
            t = r - self._bp[i]
            return ((self._c0[i] * t + self._c1[i]) * t + self._c2[i]) * t + self._c3[i]
        acc = 0.0
        for c in reversed(self._coefs_int):
            acc = acc * r + c
        return acc

    def speed_internal_array(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "flat":
            return np.full_like(r, self._v_int)
        if self.kind == "table":
            return self._interp(np.clip(r, self._bp[0], self._bp[-1]))
        acc = np.zeros_like(r)
        for c in reversed(self._coefs_int):
            acc = acc * r + c
        return acc

    def speed(self, r):
        """Public v(r) in km/s."""
        return self.speed_internal(r) * KMS_PER_KPC_MYR

    def omega_internal(self, r):
        """Angular rate of a circular orbit at r, rad/Myr."""
        return self.speed_internal(r) / r

    def _prepare_potential_table(self):
        # Phi' = v^2/r with piecewise-cubic v: on each knot interval the
        # integrand is P(t)/(t + a), which splits into a quintic plus a
        # log term, so the antiderivative is closed-form.
        self._seg_poly = []   # polyint coefficients, decreasing powers of t
        self._seg_logc = []   # coefficient of ln(t + a)
        cum = [0.0]
        for i in range(len(self._c0)):
            a = self._bp[i]
            p = np.array([self._c0[i], self._c1[i], self._c2[i], self._c3[i]])
            p2 = np.convolve(p, p)
            q, rem = np.polydiv(p2, np.array([1.0, a]))
            anti = np.polyint(q)
            self._seg_poly.append(anti)
            self._seg_logc.append(float(rem[0]))
            w = self._bp[i + 1] - a
            cum.append(cum[-1] + float(np.polyval(anti, w))
                       + self._seg_logc[-1] * math.log1p(w / a))
        self._seg_cum = cum
        i_ref = min(bisect_right(self._bp, 8.0) - 1, len(self._c0) - 1)
        t = 8.0 - self._bp[i_ref]
        self._phi_ref = (self._seg_cum[i_ref] + float(np.polyval(self._seg_poly[i_ref], t))
                         + self._seg_logc[i_ref] * math.log1p(t / self._bp[i_ref]))

    def potential_internal(self, r, r_ref=8.0):
        """Phi(r) with Phi'(r) = v(r)^2/r, (kpc/Myr)^2, zero at r_ref.

        Exact (closed-form) for every curve kind.
        """
        self._require_domain(r)
        return self._potential_raw(r) - self._potential_raw(r_ref)

    def _potential_raw(self, r):
        if self.kind == "flat":
            return self._v_int ** 2 * math.log(r)
        if self.kind == "table":
            if r == 8.0:
                base = self._phi_ref
            else:
                i = min(max(bisect_right(self._bp, r) - 1, 0), len(self._c0) - 1)
                t = r - self._bp[i]
                base = (self._seg_cum[i] + float(np.polyval(self._seg_poly[i], t))
                        + self._seg_logc[i] * math.log1p(t / self._bp[i]))
            return base
        # polynomial: v^2 = sum c_m r^m; integral of c_m r^(m-1) is
        # c_0 ln r + sum_{m>=1} c_m r^m / m
        p2 = self._v2_coefs
        acc = p2[0] * math.log(r)
        for m in range(1, len(p2)):
            acc += p2[m] * r ** m / m
        return acc


def circular_speed(curve: RotationCurve, r: float) -> float:
    """Rotation-curve speed at radius r [kpc] in km/s."""
    return curve.speed(r)


def acceleration(curve: RotationCurve, pos) -> np.ndarray:
    """Central acceleration at pos [kpc], in kpc/Myr^2 (anti-parallel to pos)."""
    pos = np.asarray(pos, dtype=float)
    r = float(np.linalg.norm(pos))
    if r == 0.0:
        raise CurveDomainError("acceleration undefined at the galactic center")
    v = curve.speed_internal(r)
    return (-v * v / (r * r)) * pos


def potential(curve: RotationCurve, r: float) -> float:
    """Potential implied by the curve, (kpc/Myr)^2, zero at r = 8 kpc."""
    return curve.potential_internal(r)


@dataclass
class ShipState:
    """Ship (or star) state: pos kpc, vel km/s, epoch t Myr."""

    pos: np.ndarray
    vel: np.ndarray
    t: float

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).copy()
        self.vel = np.asarray(self.vel, dtype=float).copy()
        self.t = float(self.t)
        if not (np.all(np.isfinite(self.pos)) and np.all(np.isfinite(self.vel)) and math.isfinite(self.t)):
            raise ValueError("non-finite ship state")

    def copy(self):
        return ShipState(self.pos, self.vel, self.t)

    @property
    def r(self):
        return float(np.linalg.norm(self.pos))


@dataclass
class Impulse:
    """Instantaneous velocity change dv [km/s] applied at epoch t [Myr]."""

    t: float
    dv: np.ndarray

    def __post_init__(self):
        self.dv = np.asarray(self.dv, dtype=float).copy()
        self.t = float(self.t)

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.dv))


def apply_impulse(state: ShipState, dv) -> ShipState:
    """Return the state after an impulsive burn dv [km/s]; pos and t unchanged."""
    dv = np.asarray(dv, dtype=float)
    if not np.all(np.isfinite(dv)):
        raise ValueError("non-finite impulse")
    return ShipState(state.pos, state.vel + dv, state.t)


def in_plane_direction_offset(vel, dtheta_deg, mag) -> np.ndarray:
    """Impulse of magnitude mag [km/s] rotated dtheta_deg ACW (about +z)
    from the galactic-plane projection of vel."""
    vel = np.asarray(vel, dtype=float)
    vx, vy = vel[0], vel[1]
    norm = math.hypot(vx, vy)
    if norm == 0.0:
        raise ValueError("velocity has no in-plane component")
    ang = math.atan2(vy, vx) + math.radians(dtheta_deg)
    return np.array([mag * math.cos(ang), mag * math.sin(ang), 0.0])


def circular_state(curve: RotationCurve, r, theta_deg=0.0, t=0.0, retrograde=False) -> ShipState:
    """Planar circular-orbit state at radius r and in-plane angle theta_deg."""
    v = curve.speed(r)
    th = math.radians(theta_deg)
    sgn = -1.0 if retrograde else 1.0
    pos = np.array([r * math.cos(th), r * math.sin(th), 0.0])
    vel = sgn * np.array([-v * math.sin(th), v * math.cos(th), 0.0])
    return ShipState(pos, vel, t)


# ------------------------------------------------------------------
# Adaptive Runge-Kutta-Fehlberg 7(8) integration
# ------------------------------------------------------------------

_RKF_ALPHA = np.array([
    0.0, 2.0 / 27, 1.0 / 9, 1.0 / 6, 5.0 / 12, 0.5, 5.0 / 6, 1.0 / 6,
    2.0 / 3, 1.0 / 3, 1.0, 0.0, 1.0,
])

_RKF_BETA = np.zeros((13, 12))
_RKF_BETA[1, 0] = 2.0 / 27
_RKF_BETA[2, :2] = [1.0 / 36, 1.0 / 12]
_RKF_BETA[3, 0] = 1.0 / 24
_RKF_BETA[3, 2] = 1.0 / 8
_RKF_BETA[4, 0] = 5.0 / 12
_RKF_BETA[4, 2] = -25.0 / 16
_RKF_BETA[4, 3] = 25.0 / 16
_RKF_BETA[5, 0] = 0.05
_RKF_BETA[5, 3] = 0.25
_RKF_BETA[5, 4] = 0.2
_RKF_BETA[6, 0] = -25.0 / 108
_RKF_BETA[6, 3] = 125.0 / 108
_RKF_BETA[6, 4] = -65.0 / 27
_RKF_BETA[6, 5] = 125.0 / 54
_RKF_BETA[7, 0] = 31.0 / 300
_RKF_BETA[7, 4] = 61.0 / 225
_RKF_BETA[7, 5] = -2.0 / 9
_RKF_BETA[7, 6] = 13.0 / 900
_RKF_BETA[8, 0] = 2.0
_RKF_BETA[8, 3] = -53.0 / 6
_RKF_BETA[8, 4] = 704.0 / 45
_RKF_BETA[8, 5] = -107.0 / 9
_RKF_BETA[8, 6] = 67.0 / 90
_RKF_BETA[8, 7] = 3.0
_RKF_BETA[9, 0] = -91.0 / 108
_RKF_BETA[9, 3] = 23.0 / 108
_RKF_BETA[9, 4] = -976.0 / 135
_RKF_BETA[9, 5] = 311.0 / 54
_RKF_BETA[9, 6] = -19.0 / 60
_RKF_BETA[9, 7] = 17.0 / 6
_RKF_BETA[9, 8] = -1.0 / 12
_RKF_BETA[10, 0] = 2383.0 / 4100
_RKF_BETA[10, 3] = -341.0 / 164
_RKF_BETA[10, 4] = 4496.0 / 1025
_RKF_BETA[10, 5] = -301.0 / 82
_RKF_BETA[10, 6] = 2133.0 / 4100
_RKF_BETA[10, 7] = 45.0 / 82
_RKF_BETA[10, 8] = 45.0 / 164
_RKF_BETA[10, 9] = 18.0 / 41
_RKF_BETA[11, 0] = 3.0 / 205
_RKF_BETA[11, 5] = -6.0 / 41
_RKF_BETA[11, 6] = -3.0 / 205
_RKF_BETA[11, 7] = -3.0 / 41
_RKF_BETA[11, 8] = 3.0 / 41
_RKF_BETA[11, 9] = 6.0 / 41
_RKF_BETA[12, 0] = -1777.0 / 4100
_RKF_BETA[12, 3] = -341.0 / 164
_RKF_BETA[12, 4] = 4496.0 / 1025
_RKF_BETA[12, 5] = -289.0 / 82
_RKF_BETA[12, 6] = 2193.0 / 4100
_RKF_BETA[12, 7] = 51.0 / 82
_RKF_BETA[12, 8] = 33.0 / 164
_RKF_BETA[12, 9] = 12.0 / 41
_RKF_BETA[12, 11] = 1.0

# 8th-order weights; stages 0 and 10 are replaced by 11 and 12.
_RKF_CH = np.zeros(13)
_RKF_CH[5] = 34.0 / 105
_RKF_CH[6] = 9.0 / 35
_RKF_CH[7] = 9.0 / 35
_RKF_CH[8] = 9.0 / 280
_RKF_CH[9] = 9.0 / 280
_RKF_CH[11] = 41.0 / 840
_RKF_CH[12] = 41.0 / 840

_ERR_W = 41.0 / 840

DEFAULT_TOL = 1e-12  # kpc-scale absolute, per step
_MAX_STEPS = 100_000
_MIN_STEP = 1e-10  # Myr


@dataclass
class PropagationOptions:
    tol: float = DEFAULT_TOL
    max_step: float = 5.0
    check_domain: bool = True


def _integrate(curve, y0, t0, dt, tol, max_step, check_domain, record=None):
    """Core RKF7(8) loop on internal-unit state y=[pos(kpc), vel(kpc/Myr)].

    Returns final y.  If record is a list, accepted (t, y) pairs are
    appended (including the initial point).
    """
    rmin, rmax = curve.domain
    speed2 = curve._speed_internal_unchecked

    def rhs(y):
        x, yy, z = y[0], y[1], y[2]
        r2 = x * x + yy * yy + z * z
        r = math.sqrt(r2)
        v = speed2(r)
        f = -v * v / r2
        return np.array([y[3], y[4], y[5], f * x, f * yy, f * z])

    y = np.asarray(y0, dtype=float).copy()
    t = 0.0
    direction = 1.0 if dt >= 0 else -1.0
    if dt == 0.0:
        if record is not None:
            record.append((t0, y.copy()))
        return y

    def check(yv, tv):
        r = math.sqrt(yv[0] ** 2 + yv[1] ** 2 + yv[2] ** 2)
        if check_domain and not (rmin <= r <= rmax):
            raise PropagationError(
                f"trajectory left curve domain at t={t0 + tv:.4f} Myr (r={r:.4f} kpc)",
                t=t0 + tv, pos=yv[:3].copy(),
            )

    check(y, 0.0)
    if record is not None:
        record.append((t0, y.copy()))

    h = direction * min(abs(dt), 1.0, max_step)
    F = np.empty((13, 6))
    for _ in range(_MAX_STEPS):
        remaining = dt - t
        if direction * remaining <= 1e-14 * max(1.0, abs(dt)):
            return y
        if abs(h) > abs(remaining):
            h = remaining
        F[0] = rhs(y)
        for k in range(1, 13):
            yk = y + h * (_RKF_BETA[k, :k] @ F[:k])
            F[k] = rhs(yk)
        y_new = y + h * (_RKF_CH @ F)
        err_vec = (F[0] + F[10] - F[11] - F[12]) * (_ERR_W * h)
        scale = tol + tol * np.abs(y_new)
        err = float(np.max(np.abs(err_vec) / scale))
        if err <= 1.0:
            t += h
            y = y_new
            check(y, t)
            if record is not None:
                record.append((t0 + t, y.copy()))
            growth = 0.9 * (1.0 / err) ** 0.125 if err > 0.0 else 5.0
            h *= min(5.0, max(0.2, growth))
            if abs(h) > max_step:
                h = direction * max_step
        else:
            h *= max(0.2, 0.9 * err ** -0.125)
        if abs(h) < _MIN_STEP:
            raise PropagationError(f"step size underflow at t={t0 + t:.4f} Myr", t=t0 + t)
    raise PropagationError("step budget exhausted")


def propagate(curve: RotationCurve, state: ShipState, dt: float, dense: bool = False,
              opts: PropagationOptions | None = None):
    """Coast state for dt Myr in the curve's central field.

    Negative dt integrates backward.  With dense=True, also returns the
    accepted-step samples as (times [Myr], pos [kpc, n x 3], vel [km/s, n x 3]).
    """
    opts = opts or PropagationOptions()
    y0 = np.empty(6)
    y0[:3] = state.pos
    y0[3:] = state.vel * KPC_MYR_PER_KMS
    record = [] if dense else None
    y = _integrate(curve, y0, state.t, float(dt), opts.tol, opts.max_step,
                   opts.check_domain, record)
    out = ShipState(y[:3], y[3:] * KMS_PER_KPC_MYR, state.t + dt)
    if not dense:
        return out
    times = np.array([r[0] for r in record])
    ys = np.array([r[1] for r in record])
    return out, (times, ys[:, :3].copy(), ys[:, 3:] * KMS_PER_KPC_MYR)


def specific_energy(curve: RotationCurve, state: ShipState) -> float:
    """Conserved specific energy 0.5 v^2 + Phi(r) along coasts, (kpc/Myr)^2."""
    v_int = state.vel * KPC_MYR_PER_KMS
    return 0.5 * float(v_int @ v_int) + curve.potential_internal(state.r)


def angular_momentum(state: ShipState) -> np.ndarray:
    """pos x vel in kpc * km/s (conserved along coasts in a central field)."""
    return np.cross(state.pos, state.vel)
