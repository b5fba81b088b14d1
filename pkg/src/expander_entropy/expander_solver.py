"""Rotationally symmetric self-expanders by shooting on the profile ODE.

The generating curve satisfies

    x' = cos(theta),  r' = sin(theta),
    theta' = (n - 1) cos(theta) / r + (r cos(theta) - x sin(theta)) / 2,

which is H = <gamma, nu>/2 written for the fixed orientation of
:mod:`geometry_core`.  Close to the cone the curve is integrated in polar
form instead, with ambient radius rho as the independent variable, polar
angle phi of the point and beta = theta - phi:

    phi'  = tan(beta) / rho,
    beta' = (n - 1) cot(phi) / rho - (n / rho + rho / 2) tan(beta).

Both phases also carry arclength and the weighted area
A = int omega_{n-1} r^{n-1} e^{rho^2/4} ds in the rescaled form
B = A e^{-rho^2/4}, which stays of moderate size.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import (
    DomainError,
    IntegrationError,
    NoAsymptoteError,
    ToleranceError,
    WindowError,
)
from .geometry_core import (
    ORIENTATION,
    ProfileCurve,
    RotCone,
    fmt,
    read_curve,
    sphere_volume,
    write_curve,
)


@dataclass(frozen=True)
class ShootingSpec:
    """Parameters of one shooting integration.

    Attributes:
        n: Hypersurface dimension.
        kind: ``"disk"`` (shoot = tip height x0) or ``"catenoid"``
            (shoot = neck radius r0).
        s_max: Arclength horizon for the near phase.
        tol: Relative ODE tolerance (absolute tolerance is tol/100).
        tip_epsilon: Series-start radius for disks, in units of max(1, |x0|).
        rho_max: Ambient radius at which the far phase stops.
        switch_angle: The far phase starts once |theta - phi| <= switch_angle.
        sample_ds: Spacing of the stored samples.
        method: scipy integrator name.
    """

    n: int = 2
    kind: str = "disk"
    s_max: float = 80.0
    tol: float = 1e-13
    tip_epsilon: float = 1e-4
    rho_max: float = 30.0
    switch_angle: float = 0.1
    sample_ds: float = 0.01
    method: str = "DOP853"

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if self.kind not in ("disk", "catenoid"):
            raise DomainError(f"unknown shooting kind {self.kind!r}")
        if not 1e-13 <= self.tol <= 1e-6:
            raise DomainError(f"tol {self.tol!r} outside [1e-13, 1e-6]")
        if not 0 < self.tip_epsilon <= 1e-4:
            raise DomainError("tip_epsilon must lie in (0, 1e-4]")
        if self.rho_max < 12:
            raise DomainError("rho_max must be >= 12 so that the aperture fit window is >= 8")
        if not 0 < self.switch_angle < 1:
            raise DomainError("switch_angle must lie in (0, 1)")

    def with_kind(self, kind: str) -> "ShootingSpec":
        return replace(self, kind=kind)

    def to_dict(self) -> dict:
        return asdict(self)


def tip_series(n: int, x0: float) -> tuple[float, float]:
    """Coefficients (c2, c4) of x(r) = x0 + c2 r^2 + c4 r^4 near a disk tip."""
    c2 = x0 / (4.0 * n)
    c4 = (8.0 * c2 ** 3 - 0.5 * c2) / (4.0 * (n + 2))
    return c2, c4


def theta_prime(n: int, x, r, theta):
    """Right-hand side of the tangent-angle equation."""
    ct, st = np.cos(theta), np.sin(theta)
    rot = 0.0 if n == 1 else (n - 1) * ct / r
    return rot + 0.5 * (r * ct - x * st)


# ---------------------------------------------------------------------------
# Dense trajectories
# ---------------------------------------------------------------------------


class Trajectory:
    """Dense solution of one shooting integration (top half for catenoids).

    Near phase: s -> (x, r, theta, B) on [s_start, s_switch].
    Far phase: rho -> (phi, beta, s, B) on [rho_switch, rho_max].
    """

    def __init__(self, n, kind, shoot, near, s_start, s_switch, far, rho_switch, rho_max,
                 near_grid=None, far_grid=None, plane=False, mirror=False):
        self.n = n
        self.kind = kind
        self.shoot = shoot
        self.near = near
        self.s_start = s_start
        self.s_switch = s_switch
        self.far = far
        self.rho_switch = rho_switch
        self.rho_max = rho_max
        self.near_grid = near_grid
        self.far_grid = far_grid
        self.plane = plane
        self.mirror = mirror
        self.omega = sphere_volume(n - 1)

    # -- far phase --------------------------------------------------------

    def end_state(self, rho):
        """(phi, beta, s, B) on the far phase."""
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < self.rho_switch * (1 - 1e-15)) or np.any(rho > self.rho_max * (1 + 1e-15)):
            raise DomainError(f"radius outside the far phase [{self.rho_switch}, {self.rho_max}]")
        if self.plane:
            phi = np.full_like(rho, math.pi / 2)
            return phi, np.zeros_like(rho), rho.copy(), plane_B(self.n, rho)
        y = self.far(rho)
        return y[0], y[1], y[2], y[3]

    def end_derivatives(self, rho):
        """(phi', beta') from the far-phase equations."""
        phi, beta, _, _ = self.end_state(rho)
        return far_rhs_angles(self.n, np.asarray(rho, dtype=float), phi, beta, self.plane)

    # -- geometry -----------------------------------------------------------

    def _near_eval(self, s):
        y = self.near(s)
        return y[0], y[1], y[2]

    def at_s(self, s):
        """(x, r, theta, kappa) at arclength s (negative s mirrors a catenoid)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.mirror and np.any(s < 0):
            out = self.at_s(np.abs(s))
            neg = s < 0
            x, r, th, ka = (np.array(a, dtype=float) for a in out)
            x[neg] = -x[neg]
            th[neg] = -th[neg]
            return x, r, th, ka
        x = np.empty_like(s)
        r = np.empty_like(s)
        th = np.empty_like(s)
        if self.plane:
            x[:] = 0.0
            r[:] = s
            th[:] = math.pi / 2
            return x, r, th, np.zeros_like(s)
        near = s <= self.s_switch
        if np.any(s[near] < self.s_start - 1e-12):
            x0 = self.shoot
            if self.kind != "disk":
                raise DomainError("arclength before the start of the curve")
            # inside the tip cap: use the series
            sn = s[near]
            cap = sn < self.s_start
            xs, rs, ts = self._near_eval(np.maximum(sn, self.s_start))
            c2, c4 = tip_series(self.n, x0)
            rr = sn[cap]
            xs[cap] = x0 + c2 * rr ** 2 + c4 * rr ** 4
            rs[cap] = rr
            ts[cap] = math.pi / 2 - np.arctan(2 * c2 * rr + 4 * c4 * rr ** 3)
            x[near], r[near], th[near] = xs, rs, ts
        elif np.any(near):
            x[near], r[near], th[near] = self._near_eval(s[near])
        far = ~near
        if np.any(far):
            rho = self._rho_of_s(s[far])
            phi, beta, _, _ = self.end_state(rho)
            x[far] = rho * np.cos(phi)
            r[far] = rho * np.sin(phi)
            th[far] = phi + beta
        ka = self.kappa(x, r, th)
        return x, r, th, ka

    def kappa(self, x, r, th):
        with np.errstate(divide="ignore", invalid="ignore"):
            ka = -theta_prime(self.n, x, r, th)
        if self.kind == "disk" and self.n > 1:
            tip = r == 0
            if np.any(tip):
                ka = np.where(tip, self.shoot / (2.0 * self.n), ka)
        return ka

    def at_rho(self, rho):
        """(x, r, theta, kappa) on the top end at ambient radius rho."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.all(rho >= self.rho_switch):
            phi, beta, _, _ = self.end_state(rho)
            x = rho * np.cos(phi)
            r = rho * np.sin(phi)
            th = phi + beta
            return x, r, th, self.kappa(x, r, th)
        return self.at_s(self.s_at_rho(rho))

    def _rho_of_s(self, s):
        """Invert s(rho) on the far phase."""
        if self.plane:
            return np.asarray(s, dtype=float)
        tg = self.far_grid
        sg = self.far(tg)[2]
        if np.any(s > sg[-1] * (1 + 1e-14)):
            raise DomainError("arclength beyond the computed curve")
        rho = np.interp(s, sg, tg)
        for _ in range(6):
            phi, beta, sv, _ = self.end_state(np.clip(rho, self.rho_switch, self.rho_max))
            rho = np.clip(rho - (sv - s) * np.cos(beta), self.rho_switch, self.rho_max)
        return rho

    def s_at_rho(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if self.plane:
            return rho.copy()
        out = np.empty_like(rho)
        far = rho >= self.rho_switch
        if np.any(far):
            out[far] = self.end_state(rho[far])[2]
        near = ~far
        if np.any(near):
            sg = self.near_grid
            x, r, th = self._near_eval(sg)
            rg = np.hypot(x, r)
            if np.any(np.diff(rg) <= 0):
                raise DomainError("ambient radius is not monotone on the near phase")
            if np.any(rho[near] < rg[0]):
                raise DomainError("radius below the start of the curve")
            s = np.interp(rho[near], rg, sg)
            for _ in range(6):
                x, r, th = self._near_eval(s)
                rr = np.hypot(x, r)
                c = (x * np.cos(th) + r * np.sin(th)) / rr
                s = np.clip(s - (rr - rho[near]) / c, self.s_start, self.s_switch)
            out[near] = s
        return out

    # -- weighted area ------------------------------------------------------

    def log_weighted_area(self, rho) -> tuple[np.ndarray, np.ndarray]:
        """Return (B, rho^2/4) with A(rho) = B e^{rho^2/4} on the far phase."""
        rho = np.asarray(rho, dtype=float)
        B = self.end_state(rho)[3]
        return B, rho ** 2 / 4

    def weighted_area(self, rho) -> np.ndarray:
        """int_{Sigma cap B_rho} e^{|x|^2/4} for the represented half/end."""
        B, e = self.log_weighted_area(rho)
        return B * np.exp(e)


def far_rhs_angles(n, rho, phi, beta, plane=False):
    if plane:
        return np.zeros_like(phi), np.zeros_like(beta)
    tb = np.tan(beta)
    dphi = tb / rho
    rot = 0.0 if n == 1 else (n - 1) * np.cos(phi) / np.sin(phi) / rho
    dbeta = rot - (n / rho + rho / 2) * tb
    return dphi, dbeta


def plane_B(n: int, rho) -> np.ndarray:
    """Rescaled weighted area of the flat disk of radius rho in R^n."""
    from scipy.integrate import quad

    omega = sphere_volume(n - 1)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    out = np.empty_like(rho)
    for i, R in enumerate(rho):
        val, _ = quad(lambda t: t ** (n - 1) * math.exp((t * t - R * R) / 4), 0.0, R,
                      epsabs=0, epsrel=1e-13, limit=200)
        out[i] = omega * val
    return out


def _near_rhs(n, omega):
    def f(s, y):
        x, r, th, B = y
        ct, st = math.cos(th), math.sin(th)
        rot = 0.0 if n == 1 else (n - 1) * ct / r
        dth = rot + 0.5 * (r * ct - x * st)
        w = omega * (r ** (n - 1) if n > 1 else 1.0)
        return [ct, st, dth, w - 0.5 * (x * ct + r * st) * B]
    return f


def _far_rhs(n, omega):
    def f(rho, y):
        phi, b, s, B = y
        tb = math.tan(b)
        cb = math.cos(b)
        rot = 0.0 if n == 1 else (n - 1) * math.cos(phi) / math.sin(phi) / rho
        w = omega * ((rho * math.sin(phi)) ** (n - 1) if n > 1 else 1.0)
        return [tb / rho, rot - (n / rho + rho / 2) * tb, 1.0 / cb, w / cb - 0.5 * rho * B]
    return f


def _check(sol, phase):
    if sol.status == -1:
        msg = sol.message or ""
        if "step size" in msg.lower():
            raise ToleranceError(f"{phase}: {msg}")
        raise IntegrationError(f"{phase}: {msg}", last_state=sol.y[:, -1] if sol.y.size else None)


def integrate_profile(spec: ShootingSpec, shoot: float) -> ProfileCurve:
    """Integrate one expander profile from its shooting datum.

    Args:
        spec: Shooting parameters.
        shoot: Tip height x0 (disk) or neck radius r0 > 0 (catenoid).

    Returns:
        ProfileCurve with a dense :class:`Trajectory` attached.

    Raises:
        DomainError: invalid shooting datum.
        IntegrationError: blow-up, axis collapse or horizon exhausted.
        ToleranceError: step-size underflow.
    """
    traj = integrate_trajectory(spec, float(shoot))
    return curve_from_trajectory(spec, traj)


@functools.lru_cache(maxsize=512)
def integrate_trajectory(spec: ShootingSpec, shoot: float) -> Trajectory:
    n = spec.n
    omega = sphere_volume(n - 1)
    rtol = spec.tol
    atol = spec.tol * 1e-2
    if spec.kind == "catenoid" and not shoot > 0:
        raise DomainError("catenoid neck radius must be positive")
    if spec.kind == "disk" and shoot == 0.0:
        return Trajectory(n, "disk", 0.0, None, 0.0, 0.0, None, 0.0, spec.rho_max, plane=True)

    if spec.kind == "disk":
        x0 = shoot
        eps = spec.tip_epsilon * max(1.0, abs(x0))
        c2, c4 = tip_series(n, x0)
        xr = 2 * c2 * eps + 4 * c4 * eps ** 3
        y0 = [x0 + c2 * eps ** 2 + c4 * eps ** 4, eps, math.pi / 2 - math.atan(xr),
              omega * eps ** n / n if n > 1 else 2 * eps]
        s0 = eps + (2 * c2) ** 2 * eps ** 3 / 6
        mirror = False
    else:
        y0 = [0.0, shoot, 0.0, 0.0]
        s0 = 0.0
        mirror = True

    cos_sw = math.cos(spec.switch_angle)

    def switch(s, y):
        x, r, th, _ = y
        return math.cos(th - math.atan2(r, x)) - cos_sw
    switch.terminal = True
    switch.direction = 1

    def collapse(s, y):
        return y[1] - 1e-10
    collapse.terminal = True
    collapse.direction = -1

    def blowup(s, y):
        return 1e6 - math.hypot(y[0], y[1])
    blowup.terminal = True
    blowup.direction = -1

    events = [switch, blowup] + ([collapse] if n > 1 else [])
    if switch(s0, y0) >= 0:
        raise IntegrationError("curve starts already aligned with the cone", last_state=y0)
    near = solve_ivp(_near_rhs(n, omega), (s0, spec.s_max), y0, method=spec.method,
                     rtol=rtol, atol=atol, dense_output=True, events=events)
    _check(near, "near phase")
    if near.status != 1 or near.t_events[0].size == 0:
        last = near.y[:, -1]
        if len(near.t_events) > 2 and near.t_events[2].size:
            raise IntegrationError("profile collapsed onto the axis", last_state=last)
        if near.t_events[1].size:
            raise IntegrationError("profile blew up", last_state=last)
        raise IntegrationError("horizon s_max reached before the far phase", last_state=last)
    s_sw = float(near.t_events[0][0])
    xs, rs, ths, Bs = near.y_events[0][0]
    rho_sw = math.hypot(xs, rs)
    if rho_sw >= spec.rho_max - 8:
        raise IntegrationError(f"far phase starts too late (rho = {rho_sw:.3g})", last_state=near.y_events[0][0])
    phi_sw = math.atan2(rs, xs)
    beta_sw = ths - phi_sw
    # B is continuous across phases; both carry A e^{-rho^2/4}.
    y1 = [phi_sw, beta_sw, s_sw, Bs]

    def tilt(rho, y):
        return math.cos(y[1]) - 0.2
    tilt.terminal = True
    tilt.direction = -1

    far = solve_ivp(_far_rhs(n, omega), (rho_sw, spec.rho_max), y1, method=spec.method,
                    rtol=rtol, atol=np.array([atol, atol, atol, atol * 1e-3]),
                    dense_output=True, events=[tilt])
    _check(far, "far phase")
    if far.status == 1:
        raise NoAsymptoteError("tangent leaves the cone direction in the far field",)
    near_grid = np.unique(np.concatenate([near.t[near.t <= s_sw], np.linspace(s0, s_sw, 200)]))
    return Trajectory(n, spec.kind, shoot, near.sol, s0, s_sw, far.sol, rho_sw, spec.rho_max,
                      near_grid=near_grid, far_grid=far.t, mirror=mirror)


def curve_from_trajectory(spec: ShootingSpec, traj: Trajectory) -> ProfileCurve:
    """Store samples at spacing ``spec.sample_ds`` (arclength near, rho far)."""
    n = spec.n
    ds = spec.sample_ds
    tol = {"ode_rtol": spec.tol, "ode_atol": spec.tol * 1e-2, "tip_epsilon": spec.tip_epsilon,
           "switch_angle": spec.switch_angle, "method": spec.method}
    if traj.plane:
        m = int(round(spec.rho_max / ds))
        s = np.linspace(0.0, spec.rho_max, m + 1)
        z = np.zeros_like(s)
        return ProfileCurve(n, s, z, s.copy(), np.full_like(s, math.pi / 2), z, "plane",
                            tip_index=0, tolerances=tol, shoot=0.0, trajectory=traj)
    m_near = max(2, int(math.ceil((traj.s_switch - traj.s_start) / ds)))
    s_near = np.linspace(traj.s_start, traj.s_switch, m_near + 1)
    xn, rn, tn, _ = traj.near(s_near)
    m_far = max(2, int(math.ceil((traj.rho_max - traj.rho_switch) / ds)))
    rho_far = np.linspace(traj.rho_switch, traj.rho_max, m_far + 1)[1:]
    phi, beta, s_far, _ = traj.end_state(rho_far)
    s = np.concatenate([s_near, s_far])
    x = np.concatenate([xn, rho_far * np.cos(phi)])
    r = np.concatenate([rn, rho_far * np.sin(phi)])
    th = np.concatenate([tn, phi + beta])
    ka = traj.kappa(x, r, th)
    if traj.kind == "disk":
        x0 = traj.shoot
        s = np.concatenate([[0.0], s])
        x = np.concatenate([[x0], x])
        r = np.concatenate([[0.0], r])
        th = np.concatenate([[math.pi / 2], th])
        ka = np.concatenate([[x0 / (2.0 * n)], ka])
        return ProfileCurve(n, s, x, r, th, ka, "disk", tip_index=0, tolerances=tol,
                            shoot=x0, trajectory=traj)
    # catenoid: even reflection through the neck
    s = np.concatenate([-s[:0:-1], s])
    x = np.concatenate([-x[:0:-1], x])
    r = np.concatenate([r[:0:-1], r])
    th = np.concatenate([-th[:0:-1], th])
    ka = np.concatenate([ka[:0:-1], ka])
    return ProfileCurve(n, s, x, r, th, ka, "catenoid", tolerances=tol, shoot=traj.shoot,
                        trajectory=traj)


# ---------------------------------------------------------------------------
# Asymptotic aperture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApertureFit:
    """Asymptotic cone angle of one end and the leading graph coefficient.

    ``offset_coefficient`` is c in f(rho) ~ c / rho where f is the signed
    distance from the cone ray along the ray's normal; ``offset_exponent`` is
    the log-log slope of |f|.
    """

    aperture: float
    offset_coefficient: float
    residual: float
    offset_exponent: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def asymptotic_aperture(curve: ProfileCurve, terms: int = 4) -> ApertureFit:
    """Fit phi(rho) = a + sum_k c_k rho^{-2k} on the far end.

    The polar angle phi of the curve point, not the tangent angle, is fitted,
    so the result does not depend on orientation.  Fitting polynomials in
    rho^{-2} is Richardson extrapolation of the known rho^{-2} tail.

    Raises:
        DomainError: the end does not reach rho >= 12.
        NoAsymptoteError: theta is not monotone on the tail.
    """
    traj = curve.trajectory
    if traj is None and curve.rho[0] > curve.rho[-1]:
        curve = curve.reversed()
    if traj is not None:
        lo, hi = max(traj.rho_switch, traj.rho_max / 3), traj.rho_max
        rho = np.linspace(lo, hi, 121)
        x, r, th, _ = traj.at_rho(rho)
    else:
        i0 = curve.end_start()
        rr = curve.rho[i0:]
        if rr[-1] < 12:
            raise DomainError("end region must reach rho >= 12 for an aperture fit")
        lo, hi = max(rr[0], rr[-1] / 3), rr[-1]
        sel = slice(i0 + np.searchsorted(rr, lo), None)
        rho = curve.rho[sel]
        x, r, th = curve.x[sel], curve.r[sel], curve.theta[sel]
    phi = np.arctan2(r, x)
    d = np.diff(th)
    scale = 1e-12 * max(1.0, float(np.max(np.abs(th))))
    big = d[np.abs(d) > scale]
    if big.size and not (np.all(big > 0) or np.all(big < 0)):
        raise NoAsymptoteError("tangent angle is not monotone on the tail")
    if np.all(phi == phi[0]):
        return ApertureFit(float(phi[0]), 0.0, 0.0, float("nan"), (float(lo), float(hi)))
    u = (rho / hi) ** -2
    V = np.vander(u, terms + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, phi, rcond=None)
    a = float(coef[0])
    res = float(np.sqrt(np.mean((V @ coef - phi) ** 2)))
    f = -rho * np.sin(phi - a)
    c = float(np.sum(f / rho) / np.sum(rho ** -2.0))
    nz = np.abs(f) > 0
    if np.count_nonzero(nz) >= 3:
        slope = float(np.polyfit(np.log(rho[nz]), np.log(np.abs(f[nz])), 1)[0])
    else:
        slope = float("nan")
    return ApertureFit(a, c, res, slope, (float(lo), float(hi)))


# ---------------------------------------------------------------------------
# Sweeps and matching
# ---------------------------------------------------------------------------


def aperture_of(spec: ShootingSpec, shoot: float) -> float:
    return asymptotic_aperture(integrate_profile(spec, shoot)).aperture


def default_grid(kind: str) -> tuple[float, ...]:
    if kind == "disk":
        pos = np.geomspace(1e-3, 10.0, 33)
        return tuple(np.concatenate([-pos[::-1], [0.0], pos]))
    return tuple(np.geomspace(0.02, 12.0, 41))


@dataclass(frozen=True)
class ApertureSweep:
    """Aperture map sampled on a shooting grid; failed shoots are NaN."""

    kind: str
    shoots: tuple[float, ...]
    apertures: tuple[float, ...]

    def window(self) -> tuple[float, float]:
        a = np.array(self.apertures)
        a = a[np.isfinite(a)]
        return float(a.min()), float(a.max())

    def brackets(self, target: float) -> list[tuple[float, float, float, float]]:
        out = []
        s = self.shoots
        a = self.apertures
        for i in range(len(s) - 1):
            if not (math.isfinite(a[i]) and math.isfinite(a[i + 1])):
                continue
            g0, g1 = a[i] - target, a[i + 1] - target
            if g0 == 0.0:
                out.append((s[i], s[i], a[i], a[i]))
            elif g0 * g1 < 0:
                out.append((s[i], s[i + 1], a[i], a[i + 1]))
        return out


@functools.lru_cache(maxsize=32)
def aperture_sweep(spec: ShootingSpec, shoots: tuple[float, ...] | None = None) -> ApertureSweep:
    """Aperture of every shoot in the grid (deterministic order)."""
    grid = default_grid(spec.kind) if shoots is None else tuple(shoots)
    vals = []
    for s in grid:
        try:
            vals.append(aperture_of(spec, s))
        except (IntegrationError, NoAsymptoteError, ToleranceError):
            vals.append(float("nan"))
    return ApertureSweep(spec.kind, tuple(float(g) for g in grid), tuple(vals))


@dataclass(frozen=True)
class MatchResult:
    shoot: float
    aperture: float
    bracket: tuple[float, float]
    iterations: int


def refine_shoot(spec: ShootingSpec, target: float, lo: float, hi: float,
                 a_lo: float, a_hi: float, atol: float = 1e-14) -> MatchResult:
    """Bisection down to a narrow bracket, then safeguarded secant steps."""
    if lo == hi:
        return MatchResult(lo, a_lo, (lo, hi), 0)
    g_lo, g_hi = a_lo - target, a_hi - target
    it = 0
    while abs(hi - lo) > 1e-3 * max(abs(lo), abs(hi)) and it < 60:
        mid = 0.5 * (lo + hi)
        g = aperture_of(spec, mid) - target
        it += 1
        if g == 0:
            return MatchResult(mid, target, (mid, mid), it)
        if (g < 0) == (g_lo < 0):
            lo, g_lo = mid, g
        else:
            hi, g_hi = mid, g
    x0, x1, f0, f1 = lo, hi, g_lo, g_hi
    best = (lo, g_lo) if abs(g_lo) < abs(g_hi) else (hi, g_hi)
    for _ in range(40):
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0) if f1 != f0 else 0.5 * (lo + hi)
        if not min(lo, hi) < x2 < max(lo, hi):
            x2 = 0.5 * (lo + hi)
        f2 = aperture_of(spec, x2) - target
        it += 1
        if (f2 < 0) == (g_lo < 0):
            lo, g_lo = x2, f2
        else:
            hi, g_hi = x2, f2
        if abs(f2) < abs(best[1]):
            best = (x2, f2)
        if abs(f2) <= atol or abs(hi - lo) <= 4e-16 * max(abs(lo), abs(hi)) or abs(x2 - x1) <= 2e-16 * abs(x2):
            break
        x0, f0, x1, f1 = x1, f1, x2, f2
    width = abs(x2 - x1) if abs(hi - lo) > abs(x2 - x1) else abs(hi - lo)
    return MatchResult(best[0], best[1] + target, (best[0] - width / 2, best[0] + width / 2), it)


def match_branches(target_aperture: float, spec: ShootingSpec) -> list[MatchResult]:
    """All shooting parameters whose curve has the requested top aperture."""
    sweep = aperture_sweep(spec)
    lo, hi = sweep.window()
    if spec.kind == "disk" and target_aperture == math.pi / 2:
        return [MatchResult(0.0, math.pi / 2, (0.0, 0.0), 0)]
    brackets = sweep.brackets(target_aperture)
    if not brackets:
        raise WindowError(
            f"aperture {target_aperture!r} outside the attainable window [{lo!r}, {hi!r}] "
            f"of {spec.kind} curves (shoot range {sweep.shoots[0]!r}..{sweep.shoots[-1]!r})",
            swept=(lo, hi),
        )
    return [refine_shoot(spec, target_aperture, *b) for b in brackets]


def match_cone(target: RotCone, kind: str, spec: ShootingSpec, branch: int = -1) -> ProfileCurve:
    """Curve of the given kind asymptotic to the (top component of the) cone.

    For a double cone and catenoid kind the even reflection matches the bottom
    component automatically.  ``branch`` selects among several solutions,
    ordered by increasing shoot parameter.
    """
    spec = spec.with_kind(kind)
    if target.n != spec.n:
        raise DomainError("cone and shooting spec disagree on n")
    a = target.components[0].aperture
    if kind == "catenoid" and not (target.is_double and target.is_symmetric):
        raise DomainError("catenoid curves need a symmetric double cone")
    results = match_branches(a, spec)
    res = results[branch]
    return integrate_profile(spec, res.shoot)


def catenoid_window(spec: ShootingSpec) -> tuple[float, float, float]:
    """(lower aperture, upper aperture, shoot at the minimum) of catenoids."""
    spec = spec.with_kind("catenoid")
    sweep = aperture_sweep(spec)
    a = np.array(sweep.apertures)
    i = int(np.nanargmin(a))
    s = sweep.shoots
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, len(s) - 1)]
    res = minimize_scalar(lambda t: aperture_of(spec, math.exp(t)), bounds=(math.log(lo), math.log(hi)),
                          method="bounded", options={"xatol": 1e-6})
    amin = float(res.fun)
    return amin, float(np.nanmax(a)), math.exp(float(res.x))


# ---------------------------------------------------------------------------
# Pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExpanderPair:
    """Two expanders with the same asymptotic cone.

    For a symmetric double cone ``sigma0`` is the top disk of the disk pair
    (the bottom one is its reflection) and ``sigma1`` the catenoid.  All
    comparisons are carried out on the top end; ``multiplicity`` counts how
    many congruent ends enter additive quantities such as the entropy.
    ``sign`` is -1 for a swapped pair, whose entropy is the negated entropy
    of the canonical order.
    """

    cone: RotCone
    sigma0: ProfileCurve
    sigma1: ProfileCurve
    spec: ShootingSpec
    kinds: tuple[str, str]
    shoots: tuple[float, float]
    fits: tuple[ApertureFit, ApertureFit]
    labels: dict = field(default_factory=dict)
    multiplicity: int = 1
    sign: int = 1

    @property
    def n(self) -> int:
        return self.cone.n

    @property
    def identical(self) -> bool:
        return self.kinds[0] == self.kinds[1] and self.shoots[0] == self.shoots[1]

    def swapped(self) -> "ExpanderPair":
        labels = dict(self.labels)
        labels["sigma0"], labels["sigma1"] = self.labels.get("sigma1"), self.labels.get("sigma0")
        return replace(self, sigma0=self.sigma1, sigma1=self.sigma0, kinds=self.kinds[::-1],
                       shoots=self.shoots[::-1], fits=self.fits[::-1], labels=labels,
                       sign=-self.sign)

    def max_gap(self, window: tuple[float, float] = (5.0, 8.0), samples: int = 61) -> float:
        rho = np.linspace(*window, samples)
        x0, r0, *_ = self.sigma0.trajectory.at_rho(rho)
        x1, r1, *_ = self.sigma1.trajectory.at_rho(rho)
        return float(np.max(np.hypot(x1 - x0, r1 - r0)))

    def to_dict(self) -> dict:
        return {
            "cone": self.cone.to_dict(),
            "kinds": list(self.kinds),
            "shoots": [fmt(s) for s in self.shoots],
            "fits": [f.to_dict() for f in self.fits],
            "labels": self.labels,
            "multiplicity": self.multiplicity,
            "sign": self.sign,
            "spec": self.spec.to_dict(),
            "orientation": ORIENTATION,
        }


def make_pair(cone: RotCone, spec: ShootingSpec, kind0: str, shoot0: float, kind1: str,
              shoot1: float, allow_identical: bool = False, labels: dict | None = None) -> ExpanderPair:
    """Assemble a pair from shooting data and check its invariants."""
    c0 = integrate_profile(spec.with_kind(kind0), shoot0)
    c1 = integrate_profile(spec.with_kind(kind1), shoot1)
    f0, f1 = asymptotic_aperture(c0), asymptotic_aperture(c1)
    if abs(f0.aperture - f1.aperture) > 1e-8:
        raise DomainError(f"apertures differ by {abs(f0.aperture - f1.aperture):.3g} rad")
    mult = 2 if cone.is_double else 1
    pair = ExpanderPair(cone, c0, c1, spec, (kind0, kind1), (float(shoot0), float(shoot1)), (f0, f1),
                        labels or {"sigma0": kind0, "sigma1": kind1, "graph": "sigma1 over the top end of sigma0"},
                        mult)
    if not allow_identical and pair.max_gap((max(c0.trajectory.rho_switch, c1.trajectory.rho_switch, 5.0), 8.0)) <= 1e-6:
        raise DomainError("sigma0 and sigma1 coincide")
    return pair


def find_nonuniqueness_pair(double_cone: RotCone, spec: ShootingSpec) -> list[ExpanderPair]:
    """Disk pair and every catenoid branch over a symmetric double cone.

    Returns:
        One ExpanderPair per catenoid branch, ordered by increasing neck radius.

    Raises:
        WindowError: aperture pi/2 (degenerate) or outside the catenoid window.
    """
    if not (double_cone.is_double and double_cone.is_symmetric):
        raise DomainError("need a symmetric double cone")
    a = double_cone.components[0].aperture
    if a == math.pi / 2:
        raise WindowError("aperture pi/2: the disk pair degenerates to one plane")
    disk = match_branches(a, spec.with_kind("disk"))
    if len(disk) != 1:
        raise DomainError(f"expected one disk solution, found {len(disk)}")
    cats = match_branches(a, spec.with_kind("catenoid"))
    pairs = []
    for c in cats:
        pairs.append(make_pair(double_cone, spec, "disk", disk[0].shoot, "catenoid", c.shoot,
                               labels={"sigma0": "disk-pair", "sigma1": "catenoid",
                                       "graph": "sigma1 over the top end of sigma0"}))
    return pairs


def identical_pair(cone: RotCone, spec: ShootingSpec, kind: str, shoot: float) -> ExpanderPair:
    return make_pair(cone, spec, kind, shoot, kind, shoot, allow_identical=True,
                     labels={"sigma0": kind, "sigma1": kind, "graph": "identical"})


def write_pair(pair: ExpanderPair, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_curve(pair.sigma0, out / "sigma0.csv")
    write_curve(pair.sigma1, out / "sigma1.csv")
    d = pair.to_dict()
    d["files"] = {"sigma0": "sigma0.csv", "sigma1": "sigma1.csv"}
    path = out / "pair.json"
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path


def read_pair(path: str | Path) -> ExpanderPair:
    """Rebuild a pair by re-integrating its stored shooting data."""
    d = json.loads(Path(path).read_text())
    spec = ShootingSpec(**d["spec"])
    cone = RotCone.from_dict(d["cone"])
    k0, k1 = d["kinds"]
    s0, s1 = (float(s) for s in d["shoots"])
    pair = make_pair(cone, spec, k0, s0, k1, s1, allow_identical=(k0 == k1 and s0 == s1),
                     labels=d.get("labels"))
    if d.get("sign", 1) == -1:
        pair = replace(pair, sign=-1)
    return pair


def load_curve(path: str | Path) -> ProfileCurve:
    return read_curve(path)


def branch_apertures(spec: ShootingSpec, shoots: Sequence[float]) -> list[float]:
    return [aperture_of(spec, s) for s in shoots]
