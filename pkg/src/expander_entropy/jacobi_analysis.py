"""Jacobi fields of aperture families, barrier inequalities and related checks.

Increasing the aperture moves each end against the fixed normal, so the
family parameter used throughout is s = -a; with it the normal speed of the
cone is rho times psi = 1 and the Jacobi field satisfies v / rho -> 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, SizeError, TubeError
from .expander_solver import ShootingSpec, integrate_profile, match_branches
from .geometry_core import (
    IntrinsicField,
    ProfileCurve,
    RotCone,
    drift_laplacian,
    fmt,
    stencil_halfwidth,
)
from .normal_graph import (
    _loglog_slope,
    difference_state,
    normal_heights,
    normal_intersection,
    sinc,
)


def _A2(n, r, theta, kappa):
    rot = (n - 1) * (np.cos(theta) / r) ** 2 if n > 1 else 0.0
    return kappa ** 2 + rot


def jacobi_residual(f: IntrinsicField) -> np.ndarray:
    """Delta v + <x, grad v>/2 + (|A|^2 - 1/2) v on the trimmed grid."""
    g = f.trimmed()
    return drift_laplacian(f).values + (_A2(f.n, g.r, g.theta, g.kappa) - 0.5) * g.values


# ---------------------------------------------------------------------------
# Jacobi fields from families
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JacobiField:
    """Normal speed of an aperture family along its base curve.

    Attributes:
        base: Member of the family at the central aperture.
        rho: Uniform radius grid (stencil padding removed).
        v: Normal speed d/ds with s = -a.
        psi: Constant link speed (1 for this family).
        w: v - rho psi.
        residual: Jacobi operator applied to v.
    """

    base: ProfileCurve
    rho: np.ndarray
    v: np.ndarray
    psi: float
    w: np.ndarray
    residual: np.ndarray
    aperture: float
    step: float
    h: float
    order: int

    @property
    def n(self) -> int:
        return self.base.n

    def window(self, lo, hi):
        return (self.rho >= lo - 1e-12) & (self.rho <= hi + 1e-12)

    def residual_max(self, window=None) -> float:
        sel = self.window(*window) if window else slice(None)
        return float(np.max(np.abs(self.residual[sel])))

    def w_order(self, window=(8.0, 16.0)) -> float:
        """Fitted decay order of |w| (positive when decaying)."""
        sel = self.window(*window)
        return -_loglog_slope(self.rho[sel], self.w[sel])

    def grad_w_order(self, window=(8.0, 16.0)) -> float:
        sel = self.window(*window)
        dw = np.gradient(self.w, self.h)
        return -_loglog_slope(self.rho[sel], dw[sel])

    def leading_coefficient(self, window=(12.0, 24.0)) -> tuple[float, float]:
        """(psi estimate, correction order) from v/rho = psi + c rho^{-q}."""
        sel = self.window(*window)
        rho, ratio = self.rho[sel], self.v[sel] / self.rho[sel]
        V = np.column_stack([np.ones_like(rho), rho ** -2.0])
        coef, *_ = np.linalg.lstsq(V, ratio, rcond=None)
        q = -_loglog_slope(rho, ratio - coef[0])
        return float(coef[0]), q

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "v", "w", "residual"])
            for row in zip(self.rho, self.v, self.w, self.residual):
                w.writerow([fmt(x) for x in row])
        return path


def family_member(kind: str, aperture: float, spec: ShootingSpec, branch: int = -1) -> ProfileCurve:
    """Solution of the given kind over the cone of the given aperture."""
    sp = spec.with_kind(kind)
    if kind == "disk" and aperture == math.pi / 2:
        return integrate_profile(sp, 0.0)
    try:
        found = match_branches(float(aperture), sp)
    except Exception as exc:
        raise type(exc)(f"aperture a = {aperture!r}: {exc}") from exc
    if not found:
        raise DomainError(f"aperture a = {aperture!r}: no {kind} solution")
    return integrate_profile(sp, found[branch].shoot)


def jacobi_from_family(kind: str, aperture: float, step: float = 1e-3, spec: ShootingSpec | None = None,
                       branch: int = -1, window: tuple[float, float] | None = None, h: float = 0.1,
                       order: int = 8) -> JacobiField:
    """Jacobi field by central differences of normal heights across the family.

    Args:
        kind: ``"disk"`` or ``"catenoid"``.
        aperture: Central aperture a.
        step: Aperture step (at most 1e-3).
        spec: Shooting parameters.
        branch: Which solution to follow when several match.
        window: Radius window; defaults to the far field up to 0.85 rho_max.
        h: Grid spacing in rho.  Finer grids amplify the integration noise
            in v (about 1e-12 absolute) through the second derivative.
        order: Stencil order of the residual.
    """
    if not (0 < step <= 1e-3):
        raise DomainError("aperture step must lie in (0, 1e-3]")
    spec = spec or ShootingSpec()
    base = family_member(kind, aperture, spec, branch)
    plus = family_member(kind, aperture + step, spec, branch)
    minus = family_member(kind, aperture - step, spec, branch)
    tb = base.trajectory
    lo_default = max(4.0, tb.rho_switch + 0.5)
    lo, hi = window or (lo_default, 0.85 * spec.rho_max)
    m = stencil_halfwidth(order)
    k = int(math.floor((hi - lo) / h + 1e-9))
    t = lo + h * np.arange(-m, k + m + 1)
    if t[0] <= 0 or t[-1] > spec.rho_max:
        raise SizeError("window too short for the stencils")
    up = normal_intersection(tb, plus.trajectory, t)
    dn = normal_intersection(tb, minus.trajectory, t)
    v = -(up - dn) / (2 * step)
    x, r, th, ka = tb.at_rho(t)
    f = IntrinsicField(base.n, "rho", t, v, x, r, th, ka, order)
    res = jacobi_residual(f)
    sl = slice(m, t.size - m)
    rho = t[sl]
    return JacobiField(base, rho, v[sl], 1.0, v[sl] - rho, res, float(aperture), float(step), h, order)


# ---------------------------------------------------------------------------
# Difference of Jacobi fields across a pair family
# ---------------------------------------------------------------------------


@dataclass
class DifferenceDecayReport:
    window: tuple[float, float]
    exponent: float
    expected_bound: float
    radial_curvature_limit: float
    radial_curvature_order: float
    inconclusive: bool
    rho: list = field(default_factory=list)
    scaled_difference: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def scaled_jacobi_difference(pairs, step: float, rho) -> np.ndarray:
    """rho^{n+1} e^{rho^2/4} (v~_1 - v_0) for pairs at a - step, a, a + step.

    v_i = rho cos(beta_i) d phi_i / ds at equal radius; v~_1 is v_1 moved to
    the foot point of the normal graph.  Differences across the family use
    the rescaled difference states, so nothing of size e^{-rho^2/4} is
    formed by subtraction.
    """
    pm, p0, pp = pairs
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    ds0, dsm, dsp = (difference_state(p) for p in (p0, pm, pp))
    if ds0.identical:
        return np.zeros_like(rho)
    zp, _ = dsp.scaled(rho)
    zm, _ = dsm.scaled(rho)
    _, z2 = ds0.scaled(rho)
    _, b0, _, _ = ds0.end0.end_state(rho)
    _, db = ds0.delta(rho)
    b1 = b0 + db
    # d phi_0 / ds with s = -a
    dphi0 = -(dsp.end0.end_state(rho)[0] - dsm.end0.end_state(rho)[0]) / (2 * step)
    term1 = np.cos(b1) * (-(zp - zm) / (2 * step))
    term2 = -rho ** 2 * z2 * np.sin(b0 + db / 2) * sinc(db / 2) * dphi0
    tau, u = normal_heights(ds0, rho)
    rq = np.sqrt(rho * rho + 2 * u * rho * np.sin(b0) + u * u)
    s_drho = tau * (2 * rho * np.sin(b0) + u) / (rq + rho)

    def v1(r):
        _, bb, _, _ = ds0.end1.end_state(r)
        d = -(dsp.end1.end_state(r)[0] - dsm.end1.end_state(r)[0]) / (2 * step)
        return r * np.cos(bb) * d

    eps = 1e-4
    dv1 = (v1(rho + eps) - v1(rho - eps)) / (2 * eps)
    return term1 + term2 + dv1 * s_drho


def jacobi_difference_decay(pairs, step: float, window: tuple[float, float] = (8.0, 16.0),
                            h: float = 0.1, noise_floor: float = 1e-6) -> DifferenceDecayReport:
    """Fitted exponent of log|v~_1 - v_0| + rho^2/4 against log rho.

    Args:
        pairs: Pairs at apertures a - step, a, a + step.
        step: Aperture step.
        window: Fitting window.
        h: Sampling step.
        noise_floor: Scaled differences below this count as noise.
    """
    rho = np.arange(window[0], window[1] + 1e-9, h)
    n = pairs[1].n
    W = scaled_jacobi_difference(pairs, step, rho)
    base = pairs[1].sigma0.trajectory
    _, _, _, ka = base.at_rho(rho)
    rk = rho ** 3 * ka
    V = np.column_stack([np.ones_like(rho), rho ** -2.0])
    coef, *_ = np.linalg.lstsq(V, rk, rcond=None)
    curv_order = -_loglog_slope(rho, ka)
    if np.all(np.abs(W) <= noise_floor):
        return DifferenceDecayReport(tuple(window), float("nan"), -(n + 1) + 0.5, float(coef[0]), curv_order,
                                     True, rho.tolist(), W.tolist())
    y = np.log(np.abs(W)) - (n + 1) * np.log(rho)
    slope = float(np.polyfit(np.log(rho), y, 1)[0])
    return DifferenceDecayReport(tuple(window), slope, -(n + 1) + 0.5, float(coef[0]), curv_order, False,
                                 rho.tolist(), W.tolist())


# ---------------------------------------------------------------------------
# Barriers
# ---------------------------------------------------------------------------


@dataclass
class BarrierReport:
    """Sign margin of a barrier inequality, normalized by rho^{-2} w.

    A positive margin means the inequality holds at that radius.
    ``R1`` is the smallest sampled radius beyond which the margin stays
    positive on the window, or None.
    """

    kind: str
    params: dict
    window: tuple[float, float]
    min_margin: float
    R1: float | None
    tail_margin: float
    variant: str = "as-stated"
    rho: list = field(default_factory=list)
    margin: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.R1 is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holds"] = self.holds
        return d

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def _log_derivs(n, rho, kind, A=0.0, eps=0.0, sign=1.0):
    """First and second rho-derivatives of log w for the barrier families."""
    if kind == "w_A":
        l1 = -(n + 1) / rho - sign * 2 * A / rho ** 3 - rho / 2
        l2 = (n + 1) / rho ** 2 + sign * 6 * A / rho ** 4 - 0.5
    else:
        k = n + 1 - eps
        l1 = -k / rho - rho / 2
        l2 = k / rho ** 2 - 0.5
    return l1, l2


def _drift_operator_ratio(n, rho, x, r, theta, kappa, l1, l2):
    """(Delta w + <x, grad w>/2) / w for a radial function w = e^{l(rho)}."""
    ct, st = np.cos(theta), np.sin(theta)
    tang = x * ct + r * st
    supp = x * st - r * ct
    c = tang / rho
    c_s = (1.0 + kappa * supp - c * c) / rho
    rot = (n - 1) * st / r if n > 1 else 0.0
    return c * c * (l1 * l1 + l2) + c_s * l1 + (rot + 0.5 * tang) * c * l1


def verify_barrier(sigma0: ProfileCurve, kind: str = "w_A", params: dict | None = None,
                   window: tuple[float, float] = (8.0, 20.0), h: float = 0.05,
                   variant: str = "as-stated") -> BarrierReport:
    """Evaluate a barrier inequality on the computed end of sigma0.

    For ``w_A = rho^{-n-1} e^{A rho^{-2} - rho^2/4}`` the inequality is

        Delta w + <x, grad w>/2 - w/2 <= V1 w + <V2, grad w> - (A/2) rho^{-2} w

    with V1 = -|A|^2 and V2 = 0 (the linear part of the graph equation).
    ``variant="reciprocal"`` uses e^{-A rho^{-2}} instead.  For
    ``w^eps = rho^{-n-1+eps} e^{-rho^2/4}`` the margin is the coefficient
    -(Delta w + <x, grad w>/2 + (|A|^2 - 1/2) w)/w, which should approach
    eps/2.  Margins are reported in units of rho^{-2} for w_A and as the
    raw coefficient for w^eps.

    Raises:
        DomainError: bad parameters or window outside the data.
    """
    params = dict(params or {})
    n = sigma0.n
    lo, hi = window
    if hi - lo < 4 * h:
        raise SizeError("window too short")
    traj = sigma0.trajectory
    top = traj.rho_max if traj is not None else float(np.max(sigma0.rho))
    if hi > top:
        raise DomainError(f"window beyond the data (rho_max = {top})")
    rho = np.arange(lo, hi + 1e-9, h)
    if traj is not None:
        x, r, th, ka = traj.at_rho(rho)
    else:
        x, r, th, ka = sigma0.at_rho(rho)
    A2 = _A2(n, r, th, ka)
    if kind == "w_A":
        A = float(params.get("A", 10.0))
        if A <= 0:
            raise DomainError("A must be positive")
        sign = 1.0 if variant == "as-stated" else -1.0
        l1, l2 = _log_derivs(n, rho, "w_A", A=A, sign=sign)
        Lw = _drift_operator_ratio(n, rho, x, r, th, ka, l1, l2) - 0.5
        margin = rho ** 2 * (-A2 - 0.5 * A / rho ** 2 - Lw)
    elif kind in ("w_eps", "w^eps"):
        kind = "w_eps"
        eps = float(params.get("eps", 0.1))
        if not (0 < eps < 1):
            raise DomainError("eps must lie in (0, 1)")
        l1, l2 = _log_derivs(n, rho, "w_eps", eps=eps)
        Jw = _drift_operator_ratio(n, rho, x, r, th, ka, l1, l2) + A2 - 0.5
        margin = -Jw
    else:
        raise DomainError(f"unknown barrier {kind!r}")
    pos = margin > 0
    R1 = None
    if pos[-1]:
        bad = np.flatnonzero(~pos)
        R1 = float(rho[bad[-1] + 1]) if bad.size else float(rho[0])
    return BarrierReport(kind, params, (lo, hi), float(np.min(margin)), R1, float(margin[-1]), variant,
                         rho.tolist(), margin.tolist())


def plane_barrier_margin(n: int, rho, A: float, sign: float = 1.0):
    """Closed-form w_A margin on the flat plane (units of rho^{-2})."""
    rho = np.asarray(rho, dtype=float)
    l1, l2 = _log_derivs(n, rho, "w_A", A=A, sign=sign)
    Lw = l1 * l1 + l2 + (n - 1) / rho * l1 + 0.5 * rho * l1 - 0.5
    return rho ** 2 * (-0.5 * A / rho ** 2 - Lw)


# ---------------------------------------------------------------------------
# Decay dichotomy for the linearized equation
# ---------------------------------------------------------------------------


@dataclass
class DichotomyReport:
    source_power: float
    exponent: float
    envelope_loss: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return asdict(self)


def linear_decay_dichotomy(sigma0: ProfileCurve, source_power: float, window=(12.0, 24.0),
                           R_start: float | None = None, R_end: float | None = None) -> DichotomyReport:
    """Solve the Jacobi equation with source rho^{p} e^{-rho^2/4} and fit its decay.

    The rescaled unknown v^ = rho^{n+1} e^{rho^2/4} v satisfies a radial ODE
    whose growing mode is suppressed by integrating inwards; the free
    constant is fixed by v^(R_start) = 0, so the result is the solution
    driven purely by the source.  R_start defaults to half a unit beyond the
    switch radius; the anchor leaves a transient of relative size
    (R_start/rho)^2 in the fitted exponent.

    Returns:
        Fitted exponent of log|v| + rho^2/4 against log rho and the loss
        relative to -(n+1).
    """
    n = sigma0.n
    traj = sigma0.trajectory
    R_end = R_end or 0.85 * traj.rho_max
    R_start = R_start or traj.rho_switch + 0.5
    q = source_power + n + 1  # source in rescaled form: rho^q

    def coeffs(rho):
        x, r, th, ka = traj.at_rho(np.atleast_1d(rho))
        ct, st = np.cos(th), np.sin(th)
        tang = x * ct + r * st
        supp = x * st - r * ct
        c = tang / rho
        c_s = (1.0 + ka * supp - c * c) / rho
        rot = (n - 1) * st / r if n > 1 else 0.0
        ell = -(n + 1) / rho - rho / 2
        ell_p = (n + 1) / rho ** 2 - 0.5
        drift = rot + 0.5 * tang
        a2 = c * c
        a1 = c_s + 2 * c * c * ell + drift * c
        a0 = c * c * (ell * ell + ell_p) + c_s * ell + drift * c * ell + _A2(n, r, th, ka) - 0.5
        return float(a2[0]), float(a1[0]), float(a0[0])

    def rhs(rho, y, src):
        a2, a1, a0 = coeffs(rho)
        return [y[1], (src * rho ** q - a1 * y[1] - a0 * y[0]) / a2]

    def shoot(src, value):
        slope = -2 * src * R_end ** (q - 1)
        sol = solve_ivp(rhs, (R_end, R_start), [value, slope], args=(src,), method="DOP853",
                        rtol=1e-11, atol=1e-14, dense_output=True)
        return sol.sol

    part = shoot(1.0, 0.0)
    hom = shoot(0.0, 1.0)
    cst = -part(R_start)[0] / hom(R_start)[0]
    rho = np.linspace(window[0], window[1], 161)
    vhat = part(rho)[0] + cst * hom(rho)[0]
    slope = float(np.polyfit(np.log(rho), np.log(np.abs(vhat)) - (n + 1) * np.log(rho), 1)[0])
    return DichotomyReport(float(source_power), slope, slope + n + 1, tuple(window))


# ---------------------------------------------------------------------------
# Hessian structure of the extended link function
# ---------------------------------------------------------------------------


@dataclass
class HessianReport:
    points: list
    gradient_normal: list
    hessian_normal: list
    hessian_tangential: list
    scaling_ratio: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _psi_tilde(kind: str, m: int):
    if kind == "constant":
        return lambda X: np.ones(X.shape[:-1])
    if kind == "azimuthal":
        return lambda X: np.cos(m * np.arctan2(X[..., 2], X[..., 1]))
    raise DomainError(f"unknown link function {kind!r}")


def hessian_structure_check(cone: RotCone, rho_values=(5.0, 10.0), psi: str = "azimuthal", m: int = 2,
                            offset: float = 0.0, chi: float = 0.3, tube: float = 0.2,
                            h: float = 1e-3) -> HessianReport:
    """Finite-difference derivatives of psi o pi_Gamma in ambient R^3.

    The point at radius rho sits at polar angle a + offset and azimuth chi.
    e0 is radial, e1 the unit normal of the cone inside the axial plane and
    e2 the azimuthal direction.

    Raises:
        TubeError: |offset| not inside the tube around the link.
    """
    if cone.n != 2 and psi != "constant":
        raise DomainError("the azimuthal check lives in R^3 (n = 2)")
    if abs(offset) >= tube:
        raise TubeError("test point outside the tube around the link")
    f = _psi_tilde(psi, m)
    a = cone.components[0].aperture + offset
    out_g, out_hn, out_ht, pts = [], [], [], []
    for rho in rho_values:
        P = rho * np.array([math.cos(a), math.sin(a) * math.cos(chi), math.sin(a) * math.sin(chi)])
        e0 = P / rho
        e1 = np.array([-math.sin(a), math.cos(a) * math.cos(chi), math.cos(a) * math.sin(chi)])
        e2 = np.array([0.0, -math.sin(chi), math.cos(chi)])

        def d1(u):
            return (f(P + h * u) - f(P - h * u)) / (2 * h)

        def d2(u, v):
            return (f(P + h * u + h * v) - f(P + h * u - h * v) - f(P - h * u + h * v)
                    + f(P - h * u - h * v)) / (4 * h * h)

        out_g.append([float(d1(e0)), float(d1(e1))])
        out_hn.append([float(d2(e0, e0)), float(d2(e0, e1)), float(d2(e1, e1))])
        out_ht.append(float(d2(e2, e2)))
        pts.append(P.tolist())
    ratio = None
    if len(rho_values) >= 2 and out_ht[0] != 0:
        ratio = out_ht[-1] / out_ht[0]
    return HessianReport(pts, out_g, out_hn, out_ht, ratio)
