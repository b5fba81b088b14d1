"""Normal graphs of one expander over the end of another.

The difference of two expanders with the same cone decays like
rho^{-n-1} e^{-rho^2/4}, far below the resolution of the curves themselves,
so it is never formed by subtracting positions beyond a matching radius.
Instead the difference of the polar far-field states (delta phi, delta beta)
at equal ambient radius is carried as an unknown of its own, rescaled by

    z1 = rho^{n+2} e^{rho^2/4} delta_phi,   z2 = rho^n e^{rho^2/4} delta_beta,

whose equation has no cancellation (sin-cardinal kernels replace the
differences of trigonometric functions).  The decaying solution is selected
by integrating inwards from the outer radius and fitting its single free
amplitude to the directly computed difference at the matching radius.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit

from .errors import AmbiguityError, DomainError, RangeError, TubeError, UnreliableFitError
from .expander_solver import ExpanderPair, Trajectory
from .geometry_core import (
    IntrinsicField,
    ProfileCurve,
    fmt,
    hessian_norm,
    stencil_halfwidth,
)


def sinc(x):
    """sin(x)/x with the removable singularity filled in."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def sinc_minus_one(x):
    """sin(x)/x - 1 without cancellation for small x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    x2 = x * x
    out = np.where(small, -x2 / 6 + x2 * x2 / 120, 0.0)
    big = ~small
    if np.any(big):
        out = np.where(big, np.sin(np.where(big, x, 1.0)) / np.where(big, x, 1.0) - 1.0, out)
    return out


def one_minus_cos_product(b0, b1):
    """1 - cos(b0) cos(b1) accurately for small angles."""
    return 2 * np.sin(b0 / 2) ** 2 + np.cos(b0) * 2 * np.sin(b1 / 2) ** 2


def weight_log(n: int, rho):
    """log of rho^{n+1} e^{rho^2/4}."""
    rho = np.asarray(rho, dtype=float)
    return (n + 1) * np.log(rho) + rho ** 2 / 4


# ---------------------------------------------------------------------------
# Difference state
# ---------------------------------------------------------------------------


def _kernels(phi0, b0, dphi, db):
    phi1 = phi0 + dphi
    b1 = b0 + db
    cc = np.cos(b0) * np.cos(b1)
    t_beta = sinc(db) / cc
    t_minus = (sinc_minus_one(db) + one_minus_cos_product(b0, b1)) / cc
    c_phi = sinc(dphi) / (np.sin(phi0) * np.sin(phi1))
    return t_beta, t_minus, c_phi


class DifferenceState:
    """Sigma_1 minus Sigma_0 far-field states at equal ambient radius.

    Below ``r_match`` the difference comes from subtracting the two directly
    integrated curves (provenance ``"intersection"``); from ``r_match`` to
    the outer radius it is the decaying solution of the difference equation
    (provenance ``"shadow"``).  Beyond ``r_match`` the second hypersurface is
    therefore represented as Sigma_0 plus the decaying difference; the two
    descriptions agree at ``r_match`` up to the matching diagnostic.

    Attributes:
        r_match: Matching radius.
        amplitude: Value of z1 at the outer radius.
        mismatch_beta: Relative disagreement of z2 at ``r_match`` between the
            decaying solution and direct subtraction (a consistency check).
    """

    def __init__(self, end0: Trajectory, end1: Trajectory, r_match: float | None = None,
                 rho_max: float | None = None, tol: float = 1e-13):
        if end0.n != end1.n:
            raise DomainError("ends of different dimension")
        self.n = end0.n
        self.end0 = end0
        self.end1 = end1
        lo = max(end0.rho_switch, end1.rho_switch)
        self.r_match = float(r_match) if r_match is not None else max(lo + 0.25, 4.0)
        if self.r_match < lo:
            raise DomainError(f"matching radius {self.r_match} inside the near phase (needs >= {lo})")
        self.rho_max = float(rho_max if rho_max is not None else min(end0.rho_max, end1.rho_max))
        self.tol = tol
        self.identical = (end0 is end1) or (end0.kind == end1.kind and end0.shoot == end1.shoot)
        self.solution = None
        self.amplitude = 0.0
        self.mismatch_beta = 0.0
        if not self.identical:
            self._solve()

    # -- scaling ---------------------------------------------------------------

    def scale_phi(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho ** (self.n + 2) * np.exp(rho ** 2 / 4)

    def scale_beta(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho ** self.n * np.exp(rho ** 2 / 4)

    # -- construction ------------------------------------------------------------

    def _rhs(self, rho, z):
        n = self.n
        phi0, b0, _, _ = self.end0.end_state(rho)
        dphi = z[0] / self.scale_phi(rho)
        db = z[1] / self.scale_beta(rho)
        t_beta, t_minus, c_phi = _kernels(phi0, b0, dphi, db)
        dz1 = ((n + 2) / rho + rho / 2) * z[0] + rho * t_beta * z[1]
        dz2 = -(n / rho + rho / 2) * t_minus * z[1] - (n - 1) * c_phi * z[0] / rho ** 3
        return [dz1, dz2]

    def _integrate(self, amp):
        rho = self.rho_max
        phi0, b0, _, _ = self.end0.end_state(rho)
        t_beta = 1.0 / math.cos(b0) ** 2
        z2 = -((self.n + 2) / rho + rho / 2) * amp / (rho * t_beta)
        return solve_ivp(self._rhs, (self.rho_max, self.r_match), [amp, z2], method="DOP853",
                         rtol=self.tol, atol=1e-300, dense_output=True)

    def direct(self, rho):
        """(delta phi, delta beta) by subtracting the two integrated curves."""
        p0, b0, _, _ = self.end0.end_state(rho)
        p1, b1, _, _ = self.end1.end_state(rho)
        return p1 - p0, b1 - b0

    def _solve(self):
        rm = self.r_match
        dphi, dbeta = self.direct(rm)
        target = float(dphi) * float(self.scale_phi(rm))
        a0 = target
        s0 = self._integrate(a0)
        f0 = s0.y[0, -1] - target
        a1 = a0 * (target / s0.y[0, -1]) if s0.y[0, -1] != 0 else a0 * 1.5
        sol = s0
        for _ in range(30):
            sol = self._integrate(a1)
            f1 = sol.y[0, -1] - target
            if f1 == 0 or abs(a1 - a0) <= 1e-15 * abs(a1):
                break
            a0, a1, f0 = a1, a1 - f1 * (a1 - a0) / (f1 - f0), f1
        self.solution = sol.sol
        self.amplitude = float(a1)
        z2_direct = float(dbeta) * float(self.scale_beta(rm))
        z2 = float(sol.y[1, -1])
        self.mismatch_beta = abs(z2 - z2_direct) / max(abs(z2_direct), 1e-300)

    # -- evaluation --------------------------------------------------------------

    def scaled(self, rho):
        """(z1, z2) for rho >= r_match (zeros for identical ends)."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if np.any(rho > self.rho_max * (1 + 1e-15)):
            raise RangeError(f"radius beyond {self.rho_max}")
        if self.identical:
            return np.zeros_like(rho), np.zeros_like(rho)
        out1 = np.empty_like(rho)
        out2 = np.empty_like(rho)
        far = rho >= self.r_match
        if np.any(far):
            z = self.solution(rho[far])
            out1[far], out2[far] = z[0], z[1]
        near = ~far
        if np.any(near):
            dp, db = self.direct(rho[near])
            out1[near] = dp * self.scale_phi(rho[near])
            out2[near] = db * self.scale_beta(rho[near])
        return out1, out2

    def delta(self, rho):
        """Unscaled (delta phi, delta beta)."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if self.identical:
            return np.zeros_like(rho), np.zeros_like(rho)
        out = self.direct(rho) if np.all(rho < self.r_match) else None
        if out is not None:
            return out
        z1, z2 = self.scaled(rho)
        return z1 / self.scale_phi(rho), z2 / self.scale_beta(rho)

    def provenance(self, rho):
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return np.where(rho >= self.r_match, "shadow", "intersection")

    def cartesian(self, rho):
        """(delta x, delta r, delta theta) at equal rho, without cancellation."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        phi0, _, _, _ = self.end0.end_state(rho)
        dphi, db = self.delta(rho)
        half = np.sin(dphi / 2)
        mid = phi0 + dphi / 2
        return -2 * rho * np.sin(mid) * half, 2 * rho * np.cos(mid) * half, dphi + db

    def derivative_scaled(self, rho):
        """Derivative of (z1, z2) from the difference equation."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if self.identical:
            return np.zeros_like(rho), np.zeros_like(rho)
        z = self.scaled(rho)
        d = self._rhs(rho, z)
        return np.asarray(d[0]), np.asarray(d[1])


def difference_state(pair: ExpanderPair, r_match: float | None = None) -> DifferenceState:
    key = ("_diff", r_match)
    cache = pair.__dict__.setdefault("_cache", {})
    if key not in cache:
        end0, end1 = pair.sigma0.trajectory, pair.sigma1.trajectory
        if end0 is None or end1 is None:
            raise DomainError("pair curves carry no dense trajectories")
        cache[key] = DifferenceState(end0, end1, r_match=r_match, rho_max=pair.spec.rho_max,
                                     tol=max(pair.spec.tol, 1e-13))
    return cache[key]


# ---------------------------------------------------------------------------
# Normal heights
# ---------------------------------------------------------------------------


def _atan_ratio(X):
    """atan(X)/X."""
    X = np.asarray(X, dtype=float)
    small = np.abs(X) < 1e-4
    safe = np.where(small, 1.0, X)
    return np.where(small, 1 - X * X / 3, np.arctan(safe) / safe)


def normal_heights(ds: DifferenceState, rho) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled height tau = rho^{n+1} e^{rho^2/4} u at base radii ``rho``.

    The normal line p + t nu_0 of Sigma_0 meets Sigma_1 where the polar angle
    of the point equals that of Sigma_1 at the point's radius.  The equation
    is multiplied through by rho^{n+2} e^{rho^2/4} and solved for tau by
    secant iteration; when the radial displacement of the foot point is
    tiny it is expanded to second order so that no huge number ever
    multiplies a difference.

    Returns:
        (tau, u) arrays; u underflows to 0 where it is not representable.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    n = ds.n
    if ds.identical:
        z = np.zeros_like(rho)
        return z, z.copy()
    lw = weight_log(n, rho)
    phi0, b0, _, _ = ds.end0.end_state(rho)
    dphi0, dbeta0 = ds.end0.end_derivatives(rho)
    # second derivative of phi_0 from the far-phase equations
    cb = np.cos(b0)
    d2phi0 = dbeta0 / (cb * cb * rho) - np.tan(b0) / rho ** 2
    z1, z2 = ds.scaled(rho)
    t_beta, _, _ = _kernels(phi0, b0, *ds.delta(rho))
    sb = np.sin(b0)

    def residual(tau):
        t = tau * np.exp(-lw)
        denom = rho + t * sb
        X = t * cb / denom
        lhs = -tau * cb * rho / denom * _atan_ratio(X)
        rho_q = np.sqrt(rho * rho + 2 * t * rho * sb + t * t)
        drho = (2 * t * rho * sb + t * t) / (rho_q + rho)
        m = rho * (2 * rho * sb + t) / (rho_q + rho)  # (rho^{n+2} e^{rho^2/4}) drho / tau
        small = np.abs(drho) < 1e-5
        rhs = np.empty_like(tau)
        if np.any(small):
            ss = small
            rhs[ss] = (z1[ss] + tau[ss] * m[ss] * (dphi0[ss] + 0.5 * d2phi0[ss] * drho[ss])
                       + rho[ss] * z2[ss] * t_beta[ss] * drho[ss])
        big = ~small
        if np.any(big):
            rq = np.clip(rho_q[big], ds.end0.rho_switch, ds.rho_max)
            p0q = ds.end0.end_state(rq)[0]
            dq, _ = ds.delta(rq) if np.all(rq >= ds.r_match) or np.all(rq < ds.r_match) else _mixed_delta(ds, rq)
            diff = p0q + dq - phi0[big]
            rhs[big] = diff * np.exp(lw[big]) * rho[big]
        return lhs - rhs

    tau0 = -z1 * cb
    tau1 = tau0 * (1 + 1e-7) + np.where(tau0 == 0, 1e-300, 0.0)
    f0 = residual(tau0)
    f1 = residual(tau1)
    for _ in range(50):
        denom = f1 - f0
        step = np.where(denom != 0, f1 * (tau1 - tau0) / np.where(denom != 0, denom, 1.0), 0.0)
        tau2 = tau1 - step
        tau0, f0 = tau1, f1
        tau1 = tau2
        f1 = residual(tau1)
        if np.all(np.abs(step) <= 1e-15 * np.abs(tau1) + 1e-300):
            break
    u = tau1 * np.exp(-lw)
    return tau1, u


def _mixed_delta(ds: DifferenceState, rq):
    out0 = np.empty_like(rq)
    out1 = np.empty_like(rq)
    lo = rq < ds.r_match
    if np.any(lo):
        out0[lo], out1[lo] = ds.direct(rq[lo])
    hi = ~lo
    if np.any(hi):
        out0[hi], out1[hi] = ds.delta(rq[hi])
    return out0, out1


def direct_intersection(pair: ExpanderPair, rho, max_iter: int = 40) -> np.ndarray:
    """Signed heights from Newton's method on p + t nu_0 = gamma_1(sigma).

    Both curves are evaluated from their dense trajectories in Cartesian
    coordinates; no difference state is involved.  Only meaningful where
    |u| is far above the curves' absolute accuracy (rho up to about 6).
    """
    return normal_intersection(pair.sigma0.trajectory, pair.sigma1.trajectory, rho, max_iter)


def normal_intersection(c0: Trajectory, c1: Trajectory, rho, max_iter: int = 40) -> np.ndarray:
    """Heights t with p + t nu_0(p) on the curve ``c1``, p on ``c0`` at radius rho."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    x0, r0, th0, _ = c0.at_rho(rho)
    nx, nr = np.sin(th0), -np.cos(th0)
    sig = c1.s_at_rho(rho)
    t = np.zeros_like(rho)
    for _ in range(max_iter):
        x1, r1, th1, _ = c1.at_s(sig)
        fx = x0 + t * nx - x1
        fr = r0 + t * nr - r1
        # Jacobian columns: d/dt = nu_0, d/dsigma = -T_1
        a, b = nx, -np.cos(th1)
        c, d = nr, -np.sin(th1)
        det = a * d - b * c
        dt = (d * fx - b * fr) / det
        dsig = (-c * fx + a * fr) / det
        t -= dt
        sig -= dsig
        if np.all(np.abs(dt) <= 1e-16 * (1 + np.abs(t))):
            break
    return t


def check_unique_intersections(pair: ExpanderPair, rho, samples: int = 4001) -> None:
    """Raise AmbiguityError if a normal line meets the top end of Sigma_1 twice in the tube.

    Only the part of Sigma_1 with nonnegative arclength is scanned; the
    mirrored sheet of a double-cone expander belongs to the other end.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    c0 = pair.sigma0.trajectory
    curve1 = pair.sigma1
    x0, r0, th0, k0 = c0.at_rho(rho)
    lam = np.abs(k0)
    if pair.n > 1:
        lam = np.maximum(lam, np.abs(np.cos(th0) / r0))
    tube = 0.5 / np.maximum(lam, 1e-12)
    top = np.flatnonzero(curve1.s >= 0)
    idx = top[np.linspace(0, top.size - 1, min(samples, top.size)).astype(int)]
    X, R = curve1.x[idx], curve1.r[idx]
    for i in range(rho.size):
        dxv, drv = X - x0[i], R - r0[i]
        along = dxv * np.cos(th0[i]) + drv * np.sin(th0[i])
        normal = dxv * np.sin(th0[i]) - drv * np.cos(th0[i])
        inside = np.abs(normal) < tube[i]
        sgn = np.sign(along)
        cross = inside[1:] & inside[:-1] & (sgn[1:] * sgn[:-1] < 0)
        if np.count_nonzero(cross) > 1:
            raise AmbiguityError(f"normal line at rho = {rho[i]:.6g} meets sigma1 more than once",
                                 rho=float(rho[i]))


# ---------------------------------------------------------------------------
# Graph fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GraphField:
    """Normal-graph height over the top end of Sigma_0 on a uniform rho grid.

    ``hat_u`` is the stored unknown; ``u`` is derived from it and may
    underflow.  ``d1_hat`` and ``d2_hat`` are the first and second
    arclength derivatives of ``hat_u`` along Sigma_0.
    """

    n: int
    rho: np.ndarray
    u: np.ndarray
    hat_u: np.ndarray
    d1_hat: np.ndarray
    d2_hat: np.ndarray
    provenance: np.ndarray
    R0: float
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    hess_hat: np.ndarray
    rho_max: float = float("inf")
    components: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.rho[1] - self.rho[0])

    def window(self, lo: float, hi: float) -> np.ndarray:
        return (self.rho >= lo - 1e-12) & (self.rho <= hi + 1e-12)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "u", "hat_u", "d1_hat", "d2_hat", "provenance"])
            for row in zip(self.rho, self.u, self.hat_u, self.d1_hat, self.d2_hat, self.provenance):
                w.writerow([fmt(v) for v in row[:5]] + [row[5]])
        return path


def _assemble(n, base: ProfileCurve, t, tau, prov, R0, rho_max, components, order, meta):
    x, r, th, ka = base.at_rho(t)
    f = IntrinsicField(n, "rho", t, tau, x, r, th, ka, order)
    d1, d2 = f.intrinsic_derivatives()
    hess = hessian_norm(f)
    m = f.halfwidth
    sl = slice(m, t.size - m)
    rho = t[sl]
    hat = tau[sl]
    u = hat * np.exp(-weight_log(n, rho))
    return GraphField(n, rho, u, hat, d1, d2, np.asarray(prov)[sl], float(R0), x[sl], r[sl], th[sl],
                      ka[sl], hess, rho_max, components, meta)


def build_graph_field(pair: ExpanderPair, R0: float | None = None, h: float = 0.05,
                      rho_end: float | None = None, order: int = 4,
                      r_match: float | None = None, check_ambiguity: bool = True) -> GraphField:
    """Height of sigma1 over the top end of sigma0 on [R0, rho_end].

    Args:
        pair: The two expanders.
        R0: Inner radius; defaults to the matching radius of the difference
            state (both curves are then in their far phase).
        h: Grid spacing in rho.
        rho_end: Outer radius, default rho_max minus the stencil padding.
        order: Stencil accuracy order for the derivatives.
        r_match: Override for the matching radius.
        check_ambiguity: Scan normal lines for multiple intersections.

    Raises:
        AmbiguityError: some normal line meets sigma1 twice inside the tube.
    """
    ds = difference_state(pair, r_match)
    n = pair.n
    m = stencil_halfwidth(order)
    R0 = ds.r_match if R0 is None else float(R0)
    lo_ok = max(pair.sigma0.trajectory.rho_switch, pair.sigma1.trajectory.rho_switch)
    if R0 - m * h < lo_ok:
        raise DomainError(f"R0 = {R0} too close to the near phase (needs >= {lo_ok + m * h:.4g})")
    top = ds.rho_max - m * h - 1e-9
    rho_end = top if rho_end is None else min(float(rho_end), top)
    k = int(math.floor((rho_end - R0) / h + 1e-9))
    t = R0 + h * np.arange(-m, k + m + 1)
    if check_ambiguity and not ds.identical:
        probe = t[(t <= min(ds.r_match + 2.0, t[-1]))]
        check_unique_intersections(pair, probe)
    tau, _ = normal_heights(ds, t)
    prov = ds.provenance(t)
    comps = 2 if pair.cone.is_double else 1
    return _assemble(n, pair.sigma0, t, tau, prov, R0, ds.rho_max, comps, order,
                     {"r_match": ds.r_match, "amplitude": ds.amplitude,
                      "mismatch_beta": ds.mismatch_beta, "h": h})


def synthetic_graph_field(base: ProfileCurve, window: tuple[float, float], hat_func=None,
                          u_func=None, h: float = 0.05, order: int = 4) -> GraphField:
    """GraphField from a closed-form û or u (test fields and negative controls)."""
    n = base.n
    m = stencil_halfwidth(order)
    lo, hi = window
    k = int(math.floor((hi - lo) / h + 1e-9))
    t = lo + h * np.arange(-m, k + m + 1)
    if hat_func is not None:
        tau = np.broadcast_to(np.asarray(hat_func(t), dtype=float), t.shape).copy()
    else:
        tau = np.asarray(u_func(t), dtype=float) * np.exp(weight_log(n, t))
    return _assemble(n, base, t, tau, np.full(t.shape, "synthetic"), lo, float(hi), 1, order, {"h": h})


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def _loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    ok = y > 0
    if np.count_nonzero(ok) < 3:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


@dataclass(frozen=True)
class DecayReport:
    """Outcome of the sharp-decay checks on a window."""

    window: tuple[float, float]
    slope: float
    expected: float
    decay_ok: bool
    sup_grad: float
    sup_hess: float
    grad_growth: float
    hess_growth: float
    bounds_ok: bool
    radial_exponent: float
    inconclusive: bool = False

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def verify_pointwise_decay(f: GraphField, window: tuple[float, float] = (8.0, 16.0),
                           slope_tol: float = 0.3, growth_tol: float = 0.1) -> DecayReport:
    """Slope of log|u| + rho^2/4 against log rho and rescaled derivative bounds.

    log|u| + rho^2/4 = log|û| - (n + 1) log rho is evaluated from the stored
    û, so underflow of u is irrelevant.
    """
    lo, hi = window
    if hi < 2 * lo * 0.999 and hi - lo < 8:
        raise DomainError("decay window must span a factor of two or more")
    sel = f.window(lo, hi)
    rho = f.rho[sel]
    hat = f.hat_u[sel]
    n = f.n
    if not np.any(np.abs(hat) > 1e-300):
        nan = float("nan")
        return DecayReport((lo, hi), nan, -(n + 1.0), False, 0.0, 0.0, nan, nan, False, nan, True)
    y = np.log(np.abs(hat)) - (n + 1) * np.log(rho)
    slope = float(np.polyfit(np.log(rho), y, 1)[0])
    g = rho * np.abs(f.d1_hat[sel])
    hs = rho ** 2 * np.abs(f.hess_hat[sel])
    gg = _loglog_slope(rho, g)
    hg = _loglog_slope(rho, hs)
    c = (f.x[sel] * np.cos(f.theta[sel]) + f.r[sel] * np.sin(f.theta[sel]))
    radial = _loglog_slope(rho, c * f.d1_hat[sel])
    grad_ok = not (gg > growth_tol) if math.isfinite(gg) else True
    hess_ok = not (hg > growth_tol) if math.isfinite(hg) else True
    return DecayReport((lo, hi), slope, -(n + 1.0), abs(slope + n + 1) <= slope_tol,
                       float(np.max(g)), float(np.max(hs)), gg, hg, grad_ok and hess_ok, radial)


@dataclass(frozen=True)
class TraceReport:
    """Trace at infinity per link component and the quality of its fit.

    ``trace`` and ``residual`` come from the two-term model tr + c rho^{-2};
    ``trace_refined`` from the model that also fits the rate.
    """

    trace: tuple[float, ...]
    rate: float
    residual: float
    coefficient: float
    window: tuple[float, float]
    trace_refined: float = float("nan")

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def _fit_rate(rho, hat, tr, c, exact: bool):
    x0 = rho[0]
    if exact:
        model = lambda x, a, b, p: a + b * (x / x0) ** (-p)
        p0 = (tr, c * x0 ** -2.0, 2.0)
    else:
        # one subleading power absorbs the rho^{-4} tail that biases p
        model = lambda x, a, b, p, d: a + b * (x / x0) ** (-p) + d * (x / x0) ** (-p - 2)
        p0 = (tr, c * x0 ** -2.0, 2.0, 0.0)
    popt, _ = curve_fit(model, rho, hat, p0=p0, maxfev=50000)
    return float(popt[2]), float(popt[0])


def trace_at_infinity(f: GraphField, window: tuple[float, float] | None = None,
                      min_rate: float = 1.0) -> TraceReport:
    """Fit û = tr + c rho^{-2} on the tail and measure the convergence rate.

    The rate p comes from a separate fit û = tr + c rho^{-p} + d rho^{-p-2}.
    For symmetric double cones both components carry the same trace.

    Raises:
        UnreliableFitError: fitted rate below ``min_rate``.
    """
    if window is None:
        window = (max(8.0, f.R0 + 2.0), 0.8 * f.rho_max if math.isfinite(f.rho_max) else f.rho[-1])
    sel = f.window(*window)
    rho = f.rho[sel]
    hat = f.hat_u[sel]
    if rho.size < 6:
        raise DomainError("trace window holds fewer than six samples")
    if np.all(hat == 0):
        return TraceReport((0.0,) * f.components, float("nan"), 0.0, 0.0, tuple(window), 0.0)
    V = np.column_stack([np.ones_like(rho), rho ** -2.0])
    coef, *_ = np.linalg.lstsq(V, hat, rcond=None)
    res = float(np.sqrt(np.mean((V @ coef - hat) ** 2)))
    tr, c = float(coef[0]), float(coef[1])
    exact = res <= 1e-12 * max(abs(tr), abs(c) * rho[0] ** -2.0, 1e-300)
    if abs(c) * rho[0] ** -2.0 <= 1e-14 * abs(tr):
        return TraceReport((tr,) * f.components, float("nan"), res, c, tuple(window), tr)
    try:
        rate, refined = _fit_rate(rho, hat, tr, c, exact)
    except RuntimeError as exc:
        raise UnreliableFitError(f"trace rate fit failed: {exc}") from exc
    if rate < min_rate:
        raise UnreliableFitError(f"fitted convergence rate {rate:.3g} below {min_rate}")
    return TraceReport((tr,) * f.components, rate, res, c, tuple(window), refined)


def _geometry_terms(f: GraphField):
    n = f.n
    rho = f.rho
    ct, st = np.cos(f.theta), np.sin(f.theta)
    tang = f.x * ct + f.r * st
    supp = f.x * st - f.r * ct
    c = tang / rho
    c_s = (1.0 + f.kappa * supp - c * c) / rho
    rot = (n - 1) * st / f.r if n > 1 else np.zeros_like(rho)
    A2 = f.kappa ** 2 + ((n - 1) * (ct / f.r) ** 2 if n > 1 else 0.0)
    ell = -(n + 1) / rho - rho / 2
    ell_p = (n + 1) / rho ** 2 - 0.5
    return c, c_s, rot, tang, A2, ell, ell_p


def rescaled_jacobi_operator(f: GraphField, hat=None, d1=None, d2=None, potential=None):
    """(L u)/w for u = w û with w = rho^{-n-1} e^{-rho^2/4}.

    L u = Delta u + <x, grad u>/2 + (V - 1/2) u with V = |A|^2 by default.
    Returns (Lhat, grad_hat) where grad_hat = (grad u)/w along the profile.
    """
    hat = f.hat_u if hat is None else hat
    d1 = f.d1_hat if d1 is None else d1
    d2 = f.d2_hat if d2 is None else d2
    c, c_s, rot, tang, A2, ell, ell_p = _geometry_terms(f)
    V = A2 if potential is None else potential
    drift = rot + 0.5 * tang
    grad = d1 + c * ell * hat
    lap = d2 + 2 * c * ell * d1 + (c * c * (ell * ell + ell_p) + c_s * ell) * hat
    return lap + drift * grad + (V - 0.5) * hat, grad


@dataclass(frozen=True)
class PdeResidualReport:
    window: tuple[float, float]
    constant: float
    ratio_growth: float
    violated: bool
    max_abs_residual_hat: float

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def graph_pde_residual(f: GraphField, sigma0: ProfileCurve | None = None,
                       window: tuple[float, float] = (4.0, 9.0), growth_tol: float = 1.0) -> PdeResidualReport:
    """Q = Delta u + <x, grad u>/2 + (|A|^2 - 1/2) u and the constant in
    |Q| <= C (rho^{-2}|u| + rho^{-3}|grad u|).

    Everything is divided by the weight w, so Q/w is computed from û and
    its derivatives.  The bound is declared violated when the ratio grows
    faster than rho^{growth_tol} across the window.
    """
    sel = f.window(*window)
    if np.count_nonzero(sel) < 5:
        raise DomainError("residual window holds fewer than five samples")
    Lhat, grad = rescaled_jacobi_operator(f)
    rho = f.rho[sel]
    Q = np.abs(Lhat[sel])
    denom = rho ** -2.0 * np.abs(f.hat_u[sel]) + rho ** -3.0 * np.abs(grad[sel])
    if np.all(Q == 0):
        return PdeResidualReport(tuple(window), 0.0, float("nan"), False, 0.0)
    ratio = np.where(denom > 0, Q / np.where(denom > 0, denom, 1.0), np.inf)
    growth = _loglog_slope(rho, ratio)
    C = float(np.max(ratio))
    return PdeResidualReport(tuple(window), C, growth, bool(growth > growth_tol or not math.isfinite(C)),
                             float(np.max(Q)))


@dataclass(frozen=True)
class PdeCoefficients:
    """Coefficients of the linear parts of the u and û equations.

    Delta u + <x, grad u>/2 - u/2 = V1 u + V2 u_s   and
    Delta û - <x, grad û>/2   = W1 û + W2 û_s.
    """

    rho: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    orders: dict


def pde_coefficients(f: GraphField) -> PdeCoefficients:
    c, c_s, rot, tang, A2, ell, ell_p = _geometry_terms(f)
    rho = f.rho
    V1 = -A2
    V2 = np.zeros_like(rho)
    # L~w / w with L~ = Delta + <x, grad>/2 - 1/2 applied to the weight
    Lw = c * c * (ell * ell + ell_p) + c_s * ell + (rot + 0.5 * tang) * c * ell - 0.5
    W1 = V1 - Lw
    W2 = -(2 * c * ell + tang)
    orders = {k: -_loglog_slope(rho, v) for k, v in (("V1", V1), ("W1", W1), ("W2", W2))}
    return PdeCoefficients(rho, V1, V2, W1, W2, orders)


# ---------------------------------------------------------------------------
# Geometry of a normal graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphGeometry:
    """Geometry of q = p + u nu_0 in the principal frame of Sigma_0 at p.

    Index 1 is the profile direction, index ``rot`` any rotational one.
    """

    q: np.ndarray          # (2, m) points of Sigma_1 in the (x, r) plane
    nu1: np.ndarray        # (2, m)
    g11: np.ndarray
    g_rot: np.ndarray
    ginv11: np.ndarray
    ginv_rot: np.ndarray
    h11: np.ndarray
    h_rot: np.ndarray
    H1: np.ndarray
    support1: np.ndarray   # <q, nu1>

    @property
    def expander_defect(self) -> np.ndarray:
        return self.H1 - 0.5 * self.support1


def normal_graph_geometry(n, x, r, theta, kappa, kappa_s, u, u_s, u_ss) -> GraphGeometry:
    """Evaluate the normal-graph formulas for metric, normal and second form.

    Raises:
        TubeError: |u| max|lambda_i| >= 1/2 somewhere.
    """
    x, r, theta, kappa, kappa_s, u, u_s, u_ss = (np.asarray(a, dtype=float)
                                                 for a in (x, r, theta, kappa, kappa_s, u, u_s, u_ss))
    ct, st = np.cos(theta), np.sin(theta)
    lam1 = kappa
    lamr = ct / r if n > 1 else np.zeros_like(kappa)
    lam_max = np.maximum(np.abs(lam1), np.abs(lamr))
    if np.any(np.abs(u) * lam_max >= 0.5):
        i = int(np.argmax(np.abs(u) * lam_max))
        raise TubeError(f"graph leaves the focal tube at sample {i} (|u| lambda = {abs(u[i]) * lam_max[i]:.3g})")
    a1 = 1 - lam1 * u
    ar = 1 - lamr * u
    v = np.sqrt(1 + (u_s / a1) ** 2)
    T = np.array([ct, st])
    nu0 = np.array([st, -ct])
    nu1 = (-(u_s / a1) * T + nu0) / v
    g11 = a1 ** 2 + u_s ** 2
    grr = ar ** 2
    ginv11 = 1 / a1 ** 2 - u_s ** 2 / (v ** 2 * a1 ** 4)
    ginvr = 1 / grr
    lamr_s = st / r * (kappa - lamr) if n > 1 else np.zeros_like(kappa)
    h11 = (2 * lam1 * u_s ** 2 / a1 + u * u_s * kappa_s / a1 + lam1 - lam1 ** 2 * u + u_ss) / v
    hrr = (u * u_s * lamr_s / a1 + lamr - lamr ** 2 * u + (st / r if n > 1 else 0.0) * u_s) / v
    H1 = ginv11 * h11 + ((n - 1) * ginvr * hrr if n > 1 else 0.0)
    q = np.array([x, r]) + u * nu0
    support1 = q[0] * nu1[0] + q[1] * nu1[1]
    return GraphGeometry(q, nu1, g11, grr, ginv11, ginvr, h11, hrr, H1, support1)


def _expander_kappa_s(n, x, r, theta, kappa):
    thp = -kappa
    tang = x * np.cos(theta) + r * np.sin(theta)
    rot = (n - 1) * np.sin(theta) * (thp * r + np.cos(theta)) / r ** 2 if n > 1 else 0.0
    return rot + 0.5 * thp * tang


def graph_geometry(sigma0: ProfileCurve | None, u) -> GraphGeometry:
    """Normal-graph geometry for a GraphField or an IntrinsicField of heights.

    For a GraphField the derivatives of u follow from those of û and the
    analytic weight; the derivative of the profile curvature uses the
    expander equation.  For an IntrinsicField (arbitrary base profile)
    the derivatives come from the field's stencils.
    """
    if isinstance(u, GraphField):
        f = u
        c, c_s, rot, tang, A2, ell, ell_p = _geometry_terms(f)
        w = np.exp(-weight_log(f.n, f.rho))
        uu = f.hat_u * w
        us = w * (f.d1_hat + c * ell * f.hat_u)
        uss = w * (f.d2_hat + 2 * c * ell * f.d1_hat + (c * c * (ell * ell + ell_p) + c_s * ell) * f.hat_u)
        ks = _expander_kappa_s(f.n, f.x, f.r, f.theta, f.kappa)
        return normal_graph_geometry(f.n, f.x, f.r, f.theta, f.kappa, ks, uu, us, uss)
    if isinstance(u, IntrinsicField):
        g = u.trimmed()
        us, uss = u.intrinsic_derivatives()
        kf = u.with_values(u.kappa)
        ks, _ = kf.intrinsic_derivatives()
        return normal_graph_geometry(u.n, g.x, g.r, g.theta, g.kappa, ks, g.values, us, uss)
    raise TypeError("u must be a GraphField or an IntrinsicField")


def reconstructed_mean_curvature(geom: GraphGeometry, h: float, n: int, order: int = 4):
    """Mean curvature of the discrete curve q computed directly by stencils.

    Returns the values on the grid trimmed by the stencil half width.
    """
    from .geometry_core import central_derivative

    qx, qr = geom.q
    dx = central_derivative(qx, h, 1, order)
    dr = central_derivative(qr, h, 1, order)
    m = (qx.size - dx.size) // 2
    th = np.unwrap(np.arctan2(dr, dx))
    speed = np.hypot(dx, dr)
    dth = central_derivative(th, h, 1, order)
    m2 = (th.size - dth.size) // 2
    kap = -dth / speed[m2: speed.size - m2]
    thc = th[m2: th.size - m2]
    rc = qr[m + m2: qr.size - m - m2]
    H = kap + ((n - 1) * np.cos(thc) / rc if n > 1 else 0.0)
    return H, m + m2
