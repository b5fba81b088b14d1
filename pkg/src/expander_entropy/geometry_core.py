"""Profile curves of rotationally symmetric hypersurfaces and discrete operators.

A hypersurface of revolution in R^{n+1} is generated by a planar curve
gamma(s) = (x(s), r(s)) in the half plane r >= 0, parametrized by arclength,
with tangent T = (cos theta, sin theta).  The unit normal is fixed once and
for all as

    nu = (sin theta, -cos theta),

and the second fundamental form is h = <D^2 F, nu>.  With these conventions
the principal curvatures are kappa = <gamma_ss, nu> = -theta' (profile
direction) and cos(theta)/r (the n - 1 rotational directions), the mean
curvature is H = kappa + (n - 1) cos(theta) / r and a self-expander satisfies
H = <gamma, nu> / 2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import DomainError, SizeError

ORIENTATION = "nu = (sin theta, -cos theta)"
KINDS = ("disk", "catenoid", "plane", "planar-curve")


def sphere_volume(k: int) -> float:
    """Volume of the unit k-sphere S^k in R^{k+1}.

    For k = 0 this is 2, the counting measure of the two points of S^0.
    """
    if k < 0:
        raise DomainError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


# ---------------------------------------------------------------------------
# Cones
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConeComponent:
    """One latitude component of a rotationally symmetric cone."""

    aperture: float
    side: str  # "top" or "bottom"


@dataclass(frozen=True)
class RotCone:
    """Cone over one or two latitude spheres of S^n.

    The aperture of a component is the polar angle of its link measured from
    the positive x axis, so the bottom half of a symmetric double cone of
    aperture a has aperture pi - a.
    """

    n: int
    components: tuple[ConeComponent, ...]

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"cone dimension must be >= 1, got {self.n}")
        if not 1 <= len(self.components) <= 2:
            raise DomainError("a cone has one or two latitude components")
        for c in self.components:
            if not 0.0 < c.aperture < math.pi:
                raise DomainError(f"aperture {c.aperture!r} outside (0, pi)")
            if c.side not in ("top", "bottom"):
                raise DomainError(f"unknown side {c.side!r}")
        if len(self.components) == 2:
            top, bot = self.components
            if top.side == bot.side:
                raise DomainError("a double cone needs one top and one bottom component")
            if top.aperture == bot.aperture:
                raise DomainError("double-cone components coincide")

    @classmethod
    def single(cls, n: int, aperture: float) -> "RotCone":
        side = "top" if aperture <= math.pi / 2 else "bottom"
        return cls(n, (ConeComponent(float(aperture), side),))

    @classmethod
    def double(cls, n: int, aperture: float) -> "RotCone":
        """Symmetric double cone with top aperture ``aperture``."""
        a = float(aperture)
        if not 0.0 < a < math.pi / 2:
            raise DomainError(f"symmetric double cone needs top aperture in (0, pi/2), got {a!r}")
        return cls(n, (ConeComponent(a, "top"), ConeComponent(math.pi - a, "bottom")))

    @property
    def is_double(self) -> bool:
        return len(self.components) == 2

    @property
    def is_symmetric(self) -> bool:
        if not self.is_double:
            return False
        top, bot = self.components
        return abs(top.aperture + bot.aperture - math.pi) <= 1e-15 * math.pi

    def link_volume(self, index: int = 0) -> float:
        """omega_{n-1} sin^{n-1}(a) for one component (for n = 1, one per ray)."""
        a = self.components[index].aperture
        if self.n == 1:
            return 1.0
        return sphere_volume(self.n - 1) * math.sin(a) ** (self.n - 1)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "components": [{"aperture": c.aperture, "side": c.side} for c in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RotCone":
        comps = tuple(ConeComponent(float(c["aperture"]), c["side"]) for c in d["components"])
        return cls(int(d["n"]), comps)


# ---------------------------------------------------------------------------
# Profile curves
# ---------------------------------------------------------------------------


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProfileCurve:
    """Samples of the generating curve of a hypersurface of revolution.

    Attributes:
        n: Dimension of the hypersurface.
        s, x, r, theta, kappa: Sample arrays (arclength, axial and radial
            coordinates, tangent angle, profile curvature <gamma_ss, nu>).
        kind: One of ``disk``, ``catenoid``, ``plane``, ``planar-curve``.
        tip_index: Index of the axis sample (r = 0) of a disk, else None.
        tolerances: Free-form record of the tolerances used to build it.
        shoot: Shooting parameter that produced the curve, if any.
        trajectory: Optional dense representation used for accurate
            evaluation between samples.  It is never serialized.
    """

    n: int
    s: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    kind: str = "planar-curve"
    tip_index: int | None = None
    tolerances: dict = field(default_factory=dict)
    shoot: float | None = None
    trajectory: Any = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("s", "x", "r", "theta", "kappa"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        m = self.s.size
        if any(getattr(self, k).size != m for k in ("x", "r", "theta", "kappa")):
            raise SizeError("profile sample arrays differ in length")
        if self.kind not in KINDS:
            raise DomainError(f"unknown curve kind {self.kind!r}")
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if m >= 2 and np.any(np.diff(self.s) <= 0):
            raise DomainError("arclength must be strictly increasing")
        if self.n > 1 and np.any(self.r < 0):
            raise DomainError("radial coordinate must be non-negative")
        zeros = np.flatnonzero(self.r == 0.0)
        if self.n > 1 and zeros.size and (self.tip_index is None or list(zeros) != [self.tip_index]):
            raise DomainError("r = 0 is only allowed at the designated tip sample")

    # -- derived per-sample quantities -------------------------------------

    def __len__(self) -> int:
        return self.s.size

    @property
    def rho(self) -> np.ndarray:
        return np.hypot(self.x, self.r)

    @property
    def normal(self) -> tuple[np.ndarray, np.ndarray]:
        return np.sin(self.theta), -np.cos(self.theta)

    @property
    def support(self) -> np.ndarray:
        """<gamma, nu> at every sample."""
        return self.x * np.sin(self.theta) - self.r * np.cos(self.theta)

    @property
    def tangential(self) -> np.ndarray:
        """<gamma, T> at every sample."""
        return self.x * np.cos(self.theta) + self.r * np.sin(self.theta)

    def end_start(self) -> int:
        """First index of the top end region where rho is strictly increasing."""
        rho = self.rho
        inc = np.diff(rho) > 0
        bad = np.flatnonzero(~inc)
        return 0 if bad.size == 0 else int(bad[-1] + 1)

    # -- transformations ---------------------------------------------------

    def reversed(self) -> "ProfileCurve":
        """Same point set traversed backwards (orientation reversed)."""
        return ProfileCurve(
            self.n, -self.s[::-1], self.x[::-1], self.r[::-1], self.theta[::-1] + math.pi,
            -self.kappa[::-1], self.kind,
            None if self.tip_index is None else len(self) - 1 - self.tip_index,
            dict(self.tolerances), self.shoot, None,
        )

    def reflected(self) -> "ProfileCurve":
        """Mirror image under x -> -x (theta -> pi - theta, kappa -> -kappa)."""
        return ProfileCurve(
            self.n, self.s, -self.x, self.r, math.pi - self.theta, -self.kappa, self.kind,
            self.tip_index, dict(self.tolerances),
            None if self.shoot is None else -self.shoot, None,
        )

    def scaled(self, lam: float) -> "ProfileCurve":
        """Homothetic copy; expanders are not invariant under this map."""
        return ProfileCurve(
            self.n, lam * self.s, lam * self.x, lam * self.r, self.theta, self.kappa / lam,
            self.kind, self.tip_index, dict(self.tolerances), None, None,
        )

    def without_trajectory(self) -> "ProfileCurve":
        return replace(self, trajectory=None)

    # -- evaluation between samples -----------------------------------------

    def _hermite(self):
        cache = self.__dict__.get("_hermite_cache")
        if cache is None:
            s = self.s
            cache = (
                CubicHermiteSpline(s, self.x, np.cos(self.theta)),
                CubicHermiteSpline(s, self.r, np.sin(self.theta)),
                CubicHermiteSpline(s, self.theta, -self.kappa),
                PchipInterpolator(s, self.kappa),
            )
            self.__dict__["_hermite_cache"] = cache
        return cache

    def at_s(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(x, r, theta, kappa) at arclength ``s``."""
        s = np.asarray(s, dtype=float)
        if self.trajectory is not None:
            return self.trajectory.at_s(s)
        if np.any(s < self.s[0]) or np.any(s > self.s[-1]):
            raise DomainError("arclength outside the sampled range")
        hx, hr, ht, hk = self._hermite()
        return hx(s), hr(s), ht(s), hk(s)

    def s_at_rho(self, rho) -> np.ndarray:
        """Arclength on the top end where the ambient radius equals ``rho``."""
        rho = np.asarray(rho, dtype=float)
        if self.trajectory is not None:
            return self.trajectory.s_at_rho(rho)
        i0 = self.end_start()
        rr = self.rho[i0:]
        if np.any(rho < rr[0]) or np.any(rho > rr[-1]):
            raise DomainError("radius outside the end region")
        return PchipInterpolator(rr, self.s[i0:])(rho)

    def at_rho(self, rho):
        return self.at_s(self.s_at_rho(rho))


def curve_from_arrays(n, s, x, r, theta, kappa, kind="planar-curve", **kw) -> ProfileCurve:
    return ProfileCurve(n, s, x, r, theta, kappa, kind, **kw)


def plane_samples(n: int, rho_max: float, ds: float = 0.01) -> ProfileCurve:
    """Exact samples of the hyperplane {x = 0} through the origin."""
    m = int(round(rho_max / ds))
    s = np.linspace(0.0, m * ds, m + 1)
    z = np.zeros_like(s)
    return ProfileCurve(n, s, z, s.copy(), np.full_like(s, math.pi / 2), z, "plane", tip_index=0)


# ---------------------------------------------------------------------------
# Pointwise geometry
# ---------------------------------------------------------------------------


def _check_index(curve: ProfileCurve, index: int) -> int:
    i = int(index)
    if not -len(curve) <= i < len(curve):
        raise DomainError(f"sample index {index} out of range")
    return i % len(curve)


def mean_curvature(curve: ProfileCurve, index: int) -> float:
    """Mean curvature H = kappa + (n - 1) cos(theta) / r at one sample.

    At a disk tip (r = 0) the removable singularity is resolved by the limit
    cos(theta) / r -> kappa, giving H = n kappa.

    Raises:
        DomainError: at r = 0 on a curve that is not a disk.
    """
    i = _check_index(curve, index)
    k = float(curve.kappa[i])
    if curve.n == 1:
        return k
    r = float(curve.r[i])
    if r == 0.0:
        if curve.kind not in ("disk", "plane"):
            raise DomainError("axis sample on a curve without a regular tip")
        return curve.n * k
    return k + (curve.n - 1) * math.cos(float(curve.theta[i])) / r


def second_fundamental_form(curve: ProfileCurve, index: int, regularize: bool = True) -> np.ndarray:
    """Principal curvatures (kappa, cos(theta)/r, ..., cos(theta)/r).

    Args:
        curve: Profile curve.
        index: Sample index.
        regularize: Allow the tip limit, where all principal curvatures equal
            kappa.  With ``False`` the tip is rejected.
    """
    i = _check_index(curve, index)
    k = float(curve.kappa[i])
    if curve.n == 1:
        return np.array([k])
    r = float(curve.r[i])
    if r == 0.0:
        if not regularize or curve.kind not in ("disk", "plane"):
            raise DomainError("second fundamental form at the axis needs tip regularization")
        lam = k
    else:
        lam = math.cos(float(curve.theta[i])) / r
    return np.array([k] + [lam] * (curve.n - 1))


def mean_curvature_array(n, x, r, theta, kappa) -> np.ndarray:
    """Vectorized H; r must be positive."""
    if n == 1:
        return np.asarray(kappa, dtype=float)
    return kappa + (n - 1) * np.cos(theta) / r


def expander_defect(curve: ProfileCurve) -> np.ndarray:
    """Per-sample H - <gamma, nu>/2 using the stored curvature."""
    h = np.array([mean_curvature(curve, i) for i in range(len(curve))]) if curve.tip_index is not None \
        else mean_curvature_array(curve.n, curve.x, curve.r, curve.theta, curve.kappa)
    return h - 0.5 * curve.support


# ---------------------------------------------------------------------------
# Finite-difference stencils
# ---------------------------------------------------------------------------


def fd_weights(order: int, deriv: int) -> np.ndarray:
    """Central finite-difference weights of the given accuracy order.

    Fornberg's recursion on the symmetric stencil -m..m with m = order // 2
    (plus one for even derivatives above the first so that the accuracy order
    is met).
    """
    if order % 2 or order < 2:
        raise DomainError("stencil order must be an even integer >= 2")
    m = order // 2 + (deriv - 1) // 2
    nodes = np.arange(-m, m + 1, dtype=float)
    npts = nodes.size
    c = np.zeros((npts, deriv + 1))
    c1 = 1.0
    c4 = nodes[0]
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, deriv)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i]
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, deriv]


def central_derivative(values: np.ndarray, h: float, deriv: int, order: int = 4) -> np.ndarray:
    """Derivative on the interior of a uniform grid; edges are trimmed.

    The result has ``len(values) - 2*m`` entries where ``m`` is the stencil
    half width returned by :func:`stencil_halfwidth`.
    """
    w = fd_weights(order, deriv)
    m = (w.size - 1) // 2
    v = np.asarray(values, dtype=float)
    if v.size < w.size:
        raise SizeError(f"field of length {v.size} shorter than stencil width {w.size}")
    out = np.zeros(v.size - 2 * m)
    for j, wj in enumerate(w):
        if wj != 0.0:
            out += wj * v[j: j + out.size]
    return out / h ** deriv


def stencil_halfwidth(order: int = 4) -> int:
    return max((fd_weights(order, d).size - 1) // 2 for d in (1, 2))


# ---------------------------------------------------------------------------
# Intrinsic fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IntrinsicField:
    """Rotationally invariant scalar field sampled on a uniform grid.

    The grid coordinate is either arclength (``coord == "s"``) or ambient
    radius on an end (``coord == "rho"``); in the latter case intrinsic
    derivatives follow from d/ds = (d rho / d s) d/d rho.  Geometry arrays
    (x, r, theta, kappa) are sampled on the same grid.
    """

    n: int
    coord: str
    t: np.ndarray
    values: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    order: int = 4

    def __post_init__(self):
        for name in ("t", "values", "x", "r", "theta", "kappa"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.coord not in ("s", "rho"):
            raise DomainError("coordinate must be 's' or 'rho'")
        if self.t.size >= 2:
            d = np.diff(self.t)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
                raise DomainError("intrinsic fields live on uniform increasing grids")

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def halfwidth(self) -> int:
        return stencil_halfwidth(self.order)

    def with_values(self, values) -> "IntrinsicField":
        return replace(self, values=np.asarray(values, dtype=float))

    def trimmed(self, values=None) -> "IntrinsicField":
        m = self.halfwidth
        sl = slice(m, self.t.size - m)
        return IntrinsicField(
            self.n, self.coord, self.t[sl],
            self.values[sl] if values is None else values,
            self.x[sl], self.r[sl], self.theta[sl], self.kappa[sl], self.order,
        )

    def _trim(self, arr: np.ndarray, width: int) -> np.ndarray:
        m = self.halfwidth
        k = m - width
        return arr[k: arr.size - k] if k else arr

    def coordinate_derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        """First and second derivatives with respect to the grid coordinate."""
        if self.t.size < 2 * self.halfwidth + 1:
            raise SizeError(f"field of length {self.t.size} shorter than stencil width")
        d1 = central_derivative(self.values, self.h, 1, self.order)
        d2 = central_derivative(self.values, self.h, 2, self.order)
        m1 = (fd_weights(self.order, 1).size - 1) // 2
        m2 = (fd_weights(self.order, 2).size - 1) // 2
        m = self.halfwidth
        return d1[m - m1: d1.size - (m - m1)], d2[m - m2: d2.size - (m - m2)]

    def intrinsic_derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        """(f_s, f_ss) on the trimmed grid."""
        d1, d2 = self.coordinate_derivatives()
        if self.coord == "s":
            return d1, d2
        g = self.trimmed()
        c, c_s = _radial_speed(g)
        return c * d1, c * c * d2 + c_s * d1


def _radial_speed(f: IntrinsicField) -> tuple[np.ndarray, np.ndarray]:
    """d rho/ds and its arclength derivative from the sampled geometry."""
    rho = np.hypot(f.x, f.r)
    ct, st = np.cos(f.theta), np.sin(f.theta)
    tang = f.x * ct + f.r * st
    supp = f.x * st - f.r * ct
    c = tang / rho
    c_s = (1.0 + f.kappa * supp - c * c) / rho
    return c, c_s


def rotational_factor(n: int, r, theta) -> np.ndarray:
    """(n - 1) r_s / r, the rotational part of the Laplacian of a radial field."""
    if n == 1:
        return np.zeros_like(np.asarray(r, dtype=float))
    return (n - 1) * np.sin(theta) / r


def drift_laplacian(f: IntrinsicField, curve: ProfileCurve | None = None) -> IntrinsicField:
    """Delta_Sigma f + <x, grad f>/2 for a rotationally invariant field.

    The Laplacian reduces to f_ss + (n - 1)(r_s / r) f_s and the drift term to
    <gamma, T> f_s / 2.  The result lives on the trimmed grid.

    Args:
        f: Field on a uniform grid (its geometry arrays describe the curve).
        curve: Accepted for interface symmetry; the field already carries
            the geometry it was sampled on.
    """
    g = f.trimmed()
    if np.any(g.r <= 0) and f.n > 1:
        raise DomainError("drift Laplacian evaluated at the axis")
    fs, fss = f.intrinsic_derivatives()
    tang = g.x * np.cos(g.theta) + g.r * np.sin(g.theta)
    out = fss + rotational_factor(f.n, g.r, g.theta) * fs + 0.5 * tang * fs
    return g.with_values(out)


def hessian_norm(f: IntrinsicField) -> np.ndarray:
    """|nabla^2 f| for a rotationally invariant field (trimmed grid)."""
    g = f.trimmed()
    fs, fss = f.intrinsic_derivatives()
    if f.n == 1:
        return np.abs(fss)
    rot = np.sin(g.theta) / g.r * fs
    return np.sqrt(fss ** 2 + (f.n - 1) * rot ** 2)


def sample_field(
    curve: ProfileCurve,
    func: Callable[..., np.ndarray] | None,
    window: tuple[float, float],
    h: float,
    coord: str = "rho",
    order: int = 4,
    values: np.ndarray | None = None,
) -> IntrinsicField:
    """Sample a field on a uniform grid covering ``window`` plus stencil padding.

    Args:
        curve: Base curve.
        func: Callable ``func(rho, x, r, theta, kappa)`` giving field values;
            ignored if ``values`` is given.
        window: Closed interval of the grid coordinate to be covered after
            trimming.
        h: Grid spacing.
        coord: ``"rho"`` (end region) or ``"s"``.
        order: Stencil accuracy order.
        values: Precomputed values on the padded grid.
    """
    m = stencil_halfwidth(order)
    lo, hi = window
    k = int(math.ceil((hi - lo) / h - 1e-9))
    t = lo + h * np.arange(-m, k + m + 1)
    if coord == "rho":
        x, r, th, ka = curve.at_rho(t)
        rho = t
    else:
        x, r, th, ka = curve.at_s(t)
        rho = np.hypot(x, r)
    if values is None:
        values = func(rho, x, r, th, ka)
    return IntrinsicField(curve.n, coord, t, np.broadcast_to(values, t.shape).astype(float),
                          x, r, th, ka, order)


def uniform_resample(curve: ProfileCurve, h: float, window: tuple[float, float] | None = None):
    """Uniform arclength resampling (cubic Hermite unless a trajectory exists)."""
    lo, hi = window if window is not None else (float(curve.s[0]), float(curve.s[-1]))
    k = int(math.floor((hi - lo) / h + 1e-9))
    s = lo + h * np.arange(k + 1)
    x, r, th, ka = curve.at_s(s)
    return s, x, r, th, ka


def expander_residual(curve: ProfileCurve, h: float | None = None, refine: int = 2,
                      window: tuple[float, float] | None = None, order: int = 8) -> np.ndarray:
    """H - <gamma, nu>/2 recomputed from the tangent angle alone.

    The curve is resampled at spacing h/refine, the profile curvature is
    re-derived from theta by central differences and combined with the
    rotational term.  Samples closer than 2h to the axis are skipped.  By
    default h = min(0.01, 0.05 / max|kappa|), so tight necks are resolved.
    """
    if h is None:
        h = min(0.01, 0.05 / max(1.0, float(np.max(np.abs(curve.kappa)))))
    hh = h / refine
    lo, hi = window if window is not None else (float(curve.s[0]), float(curve.s[-1]))
    s, x, r, th, _ = uniform_resample(curve, hh, (lo, hi))
    m = (fd_weights(order, 1).size - 1) // 2
    kap = -central_derivative(th, hh, 1, order)
    sl = slice(m, s.size - m)
    x, r, th = x[sl], r[sl], th[sl]
    keep = r > 2 * h if curve.n > 1 else np.ones_like(r, dtype=bool)
    H = mean_curvature_array(curve.n, x[keep], r[keep], th[keep], kap[keep])
    supp = x[keep] * np.sin(th[keep]) - r[keep] * np.cos(th[keep])
    return H - 0.5 * supp


def radial_identity_residual(curve: ProfileCurve, h: float = 0.01,
                             window: tuple[float, float] | None = None, order: int = 4) -> np.ndarray:
    """grad H + A(x^T, .)/2 along the profile (vanishes on expanders).

    With H = <x, nu>/2 one finds H_s = -kappa <gamma, T>/2, the sign being a
    consequence of the fixed orientation.
    """
    lo, hi = window if window is not None else (float(curve.s[0]), float(curve.s[-1]))
    s, x, r, th, ka = uniform_resample(curve, h, (lo, hi))
    if curve.n > 1 and np.any(r <= 0):
        raise DomainError("window touches the axis")
    H = mean_curvature_array(curve.n, x, r, th, ka)
    Hs = central_derivative(H, h, 1, order)
    m = (s.size - Hs.size) // 2
    sl = slice(m, s.size - m)
    tang = x[sl] * np.cos(th[sl]) + r[sl] * np.sin(th[sl])
    return Hs + 0.5 * ka[sl] * tang


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def fmt(v: float) -> str:
    """17 significant digits, enough to round-trip binary64."""
    return format(float(v), ".17g")


def write_curve(curve: ProfileCurve, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (sidecar)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "x", "r", "theta", "kappa"])
        for row in zip(curve.s, curve.x, curve.r, curve.theta, curve.kappa):
            w.writerow([fmt(v) for v in row])
    side = path.with_suffix(".json")
    meta = {
        "n": curve.n,
        "kind": curve.kind,
        "orientation": ORIENTATION,
        "tolerances": curve.tolerances,
        "shoot": curve.shoot,
        "tip_index": curve.tip_index,
    }
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, side


def read_curve(path: str | Path) -> ProfileCurve:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(".json").read_text())
    return ProfileCurve(
        int(meta["n"]), data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4],
        meta["kind"], meta.get("tip_index"), meta.get("tolerances", {}), meta.get("shoot"),
    )


def as_array(seq: Sequence[float]) -> np.ndarray:
    return np.asarray(seq, dtype=float)
