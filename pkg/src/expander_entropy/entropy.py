"""Relative entropy of two expanders with a common cone.

E(R) = int_{Sigma_1 cap B_R} e^{|x|^2/4} - int_{Sigma_0 cap B_R} e^{|x|^2/4}.

Both ends are parametrized by ambient radius, so truncation at the ball is
exact and the weight multiplies the density difference pointwise.  Up to
``R_split`` the weighted areas are subtracted directly (each is carried as a
state of the profile ODE); beyond it only the density difference

    D(rho) = e^{rho^2/4} (J_1 - J_0),   J_i = omega (rho sin phi_i)^{n-1} / cos beta_i,

is integrated, and D is assembled from the rescaled difference state so the
weight never meets a subtraction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .errors import DomainError, RangeError, UnreliableFitError
from .expander_solver import ExpanderPair, ShootingSpec, find_nonuniqueness_pair, match_branches, make_pair
from .geometry_core import RotCone, fmt, sphere_volume
from .normal_graph import build_graph_field, difference_state, sinc, trace_at_infinity

METHODS = ("ball-truncation", "cutoff-phi")


def _canonical(pair: ExpanderPair) -> tuple[ExpanderPair, int]:
    return (pair, 1) if pair.sign > 0 else (pair.swapped(), -1)


def density_difference(pair: ExpanderPair, rho) -> np.ndarray:
    """D(rho) = e^{rho^2/4}(J_1 - J_0) for one end (no multiplicity)."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    ds = difference_state(pair)
    n = pair.n
    if ds.identical:
        return np.zeros_like(rho)
    phi0, b0, _, _ = ds.end0.end_state(rho)
    z1, z2 = ds.scaled(rho)
    dphi, db = ds.delta(rho)
    phi1, b1 = phi0 + dphi, b0 + db
    omega = sphere_volume(n - 1)
    # e^{rho^2/4} sin(dphi/2) and e^{rho^2/4} sin(dbeta/2) from the scaled state
    e_sphi = 0.5 * z1 * rho ** -(n + 2.0) * sinc(dphi / 2)
    e_sb = 0.5 * z2 * rho ** -float(n) * sinc(db / 2)
    s0, s1 = np.sin(phi0), np.sin(phi1)
    if n > 1:
        # sin^{n-1} phi1 - sin^{n-1} phi0 = (s1 - s0) sum_k s1^k s0^{n-2-k}
        geo = sum(s1 ** k * s0 ** (n - 2 - k) for k in range(n - 1))
        e_dS = 2 * np.cos(phi0 + dphi / 2) * e_sphi * geo
        S0 = s0 ** (n - 1)
    else:
        e_dS = np.zeros_like(rho)
        S0 = np.ones_like(rho)
    e_dsec = 2 * np.sin(b0 + db / 2) * e_sb / (np.cos(b0) * np.cos(b1))
    return omega * rho ** (n - 1.0) * (e_dS / np.cos(b1) + S0 * e_dsec)


def weighted_area_difference(pair: ExpanderPair, R: float) -> float:
    """A_1(R) - A_0(R) for one end by direct subtraction of the area states."""
    t0, t1 = pair.sigma0.trajectory, pair.sigma1.trajectory
    B0 = t0.end_state(R)[3]
    B1 = t1.end_state(R)[3]
    return float((B1 - B0) * math.exp(R * R / 4))


def _simpson(f, a: float, b: float, h: float) -> float:
    if b <= a:
        return 0.0
    m = max(2, int(math.ceil((b - a) / h)))
    m += m % 2
    t = np.linspace(a, b, m + 1)
    y = f(t)
    w = np.ones(m + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return float(math.fsum(w * y) * (b - a) / (3 * m))


def _check_radius(pair: ExpanderPair, R: float):
    ds = difference_state(pair)
    lo = max(ds.end0.rho_switch, ds.end1.rho_switch)
    if not (lo <= R <= ds.rho_max):
        raise RangeError(f"R = {R} outside [{lo:.6g}, {ds.rho_max}]")
    return ds, lo


def relative_entropy_at(pair: ExpanderPair, R: float, h: float = 0.01, R_split: float = 6.0) -> float:
    """Approximate relative entropy E(R) (all ends counted).

    Args:
        pair: The two expanders; a swapped pair returns the exact negative.
        R: Ball radius, inside the far phase of both curves.
        h: Step of the composite Simpson rule on the outer part.
        R_split: Radius separating direct subtraction from the density form.

    Raises:
        RangeError: R outside the far-phase range of the data.
    """
    pair, sign = _canonical(pair)
    ds, lo = _check_radius(pair, R)
    if ds.identical:
        return 0.0
    split = min(max(R_split, lo), R)
    inner = weighted_area_difference(pair, split)
    outer = _simpson(lambda t: density_difference(pair, t), split, R, h)
    return sign * pair.multiplicity * (inner + outer)


def smoothstep(t):
    """Quintic C^2 ramp from 0 at t <= 0 to 1 at t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 3 * (10 - 15 * t + 6 * t * t)


def cutoff_profile(rho, R1: float, R2: float, delta: float):
    """Plateau cutoff: ramps up on [R1, R1 + delta] and down on [R2 - delta, R2]."""
    rho = np.asarray(rho, dtype=float)
    return smoothstep((rho - R1) / delta) * smoothstep((R2 - rho) / delta)


def _integrate_pieces(f, nodes, h):
    return math.fsum(_simpson(f, a, b, h) for a, b in zip(nodes[:-1], nodes[1:]))


def cutoff_entropy(pair: ExpanderPair, R1: float, R2: float, delta: float, h: float | None = None) -> float:
    """Entropy of the annulus weighted by the plateau cutoff.

    Raises:
        DomainError: ordering R0 < R1 < R2 - 2 or 0 < delta < 1 violated.
    """
    canon, sign = _canonical(pair)
    ds = difference_state(canon)
    if not (ds.r_match < R1 < R2 - 2) or not (0 < delta < 1):
        raise DomainError("need R0 < R1 < R2 - 2 and 0 < delta < 1")
    _check_radius(canon, R2)
    if ds.identical:
        return 0.0
    h = min(0.01, delta / 40) if h is None else h
    nodes = [R1, R1 + delta, R2 - delta, R2]
    val = _integrate_pieces(lambda t: cutoff_profile(t, R1, R2, delta) * density_difference(canon, t), nodes, h)
    return sign * canon.multiplicity * val


def cutoff_ball_entropy(pair: ExpanderPair, R: float, delta: float, h: float | None = None) -> float:
    """Entropy weighted by 1 inside R - delta, ramping to 0 at R."""
    canon, sign = _canonical(pair)
    h = min(0.01, delta / 40) if h is None else h
    base = relative_entropy_at(canon, R - delta, h=h)
    if difference_state(canon).identical:
        return 0.0
    ramp = _simpson(lambda t: smoothstep((R - t) / delta) * density_difference(canon, t), R - delta, R, h)
    return sign * (base + canon.multiplicity * ramp)


# ---------------------------------------------------------------------------
# Series and extrapolation
# ---------------------------------------------------------------------------


@dataclass
class EntropySeries:
    """Samples E(R) with their extrapolated limit."""

    R: np.ndarray
    E: np.ndarray
    method: str = "ball-truncation"
    delta: float = float("nan")
    E_limit: float = float("nan")
    fit_order: float = float("nan")
    fit_order_ci: tuple[float, float] = (float("nan"), float("nan"))
    coefficient: float = float("nan")
    residual: float = float("nan")
    R_star: float = float("nan")

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        if self.method not in METHODS:
            raise DomainError(f"unknown entropy method {self.method!r}")
        if self.R.size != self.E.size or np.any(np.diff(self.R) <= 0):
            raise DomainError("R must be increasing and match E")
        if not np.all(np.isfinite(self.E)):
            raise DomainError("entropy samples must be finite")

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["R", "E", "method", "delta"])
            for R, E in zip(self.R, self.E):
                w.writerow([fmt(R), fmt(E), self.method, fmt(self.delta)])
        return path

    def to_dict(self) -> dict:
        d = asdict(self)
        d["R"] = self.R.tolist()
        d["E"] = self.E.tolist()
        return d


def _first_monotone(R, E, limit):
    gap = np.abs(E - limit)
    for i in range(gap.size):
        if np.all(np.diff(gap[i:]) <= 0):
            return float(R[i])
    return float("nan")


def extrapolate_limit(series: EntropySeries, max_residual: float = 1e-4) -> EntropySeries:
    """Fit E(R) = E_inf + b R^{-p} by nonlinear least squares.

    Args:
        series: At least five samples spanning a factor of two in R.
        max_residual: Largest accepted RMS residual relative to 1 + |E_inf|.

    Returns:
        The same series with ``E_limit``, ``fit_order`` and its 95% interval,
        ``coefficient``, ``residual`` and ``R_star`` filled in.

    Raises:
        DomainError: too few samples or too narrow a range.
        UnreliableFitError: residual above threshold or failed fit.
    """
    R, E = series.R, series.E
    if R.size < 5 or R[-1] < 2 * R[0]:
        raise DomainError("need at least five samples spanning a factor of two in R")
    spread = np.max(np.abs(E - E[-1]))
    if spread <= 1e-14 * (1 + abs(E[-1])):
        series.E_limit, series.coefficient, series.residual = float(E[-1]), 0.0, 0.0
        series.fit_order = float("nan")
        series.R_star = float(R[0])
        return series
    R0 = R[0]
    model = lambda r, a, b, p: a + b * (r / R0) ** (-p)
    # seed from a log-log slope of successive differences
    d = np.abs(np.diff(E))
    mid = np.sqrt(R[1:] * R[:-1])
    ok = d > 0
    p0 = -np.polyfit(np.log(mid[ok]), np.log(d[ok]), 1)[0] - 1 if np.count_nonzero(ok) >= 2 else 2.0
    p0 = float(np.clip(p0, 0.5, 12))
    b0 = (E[0] - E[-1]) / (1 - (R[-1] / R0) ** (-p0))
    try:
        popt, pcov = curve_fit(model, R, E, p0=(E[0] - b0, b0, p0), maxfev=50000)
    except RuntimeError as exc:
        raise UnreliableFitError(f"entropy extrapolation failed: {exc}") from exc
    res = float(np.sqrt(np.mean((model(R, *popt) - E) ** 2)))
    if res > max_residual * (1 + abs(popt[0])):
        raise UnreliableFitError(f"extrapolation residual {res:.3g} above threshold")
    sd = float(np.sqrt(pcov[2, 2])) if np.all(np.isfinite(pcov)) else float("nan")
    series.E_limit = float(popt[0])
    series.coefficient = float(popt[1] * R0 ** popt[2])
    series.fit_order = float(popt[2])
    series.fit_order_ci = (float(popt[2] - 1.96 * sd), float(popt[2] + 1.96 * sd))
    series.residual = res
    series.R_star = _first_monotone(R, E, series.E_limit)
    return series


DEFAULT_R = (8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0)


def entropy_series(pair: ExpanderPair, R_values=DEFAULT_R, method: str = "ball-truncation",
                   delta: float = 0.5, extrapolate: bool = True, R_split: float = 6.0) -> EntropySeries:
    """E(R) on a list of radii, optionally with the extrapolated limit."""
    if method == "ball-truncation":
        E = [relative_entropy_at(pair, R, R_split=R_split) for R in R_values]
        d = float("nan")
    elif method == "cutoff-phi":
        E = [cutoff_ball_entropy(pair, R, delta) for R in R_values]
        d = float(delta)
    else:
        raise DomainError(f"unknown entropy method {method!r}")
    s = EntropySeries(np.asarray(R_values, dtype=float), np.asarray(E), method, d)
    return extrapolate_limit(s) if extrapolate else s


# ---------------------------------------------------------------------------
# First variation
# ---------------------------------------------------------------------------


@dataclass
class VariationCheck:
    """Finite-difference derivative of E_inf against the trace formula.

    The variation parameter is the aperture a.  Increasing a moves each
    link component at unit speed opposite to the fixed normal, so with
    s = -a the normal speed is psi = 1 and dE/da = +1/2 sum tr |Gamma|.
    """

    apertures: list
    E_limit: list
    traces: list
    link_volume: list
    interior: list = field(default_factory=list)
    measured: list = field(default_factory=list)
    predicted: list = field(default_factory=list)
    rel_error: list = field(default_factory=list)
    psi: float = 1.0
    swapped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> Path:
        path = Path(path)
        d = self.to_dict()
        d["grid"] = d.pop("apertures")
        path.write_text(json.dumps(d, indent=2))
        return path


def predicted_derivative(n: int, aperture: float, traces, psi=1.0) -> float:
    """dE/da = 1/2 sum_components psi tr omega_{n-1} sin^{n-1} a (with s = -a)."""
    vol = sphere_volume(n - 1) * math.sin(aperture) ** (n - 1)
    return 0.5 * sum(psi * t * vol for t in traces)


def family_pairs(apertures, spec: ShootingSpec, kinds=("disk", "catenoid"), branch: int = -1):
    """Pairs over symmetric double cones for each aperture of the family."""
    out = []
    for a in apertures:
        cone = RotCone.double(spec.n, float(a))
        try:
            if tuple(kinds) == ("disk", "catenoid"):
                pair = find_nonuniqueness_pair(cone, spec)[branch]
            else:
                k0, k1 = kinds
                m0 = match_branches(float(a), spec.with_kind(k0))
                m1 = match_branches(float(a), spec.with_kind(k1))
                pair = make_pair(cone, spec, k0, m0[branch].shoot, k1, m1[branch].shoot,
                                 allow_identical=True)
        except Exception as exc:
            raise type(exc)(f"aperture a = {a!r}: {exc}") from exc
        out.append(pair)
    return out


def first_variation_check(apertures, kinds=("disk", "catenoid"), spec: ShootingSpec | None = None,
                          branch: int = -1, swap: bool = False, R_values=DEFAULT_R,
                          pairs=None) -> VariationCheck:
    """Central differences of E_inf over an aperture grid versus the trace formula.

    Args:
        apertures: Equally spaced grid with spacing at most 1e-2.
        kinds: Branch kinds of (sigma0, sigma1).
        spec: Shooting parameters (dimension included).
        branch: Which solution to take when several match.
        swap: Use the swapped pairs (the opposite orientation of the
            graph); traces and entropy then both change sign.
        R_values: Radii of the entropy series behind each E_inf.
        pairs: Pairs already built for ``apertures`` (skips the solves).
    """
    spec = spec or ShootingSpec()
    a = np.asarray(apertures, dtype=float)
    if a.size < 3:
        raise DomainError("need at least three apertures")
    da = np.diff(a)
    if np.any(da <= 0) or np.ptp(da) > 1e-9 * abs(da.mean()) or da.mean() > 1e-2:
        raise DomainError("aperture grid must be increasing, uniform and finer than 1e-2")
    if pairs is None:
        pairs = family_pairs(a, spec, kinds, branch)
    elif len(pairs) != a.size:
        raise DomainError("one pair per aperture is required")
    if swap:
        pairs = [p.swapped() for p in pairs]
    E, traces, vols = [], [], []
    for ak, p in zip(a, pairs):
        try:
            if p.identical:
                E.append(0.0)
                traces.append([0.0] * (2 if p.cone.is_double else 1))
            else:
                E.append(entropy_series(p, R_values).E_limit)
                traces.append(list(trace_at_infinity(build_graph_field(p)).trace))
        except Exception as exc:
            raise type(exc)(f"aperture a = {ak!r}: {exc}") from exc
        vols.append(sphere_volume(spec.n - 1) * math.sin(ak) ** (spec.n - 1))
    chk = VariationCheck(a.tolist(), E, traces, vols, swapped=swap)
    h = float(da.mean())
    for k in range(1, a.size - 1):
        meas = (E[k + 1] - E[k - 1]) / (2 * h)
        pred = predicted_derivative(spec.n, a[k], traces[k])
        chk.interior.append(float(a[k]))
        chk.measured.append(float(meas))
        chk.predicted.append(float(pred))
        chk.rel_error.append(0.0 if meas == pred else abs(meas - pred) / max(abs(pred), 1e-300))
    return chk
