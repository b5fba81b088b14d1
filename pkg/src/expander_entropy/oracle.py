"""Extended-precision reference values for a disk/catenoid pair.

Both profiles are re-integrated in mpmath with a Taylor-jet method: the
right-hand side is recorded once as an expression tape and its Taylor
coefficients are generated by the usual recurrences for products,
quotients, exp and sin/cos.  With 70 digits and local error 1e-62 the
difference of the two curves is resolved directly, so no rescaling is used.

The catenoid neck radius is refined until the polar angles agree at a
large radius, which pins the aperture to far below the size of the
decaying difference on the comparison window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath as mp

from .errors import DomainError, NumericalError
from .expander_solver import ExpanderPair


# ---------------------------------------------------------------------------
# Taylor-jet tape
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("op", "args", "val", "c", "aux")

    def __init__(self, op, args=(), val=None):
        self.op = op
        self.args = args
        self.val = val
        self.c = []
        self.aux = None


class JetSystem:
    """Autonomous-in-t expression tape for y' = f(t, y)."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.vars: list[_Node] = []
        self.rhs: list[_Node] = []
        self.tnode = self._node("t")

    def _node(self, op, *args, val=None):
        nd = _Node(op, args, val)
        self.nodes.append(nd)
        return nd

    def var(self):
        nd = self._node("var")
        self.vars.append(nd)
        return nd

    def const(self, v):
        return self._node("const", val=mp.mpf(v))

    def add(self, a, b):
        return self._node("add", a, b)

    def sub(self, a, b):
        return self._node("sub", a, b)

    def mul(self, a, b):
        return self._node("mul", a, b)

    def div(self, a, b):
        return self._node("div", a, b)

    def scale(self, a, v):
        return self._node("scale", a, val=mp.mpf(v))

    def power(self, a, k: int):
        out = self.const(1)
        for _ in range(k):
            out = self.mul(out, a)
        return out

    def sincos(self, a):
        nd = self._node("sincos", a)
        return self._node("pick", nd, val=0), self._node("pick", nd, val=1)

    def _coeff(self, nd: _Node, k: int):
        op = nd.op
        c = nd.c
        if op == "t":
            c.append(nd.val if k == 0 else (mp.mpf(1) if k == 1 else mp.mpf(0)))
        elif op == "const":
            c.append(nd.val if k == 0 else mp.mpf(0))
        elif op == "add":
            c.append(nd.args[0].c[k] + nd.args[1].c[k])
        elif op == "sub":
            c.append(nd.args[0].c[k] - nd.args[1].c[k])
        elif op == "scale":
            c.append(nd.val * nd.args[0].c[k])
        elif op == "mul":
            x, y = nd.args[0].c, nd.args[1].c
            c.append(mp.fsum(x[j] * y[k - j] for j in range(k + 1)))
        elif op == "div":
            x, y = nd.args[0].c, nd.args[1].c
            c.append((x[k] - mp.fsum(y[j] * c[k - j] for j in range(1, k + 1))) / y[0])
        elif op == "sincos":
            x = nd.args[0].c
            if k == 0:
                nd.aux = ([mp.sin(x[0])], [mp.cos(x[0])])
            else:
                s, co = nd.aux
                s.append(mp.fsum(j * x[j] * co[k - j] for j in range(1, k + 1)) / k)
                co.append(-mp.fsum(j * x[j] * s[k - j] for j in range(1, k + 1)) / k)
        elif op == "pick":
            c.append(nd.args[0].aux[nd.val][k])

    def jet(self, t0, y0, order: int):
        """Taylor coefficients of the solution through (t0, y0)."""
        for nd in self.nodes:
            nd.c = []
        self.tnode.val = t0
        for v, y in zip(self.vars, y0):
            v.c.append(y)
        for k in range(order):
            for nd in self.nodes:
                if nd.op != "var":
                    self._coeff(nd, k)
            for v, f in zip(self.vars, self.rhs):
                v.c.append(f.c[k] / (k + 1))
        return [list(v.c) for v in self.vars]


def _horner(coeffs, h):
    acc = mp.mpf(0)
    for a in reversed(coeffs):
        acc = acc * h + a
    return acc


def _step_size(jets, tol, order):
    h = None
    for cc in jets:
        scale = max(abs(cc[0]), mp.mpf(1))
        for q in (order, order - 1):
            if cc[q] != 0:
                hq = (tol * scale / abs(cc[q])) ** (mp.mpf(1) / q)
                h = hq if h is None else min(h, hq)
    return mp.mpf("0.7") * h if h is not None else mp.mpf(1)


def integrate_to(system: JetSystem, t0, y0, targets, tol, order, max_steps=200000):
    """Integrate forward and return (state, jet) at each sorted target."""
    t = mp.mpf(t0)
    y = list(y0)
    out = []
    steps = 0
    for target in targets:
        target = mp.mpf(target)
        while t < target:
            jets = system.jet(t, y, order)
            h = min(_step_size(jets, tol, order), target - t)
            y = [_horner(cc, h) for cc in jets]
            t += h
            steps += 1
            if steps > max_steps:
                raise NumericalError("Taylor integrator exceeded its step budget")
        out.append((list(y), system.jet(t, y, order)))
    return out


# ---------------------------------------------------------------------------
# Expander systems
# ---------------------------------------------------------------------------


def _omega(n):
    return 2 * mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2)


def near_system(n: int) -> JetSystem:
    """(x, r, theta, B) in arclength, B the area rescaled by e^{-|gamma|^2/4}."""
    S = JetSystem()
    x, r, th, B = (S.var() for _ in range(4))
    st, ct = S.sincos(th)
    half = mp.mpf(1) / 2
    drift = S.sub(S.mul(r, ct), S.mul(x, st))
    dth = S.scale(drift, half)
    if n > 1:
        dth = S.add(S.scale(S.div(ct, r), n - 1), dth)
    tang = S.add(S.mul(x, ct), S.mul(r, st))
    dB = S.sub(S.scale(S.power(r, n - 1), _omega(n)), S.scale(S.mul(tang, B), half))
    S.rhs = [ct, st, dth, dB]
    return S


def far_system(n: int) -> JetSystem:
    """(phi, beta, s, B) in ambient radius."""
    S = JetSystem()
    phi, b, s, B = (S.var() for _ in range(4))
    t = S.tnode
    one = S.const(1)
    sb, cb = S.sincos(b)
    sp, cp = S.sincos(phi)
    tb = S.div(sb, cb)
    inv = S.div(one, t)
    dphi = S.mul(tb, inv)
    coef = S.add(S.scale(inv, n), S.scale(t, mp.mpf(1) / 2))
    db = S.sub(S.scale(S.mul(S.div(cp, sp), inv), n - 1), S.mul(coef, tb))
    sec = S.div(one, cb)
    w = S.scale(S.mul(S.power(S.mul(t, sp), n - 1), sec), _omega(n))
    dB = S.sub(w, S.mul(S.scale(t, mp.mpf(1) / 2), B))
    S.rhs = [dphi, db, sec, dB]
    return S


@dataclass
class OracleSettings:
    """Working precision and the matching radius for the neck refinement.

    The angle condition at ``rho_big`` leaves an aperture mismatch of the
    size of the decaying difference there, which the weight e^{R^2/4}
    amplifies in E(R); ``rho_big`` must exceed the largest R by a margin.
    """

    dps: int = 70
    tol: str = "1e-62"
    order: int = 36
    tip_epsilon: str = "1e-15"
    rho_big: float = 23.0


def _start(n, kind, shoot, eps):
    om = _omega(n)
    if kind == "disk":
        x0 = mp.mpf(shoot)
        c2 = x0 / (4 * n)
        c4 = (8 * c2 ** 3 - c2 / 2) / (4 * (n + 2))
        xr = 2 * c2 * eps + 4 * c4 * eps ** 3
        y0 = [x0 + c2 * eps ** 2 + c4 * eps ** 4, eps, mp.pi / 2 - mp.atan(xr),
              om * eps ** n / n if n > 1 else 2 * eps]
        return eps + (2 * c2) ** 2 * eps ** 3 / 6, y0
    return mp.mpf(0), [mp.mpf(0), mp.mpf(shoot), mp.mpf(0), mp.mpf(0)]


def profile_far_states(n, kind, shoot, s_switch, targets, st: OracleSettings):
    """Far-phase (state, jet) at each target radius for one profile."""
    eps = mp.mpf(st.tip_epsilon)
    tol = mp.mpf(st.tol)
    s0, y0 = _start(n, kind, shoot, eps)
    (y_sw, _), = integrate_to(near_system(n), s0, y0, [mp.mpf(s_switch)], tol, st.order)
    x, r, th, B = y_sw
    rho = mp.sqrt(x * x + r * r)
    phi = mp.atan2(r, x)
    far0 = [phi, th - phi, mp.mpf(s_switch), B]
    if min(targets) < rho:
        raise DomainError("oracle targets inside the near phase")
    return integrate_to(far_system(n), rho, far0, sorted(targets), tol, st.order)


@dataclass
class OracleResult:
    """Reference values for one pair (top end, canonical order)."""

    rho: list
    hat_u: list
    u: list
    R: list
    E: list
    neck: float
    neck_shift: float
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def _height(n, rho, phi0, beta0, jet1):
    """Signed distance along nu_0 from (rho, phi0) to the curve whose
    far-phase jet at rho is ``jet1``."""
    sb, cb = mp.sin(beta0), mp.cos(beta0)
    phi1 = jet1[0]

    def g(t):
        rq = mp.sqrt(rho * rho + 2 * t * rho * sb + t * t)
        return mp.atan2(-t * cb, rho + t * sb) - (_horner(phi1, rq - rho) - phi0)

    t0 = -rho * (phi1[0] - phi0) / cb
    return mp.findroot(g, (t0, t0 * (1 + mp.mpf("1e-6"))), solver="secant", tol=mp.mpf(10) ** (-2 * mp.mp.dps + 10))


def pair_oracle(pair: ExpanderPair, rho_values=(5, 6, 8, 10, 12), R_values=(6, 8, 10, 12, 16, 20),
                settings: OracleSettings | None = None) -> OracleResult:
    """Reference heights û(rho) and entropies E(R) for a disk/catenoid pair."""
    st = settings or OracleSettings()
    k0, k1 = pair.kinds if pair.sign > 0 else pair.kinds[::-1]
    if sorted((k0, k1)) != ["catenoid", "disk"]:
        raise DomainError("the oracle handles disk/catenoid pairs")
    t0, t1 = (pair.sigma0.trajectory, pair.sigma1.trajectory)
    if pair.sign < 0:
        t0, t1 = t1, t0
    n = pair.n
    with mp.workdps(st.dps):
        big = mp.mpf(st.rho_big)
        targets = sorted(set([mp.mpf(v) for v in rho_values] + [mp.mpf(v) for v in R_values] + [big]))
        res0 = dict(zip(targets, profile_far_states(n, k0, t0.shoot, t0.s_switch, targets, st)))

        def phi_gap(neck):
            (y, _), = profile_far_states(n, k1, neck, t1.s_switch, [big], st)
            return y[0] - res0[big][0][0]

        a = mp.mpf(t1.shoot)
        b = a * (1 + mp.mpf("1e-9"))
        fa, fb = phi_gap(a), phi_gap(b)
        for _ in range(12):
            c = b - fb * (b - a) / (fb - fa)
            a, fa = b, fb
            b = c
            if abs(b - a) < mp.mpf(10) ** (-st.dps + 8) * abs(b):
                break
            fb = phi_gap(b)
        neck = b
        res1 = dict(zip(targets, profile_far_states(n, k1, neck, t1.s_switch, targets, st)))
        hats, us = [], []
        for v in rho_values:
            key = mp.mpf(v)
            y0, _ = res0[key]
            _, jet1 = res1[key]
            u = _height(n, key, y0[0], y0[1], jet1)
            us.append(float(u))
            hats.append(float(u * key ** (n + 1) * mp.exp(key ** 2 / 4)))
        Es = []
        for R in R_values:
            key = mp.mpf(R)
            dB = res1[key][0][3] - res0[key][0][3]
            Es.append(float(pair.multiplicity * dB * mp.exp(key ** 2 / 4)))
        if pair.sign < 0:
            hats = [float("nan")] * len(hats)
            Es = [-e for e in Es]
        return OracleResult(list(map(float, rho_values)), hats, us, list(map(float, R_values)), Es,
                            float(neck), float(neck - mp.mpf(t1.shoot)),
                            {"dps": st.dps, "tol": st.tol, "order": st.order, "rho_big": st.rho_big})
