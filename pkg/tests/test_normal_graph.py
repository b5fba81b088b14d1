import math
from types import SimpleNamespace

import numpy as np
import pytest

from expander_entropy.errors import AmbiguityError, TubeError, UnreliableFitError
from expander_entropy.expander_solver import ShootingSpec, identical_pair, integrate_profile
from expander_entropy.geometry_core import RotCone, curve_from_arrays, sample_field
from expander_entropy.normal_graph import (
    graph_geometry,
    build_graph_field,
    check_unique_intersections,
    difference_state,
    direct_intersection,
    graph_pde_residual,
    normal_graph_geometry,
    normal_heights,
    pde_coefficients,
    reconstructed_mean_curvature,
    synthetic_graph_field,
    trace_at_infinity,
    verify_pointwise_decay,
    weight_log,
)


@pytest.fixture(scope="module")
def disk():
    return integrate_profile(ShootingSpec(n=2), 0.6)


@pytest.fixture(scope="module")
def same(spec2):
    return identical_pair(RotCone.single(2, 1.0), spec2, "disk", 0.6)


# -- identical pairs -------------------------------------------------------


def test_identical_pair_graph_vanishes(same):
    f = build_graph_field(same)
    assert np.all(f.u == 0.0) and np.all(f.hat_u == 0.0)
    assert trace_at_infinity(f).trace == (0.0,)
    rep = graph_pde_residual(f)
    assert rep.constant == 0.0 and not rep.violated


def test_identical_pair_decay_is_inconclusive(same):
    assert verify_pointwise_decay(build_graph_field(same)).inconclusive


# -- the computed pair ---------------------------------------------------------


def test_hat_u_bounded_and_nonzero(graph_field):
    sel = graph_field.window(graph_field.R0, 20.0)
    assert np.all(np.isfinite(graph_field.hat_u))
    assert 0 < np.max(np.abs(graph_field.hat_u[sel])) < 1e3


def test_weight_identity(graph_field):
    f = graph_field
    ok = np.abs(f.u) >= 1e-280
    back = f.u[ok] * np.exp(weight_log(f.n, f.rho[ok]))
    assert np.max(np.abs(back - f.hat_u[ok]) / np.abs(f.hat_u[ok])) <= 1e-10


def test_shadow_heights_match_direct_intersection(pair):
    rho = np.array([4.5, 5.0, 5.5, 6.0])
    _, u = normal_heights(difference_state(pair), rho)
    direct = direct_intersection(pair, rho)
    assert np.max(np.abs(u - direct) / np.abs(direct)) <= 1e-8


def test_swapped_pair_is_antisymmetric(pair, graph_field):
    g = build_graph_field(pair.swapped())
    f = graph_field
    assert np.array_equal(f.rho, g.rho)
    sup = np.max(np.abs(f.hat_u))
    gap = np.abs(f.hat_u + g.hat_u) / sup
    rho = f.rho
    # O(rho^-2) (1 + sup|û|) with a generous constant
    assert np.all(gap <= 10 * rho ** -2.0 * (1 + sup))
    assert gap[rho >= 12].max() < 1e-10


def test_decay_slope_of_pair(graph_field):
    rep = verify_pointwise_decay(graph_field)
    assert rep.slope == pytest.approx(-3.0, abs=0.3)
    assert rep.decay_ok and rep.bounds_ok


def test_trace_of_pair(graph_field):
    tr = trace_at_infinity(graph_field)
    assert tr.rate == pytest.approx(2.0, abs=0.3)
    assert abs(tr.trace[0]) > 10 * tr.residual
    assert len(tr.trace) == 2 and tr.trace[0] == tr.trace[1]


def test_pde_residual_of_pair(pair, graph_field):
    rep = graph_pde_residual(graph_field, pair.sigma0)
    assert math.isfinite(rep.constant) and not rep.violated


def test_pde_coefficient_orders(graph_field):
    c = pde_coefficients(graph_field)
    assert c.orders["V1"] == pytest.approx(2.0, abs=0.3)
    assert c.orders["W1"] == pytest.approx(2.0, abs=0.3)
    assert c.orders["W2"] == pytest.approx(1.0, abs=0.3)
    assert np.all(c.V2 == 0.0)


def test_csv_header(graph_field, tmp_path):
    path = graph_field.to_csv(tmp_path / "graphfield.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "rho,u,hat_u,d1_hat,d2_hat,provenance"
    assert len(lines) == graph_field.rho.size + 1


# -- synthetic fields and negative controls -----------------------------------


def test_unit_hat_gives_sharp_slope(disk):
    f = synthetic_graph_field(disk, (8.0, 16.0), hat_func=lambda r: np.ones_like(r))
    assert verify_pointwise_decay(f).slope == pytest.approx(-3.0, abs=1e-12)


def test_wrong_power_is_flagged(disk):
    f = synthetic_graph_field(disk, (8.0, 16.0), u_func=lambda r: r ** -2.0 * np.exp(-r ** 2 / 4))
    rep = verify_pointwise_decay(f)
    assert rep.slope == pytest.approx(-2.0, abs=1e-9)
    assert not rep.decay_ok


def test_synthetic_trace(disk):
    f = synthetic_graph_field(disk, (8.0, 24.0), hat_func=lambda r: 2 + 5 * r ** -2.0)
    tr = trace_at_infinity(f)
    assert tr.trace[0] == pytest.approx(2.0, abs=1e-9)
    assert tr.rate == pytest.approx(2.0, abs=1e-3)
    assert tr.residual < 1e-9


def test_slow_trace_is_unreliable(disk):
    f = synthetic_graph_field(disk, (8.0, 24.0), hat_func=lambda r: 2 + 5 * r ** -0.5)
    with pytest.raises(UnreliableFitError):
        trace_at_infinity(f, min_rate=1.0)


def test_pde_residual_flags_non_solution(disk):
    f = synthetic_graph_field(disk, (4.0, 9.0), u_func=lambda r: 1.0 / r)
    assert graph_pde_residual(f).violated


# -- normal-graph geometry ----------------------------------------------------


def test_zero_graph_reproduces_base(disk):
    f = sample_field(disk, lambda rho, *_: np.zeros_like(rho), (5.0, 10.0), 0.05)
    g = graph_geometry(disk, f)
    t = f.trimmed()
    assert np.allclose(g.q[0], t.x) and np.allclose(g.q[1], t.r)
    assert np.allclose(g.nu1[0], np.sin(t.theta)) and np.allclose(g.nu1[1], -np.cos(t.theta))
    H0 = t.kappa + np.cos(t.theta) / t.r
    assert np.max(np.abs(g.H1 - H0)) < 1e-14


def test_offset_cylinder():
    eps = 0.1
    m = 11
    z = np.zeros(m)
    g = normal_graph_geometry(2, np.linspace(0, 1, m), np.ones(m), z, z, z, np.full(m, eps), z, z)
    # nu = (0, -1) on the cylinder, so the graph moves inward to radius 1 - eps
    assert np.allclose(g.g_rot, (1 - eps) ** 2)
    assert np.allclose(g.h_rot * g.ginv_rot, 1 / (1 - eps))
    assert np.allclose(g.q[1], 1 - eps)


def test_tube_violation():
    m = 5
    z = np.zeros(m)
    with pytest.raises(TubeError):
        normal_graph_geometry(2, z, np.ones(m), z, z, z, np.full(m, 0.6), z, z)


def test_graph_geometry_order_and_expander_identity(pair):
    errs, defects = [], []
    for h in (0.1, 0.05, 0.025):
        f = build_graph_field(pair, R0=4.0, h=h, rho_end=10.0)
        g = graph_geometry(pair.sigma0, f)
        H, m = reconstructed_mean_curvature(g, h, 2, order=2)
        rho = f.rho[m:f.rho.size - m]
        sel = (rho >= 5) & (rho <= 8)
        errs.append(np.max(np.abs(H[sel] - g.H1[m:f.rho.size - m][sel])))
        defects.append(np.max(np.abs(g.expander_defect[(f.rho >= 5) & (f.rho <= 8)])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)
    assert defects[-1] < 1e-6


# -- intersections ------------------------------------------------------------


def test_ambiguous_normal_lines_are_reported(disk):
    x0, r0, th0, _ = disk.trajectory.at_rho(np.array([5.0]))
    t = np.linspace(0.0, 2 * math.pi, 400)
    # small loop around the base point: its normal line crosses it twice
    x = x0[0] + 0.1 * np.cos(t)
    r = r0[0] + 0.1 * np.sin(t)
    s = 0.1 * t
    loop = curve_from_arrays(2, s, x, r, t + math.pi / 2, np.full_like(t, -10.0))
    fake = SimpleNamespace(n=2, sigma0=disk, sigma1=loop)
    with pytest.raises(AmbiguityError) as info:
        check_unique_intersections(fake, [5.0])
    assert info.value.rho == pytest.approx(5.0)


def test_pair_intersections_unique(pair):
    check_unique_intersections(pair, np.linspace(3.0, 6.0, 7))
