import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expander_entropy.errors import DomainError, SizeError
from expander_entropy.expander_solver import ShootingSpec, integrate_profile
from expander_entropy.geometry_core import (
    IntrinsicField,
    ProfileCurve,
    RotCone,
    central_derivative,
    curve_from_arrays,
    drift_laplacian,
    expander_defect,
    expander_residual,
    mean_curvature,
    plane_samples,
    radial_identity_residual,
    read_curve,
    sample_field,
    second_fundamental_form,
    sphere_volume,
    write_curve,
)


def cylinder(n=2, m=201):
    s = np.linspace(0.0, 4.0, m)
    return curve_from_arrays(n, s, s, np.ones(m), np.zeros(m), np.zeros(m))


def test_plane_mean_curvature_vanishes():
    p = plane_samples(2, 10.0)
    assert max(abs(mean_curvature(p, i)) for i in range(0, len(p), 37)) < 1e-14


def test_circle_arc_formula():
    c = curve_from_arrays(2, [0.0, 1.0], [0.0, 0.0], [1.0, 1.0], [math.pi / 2] * 2, [1.0, 1.0])
    assert mean_curvature(c, 0) == pytest.approx(1.0, abs=1e-15)


def test_disk_tip_mean_curvature_equals_half_height():
    c = integrate_profile(ShootingSpec(n=2), 1.0)
    assert c.tip_index is not None
    assert mean_curvature(c, c.tip_index) == pytest.approx(0.5, abs=1e-12)


def test_tip_on_non_disk_is_rejected():
    c = curve_from_arrays(2, [0.0, 1.0], [0.0, 1.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], tip_index=0)
    with pytest.raises(DomainError):
        mean_curvature(c, 0)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_second_fundamental_form_plane_and_cylinder(n):
    p = plane_samples(n, 5.0)
    assert np.max(np.abs(second_fundamental_form(p, 10))) < 1e-14
    lam = second_fundamental_form(cylinder(n), 5)
    assert lam[0] == 0.0 and np.allclose(lam[1:], 1.0)


def test_second_fundamental_form_tip_needs_regularization():
    c = integrate_profile(ShootingSpec(n=2), 1.0)
    with pytest.raises(DomainError):
        second_fundamental_form(c, c.tip_index, regularize=False)


def test_rot_cone_link_volume_and_validation():
    cone = RotCone.double(2, 1.0)
    assert cone.link_volume(0) == pytest.approx(2 * math.pi * math.sin(1.0))
    assert cone.link_volume(1) == pytest.approx(cone.link_volume(0))
    assert RotCone.single(1, 0.3).link_volume() == 1.0
    with pytest.raises(DomainError):
        RotCone.double(2, math.pi / 2)
    with pytest.raises(DomainError):
        RotCone.single(2, 0.0)
    assert RotCone.from_dict(cone.to_dict()) == cone


def test_sphere_volume():
    assert sphere_volume(0) == 2.0
    assert sphere_volume(1) == pytest.approx(2 * math.pi)
    assert sphere_volume(2) == pytest.approx(4 * math.pi)


def test_profile_curve_invariants():
    with pytest.raises(DomainError):
        curve_from_arrays(2, [0.0, 0.0], [0, 0], [1, 1], [0, 0], [0, 0])
    with pytest.raises(DomainError):
        curve_from_arrays(2, [0.0, 1.0], [0, 0], [-1, 1], [0, 0], [0, 0])
    with pytest.raises(DomainError):
        curve_from_arrays(2, [0.0, 1.0], [0, 0], [0.0, 1], [0, 0], [0, 0])


@pytest.mark.parametrize("order", [2, 4, 8])
def test_derivative_of_constant_is_zero(order):
    v = np.full(40, 3.7)
    assert np.max(np.abs(central_derivative(v, 0.1, 1, order))) < 1e-12
    assert np.max(np.abs(central_derivative(v, 0.1, 2, order))) < 1e-10


def test_central_derivative_order():
    errs = []
    for h in (0.1, 0.05):
        t = np.arange(0, 2, h)
        d = central_derivative(np.sin(t), h, 1, 4)
        errs.append(np.max(np.abs(d - np.cos(t[2:-2]))))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.3)


def test_short_field_raises_size_error():
    p = plane_samples(2, 10.0)
    t = np.linspace(2, 2.2, 3)
    f = IntrinsicField(2, "rho", t, t, np.zeros(3), t, np.full(3, math.pi / 2), np.zeros(3))
    with pytest.raises(SizeError):
        drift_laplacian(f, p)


def test_drift_laplacian_of_constant():
    c = integrate_profile(ShootingSpec(n=2), 0.7)
    f = sample_field(c, lambda rho, *a: np.full_like(rho, 2.5), (4.0, 12.0), 0.05)
    assert np.max(np.abs(drift_laplacian(f).values)) < 1e-9


def test_drift_laplacian_of_rho_squared_on_plane():
    # Delta r^2 = 2n and <x, grad r^2>/2 = r^2 on a hyperplane through 0
    p = plane_samples(2, 20.0)
    f = sample_field(p, lambda rho, *a: rho ** 2, (2.0, 15.0), 0.05, coord="s")
    out = drift_laplacian(f)
    rho = out.r
    assert np.max(np.abs(out.values - (4.0 + rho ** 2))) < 1e-8


@given(a=st.floats(-3, 3), b=st.floats(-3, 3))
@settings(max_examples=20, deadline=None)
def test_drift_laplacian_is_linear(a, b):
    p = plane_samples(2, 12.0)
    f = sample_field(p, lambda rho, *_: np.sin(rho), (2.0, 8.0), 0.05, coord="s")
    g = f.with_values(np.exp(-f.t / 5))
    lhs = drift_laplacian(f.with_values(a * f.values + b * g.values)).values
    rhs = a * drift_laplacian(f).values + b * drift_laplacian(g).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))


def test_weight_is_near_eigenfunction_on_computed_disk():
    # (drift Laplacian - 1/2) w = O(rho^{-2}) w for w = rho^{-n-1} e^{-rho^2/4}
    c = integrate_profile(ShootingSpec(n=2), 0.7)
    f = sample_field(c, lambda rho, *_: np.zeros_like(rho), (8.0, 16.0), 0.01, order=8)
    t = f.t
    logw = -3 * np.log(t) - t ** 2 / 4
    w = np.exp(logw - logw[0])
    out = drift_laplacian(f.with_values(w))
    m = f.halfwidth
    ratio = (out.values - 0.5 * w[m:-m]) / w[m:-m]
    slope = np.polyfit(np.log(out.t), np.log(np.abs(ratio)), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.3)


def test_radial_identity_on_solver_output():
    c = integrate_profile(ShootingSpec(n=2), 0.7)
    res = radial_identity_residual(c, h=0.01, window=(1.0, 25.0))
    assert np.max(np.abs(res)) < 1e-6


def test_expander_defect_of_solver_output():
    c = integrate_profile(ShootingSpec(n=2), -0.4)
    assert np.max(np.abs(expander_defect(c))) <= 10 * c.tolerances["ode_rtol"] + 1e-14


def test_csv_round_trip(tmp_path):
    c = integrate_profile(ShootingSpec(n=2), 0.3)
    path, side = write_curve(c, tmp_path / "c.csv")
    assert path.read_text().splitlines()[0] == "s,x,r,theta,kappa"
    back = read_curve(path)
    for k in ("s", "x", "r", "theta", "kappa"):
        assert np.array_equal(getattr(back, k), getattr(c, k))
    assert back.n == 2 and back.kind == "disk"


def test_scaled_curve_is_not_an_expander():
    c = integrate_profile(ShootingSpec(n=2), 0.5).without_trajectory()
    assert np.max(np.abs(expander_defect(c.scaled(1.3)))) > 1e-2
    base = np.max(np.abs(expander_residual(integrate_profile(ShootingSpec(n=2), 0.5))))
    assert base < 1e-8


def test_profile_curve_is_frozen():
    c = cylinder()
    with pytest.raises((AttributeError, TypeError, ValueError)):
        c.x[0] = 5.0
    assert isinstance(c, ProfileCurve)
