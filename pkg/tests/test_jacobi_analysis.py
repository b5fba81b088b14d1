import json
import math

import numpy as np
import pytest

from expander_entropy.entropy import family_pairs
from expander_entropy.errors import DomainError, SizeError, TubeError
from expander_entropy.geometry_core import RotCone
from expander_entropy.jacobi_analysis import (
    family_member,
    hessian_structure_check,
    jacobi_difference_decay,
    jacobi_from_family,
    linear_decay_dichotomy,
    plane_barrier_margin,
    verify_barrier,
)


@pytest.fixture(scope="module")
def J(spec2, midpoint):
    return jacobi_from_family("disk", midpoint, 1e-3, spec2)


@pytest.fixture(scope="module")
def J_half(spec2, midpoint):
    return jacobi_from_family("disk", midpoint, 5e-4, spec2)


@pytest.fixture(scope="module")
def sigma0(pair):
    return pair.sigma0


# -- Jacobi fields from the aperture family ------------------------------------


def test_plane_family(spec2, half_pi):
    Jp = jacobi_from_family("disk", half_pi, 1e-3, spec2)
    psi, q = Jp.leading_coefficient()
    assert psi == pytest.approx(1.0, abs=1e-2)
    # neighbours are curved expanders, so v / rho - 1 decays like rho^-2
    assert q >= 2 - 0.2


def test_disk_residual_small(J):
    assert J.residual_max() <= 1e-4


def test_residual_order_in_step(J, J_half):
    order = math.log2(J.residual_max() / J_half.residual_max())
    assert order == pytest.approx(2.0, abs=0.3)


def test_residual_order_under_grid_refinement(spec2, midpoint):
    coarse = jacobi_from_family("disk", midpoint, 1e-3, spec2, h=0.1, order=2)
    fine = jacobi_from_family("disk", midpoint, 1e-3, spec2, h=0.05, order=2)
    win = (6.0, 20.0)
    assert math.log2(coarse.residual_max(win) / fine.residual_max(win)) >= 1.8


def test_decomposition_orders(J):
    assert J.w_order() >= 1 - 0.2
    assert J.grad_w_order() >= 2 - 0.2
    psi, q = J.leading_coefficient()
    assert abs(psi - 1) <= 0.01
    assert q >= 2 - 0.2


def test_jacobi_csv(J, tmp_path):
    lines = J.to_csv(tmp_path / "jacobi.csv").read_text().splitlines()
    assert lines[0] == "rho,v,w,residual"
    assert len(lines) == J.rho.size + 1


def test_step_validation(spec2, midpoint):
    with pytest.raises(DomainError):
        jacobi_from_family("disk", midpoint, 2e-3, spec2)
    with pytest.raises(DomainError):
        jacobi_from_family("disk", midpoint, 0.0, spec2)


def test_family_member_outside_window(spec2):
    with pytest.raises(Exception, match="aperture a = 0.3"):
        family_member("catenoid", 0.3, spec2)


# -- difference decay -----------------------------------------------------------


@pytest.mark.slow
def test_difference_decay_of_pair_family(variation_pairs):
    rep = jacobi_difference_decay(variation_pairs[1:4], 1e-3)
    assert not rep.inconclusive
    assert rep.exponent <= -(2 + 1) + 0.5
    # reported alongside: the radial curvature limit rho^3 kappa and its decay order
    assert math.isfinite(rep.radial_curvature_limit) and rep.radial_curvature_order > 0


def test_identical_family_difference_vanishes(spec2):
    pairs = family_pairs([0.899, 0.9, 0.901], spec2, kinds=("disk", "disk"))
    rep = jacobi_difference_decay(pairs, 1e-3)
    assert rep.inconclusive and all(v == 0.0 for v in rep.scaled_difference)


# -- barriers -------------------------------------------------------------------


def test_plane_barrier_closed_form_is_negative():
    # the literal w_A inequality fails on the flat plane: see the decisions ledger
    rho = np.linspace(8, 20, 25)
    assert np.all(plane_barrier_margin(2, rho, 10.0) < 0)


@pytest.mark.xfail(strict=True, reason="w_A inequality as stated has negative margin on the plane")
def test_plane_w_A(spec2, half_pi):
    plane = family_member("disk", half_pi, spec2)
    assert verify_barrier(plane, "w_A", {"A": 10.0}, (8.0, 20.0)).holds


@pytest.mark.xfail(strict=True, reason="w_A inequality as stated has negative margin on the disk")
def test_disk_w_A(sigma0):
    assert verify_barrier(sigma0, "w_A", {"A": 10.0}, (8.0, 20.0)).holds


def test_plane_report_matches_closed_form(spec2, half_pi):
    plane = family_member("disk", half_pi, spec2)
    rep = verify_barrier(plane, "w_A", {"A": 10.0}, (8.0, 20.0))
    exact = plane_barrier_margin(2, np.asarray(rep.rho), 10.0)
    assert np.max(np.abs(np.asarray(rep.margin) - exact)) < 1e-6 * np.max(np.abs(exact))


def test_reciprocal_variant_large_A(sigma0):
    rep = verify_barrier(sigma0, "w_A", {"A": 30.0}, (8.0, 25.0), variant="reciprocal")
    assert rep.holds and rep.tail_margin > 0


def test_w_eps_holds_beyond_R1(sigma0, tmp_path):
    rep = verify_barrier(sigma0, "w_eps", {"eps": 0.1}, (8.0, 25.0))
    assert rep.holds and rep.tail_margin > 0
    tail = np.asarray(rep.margin)[np.asarray(rep.rho) >= rep.R1]
    assert np.all(tail > 0)
    data = json.loads(rep.to_json(tmp_path / "barrier.json").read_text())
    assert data["holds"] and data["R1"] == rep.R1


@pytest.mark.parametrize("start", [8.0, 12.0, 16.0])
def test_barrier_monotone_in_window_start(sigma0, start):
    ref = verify_barrier(sigma0, "w_eps", {"eps": 0.1}, (8.0, 25.0))
    rep = verify_barrier(sigma0, "w_eps", {"eps": 0.1}, (start, 25.0))
    if ref.R1 is not None and start >= ref.R1:
        assert rep.holds and rep.min_margin > 0
    assert rep.min_margin >= ref.min_margin - 1e-12


@pytest.mark.parametrize("kind,params", [
    ("w_A", {"A": -1.0}),
    ("w_eps", {"eps": 0.0}),
    ("w_eps", {"eps": 1.0}),
    ("w_B", {}),
])
def test_barrier_parameter_errors(sigma0, kind, params):
    with pytest.raises(DomainError):
        verify_barrier(sigma0, kind, params)


def test_barrier_window_errors(sigma0):
    with pytest.raises(SizeError):
        verify_barrier(sigma0, "w_eps", {"eps": 0.1}, (10.0, 10.1))
    with pytest.raises(DomainError):
        verify_barrier(sigma0, "w_eps", {"eps": 0.1}, (10.0, 60.0))


# -- linear decay dichotomy -----------------------------------------------------


def test_linear_decay_dichotomy(sigma0):
    sharp = linear_decay_dichotomy(sigma0, -5.0)
    lossy = linear_decay_dichotomy(sigma0, -3.0)
    assert abs(sharp.envelope_loss) < 0.3
    assert lossy.envelope_loss > 2 * abs(sharp.envelope_loss)


# -- hessian structure -----------------------------------------------------------


def test_hessian_constant_psi(midpoint):
    rep = hessian_structure_check(RotCone.double(2, midpoint), psi="constant")
    assert all(v == 0.0 for row in rep.gradient_normal + rep.hessian_normal for v in row)
    assert all(v == 0.0 for v in rep.hessian_tangential)


def test_hessian_azimuthal_psi(midpoint):
    rep = hessian_structure_check(RotCone.double(2, midpoint), rho_values=(5.0, 10.0))
    assert np.max(np.abs(rep.gradient_normal)) < 1e-8
    assert np.max(np.abs(rep.hessian_normal)) < 1e-6
    assert rep.scaling_ratio == pytest.approx(0.25, rel=0.1)


@pytest.mark.parametrize("offset", [0.05, -0.1])
def test_hessian_off_cone(midpoint, offset):
    rep = hessian_structure_check(RotCone.double(2, midpoint), offset=offset)
    assert np.max(np.abs(rep.gradient_normal)) < 1e-8
    assert rep.scaling_ratio == pytest.approx(0.25, rel=0.1)


def test_hessian_tube_error(midpoint):
    with pytest.raises(TubeError):
        hessian_structure_check(RotCone.double(2, midpoint), offset=0.3)
