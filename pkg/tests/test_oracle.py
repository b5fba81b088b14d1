"""Independent high-precision reference for the computed pair (Taylor-jet integration in mpmath)."""

import numpy as np
import pytest

from expander_entropy.entropy import relative_entropy_at
from expander_entropy.errors import DomainError
from expander_entropy.expander_solver import identical_pair
from expander_entropy.geometry_core import RotCone
from expander_entropy.oracle import pair_oracle

pytestmark = pytest.mark.slow


def test_oracle_rejects_disk_disk(spec2):
    same = identical_pair(RotCone.single(2, 1.0), spec2, "disk", 0.6)
    with pytest.raises(DomainError):
        pair_oracle(same)


def test_neck_refinement_is_tiny(oracle_result, pair):
    assert abs(oracle_result.neck_shift) < 1e-8 * abs(oracle_result.neck)


def test_hat_u_agrees_with_oracle(oracle_result, graph_field):
    f = graph_field
    for rho, ref in zip(oracle_result.rho, oracle_result.hat_u):
        i = int(np.argmin(np.abs(f.rho - rho)))
        assert f.rho[i] == pytest.approx(rho, abs=1e-12)
        assert f.hat_u[i] == pytest.approx(ref, rel=1e-8)


def test_entropy_agrees_with_oracle(oracle_result, pair):
    for R, ref in zip(oracle_result.R, oracle_result.E):
        assert relative_entropy_at(pair, R) == pytest.approx(ref, rel=1e-8)
