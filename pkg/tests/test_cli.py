import json
import math

import pytest

from expander_entropy.cli import EXIT_DOMAIN, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, _sha256, main


def run(tmp, *argv):
    return main([*argv, "--out-dir", str(tmp)])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def pair_dir(tmp_path_factory, midpoint):
    out = tmp_path_factory.mktemp("pair")
    assert run(out, "pair", "--n", "2", "--double-cone", "--aperture", repr(midpoint)) == EXIT_OK
    return out


def test_solve_plane(tmp_path):
    assert run(tmp_path, "solve", "--n", "2", "--kind", "disk", "--shoot", "0") == EXIT_OK
    rep = load(tmp_path / "aperture.json")
    assert rep["aperture"]["aperture"] == math.pi / 2
    assert rep["max_expander_residual"] < 1e-10
    assert (tmp_path / "curve.csv").read_text().startswith("s,x,r,theta,kappa")
    man = load(tmp_path / "manifest.json")
    assert man["command"] == "solve" and man["parameters"]["shoot"] == 0.0
    for name, digest in man["outputs"].items():
        assert _sha256(tmp_path / name) == digest
    assert {"version", "tolerances", "wall_time_s", "inputs"} <= set(man)


@pytest.mark.parametrize("argv", [
    ["solve", "--bogus"],
    ["frobnicate"],
    ["entropy", "--r", "8,x"],
    [],
])
def test_usage_errors(tmp_path, argv):
    assert run(tmp_path, *argv) == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--tol", "1e-5", "--shoot", "1"],
    ["solve", "--kind", "catenoid", "--shoot", "-1"],
    ["pair", "--aperture", "1.3"],
    ["pair", "--double-cone", "--aperture", "90", "--deg"],
    ["match-cone", "--kind", "catenoid", "--aperture", "0.3", "--double-cone"],
    ["entropy"],
])
def test_domain_errors(tmp_path, argv):
    assert run(tmp_path, *argv) == EXIT_DOMAIN


def test_numerical_failure(tmp_path):
    assert run(tmp_path, "solve", "--shoot", "40") == EXIT_NUMERICAL


def test_match_cone_degrees(tmp_path):
    assert run(tmp_path, "match-cone", "--aperture", "60", "--deg") == EXIT_OK
    rep = load(tmp_path / "match.json")
    assert rep["aperture"]["aperture"] == pytest.approx(math.pi / 3, abs=1e-8)


def test_pair_outputs(pair_dir, pair):
    data = load(pair_dir / "pair.json")
    assert (pair_dir / "sigma0.csv").exists() and (pair_dir / "sigma1.csv").exists()
    man = load(pair_dir / "manifest.json")
    assert man["summary"]["shoots"] == list(pair.shoots)
    assert data


def test_entropy_end_to_end(pair_dir, tmp_path):
    assert run(tmp_path, "entropy", "--pair", str(pair_dir / "pair.json"),
               "--r", "6,8,10,12,16,20", "--extrapolate") == EXIT_OK
    rep = load(tmp_path / "entropy.json")
    assert rep["fit_order"] >= 2 - 0.3
    assert (tmp_path / "entropy.csv").read_text().splitlines()[0] == "R,E,method,delta"
    man = load(tmp_path / "manifest.json")
    assert man["inputs"][str(pair_dir / "pair.json")] == _sha256(pair_dir / "pair.json")


@pytest.mark.slow
def test_entropy_oracle(pair_dir, tmp_path):
    assert run(tmp_path, "entropy", "--pair", str(pair_dir / "pair.json"),
               "--r", "6,8,10,12,16,20", "--oracle") == EXIT_OK
    assert load(tmp_path / "entropy.json")["oracle"]["max_rel_diff"] <= 1e-8


def test_entropy_cutoff(pair_dir, tmp_path):
    assert run(tmp_path, "entropy", "--pair", str(pair_dir / "pair.json"),
               "--r", "10,12,14,16,20", "--delta", "0.5") == EXIT_OK
    rows = (tmp_path / "entropy.csv").read_text().splitlines()[1:]
    assert all(r.split(",")[2] == "cutoff-phi" for r in rows)


def test_trace(pair_dir, tmp_path):
    assert run(tmp_path, "trace", "--pair", str(pair_dir / "pair.json")) == EXIT_OK
    assert load(tmp_path / "trace.json")["rate"] == pytest.approx(2.0, abs=0.3)


def test_verify(pair_dir, tmp_path):
    assert run(tmp_path, "verify", "--pair", str(pair_dir / "pair.json")) == EXIT_OK
    rep = load(tmp_path / "verify.json")
    assert rep["decay"]["slope"] == pytest.approx(-3.0, abs=0.3)
    assert rep["trace"]["rate"] == pytest.approx(2.0, abs=0.3)
    assert not rep["pde_residual"]["violated"]
    assert rep["barrier_w_eps"]["holds"]
    assert "min_margin" in rep["barrier_w_A"]


def test_outputs_are_deterministic(pair_dir, tmp_path):
    digests = []
    for k in range(2):
        out = tmp_path / str(k)
        assert run(out, "entropy", "--pair", str(pair_dir / "pair.json"), "--r", "6,8,10,12,16,20") == EXIT_OK
        digests.append(load(out / "manifest.json")["outputs"])
    assert digests[0] == digests[1]
