import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearball.ball_spectrum import enumerate_spectrum
from nearball.dirichlet_solver import build_mesh, solve_eigs, solve_torsion
from nearball.geometry import FourierProfile, make_domain, unit_disk
from nearball.shape_calculus import (DegeneracyError, Functional, boundary_derivative, cutoff,
                                     d2_lambda_at_ball, disk_d2_lambda1_exact,
                                     double_eigenvalue_directional, first_derivatives, functional_value,
                                     mesh_velocity, perturbation_family, reports_to_json, richardson_fd,
                                     volume_derivative)

LAM = enumerate_spectrum(2, 10).eigenvalues(6)


def test_functional_parse():
    assert Functional.parse("lambda:6") == Functional("lambda", 6, 6)
    assert Functional.parse("cluster:2-3").name == "cluster:2-3"
    assert Functional.parse("Tinv").K == 0
    with pytest.raises(ValueError):
        Functional.parse("energy")


def test_functional_value():
    lams = np.array([1.0, 2.0, 3.0])
    assert functional_value(Functional.parse("cluster:2-3"), lams, 0.5, 3.0) == 5.0
    assert functional_value(Functional.parse("Tinv"), lams, 0.5, 3.0) == 2.0
    assert functional_value(Functional.parse("volume"), lams, 0.5, 3.0) == 3.0


def test_cutoff_profile():
    r = np.linspace(0, 1, 11)
    c = cutoff(r)
    assert c[0] == 0 and c[-1] == 1
    assert np.all(np.diff(c) >= 0)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_richardson_fd_exact_on_cubics(a, b):
    f = lambda t: a * t ** 3 + b * t + 1.0
    assert richardson_fd(f).value == pytest.approx(b, abs=1e-10)
    g = lambda t: a * t ** 4 + b * t * t
    assert richardson_fd(g, kind="second").value == pytest.approx(2 * b, abs=1e-8)


def test_criticality_at_disk():
    d = unit_disk()
    for direction in (FourierProfile.cos(2, 1.0), FourierProfile.from_modes({5: (0.0, 1.0)})):
        reps = first_derivatives(d, direction, ["Tinv", "lambda:1", "lambda:6", "cluster:2-3"],
                                 levels=(1, 2), fd=False)
        for r in reps:
            assert abs(r.first) < 1e-9 and abs(r.first_volume) < 1e-9


def test_dilation_derivatives():
    # r < 1 + t: lambda ~ (1+t)^-2, T ~ (1+t)^4, |B| ~ (1+t)^2
    dil = FourierProfile(np.array([1.0]), np.zeros(0))
    reps = {r.functional: r for r in first_derivatives(unit_disk(), dil, ["lambda:1", "T", "volume"],
                                                       levels=(2, 3), fd=False)}
    assert reps["lambda:1"].first == pytest.approx(-2 * LAM[0], rel=1e-4)
    assert reps["T"].first == pytest.approx(4 * math.pi / 8, rel=1e-4)
    assert reps["volume"].first == pytest.approx(2 * math.pi, rel=1e-4)


def test_boundary_and_volume_forms_agree_off_the_ball():
    d = make_domain(FourierProfile.from_modes({2: (0.1, 0.0), 3: (0.0, 0.05)}))
    mesh = build_mesh(d, 2)
    eig, tor = solve_eigs(mesh, 4), solve_torsion(mesh)
    direction = FourierProfile.cos(2, 1.0)
    for name in ("lambda:1", "T"):
        f = Functional.parse(name)
        b = boundary_derivative(eig, tor, f, direction, check=False)
        v = volume_derivative(eig, tor, f, direction)
        vc = volume_derivative(eig, tor, f, direction, extension="cutoff")
        assert abs(b) > 1e-2
        assert v == pytest.approx(b, rel=2e-2)
        # the two velocity extensions agree in the limit only
        assert vc == pytest.approx(v, rel=1e-3)


def test_fd_agreement_on_perturbed_domain():
    d = make_domain(FourierProfile.cos(2, 0.1))
    reps = first_derivatives(d, FourierProfile.cos(4, 1.0), ["Tinv", "lambda:1"], levels=(1, 2))
    for r in reps:
        assert r.rel_fd_error("volume") < 0.02


def test_degenerate_eigenvalue_rejected():
    mesh = build_mesh(unit_disk(), 1)
    eig = solve_eigs(mesh, 4)
    eig.err_est = np.full(4, 1e-6)
    with pytest.raises(DegeneracyError):
        volume_derivative(eig, None, Functional.parse("lambda:2"), FourierProfile.cos(2, 1.0),
                          check=True)


def test_double_eigenvalue_splitting():
    # along cos 2 theta the pair (cos, sin) splits as lambda_2 (1 -/+ t)
    eig = solve_eigs(build_mesh(unit_disk(), 3), 4)
    lo, hi = double_eigenvalue_directional(eig, (2, 3), FourierProfile.cos(2, 1.0))
    assert lo == pytest.approx(-LAM[1], rel=2e-3)
    assert hi == pytest.approx(LAM[1], rel=2e-3)


@pytest.mark.parametrize("m", [0, 2, 3])
def test_second_variation_matches_closed_form(m):
    direction = FourierProfile(np.array([1.0]), np.zeros(0)) if m == 0 else FourierProfile.cos(m, 1.0)
    sv = d2_lambda_at_ball((1, 1), direction, level=2)
    if m == 0:
        # lambda (1+t)^-2 has second derivative 6 lambda
        assert sv.mu2 == pytest.approx(6 * LAM[0], rel=1e-3)
    else:
        assert sv.mu2 == pytest.approx(disk_d2_lambda1_exact(m), rel=1e-3)
    # the multiplier equals minus the first-order matrix up to discretization
    np.testing.assert_allclose(sv.multipliers, -sv.first_matrix, rtol=1e-3, atol=1e-6)


def test_perturbation_family_and_json(tmp_path):
    fam = perturbation_family(FourierProfile.cos(2, 1.0), [0.01, 0.02])
    assert [round(d.area(), 12) for d in fam] == [round(math.pi, 12)] * 2
    reps = first_derivatives(unit_disk(), FourierProfile.cos(2, 1.0), ["T"], levels=(0, 1), fd=False)
    reports_to_json(reps, tmp_path / "r.json", meta={"version": "x"})
    assert '"functional": "T"' in (tmp_path / "r.json").read_text()
