import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearball.ball_spectrum import enumerate_spectrum
from nearball.dirichlet_solver import (assemble, build_mesh, export_field, export_spectrum, extrapolate,
                                       grading, solve_domain, solve_eigs, solve_torsion)
from nearball.geometry import FourierProfile, make_domain, unit_disk

DISK = enumerate_spectrum(2, 10).eigenvalues(6)


def test_grading_endpoints():
    s = np.linspace(0, 1, 11)
    g = grading(s)
    assert g[0] == 0 and g[-1] == 1
    assert np.all(np.diff(g) > 0)


def test_mesh_geometry():
    mesh = build_mesh(unit_disk(), 1)
    assert mesh.n_nodes == 1 + mesh.n_r * mesh.n_theta
    np.testing.assert_allclose(np.hypot(*mesh.nodes[mesh.boundary_nodes].T), 1.0)
    areas = mesh.triangle_areas()
    assert np.all(areas > 0)
    # inscribed polygon area pi - O(h^2)
    assert math.pi - 0.01 < areas.sum() < math.pi
    assert mesh.polygon_inside()


def test_mesh_level_bounds():
    with pytest.raises(ValueError):
        build_mesh(unit_disk(), -1)


def test_mass_and_stiffness():
    mesh = build_mesh(unit_disk(), 1)
    K, M = assemble(mesh)
    one = np.ones(mesh.n_nodes)
    # constants lie in the kernel of K; M integrates 1 to the polygon area
    assert np.max(np.abs(K @ one)) < 1e-10
    assert one @ (M @ one) == pytest.approx(mesh.triangle_areas().sum())


def test_disk_extrapolated_spectrum(disk_solution):
    np.testing.assert_allclose(disk_solution.lambdas, DISK, rtol=1e-5)
    assert disk_solution.T == pytest.approx(math.pi / 8, rel=1e-5)
    assert disk_solution.monotone


def test_raw_bounds(disk_solution):
    for raw in disk_solution.raw_lambdas:
        assert np.all(raw >= DISK)
    for T in disk_solution.raw_T:
        assert T <= math.pi / 8


def test_eigenvectors_orthonormal(disk_solution):
    e = disk_solution.eig
    _, M = assemble(e.mesh)
    G = e.modes.T @ (M @ e.modes)
    np.testing.assert_allclose(G, np.eye(G.shape[0]), atol=1e-10)
    np.testing.assert_allclose(e.rayleigh(), e.lambdas, rtol=1e-11)


def test_torsion_energy_identity(disk_solution):
    t = disk_solution.torsion
    # int w = int |grad w|^2 for the Galerkin solution
    assert t.energy_T == pytest.approx(t.T, rel=1e-10)
    assert t.w_max == pytest.approx(0.25, abs=5e-4)


def test_rotation_invariance():
    d = make_domain(FourierProfile.from_modes({2: (0.1, 0.0), 3: (0.0, 0.05)}))
    a = solve_eigs(build_mesh(d, 1), 4).lambdas
    b = solve_eigs(build_mesh(d.rotated(0.9), 1, theta0=0.9), 4).lambdas
    np.testing.assert_allclose(a, b, rtol=1e-11)


def test_dilation_scaling():
    d = make_domain(FourierProfile.cos(3, 0.1))
    m1, m2 = build_mesh(d, 1), build_mesh(d.dilated(0.9), 1)
    np.testing.assert_allclose(solve_eigs(m2, 3).lambdas, solve_eigs(m1, 3).lambdas / 0.81, rtol=1e-10)
    assert solve_torsion(m2).T == pytest.approx(solve_torsion(m1).T * 0.9 ** 4, rel=1e-10)


def test_perturbed_domain_above_faber_krahn():
    s = solve_domain(make_domain(FourierProfile.cos(2, 0.1)), K=3, levels=(1, 2))
    assert s.lambdas[0] > DISK[0]
    assert s.T < math.pi / 8


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 4))
def test_extrapolation_exact_on_quadratic_error(c, a, lev):
    h = 2.0 ** -lev
    ex = extrapolate(c + a * h * h, c + a * h * h / 4)
    assert ex.value == pytest.approx(c, abs=1e-12)


def test_extrapolation_monotone_flag():
    assert extrapolate(2.0, 1.5, direction=+1).monotone
    assert not extrapolate(1.5, 2.0, direction=+1).monotone


def test_exports(tmp_path, disk_solution):
    e = disk_solution.eig
    export_field(e.mesh, e.modes[:, 0], tmp_path / "u.csv")
    export_spectrum(disk_solution.lambdas, disk_solution.lambda_err, tmp_path / "s.csv")
    assert (tmp_path / "u.csv").read_text().count("\n") == e.mesh.n_nodes + 1
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "k,lambda,err_est"
