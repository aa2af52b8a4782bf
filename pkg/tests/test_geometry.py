import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearball.geometry import (DiskAbout, Domain2D, FourierProfile, GeometryError, IntersectionDomain,
                               effective_profile, fraenkel_asymmetry, h_half_sq, make_domain,
                               outside_ball_area, profile_norms, sym_diff_area, sym_diff_with_ball,
                               unit_disk)

coef = st.floats(-0.05, 0.05)
profiles = st.lists(st.tuples(st.integers(1, 6), coef, coef), min_size=1, max_size=4).map(
    lambda items: FourierProfile.from_modes({m: (a, b) for m, a, b in items}))


def lens_area(d):
    """Intersection area of two unit disks at distance d."""
    return 2 * math.acos(d / 2) - 0.5 * d * math.sqrt(4 - d * d)


# Profiles

def test_profile_evaluation_and_derivatives():
    p = FourierProfile.from_modes({2: (0.3, 0.0), 5: (0.0, 0.1)})
    th = np.linspace(0, 2 * np.pi, 7)
    np.testing.assert_allclose(p(th), 0.3 * np.cos(2 * th) + 0.1 * np.sin(5 * th))
    np.testing.assert_allclose(p(th, 1), -0.6 * np.sin(2 * th) + 0.5 * np.cos(5 * th))
    np.testing.assert_allclose(p(th, 2), -1.2 * np.cos(2 * th) - 2.5 * np.sin(5 * th))


@given(profiles, profiles, st.floats(-2, 2))
def test_profile_linear_algebra(p, q, c):
    th = np.linspace(0, 2 * np.pi, 33)
    np.testing.assert_allclose((p + q)(th), p(th) + q(th), atol=1e-14)
    np.testing.assert_allclose((c * p)(th), c * p(th), atol=1e-14)


@given(profiles, st.floats(-math.pi, math.pi))
def test_rotation_is_a_shift(p, alpha):
    th = np.linspace(0, 2 * np.pi, 41)
    np.testing.assert_allclose(p.rotated(alpha)(th), p(th - alpha), atol=1e-13)
    np.testing.assert_allclose(p.reflected()(th), p(-th), atol=1e-13)


def test_h_half_norm_closed_form():
    # pi * sum (1 + m)(a_m^2 + b_m^2): 3 * 0.09 + 6 * 0.01 = 0.33
    p = FourierProfile.from_modes({2: (0.3, 0.0), 5: (0.0, 0.1)})
    assert h_half_sq(p) == pytest.approx(math.pi * 0.33)
    n = profile_norms(p)
    assert n.l2 == pytest.approx(math.sqrt(math.pi * 0.1))
    assert n.c0 <= 0.4 + 1e-12


def test_profile_check():
    assert FourierProfile.cos(3, 0.2).check() <= 0.2 + 1e-9
    with pytest.raises(GeometryError):
        FourierProfile.cos(3, 0.6).check()


def test_profile_file_roundtrip(tmp_path):
    p = FourierProfile.from_modes({1: (0.01, -0.02), 4: (0.03, 0.0)})
    p.to_file(tmp_path / "h.txt")
    q = FourierProfile.from_file(tmp_path / "h.txt")
    np.testing.assert_array_equal(p.a, q.a)
    np.testing.assert_array_equal(p.b, q.b)


# Domains

@given(profiles)
def test_make_domain_normalizes(p):
    d = make_domain(p)
    assert d.area() == pytest.approx(math.pi, rel=1e-13)
    assert np.allclose(d.barycenter(), 0.0, atol=1e-13)
    # polar quadrature agrees with the analytic area
    assert super(Domain2D, d).area(8192) == pytest.approx(math.pi, rel=1e-12)


def test_domain_transforms():
    d = make_domain(FourierProfile.from_modes({2: (0.1, 0.05), 3: (0.0, 0.04)}))
    r = d.rotated(0.7)
    assert r.area() == pytest.approx(d.area())
    c, s = math.cos(0.7), math.sin(0.7)
    b = d.barycenter()
    np.testing.assert_allclose(r.barycenter(), [c * b[0] - s * b[1], s * b[0] + c * b[1]], atol=1e-14)
    assert d.dilated(0.9).area() == pytest.approx(0.81 * d.area())
    th = np.linspace(0, 2 * np.pi, 17)
    dir_ = FourierProfile.cos(4, 1.0)
    np.testing.assert_allclose(d.perturbed(dir_, 0.01).radius(th), d.radius(th) + 0.01 * dir_(th))


def test_contains():
    d = unit_disk()
    assert d.contains(0.5, 0.5)
    assert not d.contains(0.8, 0.8)


def test_intersection_radius_is_min():
    base = make_domain(FourierProfile.cos(2, 0.2))
    inter = IntersectionDomain(base)
    th = np.linspace(0, 2 * np.pi, 101)
    ball = DiskAbout(np.zeros(2), 1.0, base.pole)
    np.testing.assert_allclose(inter.radius(th), np.minimum(base.radius(th), ball.radius(th)))
    assert inter.area() < math.pi


# Areas

@given(st.floats(0.0, 0.45))
def test_sym_diff_of_shifted_disk(d):
    shifted = Domain2D(FourierProfile.zero(), 1.0, np.array([d, 0.0]))
    expect = 2 * (math.pi - lens_area(d))
    assert sym_diff_with_ball(shifted) == pytest.approx(expect, abs=1e-6)
    assert outside_ball_area(shifted) == pytest.approx(expect / 2, abs=1e-6)


def test_sym_diff_monte_carlo():
    d = make_domain(FourierProfile.cos(2, 0.1))
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1.3, 1.3, size=(400_000, 2))
    in_d = d.contains(pts[:, 0], pts[:, 1])
    in_b = np.hypot(pts[:, 0], pts[:, 1]) < 1
    mc = np.mean(in_d ^ in_b) * 2.6 ** 2
    assert sym_diff_with_ball(d) == pytest.approx(mc, abs=4e-3)


def test_sym_diff_area_requires_shared_pole():
    a = make_domain(FourierProfile.cos(2, 0.1))
    assert sym_diff_area(a, a) == 0.0
    with pytest.raises(GeometryError):
        sym_diff_area(a, Domain2D(FourierProfile.zero(), 1.0, np.array([0.1, 0.0])))


def test_sym_diff_shift_guard():
    with pytest.raises(GeometryError):
        sym_diff_with_ball(unit_disk(), shift=(0.6, 0.0))


def test_fraenkel_of_translated_disk_is_zero():
    shifted = Domain2D(FourierProfile.zero(), 1.0, np.array([0.2, -0.1]))
    res = fraenkel_asymmetry(shifted)
    assert res.value < 1e-6
    np.testing.assert_allclose(res.shift, [0.2, -0.1], atol=1e-4)


def test_fraenkel_rotation_invariant():
    d = make_domain(FourierProfile.from_modes({2: (0.1, 0.0), 3: (0.05, 0.02)}))
    assert fraenkel_asymmetry(d).value == pytest.approx(fraenkel_asymmetry(d.rotated(1.1)).value, abs=1e-7)


def test_fraenkel_at_most_centered_sym_diff():
    d = make_domain(FourierProfile.from_modes({1: (0.05, 0.0), 3: (0.1, 0.0)}))
    assert fraenkel_asymmetry(d).value <= sym_diff_with_ball(d) + 1e-12


# Re-expansion

def test_effective_profile_roundtrip():
    p = FourierProfile.from_modes({2: (0.05, 0.01), 3: (0.0, -0.03)})
    d = Domain2D(p, 1.0, np.zeros(2))
    q = effective_profile(d, modes=8)
    np.testing.assert_allclose(q.a[:4], p.a, atol=1e-12)
    np.testing.assert_allclose(q.b[:3], p.b, atol=1e-12)


def test_export_boundary(tmp_path):
    d = make_domain(FourierProfile.cos(2, 0.1))
    d.export_boundary(tmp_path / "b.csv", N=64)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "theta,r" and len(lines) == 65
