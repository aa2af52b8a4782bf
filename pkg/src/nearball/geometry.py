"""Nearly spherical planar domains described by Fourier boundary profiles.

A profile h gives the star domain {r < 1 + h(theta)}.  ``make_domain``
rescales it to area pi and translates it so the barycenter sits at the
origin.  The stored domain is then {pole + r e(theta) : r < scale (1 + h)}.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

SUP_BOUND = 0.5


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Profiles


@dataclass(frozen=True)
class FourierProfile:
    """h(theta) = a_0 + sum_{m=1}^M (a_m cos m theta + b_m sin m theta)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).copy()
        M = max(len(a) - 1, len(b))
        a = np.pad(a, (0, M + 1 - len(a)))
        b = np.pad(b, (0, M - len(b)))
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def M(self) -> int:
        return len(self.b)

    @classmethod
    def zero(cls) -> "FourierProfile":
        return cls(np.zeros(1), np.zeros(0))

    @classmethod
    def from_modes(cls, modes: dict) -> "FourierProfile":
        """Build from {m: (a_m, b_m)}; b_0 is ignored."""
        M = max(modes) if modes else 0
        a = np.zeros(M + 1)
        b = np.zeros(M)
        for m, (am, bm) in modes.items():
            a[m] = am
            if m > 0:
                b[m - 1] = bm
        return cls(a, b)

    @classmethod
    def cos(cls, m: int, eps: float) -> "FourierProfile":
        return cls.from_modes({m: (eps, 0.0)})

    def __call__(self, theta, order: int = 0):
        th = np.asarray(theta, dtype=float)
        m = np.arange(1, self.M + 1)
        if self.M == 0:
            out = np.full(th.shape, self.a[0] if order == 0 else 0.0)
            return out
        ang = np.multiply.outer(th, m)
        c, s = np.cos(ang), np.sin(ang)
        a, b = self.a[1:], self.b
        mk = m.astype(float) ** order
        # d^k/dtheta^k rotates (cos, sin) by k quarter turns
        q = order % 4
        if q == 0:
            val = c @ (mk * a) + s @ (mk * b)
        elif q == 1:
            val = -s @ (mk * a) + c @ (mk * b)
        elif q == 2:
            val = -(c @ (mk * a) + s @ (mk * b))
        else:
            val = s @ (mk * a) - c @ (mk * b)
        if order == 0:
            val = val + self.a[0]
        return val

    def __add__(self, other: "FourierProfile") -> "FourierProfile":
        M = max(self.M, other.M)
        a = np.zeros(M + 1)
        b = np.zeros(M)
        a[: self.M + 1] += self.a
        a[: other.M + 1] += other.a
        b[: self.M] += self.b
        b[: other.M] += other.b
        return FourierProfile(a, b)

    def __mul__(self, c: float) -> "FourierProfile":
        return FourierProfile(self.a * c, self.b * c)

    __rmul__ = __mul__

    def rotated(self, alpha: float) -> "FourierProfile":
        """Profile of the domain rotated by alpha: theta -> h(theta - alpha)."""
        m = np.arange(1, self.M + 1)
        ca, sa = np.cos(m * alpha), np.sin(m * alpha)
        a1, b1 = self.a[1:], self.b
        return FourierProfile(np.r_[self.a[0], a1 * ca - b1 * sa], a1 * sa + b1 * ca)

    def reflected(self) -> "FourierProfile":
        """Mirror image across the x-axis (b -> -b)."""
        return FourierProfile(self.a, -self.b)

    def coefficient_bound(self, order: int) -> float:
        m = np.arange(1, self.M + 1, dtype=float)
        return float(np.sum(m ** order * (np.abs(self.a[1:]) + np.abs(self.b)))
                     + (abs(self.a[0]) if order == 0 else 0.0))

    def sup_norm(self, order: int = 0, samples: int = 4096) -> float:
        th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
        return float(np.max(np.abs(self(th, order))))

    def check(self, bound: float = SUP_BOUND) -> float:
        """Certify sup|h| <= bound by sampling plus a Lipschitz correction.

        Returns the certified upper bound for sup|h|.
        """
        lip = self.coefficient_bound(1)
        N = max(16 * self.M, 256)
        while True:
            sampled = self.sup_norm(0, N)
            if sampled > bound:
                raise GeometryError(f"profile violates sup|h| <= {bound}: sampled {sampled:.6g}")
            upper = sampled + lip * math.pi / N
            if upper <= bound or N >= 2 ** 20:
                return min(upper, max(sampled, self.coefficient_bound(0)))
            N *= 4

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"0 {self.a[0]:.17g} 0\n")
            for m in range(1, self.M + 1):
                fh.write(f"{m} {self.a[m]:.17g} {self.b[m - 1]:.17g}\n")

    @classmethod
    def from_file(cls, path) -> "FourierProfile":
        modes = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise GeometryError(f"{path}:{lineno}: expected 'm a_m b_m'")
                m = int(parts[0])
                if m < 0:
                    raise GeometryError(f"{path}:{lineno}: negative mode")
                modes[m] = (float(parts[1]), float(parts[2]))
        return cls.from_modes(modes)


@dataclass(frozen=True)
class ProfileNorms:
    l1: float
    l2: float
    h_half: float
    c0: float
    c1: float
    c2: float


def h_half_sq(profile: FourierProfile) -> float:
    """Squared H^{1/2}(dB) norm: L2 part plus harmonic-extension energy."""
    m = np.arange(1, profile.M + 1)
    return float(2 * np.pi * profile.a[0] ** 2
                 + np.pi * np.sum((1 + m) * (profile.a[1:] ** 2 + profile.b ** 2)))


def profile_norms(profile: FourierProfile) -> ProfileNorms:
    l2sq = 2 * np.pi * profile.a[0] ** 2 + np.pi * np.sum(profile.a[1:] ** 2 + profile.b ** 2)
    l1, _ = integrate.quad(lambda t: abs(float(profile(t))), 0.0, 2 * np.pi,
                           limit=400, points=None, epsabs=1e-13, epsrel=1e-11)
    return ProfileNorms(l1=l1, l2=math.sqrt(l2sq), h_half=math.sqrt(h_half_sq(profile)),
                        c0=profile.sup_norm(0), c1=profile.sup_norm(1), c2=profile.sup_norm(2))


# ---------------------------------------------------------------------------
# Star-shaped domains


def _trig_nodes(M: int, power: int) -> np.ndarray:
    # trapezoid is exact for trig polynomials of degree < N
    N = 2 * (power * M + 2) + 8
    return np.linspace(0.0, 2 * np.pi, N, endpoint=False)


class StarDomain:
    """Planar domain star-shaped about ``pole`` with boundary radius R(theta)."""

    pole: np.ndarray

    def radius(self, theta):
        raise NotImplementedError

    def dradius(self, theta):
        raise NotImplementedError

    def boundary_points(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        r = self.radius(th)
        return np.stack([self.pole[0] + r * np.cos(th), self.pole[1] + r * np.sin(th)], axis=-1)

    def area(self, N: int = 4096) -> float:
        th = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
        return float(0.5 * np.mean(self.radius(th) ** 2) * 2 * np.pi)

    def barycenter(self, N: int = 4096) -> np.ndarray:
        th = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
        r3 = self.radius(th) ** 3 / 3.0
        mom = np.array([np.mean(r3 * np.cos(th)), np.mean(r3 * np.sin(th))]) * 2 * np.pi
        return self.pole + mom / self.area(N)

    def contains(self, x, y) -> np.ndarray:
        dx = np.asarray(x) - self.pole[0]
        dy = np.asarray(y) - self.pole[1]
        th = np.mod(np.arctan2(dy, dx), 2 * np.pi)
        return np.hypot(dx, dy) < self.radius(th)

    def export_boundary(self, path, N: int = 512) -> None:
        th = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
        r = self.radius(th)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "r"])
            for t, rr in zip(th, r):
                w.writerow([f"{t:.17g}", f"{rr:.17g}"])


@dataclass(frozen=True, eq=False)
class Domain2D(StarDomain):
    """{pole + r e(theta) : 0 <= r < scale (1 + h(theta))}."""

    profile: FourierProfile
    scale: float = 1.0
    barycenter_shift: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "barycenter_shift",
                           np.asarray(self.barycenter_shift, dtype=float).reshape(2))

    @property
    def pole(self) -> np.ndarray:
        return self.barycenter_shift

    def radius(self, theta):
        return self.scale * (1.0 + self.profile(theta))

    def dradius(self, theta, order: int = 1):
        return self.scale * self.profile(theta, order)

    def area(self, N: int | None = None) -> float:
        p = self.profile
        raw = np.pi * ((1 + p.a[0]) ** 2 + 0.5 * np.sum(p.a[1:] ** 2 + p.b ** 2))
        return float(self.scale ** 2 * raw)

    def barycenter(self, N: int | None = None) -> np.ndarray:
        th = _trig_nodes(self.profile.M, 3)
        r3 = self.radius(th) ** 3 / 3.0
        mom = np.array([np.mean(r3 * np.cos(th)), np.mean(r3 * np.sin(th))]) * 2 * np.pi
        return self.pole + mom / self.area()

    def perturbed(self, direction: FourierProfile, t: float) -> "Domain2D":
        """Move each boundary point radially by t * direction(theta), same pole."""
        return Domain2D(self.profile + direction * (t / self.scale), self.scale,
                        self.barycenter_shift)

    def rotated(self, alpha: float) -> "Domain2D":
        c, s = math.cos(alpha), math.sin(alpha)
        p = self.pole
        return Domain2D(self.profile.rotated(alpha), self.scale,
                        np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]]))

    def dilated(self, s: float) -> "Domain2D":
        return Domain2D(self.profile, self.scale * s, self.pole * s)


def make_domain(profile: FourierProfile, center: bool = True, check: bool = True) -> Domain2D:
    """Normalize to area pi and (optionally) move the barycenter to 0."""
    if check:
        profile.check()
    th = np.linspace(0.0, 2 * np.pi, max(16 * profile.M, 1024), endpoint=False)
    if np.any(1.0 + profile(th) <= 0):
        raise GeometryError("boundary radius must be positive")
    raw = Domain2D(profile, 1.0, np.zeros(2))
    scale = math.sqrt(np.pi / raw.area())
    dom = Domain2D(profile, scale, np.zeros(2))
    if center:
        dom = Domain2D(profile, scale, -dom.barycenter())
    return dom


def unit_disk() -> Domain2D:
    return Domain2D(FourierProfile.zero(), 1.0, np.zeros(2))


def _ball_radius_from(pole, theta, center, rho=1.0):
    """Distance from ``pole`` along e(theta) to the circle |x - center| = rho."""
    c = np.asarray(center, dtype=float) - np.asarray(pole, dtype=float)
    th = np.asarray(theta, dtype=float)
    ec = c[0] * np.cos(th) + c[1] * np.sin(th)
    disc = ec * ec - (c @ c) + rho * rho
    if np.any(disc < 0):
        raise GeometryError("pole lies outside the ball")
    return ec + np.sqrt(disc)


@dataclass(frozen=True, eq=False)
class IntersectionDomain(StarDomain):
    """Omega intersected with the disk |x - center| < rho (star about Omega's pole)."""

    base: StarDomain
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rho: float = 1.0

    @property
    def pole(self):
        return self.base.pole

    def radius(self, theta):
        return np.minimum(self.base.radius(theta),
                          _ball_radius_from(self.pole, theta, self.center, self.rho))


@dataclass(frozen=True, eq=False)
class DiskAbout(StarDomain):
    """The disk |x - center| < rho viewed as a star domain about ``at``."""

    center: np.ndarray
    rho: float
    at: np.ndarray

    @property
    def pole(self):
        return np.asarray(self.at, dtype=float)

    def radius(self, theta):
        return _ball_radius_from(self.at, theta, self.center, self.rho)


# ---------------------------------------------------------------------------
# Symmetric differences and Fraenkel asymmetry


def _sym_diff(domain: StarDomain, shift, N: int) -> float:
    th = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
    R = domain.radius(th)
    D = _ball_radius_from(domain.pole, th, shift)
    return float(0.5 * np.mean(np.abs(R * R - D * D)) * 2 * np.pi)


def sym_diff_with_ball(domain: StarDomain, shift=(0.0, 0.0), N: int = 4096,
                       return_error: bool = False):
    """|Omega symmetric-difference (B + shift)| by polar quadrature about the pole.

    With ``return_error`` the N vs N/2 discrepancy is returned as well.
    """
    shift = np.asarray(shift, dtype=float)
    if np.hypot(*shift) >= 0.5:
        raise GeometryError("shift must satisfy |shift| < 1/2")
    val = _sym_diff(domain, shift, N)
    if not return_error:
        return val
    return val, abs(val - _sym_diff(domain, shift, N // 2))


def sym_diff_area(a: StarDomain, b: StarDomain, N: int = 4096) -> float:
    """|a symmetric-difference b| for two domains star-shaped about a.pole."""
    th = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
    if not np.allclose(a.pole, b.pole):
        raise GeometryError("domains must share a pole")
    return float(0.5 * np.mean(np.abs(a.radius(th) ** 2 - b.radius(th) ** 2)) * 2 * np.pi)


def outside_ball_area(domain: StarDomain, center=(0.0, 0.0), N: int = 4096,
                      return_error: bool = False):
    """|Omega minus (B + center)| by polar quadrature about the pole."""
    def q(N):
        th = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
        R = domain.radius(th)
        D = _ball_radius_from(domain.pole, th, center)
        return float(0.5 * np.mean(np.clip(R * R - D * D, 0.0, None)) * 2 * np.pi)
    val = q(N)
    if not return_error:
        return val
    return val, abs(val - q(N // 2))


@dataclass(frozen=True)
class FraenkelResult:
    value: float
    shift: np.ndarray
    err: float


def fraenkel_asymmetry(domain: StarDomain, N: int = 4096) -> FraenkelResult:
    """inf over translations x of |(B + x) symmetric-difference Omega|."""
    f = lambda x: _sym_diff(domain, x, N) if np.hypot(*x) < 0.5 else 1e3 + np.hypot(*x)
    res = optimize.minimize(f, np.zeros(2), method="Nelder-Mead",
                            options=dict(xatol=1e-7, fatol=1e-12, initial_simplex=[
                                [0, 0], [0.02, 0], [0, 0.02]]))
    x = np.asarray(res.x)
    if np.hypot(*x) >= 0.5:
        raise GeometryError("Fraenkel search left the 0.5 trust region")
    val = min(float(res.fun), _sym_diff(domain, np.zeros(2), N))
    err = abs(val - _sym_diff(domain, x, N // 2)) + 1e-9
    return FraenkelResult(val, x, err)


# ---------------------------------------------------------------------------
# Re-expansion about the origin


def effective_profile(domain: StarDomain, modes: int = 48, N: int = 512) -> FourierProfile:
    """Profile h with boundary {(1 + h(phi)) e(phi)} about the origin.

    The boundary is resampled along rays from 0 (the origin must be inside
    and the domain star-shaped about it), then truncated to ``modes``.
    """
    phi = np.linspace(0.0, 2 * np.pi, N, endpoint=False)
    p = domain.pole

    def ray_hit(ph):
        # boundary point at polar angle theta about the pole, seen from 0
        g = lambda th: math.atan2(*(domain.boundary_points(th)[::-1])) - ph
        wrap = lambda v: (v + np.pi) % (2 * np.pi) - np.pi
        t0 = ph
        a, b = t0 - 0.5, t0 + 0.5
        return optimize.brentq(lambda th: wrap(g(th)), a, b, xtol=1e-15)

    r = np.empty(N)
    for i, ph in enumerate(phi):
        th = ray_hit(ph)
        r[i] = float(np.hypot(*domain.boundary_points(th)))
    c = np.fft.rfft(r - 1.0) / N
    a = np.r_[c[0].real, 2 * c[1:modes + 1].real]
    b = -2 * c[1:modes + 1].imag
    return FourierProfile(a, b)
