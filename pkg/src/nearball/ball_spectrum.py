"""Exact Dirichlet spectrum of the unit n-ball.

Eigenvalues of the ball are squares of Bessel zeros j_{nu,p} with
nu = d + (n - 2)/2, each carrying the multiplicity of the space of
degree-d harmonic polynomials.  Everything here is computed from scratch:
J_nu by power series or Miller's backward recurrence, zeros by a grid scan
followed by safeguarded Newton iterations.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SCAN_STEP = 0.25
_MAX_D = 10_000


class BesselConvergenceError(ArithmeticError):
    """Zero refinement did not converge; carries the final bracket."""

    def __init__(self, message, bracket):
        super().__init__(f"{message}; bracket={bracket}")
        self.bracket = bracket


class SpectrumDepthError(ValueError):
    """The enumerated spectrum does not reach the requested index."""


# ---------------------------------------------------------------------------
# Bessel functions


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    half = x / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_t0 = nu * np.log(half) - math.lgamma(nu + 1.0)
    term = np.where(half > 0, np.exp(log_t0), 1.0 if nu == 0 else 0.0)
    total = term.copy()
    q = -half * half
    for p in range(1, 400):
        term = term * q / (p * (p + nu))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def _miller(nu: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """J_nu and J_{nu+1} by backward recurrence normalised with the
    Neumann series (x/2)^nu0 = sum_j c_j J_{nu0+2j}(x)."""
    m = int(math.floor(nu))
    nu0 = nu - m
    top = max(m + 1, float(x.max()))
    N = int(top + 40 + 2 * math.sqrt(40 * top))
    N += N % 2  # normalisation uses even offsets
    f_hi = np.zeros_like(x)          # f_{k+1}
    f_k = np.full_like(x, 1e-300)    # f_k, k = N
    S = np.zeros_like(x)
    j_m = np.zeros_like(x)
    j_m1 = np.zeros_like(x)
    # c_j for the even index k = 2j, built downward from log-gamma
    def c_coef(j):
        if j == 0:
            return math.gamma(nu0 + 1.0)
        return (nu0 + 2 * j) * math.exp(math.lgamma(nu0 + j) - math.lgamma(j + 1.0))

    k = N
    while True:
        if k % 2 == 0:
            S += c_coef(k // 2) * f_k
        if k == m + 1:
            j_m1 = f_k.copy()
        if k == m:
            j_m = f_k.copy()
        if k == 0:
            break
        f_lo = (2.0 * (nu0 + k) / x) * f_k - f_hi
        f_hi, f_k = f_k, f_lo
        k -= 1
        # growth per step is below 2N, so checking every 8 steps stays far from overflow
        if k % 8 == 0 and np.abs(f_k).max() > 1e250:
            big = np.abs(f_k) > 1e250
            scale = np.where(big, 1e-250, 1.0)
            f_k *= scale
            f_hi *= scale
            S *= scale
            j_m *= scale
            j_m1 *= scale
    norm = np.power(x / 2.0, nu0) / S
    return j_m * norm, j_m1 * norm


def _use_series(nu, x):
    return (x * x / 4.0 <= nu + 1.0) | (x < 1.0)


def _jv_pair(nu: float, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.ravel()
    j0 = np.empty_like(x)
    j1 = np.empty_like(x)
    ser = _use_series(nu, x)
    if ser.any():
        xs = x[ser]
        j0[ser] = _series(nu, xs)
        j1[ser] = _series(nu + 1.0, xs)
    if (~ser).any():
        a, b = _miller(nu, x[~ser])
        j0[~ser] = a
        j1[~ser] = b
    return j0.reshape(shape), j1.reshape(shape)


def bessel_j(nu: float, x):
    """Bessel function of the first kind J_nu(x) for real nu >= 0, x >= 0.

    Accepts scalars or arrays.  Absolute error is below 1e-13 for x <= 50.
    """
    if nu < 0:
        raise ValueError(f"order must be >= 0, got {nu}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("argument must be >= 0")
    val = _jv_pair(float(nu), xa)[0]
    return float(val) if np.ndim(x) == 0 else val


def bessel_jp(nu: float, x):
    """Derivative J'_nu(x) = (nu/x) J_nu(x) - J_{nu+1}(x)."""
    xa = np.asarray(x, dtype=float)
    j0, j1 = _jv_pair(float(nu), xa)
    safe = np.where(xa > 0, xa, 1.0)
    at_zero = 0.5 if nu == 1 else 0.0
    d = np.where(xa > 0, nu / safe * j0 - j1, at_zero)
    return float(d) if np.ndim(x) == 0 else d


def _refine(nu: float, lo: np.ndarray, hi: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Safeguarded Newton on a set of sign-change brackets."""
    lo = lo.copy()
    hi = hi.copy()
    f_lo = _jv_pair(nu, lo)[0]
    x = 0.5 * (lo + hi)
    done = np.zeros(lo.shape, dtype=bool)
    for _ in range(max_iter):
        j0, j1 = _jv_pair(nu, x)
        dj = nu / x * j0 - j1
        same = np.sign(j0) == np.sign(f_lo)
        lo = np.where(same, x, lo)
        f_lo = np.where(same, j0, f_lo)
        hi = np.where(same, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = j0 / dj
        cand = x - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        new = np.where(bad, 0.5 * (lo + hi), cand)
        done = np.abs(new - x) <= 4e-16 * np.abs(x) + 1e-300
        x = new
        if done.all():
            return x
    if np.all(hi - lo <= 1e-13 * hi):
        return x
    raise BesselConvergenceError("Bessel zero refinement exceeded iteration cap",
                                 list(zip(lo.tolist(), hi.tolist())))


def first_zero_lower_bound(nu: float) -> float:
    """j_{nu,1} > sqrt(nu (nu + 2))."""
    return math.sqrt(nu * (nu + 2.0))


def bessel_zeros_below(nu: float, xmax: float) -> np.ndarray:
    """All positive zeros of J_nu in (0, xmax], ascending."""
    lo = max(first_zero_lower_bound(nu), 1e-3)
    if lo >= xmax:
        return np.empty(0)
    npts = int(math.ceil((xmax - lo) / SCAN_STEP)) + 1
    grid = lo + SCAN_STEP * np.arange(npts + 1)
    vals = bessel_j(nu, grid)
    exact = vals == 0.0
    cross = np.nonzero(vals[:-1] * vals[1:] < 0)[0]
    roots = list(grid[exact])
    if cross.size:
        roots.extend(_refine(nu, grid[cross], grid[cross + 1]).tolist())
    roots = np.sort(np.asarray(roots, dtype=float))
    return roots[roots <= xmax]


def bessel_zero(nu: float, p: int) -> float:
    """p-th positive zero j_{nu,p} of J_nu (absolute error <= 1e-11)."""
    if p < 1:
        raise ValueError("zero index p must be >= 1")
    if nu < 0:
        raise ValueError("order must be >= 0")
    # McMahon-type guess plus generous margin, extended until p zeros are seen
    xmax = nu + 2.0 * nu ** (1.0 / 3.0) + math.pi * (p + 1) + 2.0
    while True:
        zs = bessel_zeros_below(nu, xmax)
        if zs.size >= p:
            return float(zs[p - 1])
        xmax += math.pi * (p - zs.size + 2)


# ---------------------------------------------------------------------------
# Ball geometry constants


def ball_volume(n: int) -> float:
    """omega_n, the volume of the unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def li_yau_constant(n: int) -> float:
    """a_n = n/(n+2) * 4 pi^2 / omega_n^(4/n), so lambda_k >= a_n k^(2/n)."""
    return n / (n + 2.0) * 4.0 * math.pi ** 2 / ball_volume(n) ** (4.0 / n)


def harmonic_dim(n: int, d: int) -> int:
    """Dimension of degree-d harmonic homogeneous polynomials in n variables."""
    if n < 2 or d < 0:
        raise ValueError("need n >= 2 and d >= 0")
    if d > _MAX_D:
        raise OverflowError(f"degree {d} above cap {_MAX_D}")
    if d == 0:
        return 1
    if n == 2:
        return 2
    return (2 * d + n - 2) * math.factorial(d + n - 3) // (
        math.factorial(d) * math.factorial(n - 2))


def ball_torsion(n: int) -> float:
    """T(B) = integral of (1 - |x|^2)/(2n) over the ball = omega_n/(n(n+2))."""
    # radial integral: |S^{n-1}| * int_0^1 (1-r^2)/(2n) r^{n-1} dr
    sphere = n * ball_volume(n)
    radial = (1.0 / n - 1.0 / (n + 2)) / (2.0 * n)
    return sphere * radial


# ---------------------------------------------------------------------------
# Spectrum enumeration


@dataclass(frozen=True)
class BallMode:
    n: int
    d: int
    p: int
    nu: float
    zero: float
    lam: float
    mult: int
    index_lo: int
    index_hi: int

    @property
    def indices(self) -> range:
        return range(self.index_lo, self.index_hi + 1)


@dataclass(frozen=True)
class BallSpectrum:
    n: int
    modes: tuple[BallMode, ...]
    count: int
    lambda_bound: float = field(default=math.inf)

    def mode_of(self, k: int) -> BallMode:
        if not 1 <= k <= self.count:
            raise SpectrumDepthError(f"index {k} outside enumerated range 1..{self.count}")
        lo, hi = 0, len(self.modes) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.modes[mid].index_hi < k:
                lo = mid + 1
            else:
                hi = mid
        return self.modes[lo]

    def eigenvalue(self, k: int) -> float:
        return self.mode_of(k).lam

    def eigenvalues(self, K: int | None = None) -> np.ndarray:
        K = self.count if K is None else K
        if K > self.count:
            raise SpectrumDepthError(f"requested {K} eigenvalues, have {self.count}")
        out = np.empty(K)
        for m in self.modes:
            if m.index_lo > K:
                break
            out[m.index_lo - 1:min(m.index_hi, K)] = m.lam
        return out

    def cluster_of(self, k: int) -> tuple[int, int]:
        m = self.mode_of(k)
        return m.index_lo, m.index_hi

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index_lo", "index_hi", "d", "p", "nu", "zero", "lambda", "mult"])
            for m in self.modes:
                w.writerow([m.index_lo, m.index_hi, m.d, m.p, repr(m.nu),
                            f"{m.zero:.17g}", f"{m.lam:.17g}", m.mult])


def _weyl_estimate(n: int, K: int) -> float:
    wn = ball_volume(n)
    return (2.0 * math.pi) ** 2 * (K / wn ** 2) ** (2.0 / n)


def enumerate_spectrum(n: int, K: int, max_lambda: float = 1e8) -> BallSpectrum:
    """Ordered ball eigenvalues covering at least indices 1..K.

    All (d, p) with j_{nu,p}^2 <= L are generated for a bound L grown until
    the multiplicity count reaches K; since j_{nu,1} > nu and zeros increase
    in p, nothing below L is missed.
    """
    if n < 2:
        raise ValueError("dimension must be >= 2")
    if not 1 <= K <= 10 ** 5:
        raise ValueError("K must be in 1..1e5")
    lam1 = bessel_zero((n - 2) / 2.0, 1) ** 2
    L = max(1.15 * _weyl_estimate(n, K) + 4.0 * lam1, 1.05 * lam1)
    while True:
        if L > max_lambda:
            raise SpectrumDepthError(f"frontier exhausted: lambda bound {L:g} > {max_lambda:g}")
        jmax = math.sqrt(L)
        raw = []
        d = 0
        while True:
            nu = d + (n - 2) / 2.0
            if first_zero_lower_bound(nu) > jmax:
                break
            mult = harmonic_dim(n, d)
            for p, z in enumerate(bessel_zeros_below(nu, jmax), start=1):
                raw.append((z * z, d, p, nu, z, mult))
            d += 1
        total = sum(r[5] for r in raw)
        if total >= K:
            break
        L *= 1.3
    raw.sort()
    modes = []
    idx = 1
    for lam, d, p, nu, z, mult in raw:
        modes.append(BallMode(n, d, p, nu, z, lam, mult, idx, idx + mult - 1))
        idx += mult
    for a, b in zip(modes, modes[1:]):
        if b.lam - a.lam < 1e-9:
            warnings.warn(f"near-coincident ball eigenvalues for (d,p)=({a.d},{a.p}) and "
                          f"({b.d},{b.p}): gap {b.lam - a.lam:.3e}", RuntimeWarning)
    return BallSpectrum(n, tuple(modes), idx - 1, L)


def spectral_gap(n: int, k: int, spectrum: BallSpectrum | None = None) -> float:
    """g_n(k) = min(1, distance from lambda_k(B) to the nearest distinct level).

    A spectrum too shallow to contain the next level is re-enumerated.
    """
    spec = spectrum
    if spec is None or spec.count < k + 1:
        spec = enumerate_spectrum(n, k + 1)
    mode = spec.mode_of(k)
    if mode.index_hi + 1 > spec.count:
        spec = enumerate_spectrum(n, mode.index_hi + 1)
        mode = spec.mode_of(k)
    gaps = [spec.mode_of(mode.index_hi + 1).lam - mode.lam]
    if mode.index_lo > 1:
        gaps.append(mode.lam - spec.mode_of(mode.index_lo - 1).lam)
    return min(1.0, min(gaps))


def simple_indices(n: int, K: int, spectrum: BallSpectrum | None = None) -> list[int]:
    """Indices k <= K whose ball eigenvalue is simple."""
    spec = spectrum if spectrum is not None and spectrum.count >= K else enumerate_spectrum(n, K)
    return [m.index_lo for m in spec.modes if m.mult == 1 and m.index_lo <= K]


def min_zero_gaps(n: int, K: int) -> list[tuple[int, int, float]]:
    """Gaps between consecutive distinct levels, as (k, k_next, |j - j_next|).

    Exploration data for the conjectured power-law separation of Bessel
    zeros; nothing here is asserted.
    """
    spec = enumerate_spectrum(n, K)
    return [(a.index_lo, b.index_lo, b.zero - a.zero)
            for a, b in zip(spec.modes, spec.modes[1:])]


# ---------------------------------------------------------------------------
# Eigenfunctions and boundary gradients


def radial_norm_sq(nu: float, zero: float, nodes: int = 200) -> float:
    """int_0^1 J_nu(zero r)^2 r dr by Gauss-Legendre quadrature."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * (t + 1.0)
    return float(0.5 * np.sum(w * bessel_j(nu, zero * r) ** 2 * r))


def cluster_boundary_gradient_sq(n: int, cluster: Sequence[int],
                                 spectrum: BallSpectrum | None = None) -> float:
    """Constant value of sum_{i in cluster} |grad u_i|^2 on the unit sphere."""
    k, l = cluster
    spec = spectrum if spectrum is not None and spectrum.count >= l else enumerate_spectrum(n, l)
    mode = spec.mode_of(k)
    if (mode.index_lo, mode.index_hi) != (k, l):
        raise ValueError(f"[{k},{l}] is not an equality cluster; "
                         f"lambda_{k} spans [{mode.index_lo},{mode.index_hi}]")
    norm = 1.0 / radial_norm_sq(mode.nu, mode.zero)
    dj = bessel_jp(mode.nu, mode.zero)
    sphere = n * ball_volume(n)
    return norm * mode.zero ** 2 * dj ** 2 * mode.mult / sphere


def disk_eigenfunction(d: int, p: int, kind: str = "cos"):
    """Callable u(r, theta) for an L2-normalised eigenfunction of the unit disk."""
    z = bessel_zero(float(d), p)
    norm = 1.0 / math.sqrt(radial_norm_sq(float(d), z))
    if d == 0:
        ang = lambda th: np.full_like(np.asarray(th, dtype=float), 1.0 / math.sqrt(2 * math.pi))
    elif kind == "cos":
        ang = lambda th: np.cos(d * np.asarray(th)) / math.sqrt(math.pi)
    else:
        ang = lambda th: np.sin(d * np.asarray(th)) / math.sqrt(math.pi)

    def u(r, theta):
        return norm * bessel_j(float(d), z * np.asarray(r, dtype=float)) * ang(theta)

    u.zero = z
    u.normal_derivative = lambda theta: norm * z * bessel_jp(float(d), z) * ang(theta)
    return u


def disk_cluster_gradient_samples(cluster: Sequence[int], thetas) -> np.ndarray:
    """sum_i |grad u_i|^2 on the unit circle at the given angles (n = 2)."""
    k, l = cluster
    spec = enumerate_spectrum(2, l)
    mode = spec.mode_of(k)
    if (mode.index_lo, mode.index_hi) != (k, l):
        raise ValueError("not an equality cluster")
    kinds = ["cos"] if mode.d == 0 else ["cos", "sin"]
    total = np.zeros_like(np.asarray(thetas, dtype=float))
    for kind in kinds:
        total = total + disk_eigenfunction(mode.d, mode.p, kind).normal_derivative(thetas) ** 2
    return total
