"""Local optimality of T^{-1} + delta F(lambda) at the disk over Fourier modes.

All Hessians are finite-difference Hessians of functionals of the
volume-normalized, centered domains make_domain(sum c_i dir_i), where the
directions are cos(m theta), sin(m theta) for m = 2..M.  Solver outputs
(T and the first few eigenvalues) are cached per sample point, so every
functional built from them (any delta, any exponent p) reuses the same
solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dirichlet_solver import build_mesh, solve_domain, solve_eigs, solve_torsion
from .geometry import FourierProfile, h_half_sq, make_domain
from .shape_calculus import Functional, volume_derivative, DegeneracyError


# ---------------------------------------------------------------------------
# Functionals


def _sum_F(lams):
    return float(np.sum(lams))


def _sum_grad(lams):
    return np.ones(len(lams))


def _geomean_F(lams):
    return float(np.exp(np.mean(np.log(lams))))


def _geomean_grad(lams):
    g = _geomean_F(lams)
    return g / (len(lams) * np.asarray(lams))


F_REGISTRY: dict[str, tuple[Callable, Callable]] = {
    "sum": (_sum_F, _sum_grad),
    "geomean": (_geomean_F, _geomean_grad),
}


@dataclass(frozen=True)
class FunctionalSpec:
    """T^{-1} + delta * F(lambda_lo..lambda_hi)."""

    lo: int
    hi: int
    F: str = "sum"
    delta: float = 0.0

    @classmethod
    def cluster_sum(cls, lo, hi, delta=0.0):
        return cls(lo, hi, "sum", delta)

    @classmethod
    def eigenvalue(cls, k, delta=0.0):
        return cls(k, k, "sum", delta)

    def with_delta(self, delta: float) -> "FunctionalSpec":
        return FunctionalSpec(self.lo, self.hi, self.F, delta)

    @property
    def name(self) -> str:
        return f"Tinv+delta*{self.F}(lambda_{self.lo}..{self.hi})"

    def G(self, lams) -> float:
        return F_REGISTRY[self.F][0](np.asarray(lams)[self.lo - 1:self.hi])

    def value(self, T, lams) -> float:
        return 1.0 / T + self.delta * self.G(lams)

    def check_symmetry(self, ball_lams, tol: float = 1e-9) -> bool:
        """Equal partial derivatives of F across each equal-eigenvalue block."""
        lams = np.asarray(ball_lams)[self.lo - 1:self.hi]
        grad = F_REGISTRY[self.F][1](lams)
        for i in range(len(lams)):
            for j in range(len(lams)):
                if abs(lams[i] - lams[j]) <= tol * lams[i] and abs(grad[i] - grad[j]) > 1e-9 * abs(grad[i]):
                    return False
        return True


# ---------------------------------------------------------------------------
# Sample bank


def mode_set(M: int) -> list[tuple[int, str]]:
    if not 2 <= M <= 8:
        raise ValueError("M must be in 2..8")
    return [(m, kind) for m in range(2, M + 1) for kind in ("cos", "sin")]


def mode_profile(mode: tuple[int, str], amp: float = 1.0) -> FourierProfile:
    m, kind = mode
    return FourierProfile.from_modes({m: (amp, 0.0) if kind == "cos" else (0.0, amp)})


def combine(modes, coeffs) -> FourierProfile:
    prof = FourierProfile.zero()
    for mode, c in zip(modes, coeffs):
        if c != 0.0:
            prof = prof + mode_profile(mode, c)
    return prof


@dataclass
class SampleBank:
    """Cache of (T, lambdas) at coefficient vectors over a fixed mode set."""

    modes: list
    K: int = 3
    levels: tuple = (2,)
    cache: dict = field(default_factory=dict)
    solves: int = 0

    def evaluate(self, coeffs) -> tuple[float, np.ndarray]:
        key = tuple(round(float(c), 14) for c in coeffs)
        if key not in self.cache:
            dom = make_domain(combine(self.modes, key))
            if len(self.levels) == 1:
                mesh = build_mesh(dom, self.levels[0])
                lams = solve_eigs(mesh, self.K).lambdas
                T = solve_torsion(mesh).T
            else:
                s = solve_domain(dom, self.K, tuple(self.levels), keep_fields=False)
                lams, T = s.lambdas, s.T
            self.cache[key] = (float(T), np.asarray(lams, dtype=float))
            self.solves += 1
        return self.cache[key]

    def point(self, *pairs) -> np.ndarray:
        c = np.zeros(len(self.modes))
        for i, v in pairs:
            c[i] += v
        return c


def _hessian_from(bank: SampleBank, g: Callable, step: float):
    """Second-difference Hessian of g(T, lams) over the bank's modes.

    Diagonal: (g(+s) - 2g(0) + g(-s))/s^2.  Off-diagonal uses the
    six-point formula [g(++) + g(--) - g(+i) - g(-i) - g(+j) - g(-j) + 2g(0)]/(2s^2).
    """
    n = len(bank.modes)
    G = lambda c: g(*bank.evaluate(c))
    g0 = G(np.zeros(n))
    gp = np.array([G(bank.point((i, step))) for i in range(n)])
    gm = np.array([G(bank.point((i, -step))) for i in range(n)])
    H = np.diag((gp - 2 * g0 + gm) / step ** 2)
    for i in range(n):
        for j in range(i + 1, n):
            gpp = G(bank.point((i, step), (j, step)))
            gmm = G(bank.point((i, -step), (j, -step)))
            H[i, j] = H[j, i] = (gpp + gmm - gp[i] - gm[i] - gp[j] - gm[j] + 2 * g0) / (2 * step ** 2)
    return H


def _diag_at(bank: SampleBank, g: Callable, step: float) -> np.ndarray:
    n = len(bank.modes)
    G = lambda c: g(*bank.evaluate(c))
    g0 = G(np.zeros(n))
    return np.array([(G(bank.point((i, step))) - 2 * g0 + G(bank.point((i, -step)))) / step ** 2
                     for i in range(n)])


@dataclass
class HessianScan:
    functional: str
    delta: float
    modes: list
    hessian: np.ndarray
    eigenvalues: np.ndarray
    min_eigenvalue: float
    asymmetry: float
    noisy: list
    step: float
    levels: tuple

    def to_dict(self) -> dict:
        return dict(functional=self.functional, delta=self.delta,
                    modes=[f"{k}{m}" for m, k in self.modes], hessian=self.hessian.tolist(),
                    eigenvalues=self.eigenvalues.tolist(), min_eigenvalue=self.min_eigenvalue,
                    asymmetry=self.asymmetry, noisy=self.noisy, step=self.step,
                    levels=list(self.levels))


@dataclass
class HessianParts:
    """Hessians of T^{-1} and of G = F(lambda) separately: H(delta) = H_T + delta H_G."""

    spec: FunctionalSpec
    H_T: np.ndarray
    H_G: np.ndarray
    noisy: list
    bank: SampleBank
    step: float

    def at(self, delta: float) -> np.ndarray:
        return self.H_T + delta * self.H_G

    def min_eig(self, delta: float) -> float:
        return float(np.linalg.eigvalsh(self.at(delta))[0])

    def scan(self, delta: float) -> HessianScan:
        H = self.at(delta)
        ev = np.linalg.eigvalsh(0.5 * (H + H.T))
        asym = float(np.max(np.abs(H - H.T)))
        return HessianScan(self.spec.with_delta(delta).name, delta, list(self.bank.modes), H, ev,
                           float(ev[0]), asym, self.noisy, self.step, tuple(self.bank.levels))


def hessian_parts(spec: FunctionalSpec, M: int = 6, step: float = 0.02, levels=(2,),
                  bank: SampleBank | None = None, noise_tol: float = 0.05) -> HessianParts:
    modes = mode_set(M)
    if bank is None:
        bank = SampleBank(modes, K=max(spec.hi + 1, 2), levels=tuple(levels))
    ball_lams = bank.evaluate(np.zeros(len(modes)))[1]
    if not spec.check_symmetry(ball_lams, tol=1e-6):
        raise ValueError(f"F={spec.F} is not symmetric within equal clusters")
    if spec.lo > 1 and ball_lams[spec.lo - 1] - ball_lams[spec.lo - 2] < 1e-6:
        raise DegeneracyError(f"lambda_{spec.lo} shares a cluster with lambda_{spec.lo - 1}; "
                              "the functional is not differentiable at the ball")
    if ball_lams[spec.hi] - ball_lams[spec.hi - 1] < 1e-6:
        raise DegeneracyError(f"lambda_{spec.hi} shares a cluster with lambda_{spec.hi + 1}; "
                              "the functional is not differentiable at the ball")
    gT = lambda T, l: 1.0 / T
    gG = lambda T, l: spec.G(l)
    H_T = _hessian_from(bank, gT, step)
    H_G = _hessian_from(bank, gG, step)
    # noise flags: diagonal entries whose step-halving change exceeds noise_tol
    noisy = []
    for name, g, H in (("T", gT, H_T), ("G", gG, H_G)):
        d2 = _diag_at(bank, g, 2 * step)
        for i, m in enumerate(modes):
            ref = max(abs(H[i, i]), 1e-12)
            if abs(d2[i] - H[i, i]) > noise_tol * ref:
                noisy.append(f"{name}:{m[1]}{m[0]}")
    return HessianParts(spec, H_T, H_G, noisy, bank, step)


def fd_hessian(spec: FunctionalSpec, M: int = 6, step: float = 0.02, levels=(2,),
               bank: SampleBank | None = None) -> HessianScan:
    return hessian_parts(spec, M, step, levels, bank).scan(spec.delta)


# ---------------------------------------------------------------------------
# Thresholds


@dataclass
class DeltaBracket:
    sign: int
    stable: float      # |delta| at which the Hessian is still positive definite
    unstable: float    # |delta| at which it is not (inf if none found)
    iterations: int

    @property
    def width(self) -> float:
        return self.unstable - self.stable


def delta_threshold(parts: HessianParts, sign: int = 1, delta_max: float = 100.0,
                    tol: float = 1e-6, max_iter: int = 200) -> DeltaBracket:
    """Bisection on |delta| for the sign change of the minimal Hessian eigenvalue."""
    if parts.min_eig(0.0) <= 0:
        raise ArithmeticError("Hessian at delta = 0 is not positive definite")
    if parts.min_eig(sign * delta_max) > 0:
        return DeltaBracket(sign, delta_max, math.inf, 0)
    lo, hi = 0.0, delta_max
    it = 0
    while hi - lo > tol * max(1.0, lo) and it < max_iter:
        mid = 0.5 * (lo + hi)
        if parts.min_eig(sign * mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    return DeltaBracket(sign, lo, hi, it)


def exact_threshold(parts: HessianParts, sign: int = 1) -> float:
    """Closed form of the bisection target: smallest |delta| with H_T + delta H_G singular."""
    w, V = np.linalg.eigh(parts.H_T)
    if w[0] <= 0:
        raise ArithmeticError("H_T not positive definite")
    S = V / np.sqrt(w)
    mu = np.linalg.eigvalsh(S.T @ (sign * parts.H_G) @ S)
    neg = mu[mu < 0]
    return math.inf if len(neg) == 0 else float(-1.0 / neg.min())


@dataclass
class ReverseKJ:
    p_est: float             # (delta* T(B) lambda_1(B))^{-1}
    p_bracket: tuple         # from the delta bracket
    p_direct: float          # smallest p with Hessian of T lambda_1^{1/p} negative definite
    p_direct_bracket: tuple
    delta_bracket: DeltaBracket
    kj_min_eig: float        # min eigenvalue of Hessian of T lambda_1^2 (Kohler-Jobin side)
    maximal_at_p1: bool      # Hessian of T lambda_1 negative definite
    T_ball: float
    lambda1_ball: float
    per_mode_p: list

    def agree(self, rtol: float = 1e-3) -> bool:
        """Routes agree up to bracket widths plus the O(step^2) difference
        between differencing the product and combining separate Hessians."""
        width = (self.p_bracket[1] - self.p_bracket[0]) + (self.p_direct_bracket[1]
                                                          - self.p_direct_bracket[0])
        return abs(self.p_est - self.p_direct) <= width + rtol * self.p_est

    def to_dict(self) -> dict:
        return dict(p_est=self.p_est, p_bracket=list(self.p_bracket), p_direct=self.p_direct,
                    p_direct_bracket=list(self.p_direct_bracket),
                    delta_bracket=[self.delta_bracket.stable, self.delta_bracket.unstable],
                    kj_min_eig=self.kj_min_eig, maximal_at_p1=self.maximal_at_p1,
                    T_ball=self.T_ball, lambda1_ball=self.lambda1_ball,
                    per_mode_p=self.per_mode_p, routes_agree=self.agree())


def reverse_kj_exponent(M: int = 6, step: float = 0.02, levels=(2,),
                        bank: SampleBank | None = None, tol: float = 1e-8) -> ReverseKJ:
    """Local reverse Kohler-Jobin exponent at the disk, two routes.

    Route 1: threshold delta* for T^{-1} - delta lambda_1, p = 1/(delta* T lambda_1).
    Route 2: bisection on p for the Hessian of T lambda_1^{1/p} itself
    (finite differences on the same stored solves).
    """
    spec = FunctionalSpec.eigenvalue(1)
    parts = hessian_parts(spec, M, step, levels, bank)
    bank = parts.bank
    T0, l0 = bank.evaluate(np.zeros(len(bank.modes)))
    l0 = float(l0[0])
    br = delta_threshold(parts, sign=-1, tol=tol)
    d_star = 0.5 * (br.stable + br.unstable)
    tl = T0 * l0
    p_est = 1.0 / (d_star * tl)
    p_br = (1.0 / (br.unstable * tl), 1.0 / (br.stable * tl) if br.stable > 0 else math.inf)

    def max_eig_p(p):
        H = _hessian_from(bank, lambda T, l: T * l[0] ** (1.0 / p), step)
        return float(np.linalg.eigvalsh(H)[-1])

    lo, hi = 0.5, 20.0
    if max_eig_p(hi) >= 0:
        raise ArithmeticError("no p in range makes the ball a local maximum")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if max_eig_p(mid) < 0:
            hi = mid
        else:
            lo = mid
    H_kj = _hessian_from(bank, lambda T, l: T * l[0] ** 2, step)
    per_mode = []
    for i, m in enumerate(bank.modes):
        a, b = parts.H_T[i, i], parts.H_G[i, i]
        per_mode.append([f"{m[1]}{m[0]}", float(b / (a * tl))])
    return ReverseKJ(p_est, p_br, 0.5 * (lo + hi), (lo, hi), br,
                     float(np.linalg.eigvalsh(H_kj)[0]), max_eig_p(1.0) < 0, T0, l0, per_mode)


# ---------------------------------------------------------------------------
# Descent


@dataclass
class Trajectory:
    coeffs: list
    values: list
    norms: list
    steps: list
    converged: bool


def _gradient(spec: FunctionalSpec, modes, coeffs, level: int):
    prof = combine(modes, coeffs)
    dom = make_domain(prof)
    mesh = build_mesh(dom, level)
    eig = solve_eigs(mesh, spec.hi + 1)
    tor = solve_torsion(mesh)
    lams = eig.lambdas
    Fgrad = F_REGISTRY[spec.F][1](lams[spec.lo - 1:spec.hi])
    c = np.asarray(coeffs, dtype=float)
    raw_area = np.pi * (1 + 0.5 * np.sum(c ** 2))
    g = np.zeros(len(modes))
    tinv = Functional("Tinv")
    for i, mode in enumerate(modes):
        # radial velocity of the normalized boundary when c_i moves
        V = (mode_profile(mode) + prof * (-np.pi * c[i] / (2 * raw_area))
             + FourierProfile.from_modes({0: (-np.pi * c[i] / (2 * raw_area), 0.0)})) * dom.scale
        gi = volume_derivative(None, tor, tinv, V)
        if spec.delta != 0.0:
            for j, k in enumerate(range(spec.lo, spec.hi + 1)):
                gi += spec.delta * Fgrad[j] * volume_derivative(eig, None, Functional("lambda", k, k),
                                                                V, check=False)
        g[i] = gi
    val = spec.value(tor.T, lams)
    mesh._cache.clear()
    return val, g


def projected_descent(spec: FunctionalSpec, start: FourierProfile, steps: int = 30, M: int = 6,
                      level: int = 2, step_size: float = 0.05, tol: float = 1e-3) -> Trajectory:
    """Gradient descent over the coefficients of cos/sin m theta, m = 2..M.

    Each iterate is volume-normalized and centered by construction; the
    gradient accounts for the normalization.  Backtracking halves the step
    until the functional decreases.
    """
    modes = mode_set(M)
    c = np.zeros(len(modes))
    for i, (m, kind) in enumerate(modes):
        if m <= start.M:
            c[i] = start.a[m] if kind == "cos" else start.b[m - 1]
    val, g = _gradient(spec, modes, c, level)
    traj = Trajectory([c.tolist()], [val], [float(np.linalg.norm(c))], [], False)
    alpha = step_size
    for _ in range(steps):
        while True:
            trial = c - alpha * g
            try:
                tval, tg = _gradient(spec, modes, trial, level)
            except (ValueError, DegeneracyError):
                tval = math.inf
            if tval < val or alpha < 1e-8:
                break
            alpha *= 0.5
        if not tval < val:
            break
        c, val, g = trial, tval, tg
        traj.coeffs.append(c.tolist())
        traj.values.append(val)
        traj.norms.append(float(np.linalg.norm(c)))
        traj.steps.append(alpha)
        alpha = min(2 * alpha, step_size)
        if np.linalg.norm(c) < tol:
            break
    traj.converged = traj.norms[-1] < 1e-2
    return traj
