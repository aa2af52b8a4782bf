"""Shape derivatives of Dirichlet eigenvalues, torsion and area.

Perturbations are radial about the domain pole: the boundary point at
polar angle theta moves to radius R(theta) + t V(theta), with V given as a
FourierProfile.  On the boundary this field has normal component
V R / sqrt(R^2 + R'^2) and line element sqrt(R^2 + R'^2) dtheta, so
(zeta . nu) dsigma = V R dtheta.

First derivatives come in three flavours which are compared against each
other: the Hadamard boundary integral (solver traces), the volume form
(exact derivative of the discrete functional) and centered finite
differences.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import ball_spectrum
from .dirichlet_solver import (EigenResult, Mesh, TorsionResult, assemble, boundary_gradient_trace,
                               build_mesh, extrapolate, solve_domain, solve_eigs, solve_torsion,
                               velocity_derivatives)
from .geometry import Domain2D, FourierProfile, make_domain, unit_disk

FD_STEPS = (0.01, 0.02, 0.04)
DEGENERACY_ABS = 1e-6


class DegeneracyError(ValueError):
    """Requested eigenvalue is not isolated; use the cluster operation."""


# ---------------------------------------------------------------------------
# Functionals


@dataclass(frozen=True)
class Functional:
    """One of: 'lambda:k', 'cluster:k-l', 'T', 'Tinv', 'volume'."""

    kind: str
    lo: int = 0
    hi: int = 0

    @classmethod
    def parse(cls, s: str) -> "Functional":
        s = s.strip()
        if s in ("T", "Tinv", "volume"):
            return cls(s)
        if s.startswith("lambda"):
            k = int(s.split(":")[1] if ":" in s else s[6:])
            return cls("lambda", k, k)
        if s.startswith("cluster"):
            lo, hi = (int(v) for v in s.split(":")[1].split("-"))
            return cls("cluster", lo, hi)
        raise ValueError(f"unknown functional {s!r}")

    @property
    def name(self) -> str:
        if self.kind == "lambda":
            return f"lambda:{self.lo}"
        if self.kind == "cluster":
            return f"cluster:{self.lo}-{self.hi}"
        return self.kind

    @property
    def K(self) -> int:
        return self.hi


def functional_value(f: Functional, lambdas, T: float, area: float) -> float:
    if f.kind == "lambda":
        return float(lambdas[f.lo - 1])
    if f.kind == "cluster":
        return float(np.sum(lambdas[f.lo - 1:f.hi]))
    if f.kind == "T":
        return T
    if f.kind == "Tinv":
        return 1.0 / T
    return area


def direction_id(direction: FourierProfile) -> str:
    parts = [f"a{m}={v:.6g}" for m, v in enumerate(direction.a) if v]
    parts += [f"b{m}={v:.6g}" for m, v in enumerate(direction.b, start=1) if v]
    return ",".join(parts) or "zero"


# ---------------------------------------------------------------------------
# Boundary data


@dataclass
class BoundaryField:
    theta: np.ndarray
    normal_component: np.ndarray
    tangential_component: np.ndarray
    curvature: np.ndarray
    second_fundamental: np.ndarray   # b(zeta_tau, zeta_tau) = H zeta_tau^2 for curves
    surface_grad_normal: np.ndarray
    line_element: np.ndarray


def boundary_field(domain, direction: FourierProfile, theta) -> BoundaryField:
    th = np.asarray(theta, dtype=float)
    R = domain.radius(th)
    R1 = domain.dradius(th, 1)
    R2 = domain.dradius(th, 2)
    V = direction(th)
    V1 = direction(th, 1)
    s = np.sqrt(R * R + R1 * R1)
    zn = V * R / s
    zt = V * R1 / s
    H = (R * R + 2 * R1 * R1 - R * R2) / s ** 3
    # d/dtheta of V R / s
    ds = (R * R1 + R1 * R2) / s
    dzn = (V1 * R + V * R1) / s - V * R * ds / s ** 2
    return BoundaryField(th, zn, zt, H, H * zt * zt, dzn / s, s)


def signed_normal_derivative(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """d_nu u at boundary nodes with sign (outward normal), second order."""
    th = mesh.thetas
    R = mesh.domain.radius(th)
    rho = mesh.rho
    u1 = u[mesh.ring(mesh.n_r - 1)]
    u2 = u[mesh.ring(mesh.n_r - 2)]
    h1 = (1.0 - rho[-2]) * R
    h2 = (1.0 - rho[-3]) * R
    dr = -(u1 * h2 ** 2 - u2 * h1 ** 2) / (h1 * h2 * (h2 - h1))
    dR = mesh.domain.dradius(th, 1) if hasattr(mesh.domain, "profile") else \
        (mesh.domain.radius(th + 1e-6) - mesh.domain.radius(th - 1e-6)) / 2e-6
    return dr * np.sqrt(R ** 2 + dR ** 2) / R


def _boundary_integral(mesh: Mesh, values: np.ndarray, direction: FourierProfile) -> float:
    """int_{dOmega} values (zeta.nu) dsigma = int values V R dtheta (trapezoid)."""
    th = mesh.thetas
    w = direction(th) * mesh.domain.radius(th)
    return float(np.sum(values * w) * 2 * np.pi / mesh.n_theta)


# ---------------------------------------------------------------------------
# Velocity fields on the mesh


def cutoff(rho):
    """phi = 0 on [0, 1/4], 1 on [1/2, inf), C^1 smoothstep in between."""
    s = np.clip((np.asarray(rho, dtype=float) - 0.25) / 0.25, 0.0, 1.0)
    return s * s * (3 - 2 * s)


def mesh_velocity(mesh: Mesh, direction: FourierProfile, extension: str = "mesh") -> np.ndarray:
    """Nodal values of zeta.

    'mesh': rho V e_r, the node motion of the finite-difference family;
    'cutoff': phi(rho) V e_r, radial field equal to V e_r near the boundary.
    """
    V = direction(mesh.thetas)
    rho = mesh.rho if extension == "mesh" else cutoff(mesh.rho)
    if extension not in ("mesh", "cutoff"):
        raise ValueError("extension must be 'mesh' or 'cutoff'")
    mag = np.outer(rho, V).ravel()
    z = np.zeros((mesh.n_nodes, 2))
    c, s = np.cos(mesh.thetas), np.sin(mesh.thetas)
    z[1:, 0] = mag * np.tile(c, mesh.n_r)
    z[1:, 1] = mag * np.tile(s, mesh.n_r)
    return z


# ---------------------------------------------------------------------------
# First derivatives on a single mesh


def _check_isolated(lams, err, lo, hi, what):
    tol = lambda i: max(DEGENERACY_ABS, 10 * (err[i] if err is not None else 0.0))
    if lo > 1 and lams[lo - 1] - lams[lo - 2] <= tol(lo - 1):
        raise DegeneracyError(f"{what}: lambda_{lo} is degenerate with lambda_{lo - 1}")
    if hi < len(lams) and lams[hi] - lams[hi - 1] <= tol(hi - 1):
        raise DegeneracyError(f"{what}: lambda_{hi} is degenerate with lambda_{hi + 1}")


def boundary_derivative(eig: EigenResult | None, tor: TorsionResult | None, f: Functional,
                        direction: FourierProfile, check: bool = True) -> float:
    """Hadamard boundary form of dJ/dt on one mesh."""
    if f.kind in ("lambda", "cluster"):
        if check:
            _check_isolated(eig.lambdas, eig.err_est, f.lo, f.hi, f.name)
        g = sum(boundary_gradient_trace(eig.mesh, eig.modes[:, i]) ** 2
                for i in range(f.lo - 1, f.hi))
        return -_boundary_integral(eig.mesh, g, direction)
    if f.kind == "volume":
        mesh = (eig or tor).mesh
        return _boundary_integral(mesh, np.ones(mesh.n_theta), direction)
    dT = _boundary_integral(tor.mesh, boundary_gradient_trace(tor.mesh, tor.w) ** 2, direction)
    return dT if f.kind == "T" else -dT / tor.T ** 2


def volume_derivative(eig: EigenResult | None, tor: TorsionResult | None, f: Functional,
                      direction: FourierProfile, extension: str = "mesh",
                      check: bool = True) -> float:
    """Volume form of dJ/dt: exact derivative of the discrete functional
    when ``extension='mesh'``."""
    mesh = (eig or tor).mesh
    dK, dM = velocity_derivatives(mesh, mesh_velocity(mesh, direction, extension))
    if f.kind in ("lambda", "cluster"):
        if check:
            _check_isolated(eig.lambdas, eig.err_est, f.lo, f.hi, f.name)
        tot = 0.0
        for i in range(f.lo - 1, f.hi):
            u = eig.modes[:, i]
            tot += u @ (dK @ u) - eig.lambdas[i] * (u @ (dM @ u))
        return float(tot)
    if f.kind == "volume":
        return float(np.ones(mesh.n_nodes) @ (dM @ np.ones(mesh.n_nodes)))
    w = tor.w
    dT = float(2 * w @ (dM @ np.ones(mesh.n_nodes)) - w @ (dK @ w))
    return dT if f.kind == "T" else -dT / tor.T ** 2


# ---------------------------------------------------------------------------
# Reports


@dataclass
class DerivativeReport:
    functional: str
    direction_id: str
    first: float                   # boundary (Hadamard) form, extrapolated
    first_volume: float            # volume form, extrapolated
    first_err: float
    fd_first: float | None = None
    fd_order: float | None = None
    fd_accepted: bool | None = None
    second: float | None = None
    fd_second: float | None = None
    steps: tuple = FD_STEPS

    def records(self) -> list[dict]:
        base = dict(functional=self.functional, direction_id=self.direction_id)
        out = [dict(base, order=1, value=self.first, volume_form=self.first_volume,
                    err_est=self.first_err, fd=self.fd_first, fd_order=self.fd_order,
                    fd_accepted=self.fd_accepted, steps=list(self.steps))]
        if self.second is not None or self.fd_second is not None:
            out.append(dict(base, order=2, value=self.second, fd=self.fd_second,
                            steps=list(self.steps)))
        return out

    def rel_fd_error(self, form: str = "boundary") -> float:
        val = self.first if form == "boundary" else self.first_volume
        return abs(val - self.fd_first) / max(abs(self.fd_first), 1e-300)


@dataclass
class FDResult:
    value: float
    order: float
    accepted: bool
    raw: tuple


def richardson_fd(evaluate, steps=FD_STEPS, kind: str = "first", noise: float = 1e-9) -> FDResult:
    """Centered differences at the given steps, Richardson-combined.

    ``evaluate(t)`` returns the functional value at parameter t.  The
    observed order uses all three steps; if the successive differences are
    below ``noise`` (relative) the estimate is taken as converged.
    """
    steps = tuple(sorted(steps))
    f0 = evaluate(0.0) if kind == "second" else None
    D = []
    for t in steps:
        fp, fm = evaluate(t), evaluate(-t)
        D.append((fp - fm) / (2 * t) if kind == "first" else (fp - 2 * f0 + fm) / (t * t))
    D = np.asarray(D)
    d1 = abs(D[1] - D[0])
    d2 = abs(D[2] - D[1])
    scale = max(abs(D[0]), 1.0)
    if d1 <= noise * scale and d2 <= noise * scale:
        order, accepted = math.inf, True
    else:
        order = math.log2(d2 / d1) if d1 > 0 and d2 > 0 else math.nan
        accepted = bool(order >= 1.5)
    value = (4 * D[0] - D[1]) / 3.0
    return FDResult(float(value), float(order), accepted, tuple(D.tolist()))


def _solve_fields(domain, K, level, theta0=0.0):
    mesh = build_mesh(domain, level, theta0)
    return solve_eigs(mesh, K), solve_torsion(mesh)


def first_derivatives(domain: Domain2D, direction: FourierProfile, functionals,
                      levels=(2, 3), fd: bool = True, steps=FD_STEPS,
                      check: bool = True) -> list[DerivativeReport]:
    """First derivatives of each functional along the radial velocity.

    Boundary and volume forms are evaluated on both levels and
    Richardson-extrapolated; FD uses extrapolated functional values of
    the family R + tV (same pole).
    """
    fs = [Functional.parse(f) if isinstance(f, str) else f for f in functionals]
    K = max([f.K for f in fs] + [1]) + 1
    per_level = []
    for lev in levels:
        eig, tor = _solve_fields(domain, K, lev)
        if len(per_level) == 0:
            coarse = eig.lambdas
        else:
            eig.err_est = np.abs(eig.lambdas - coarse)
        per_level.append([(boundary_derivative(eig, tor, f, direction, check=False),
                           volume_derivative(eig, tor, f, direction)) for f in fs])
        if check and len(per_level) == len(levels):
            for f in fs:
                if f.kind in ("lambda", "cluster"):
                    _check_isolated(eig.lambdas, eig.err_est, f.lo, f.hi, f.name)
        eig.mesh._cache.clear()
    reports = []
    fd_vals = None
    if fd:
        cache = {}

        def values(t):
            if t not in cache:
                d = domain.perturbed(direction, t)
                s = solve_domain(d, K, levels, keep_fields=False)
                cache[t] = [functional_value(f, s.lambdas, s.T, d.area()) for f in fs]
            return cache[t]
        fd_vals = [richardson_fd(lambda t, i=i: values(t)[i], steps) for i in range(len(fs))]
    did = direction_id(direction)
    for i, f in enumerate(fs):
        (b0, v0), (b1, v1) = per_level[0][i], per_level[-1][i]
        eb = extrapolate(b0, b1)
        ev = extrapolate(v0, v1)
        rep = DerivativeReport(f.name, did, float(eb.value), float(ev.value),
                               float(max(eb.err_est, ev.err_est)), steps=tuple(steps))
        if fd_vals is not None:
            rep.fd_first = fd_vals[i].value
            rep.fd_order = fd_vals[i].order
            rep.fd_accepted = fd_vals[i].accepted
        reports.append(rep)
    return reports


def d_lambda_simple(domain, k: int, direction: FourierProfile, levels=(2, 3)) -> float:
    """-int |d_nu u_k|^2 (zeta.nu) for a simple eigenvalue (boundary form)."""
    return first_derivatives(domain, direction, [f"lambda:{k}"], levels, fd=False)[0].first


def d_cluster_sum(domain, cluster, direction: FourierProfile, levels=(2, 3)) -> float:
    k, l = cluster
    return first_derivatives(domain, direction, [f"cluster:{k}-{l}"], levels, fd=False)[0].first


def d_torsion(domain, direction: FourierProfile, levels=(2, 3)) -> tuple[float, float]:
    """(volume form, boundary form) of dT/dt."""
    r = first_derivatives(domain, direction, ["T"], levels, fd=False)[0]
    return r.first_volume, r.first


# ---------------------------------------------------------------------------
# Double eigenvalues at the ball


def double_eigenvalue_directional(eig: EigenResult, pair, direction: FourierProfile):
    """Directional derivatives of a double eigenvalue: eigenvalues of
    -int (d_nu u_i d_nu u_j)(zeta.nu) over the pair.  Returns (min, max)."""
    k, l = pair
    if l != k + 1:
        raise ValueError("pair must be two consecutive indices")
    g = [signed_normal_derivative(eig.mesh, eig.modes[:, i]) for i in (k - 1, k)]
    A = np.array([[-_boundary_integral(eig.mesh, g[i] * g[j], direction) for j in range(2)]
                  for i in range(2)])
    if abs(A[0, 1] - A[1, 0]) > 1e-12 * max(1.0, np.abs(A).max()):
        raise ArithmeticError("directional matrix not symmetric")
    ev = np.linalg.eigvalsh(A)
    return float(ev[0]), float(ev[1])


# ---------------------------------------------------------------------------
# Second derivative at the ball


@dataclass
class SecondVariation:
    mu2: float          # sum over the cluster of mu_i''(0) for the raw family 1 + t h
    volume2: float      # d^2/dt^2 |B_{th}| = int h^2
    c_nk: float         # constant sum |grad u_i|^2 on the circle
    total: float        # mu2 + c_nk * volume2
    multipliers: np.ndarray
    first_matrix: np.ndarray


def _disk_cluster(level: int, cluster):
    k, l = cluster
    mesh = build_mesh(unit_disk(), level)
    eig = solve_eigs(mesh, l + 1)
    return mesh, eig


def d2_lambda_at_ball(cluster, direction: FourierProfile, level: int = 3,
                      eig: EigenResult | None = None) -> SecondVariation:
    """Second derivative of the cluster sum along r < 1 + t h at t = 0.

    Each u_i' is taken orthogonal to the cluster eigenspace; it solves the
    Helmholtz problem with Dirichlet data -h d_nu u_i and a right-hand side
    in the eigenspace fixed by a Lagrange multiplier (bordered system).
    The sum over the cluster is independent of the eigenbasis.
    """
    k, l = cluster
    spec = ball_spectrum.enumerate_spectrum(2, l + 1)
    if spec.cluster_of(k) != (k, l):
        raise ValueError(f"[{k},{l}] is not a cluster of the disk spectrum")
    if eig is None:
        mesh, eig = _disk_cluster(level, cluster)
    mesh = eig.mesh
    Kf, Mf = assemble(mesh)
    I = mesh.interior
    B = mesh.boundary_nodes
    idx = list(range(k - 1, l))
    lam = float(np.mean(eig.lambdas[idx]))
    U = eig.modes[:, idx]
    A = (Kf - lam * Mf).tocsr()
    Aii = A[I][:, I]
    Aib = A[I][:, B]
    MU = (Mf @ U)
    m = len(idx)
    big = sp.bmat([[Aii, sp.csr_matrix(MU[I])], [sp.csr_matrix(MU[I].T), None]]).tocsc()
    lu = spla.splu(big)
    h = direction(mesh.thetas)
    gnorm = [signed_normal_derivative(mesh, U[:, i]) for i in range(m)]
    first = np.array([[-_boundary_integral_unit(mesh, h * gnorm[i] * gnorm[j]) for j in range(m)]
                      for i in range(m)])
    mu2 = 0.0
    mults = np.zeros((m, m))
    for i in range(m):
        g = -h * gnorm[i]
        rhs = np.concatenate([-(Aib @ g), -(MU[B].T @ g)])
        sol = lu.solve(rhs)
        v = np.zeros(mesh.n_nodes)
        v[I] = sol[:len(I)]
        v[B] = g
        mults[i] = sol[len(I):]
        q = float(v @ (A @ v))
        bterm = _boundary_integral_unit(mesh, gnorm[i] ** 2 * h * h)
        mu2 += 2 * q + bterm
    volume2 = float(np.pi * (2 * direction.a[0] ** 2 + np.sum(direction.a[1:] ** 2 + direction.b ** 2)))
    c = ball_spectrum.cluster_boundary_gradient_sq(2, (k, l), spec)
    return SecondVariation(mu2, volume2, c, mu2 + c * volume2, mults, first)


def _boundary_integral_unit(mesh: Mesh, values) -> float:
    return float(np.sum(values) * 2 * np.pi / mesh.n_theta)


def disk_d2_lambda1_exact(m: int) -> float:
    """Closed form of lambda_1'' along r < 1 + t cos(m theta), m >= 1.

    u' = -gamma J_m(j r)/J_m(j) cos(m theta) with gamma = d_nu u_1, which
    gives lambda (1 + 2 j J_m'(j)/J_m(j)).
    """
    j = ball_spectrum.bessel_zero(0.0, 1)
    lam = j * j
    return lam * (1.0 + 2.0 * j * ball_spectrum.bessel_jp(float(m), j)
                  / ball_spectrum.bessel_j(float(m), j))


# ---------------------------------------------------------------------------
# Families


def perturbation_family(base: FourierProfile, eps_list) -> list[Domain2D]:
    """Volume-normalized, centered domains from eps * base."""
    return [make_domain(base * float(e)) for e in eps_list]


def reports_to_json(reports, path, meta: dict | None = None) -> None:
    recs = [r for rep in reports for r in rep.records()]
    recs.sort(key=lambda r: (r["functional"], r["direction_id"], r["order"]))
    payload = dict(meta or {}, records=recs)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
