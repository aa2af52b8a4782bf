"""P1 finite elements for the Dirichlet Laplacian on star-shaped planar domains.

Meshes are structured polar grids mapped onto the domain: a center node at
the pole plus N_r rings of N_theta nodes, ring i sitting at fraction
rho(i/N_r) of the boundary radius along each ray.  All quadrature is exact
for P1 on straight triangles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import StarDomain

MAX_LEVEL = 8
MAX_NODES = 3_000_000
DENSE_LIMIT = 3000


class SolverError(ArithmeticError):
    """Numeric failure inside a solve (non-convergence, bad conditioning)."""


def grading(s):
    """Radial node placement: uniform spacing 1.5/N_r at the pole, 0.5/N_r at the rim."""
    s = np.asarray(s, dtype=float)
    return s + 0.5 * s * (1.0 - s)


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    refinement_level: int
    n_r: int
    n_theta: int
    thetas: np.ndarray
    rho: np.ndarray
    domain: StarDomain
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def interior(self) -> np.ndarray:
        if "interior" not in self._cache:
            mask = np.ones(self.n_nodes, dtype=bool)
            mask[self.boundary_nodes] = False
            self._cache["interior"] = np.nonzero(mask)[0]
        return self._cache["interior"]

    def ring(self, i: int) -> np.ndarray:
        """Node indices of ring i (1..n_r), ordered by angle."""
        return 1 + (i - 1) * self.n_theta + np.arange(self.n_theta)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def polygon_inside(self, samples: int = 4) -> bool:
        """True if every boundary chord lies inside the domain (Omega_h subset of Omega)."""
        th = self.thetas
        dth = 2 * np.pi / self.n_theta
        R = self.domain.radius(th)
        R_next = np.roll(R, -1)
        for q in range(1, samples):
            a = q / samples * dth
            # polar radius of the chord between consecutive boundary nodes at angle th + a
            chord = R * R_next * math.sin(dth) / (R * math.sin(a) + R_next * math.sin(dth - a))
            if np.any(self.domain.radius(th + a) < chord * (1 - 1e-14)):
                return False
        return True


def build_mesh(domain: StarDomain, level: int, theta0: float = 0.0,
               base_r: int = 16, base_theta: int = 64) -> Mesh:
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in 0..{MAX_LEVEL}")
    n_r = base_r * 2 ** level
    n_t = base_theta * 2 ** level
    if n_r * n_t + 1 > MAX_NODES:
        raise MemoryError(f"mesh with {n_r * n_t + 1} nodes exceeds cap {MAX_NODES}")
    th = theta0 + 2 * np.pi * np.arange(n_t) / n_t
    rho = grading(np.arange(1, n_r + 1) / n_r)
    rho[-1] = 1.0
    R = domain.radius(th)
    rr = np.outer(rho, R)
    pole = np.asarray(domain.pole, dtype=float)
    x = pole[0] + rr * np.cos(th)
    y = pole[1] + rr * np.sin(th)
    nodes = np.empty((1 + n_r * n_t, 2))
    nodes[0] = pole
    nodes[1:, 0] = x.ravel()
    nodes[1:, 1] = y.ravel()

    j = np.arange(n_t)
    jn = (j + 1) % n_t
    tris = [np.stack([np.zeros(n_t, dtype=int), 1 + j, 1 + jn], axis=1)]
    i = np.arange(n_r - 1)[:, None]
    a = 1 + i * n_t + j
    b = 1 + i * n_t + jn
    c = 1 + (i + 1) * n_t + j
    d = 1 + (i + 1) * n_t + jn
    tris.append(np.stack([a, c, d], axis=-1).reshape(-1, 3))
    tris.append(np.stack([a, d, b], axis=-1).reshape(-1, 3))
    triangles = np.concatenate(tris).astype(np.int64)
    mesh = Mesh(nodes, triangles, 1 + (n_r - 1) * n_t + j, level, n_r, n_t, th, rho, domain)
    if np.any(mesh.triangle_areas() <= 0):
        raise ValueError("mesh has non-positive triangle areas; domain not star-shaped enough")
    return mesh


# ---------------------------------------------------------------------------
# Assembly


def _element_geometry(mesh: Mesh, nodes: np.ndarray | None = None):
    p = (mesh.nodes if nodes is None else nodes)[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    # gradients of barycentric coordinates: grad phi_i = (y_j - y_k, x_k - x_j) / (2A)
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (bx[:, 0] * by[:, 1] - bx[:, 1] * by[:, 0])
    gx = bx / (2 * area[:, None])
    gy = by / (2 * area[:, None])
    return area, gx, gy


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble(mesh: Mesh):
    """Full stiffness and mass matrices (all nodes)."""
    if "KM" not in mesh._cache:
        area, gx, gy = _element_geometry(mesh)
        Ke = area[:, None, None] * (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :])
        Me = area[:, None, None] * _MASS_REF[None]
        mesh._cache["KM"] = (_scatter(mesh, Ke), _scatter(mesh, Me))
    return mesh._cache["KM"]


def _interior_factor(mesh: Mesh):
    if "lu" not in mesh._cache:
        K, _ = assemble(mesh)
        I = mesh.interior
        Kii = K[I][:, I].tocsc()
        try:
            mesh._cache["lu"] = spla.splu(Kii, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"stiffness factorization failed: {exc}") from exc
    return mesh._cache["lu"]


def velocity_derivatives(mesh: Mesh, zeta: np.ndarray):
    """Exact t-derivatives of K and M when nodes move as x + t zeta."""
    area, gx, gy = _element_geometry(mesh)
    z = zeta[mesh.triangles]
    # Dzeta on each element: d zeta_a / d x_b = sum_i zeta_a(i) grad_b phi_i
    dxx = np.sum(z[..., 0] * gx, axis=1)
    dxy = np.sum(z[..., 0] * gy, axis=1)
    dyx = np.sum(z[..., 1] * gx, axis=1)
    dyy = np.sum(z[..., 1] * gy, axis=1)
    div = dxx + dyy
    sxx, syy = 2 * dxx, 2 * dyy
    sxy = dxy + dyx
    G = gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]
    S = (sxx[:, None, None] * gx[:, :, None] * gx[:, None, :]
         + syy[:, None, None] * gy[:, :, None] * gy[:, None, :]
         + sxy[:, None, None] * (gx[:, :, None] * gy[:, None, :] + gy[:, :, None] * gx[:, None, :]))
    dK = area[:, None, None] * (div[:, None, None] * G - S)
    dM = (area * div)[:, None, None] * _MASS_REF[None]
    return _scatter(mesh, dK), _scatter(mesh, dM)


# ---------------------------------------------------------------------------
# Results


@dataclass
class EigenResult:
    lambdas: np.ndarray
    modes: np.ndarray              # (n_nodes, K), M-orthonormal, zero on boundary
    boundary_grad: np.ndarray      # (K, n_theta) samples of |d_nu u|
    err_est: np.ndarray | None
    mesh: Mesh | None = None
    upper_bound_certified: bool = False

    def rayleigh(self) -> np.ndarray:
        K, M = assemble(self.mesh)
        U = self.modes
        return np.einsum("ik,ik->k", U, K @ U) / np.einsum("ik,ik->k", U, M @ U)


@dataclass
class TorsionResult:
    T: float
    w_max: float
    w: np.ndarray | None
    lower_bound_certified: bool
    energy_T: float = math.nan
    err_est: float | None = None
    mesh: Mesh | None = None


def solve_eigs(mesh: Mesh, K: int, dense: bool | None = None) -> EigenResult:
    """K smallest Dirichlet eigenpairs by shift-invert Lanczos (shift 0)."""
    if not 1 <= K <= 50:
        raise ValueError("K must be in 1..50")
    Kf, Mf = assemble(mesh)
    I = mesh.interior
    if K >= len(I) // 2:
        raise ValueError("K too large for this mesh")
    Kii = Kf[I][:, I]
    Mii = Mf[I][:, I]
    if dense is None:
        dense = False
    if dense:
        if len(I) > 4 * DENSE_LIMIT:
            raise ValueError("dense solve limited to small meshes")
        vals, vecs = scipy.linalg.eigh(Kii.toarray(), Mii.toarray(), subset_by_index=[0, K - 1])
    else:
        lu = _interior_factor(mesh)
        op = spla.LinearOperator(Kii.shape, matvec=lu.solve, dtype=float)
        v0 = np.ones(len(I))  # fixed start vector for determinism
        ncv = min(len(I) - 1, max(2 * K + 20, 40))
        try:
            vals, vecs = spla.eigsh(Kii.tocsc(), k=K, M=Mii.tocsc(), sigma=0.0, which="LM",
                                    OPinv=op, v0=v0, ncv=ncv, tol=1e-13, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    if vals[0] <= 0:
        raise SolverError("non-positive first eigenvalue")
    # M-orthonormalize (full reorthogonalization within returned block)
    G = vecs.T @ (Mii @ vecs)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    vecs = np.linalg.solve(L, vecs.T).T
    # Rayleigh-Ritz on the block to clean up near-degenerate pairs
    A = vecs.T @ (Kii @ vecs)
    vals, Q = np.linalg.eigh(0.5 * (A + A.T))
    vecs = vecs @ Q
    for k in range(K):
        s = vecs[:, k]
        idx = np.argmax(np.abs(s))
        if s[idx] < 0:
            vecs[:, k] = -s
    U = np.zeros((mesh.n_nodes, K))
    U[I] = vecs
    grads = np.stack([boundary_gradient_trace(mesh, U[:, k]) for k in range(K)])
    return EigenResult(vals, U, grads, None, mesh, mesh.polygon_inside())


def load_vector(mesh: Mesh) -> np.ndarray:
    _, M = assemble(mesh)
    return np.asarray(M @ np.ones(mesh.n_nodes)).ravel()


def solve_torsion(mesh: Mesh, rtol: float = 1e-13) -> TorsionResult:
    """Torsion function and rigidity.

    Conjugate gradients preconditioned by the exact interior factorization
    (already built for the eigensolver), so it converges in a step or two;
    the CG loop serves as residual control.
    """
    Kf, _ = assemble(mesh)
    I = mesh.interior
    Kii = Kf[I][:, I]
    b = load_vector(mesh)[I]
    lu = _interior_factor(mesh)
    pre = spla.LinearOperator(Kii.shape, matvec=lu.solve, dtype=float)
    wi, info = spla.cg(Kii, b, M=pre, rtol=rtol, atol=0.0, maxiter=50)
    if info != 0:
        raise SolverError(f"CG did not converge (info={info})")
    w = np.zeros(mesh.n_nodes)
    w[I] = wi
    T = float(b @ wi)
    energy = float(2 * b @ wi - wi @ (Kii @ wi))
    return TorsionResult(T, float(w.max()), w, mesh.polygon_inside(), energy, None, mesh)


# ---------------------------------------------------------------------------
# Boundary traces


def boundary_gradient_trace(mesh: Mesh, u: np.ndarray, layers: int = 3) -> np.ndarray:
    """|d_nu u| at every boundary node from finite differences along the ray.

    ``layers=2`` is the one-sided difference over the last two node layers;
    ``layers=3`` fits a quadratic through the last three (second order).
    """
    th = mesh.thetas
    R = mesh.domain.radius(th)
    rho = mesh.rho
    u1 = u[mesh.ring(mesh.n_r - 1)]
    h1 = (1.0 - rho[-2]) * R
    if layers == 2:
        dr = -u1 / h1
    elif layers == 3:
        u2 = u[mesh.ring(mesh.n_r - 2)]
        h2 = (1.0 - rho[-3]) * R
        # quadratic through (0, 0), (-h1, u1), (-h2, u2): slope at 0
        dr = -(u1 * h2 ** 2 - u2 * h1 ** 2) / (h1 * h2 * (h2 - h1))
    else:
        raise ValueError("layers must be 2 or 3")
    dR = _dradius(mesh.domain, th)
    # nu . e_r = R / sqrt(R^2 + R'^2)
    return np.abs(dr) * np.sqrt(R ** 2 + dR ** 2) / R


def _dradius(domain, th, h: float = 1e-6):
    try:
        return domain.dradius(th)
    except (NotImplementedError, AttributeError):
        return (domain.radius(th + h) - domain.radius(th - h)) / (2 * h)


# ---------------------------------------------------------------------------
# Extrapolation


@dataclass(frozen=True)
class Extrapolated:
    value: np.ndarray
    err_est: np.ndarray
    monotone: bool
    coarse: np.ndarray
    fine: np.ndarray


def extrapolate(coarse, fine, order: int = 2, direction: int | None = None) -> Extrapolated:
    """Richardson extrapolation for mesh-size ratio 2 and O(h^order) error.

    ``direction`` = +1 if values should decrease under refinement (upper
    bounds), -1 if they should increase; non-monotone pairs are flagged.
    """
    c = np.asarray(coarse, dtype=float)
    f = np.asarray(fine, dtype=float)
    r = 2.0 ** order
    val = (r * f - c) / (r - 1)
    err = np.abs(f - c)
    mono = True
    if direction is not None:
        mono = bool(np.all(direction * (c - f) >= -1e-12 * np.abs(f)))
    return Extrapolated(val, err, mono, c, f)


@dataclass
class DomainSolution:
    """Extrapolated spectrum and torsion of one domain over two levels."""

    lambdas: np.ndarray
    lambda_err: np.ndarray
    T: float
    T_err: float
    w_max: float
    levels: tuple
    raw_lambdas: tuple
    raw_T: tuple
    monotone: bool
    eig: EigenResult
    torsion: TorsionResult

    def summary(self) -> dict:
        return dict(lambdas=self.lambdas.tolist(), lambda_err=self.lambda_err.tolist(),
                    T=self.T, T_err=self.T_err, levels=list(self.levels),
                    monotone=self.monotone)


def solve_domain(domain: StarDomain, K: int = 6, levels=(2, 3), theta0: float = 0.0,
                 keep_fields: bool = True) -> DomainSolution:
    """Solve on two consecutive levels and Richardson-extrapolate.

    The returned ``eig`` and ``torsion`` carry the fields of the fine level.
    """
    lo, hi = levels
    if hi != lo + 1:
        raise ValueError("extrapolation needs consecutive levels")
    out = []
    for lev in levels:
        mesh = build_mesh(domain, lev, theta0)
        e = solve_eigs(mesh, K)
        t = solve_torsion(mesh)
        out.append((e, t))
        if lev != hi:
            mesh._cache.clear()
    (e0, t0), (e1, t1) = out
    ex_l = extrapolate(e0.lambdas, e1.lambdas, direction=+1)
    ex_t = extrapolate(t0.T, t1.T, direction=-1)
    e1.err_est = ex_l.err_est
    t1.err_est = float(ex_t.err_est)
    if not keep_fields:
        e1.mesh._cache.clear()
    return DomainSolution(ex_l.value, ex_l.err_est, float(ex_t.value), float(ex_t.err_est),
                          max(t0.w_max, t1.w_max), tuple(levels),
                          (e0.lambdas, e1.lambdas), (t0.T, t1.T),
                          ex_l.monotone and ex_t.monotone, e1, t1)


# ---------------------------------------------------------------------------
# Export


def export_field(mesh: Mesh, values: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for (x, y), v in zip(mesh.nodes, values):
            w.writerow([f"{x:.17g}", f"{y:.17g}", f"{v:.17g}"])


def export_spectrum(lambdas, err_est, path) -> None:
    err = np.full(len(lambdas), np.nan) if err_est is None else err_est
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "err_est"])
        for k, (l, e) in enumerate(zip(lambdas, err), start=1):
            w.writerow([k, f"{l:.17g}", f"{e:.17g}"])
