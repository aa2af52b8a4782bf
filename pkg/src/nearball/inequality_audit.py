"""Audits of the explicit inequalities near the ball, and normalized ratios
for the statements whose constants are implicit.

Every explicit check is stored as ``lhs <= rhs``. Its error budget is
obtained by perturbing each input by its error estimate and summing the
resulting changes of ``rhs - lhs``. The inputs are extrapolated FEM values,
discrete sup statistics and quadrature areas. A check passes when
``rhs - lhs >= -budget``. Ball quantities are exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import reporting
from .ball_spectrum import (ball_torsion, ball_volume, enumerate_spectrum, li_yau_constant,
                            simple_indices, spectral_gap)
from .dirichlet_solver import build_mesh, extrapolate, solve_eigs, solve_torsion
from .geometry import (DiskAbout, Domain2D, FourierProfile, FraenkelResult, IntersectionDomain,
                       StarDomain, effective_profile, fraenkel_asymmetry, h_half_sq, make_domain,
                       outside_ball_area, sym_diff_with_ball, unit_disk)
from .spectral_sums import heat_trace_domain

N_DIM = 2
E8 = math.exp(1.0 / (8 * math.pi))
E4 = math.exp(1.0 / (4 * math.pi))
EPS_GRID = tuple(0.01 * 2.0 ** j for j in range(6))
FLOOR_FACTOR = 10.0


# ---------------------------------------------------------------------------
# Catalogue

@dataclass(frozen=True)
class Inequality:
    group: str
    explicit: bool
    statement: str


CATALOGUE = {
    "growth-lower": Inequality("growth", True, "a_n k^(2/n) <= lambda_k"),
    "growth-upper": Inequality("growth", True, "lambda_k <= (1+4/n) lambda_1 k^(2/n)"),
    "polya-torsion": Inequality("growth", True, "lambda_1 T <= omega_n"),
    "supnorm-w": Inequality("supnorm", True, "sup w <= 1/(2n)"),
    "supnorm-u": Inequality("supnorm", True, "sup|u_k| <= e^(1/(8pi)) lambda_k^(n/4)"),
    "supnorm-uw": Inequality("supnorm", True, "|u_k| <= e^(1/(8pi)) lambda_k^(1+n/4) w"),
    "nested": Inequality("nested", True,
                         "1/lambda_k(out) - 1/lambda_k(in) <= e^(1/(4pi)) k lambda_k(out)^(n/2) (T(out)-T(in))"),
    "auxiliary": Inequality("auxiliary", True,
                            "|1/lambda_k - 1/lambda_k(B)| <= (1+4/n)^(n/2) e^(1/(4pi)) k^2 lambda_1^(n/2)"
                            " [T(B)-T + (1/n+1/n^2)|Omega sym B|]"),
    "torsion-intersection": Inequality("torsion-intersection", True,
                                       "T(Omega) - T(Omega cap B) <= (1/n+1/n^2)|Omega minus B|"),
    "kohler-jobin": Inequality("kohler-jobin", True, "T(B) lambda_1(B)^((n+2)/2) <= T lambda_1^((n+2)/2)"),
    "kohler-jobin-chain": Inequality("kohler-jobin", True,
                                     "1/T - 1/T(B) <= (n+2)/2 lambda_1(B)^(-(n+2)/2) T(B)^(-1)"
                                     " lambda_1^(n/2) (lambda_1 - lambda_1(B))"),
    "faber-krahn": Inequality("quantitative-fk", True, "lambda_1(B) <= lambda_1"),
    "saint-venant": Inequality("quantitative-fk", True, "T <= T(B)"),
    "qfk-lambda": Inequality("quantitative-fk", False, "(lambda_1 - lambda_1(B)) / F^2"),
    "qfk-torsion": Inequality("quantitative-fk", False, "(1/T - 1/T(B)) / F^2"),
    "thm-sqrt": Inequality("main-theorems", False,
                           "|lambda_k - lambda_k(B)| / [k^(2+4/n) lambda_1^(1/2) |Omega|^(1/2) (1/T-1/T(B))^(1/2)]"),
    "thm-linear": Inequality("main-theorems", False,
                             "|lambda_k - lambda_k(B)| / [k^(4+8/n) g_n(k)^(-1) |Omega| (1/T-1/T(B))]"),
    "thm-cluster": Inequality("main-theorems", False,
                              "|sum_{k..l} (lambda_i - lambda_i(B))| / [k^(6+10/n) g_n(k)^(-1) |Omega| (1/T-1/T(B))]"),
    "fuglede-torsion": Inequality("fuglede", True, "T(B_h) <= T(B) - |h|_{H^1/2}^2 / (32 n^2)"),
    "fuglede-lambda": Inequality("fuglede", False, "|lambda_k(B_h) - lambda_k(B)| / |h|_{H^1/2}^2"),
    "Q-simple": Inequality("Q", False, "|Q - 1/n^2| / (k^(2/n) |delta|)"),
    "Q-cluster": Inequality("Q", False, "|Q - 1/n^2| / (k^(1+2/n) |delta|)"),
    "heat-trace": Inequality("heat-trace", False,
                             "|Z_Omega(t) - Z_B(t)| / (t^-(4n+3) (lambda_1 - lambda_1(B)))"),
}

GROUPS = ("growth", "supnorm", "nested", "auxiliary", "torsion-intersection", "kohler-jobin",
          "quantitative-fk", "main-theorems", "Q", "heat-trace", "fuglede")
HEAT_TIMES = (1.0, 2.0)


# ---------------------------------------------------------------------------
# Entries and reports

@dataclass
class Entry:
    inequality_id: str
    domain_id: str
    lhs: float
    rhs: float
    budget: float = 0.0
    satisfied: bool | None = None     # None for implicit-constant ratios
    note: str = ""

    def __post_init__(self):
        if self.inequality_id not in CATALOGUE:
            raise KeyError(f"unregistered inequality id {self.inequality_id!r}")

    @property
    def explicit(self) -> bool:
        return CATALOGUE[self.inequality_id].explicit

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs != 0 else math.nan

    def to_dict(self) -> dict:
        return dict(inequality_id=self.inequality_id, domain_id=self.domain_id, lhs=self.lhs,
                    rhs=self.rhs, margin=self.margin, ratio=self.ratio, budget=self.budget,
                    satisfied=self.satisfied, explicit=self.explicit, note=self.note)


def explicit_entry(iid, did, lhs, rhs, values: dict, errs: dict, scale: float = 1.0,
                   note: str = "") -> Entry:
    """Evaluate ``lhs(**values) <= rhs(**values)`` with a first-order error budget."""
    L, R = float(lhs(**values)), float(rhs(**values))
    g0 = R - L
    budget = 0.0
    for key, e in errs.items():
        if e:
            v = dict(values)
            v[key] = values[key] + e
            budget += abs(float(rhs(**v)) - float(lhs(**v)) - g0)
    budget *= scale
    return Entry(iid, did, L, R, budget, bool(g0 >= -budget), note)


def ratio_entry(iid, did, lhs: float, rhs: float, note: str = "") -> Entry:
    return Entry(iid, did, float(lhs), float(rhs), 0.0, None, note)


@dataclass
class AuditReport:
    entries: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def extend(self, entries):
        self.entries.extend(entries)

    def failures(self) -> list:
        return [e for e in self.entries if e.satisfied is False]

    @property
    def passed(self) -> bool:
        return not self.failures()

    def by_id(self, iid: str) -> list:
        return [e for e in self.entries if e.inequality_id == iid]

    def summary(self) -> dict:
        out = {}
        for iid in CATALOGUE:
            es = self.by_id(iid)
            if not es:
                continue
            if CATALOGUE[iid].explicit:
                rel = [e.margin / max(abs(e.rhs), 1e-300) for e in es]
                tight = es[int(np.argmin(rel))]
                out[iid] = dict(count=len(es), failures=sum(e.satisfied is False for e in es),
                                tightest_domain=tight.domain_id, tightest_note=tight.note,
                                tightest_relative_margin=min(rel))
            else:
                r = np.array([e.ratio for e in es], dtype=float)
                r = r[np.isfinite(r) & (r > 0)]
                out[iid] = dict(count=len(es), finite=int(r.size),
                                min_ratio=float(r.min()) if r.size else math.nan,
                                max_ratio=float(r.max()) if r.size else math.nan,
                                variation=float(r.max() / r.min()) if r.size else math.nan)
        return out

    def to_json(self, path, config: dict | None = None):
        return reporting.write_json(path, dict(passed=self.passed, summary=self.summary(),
                                               extras=self.extras,
                                               entries=[e.to_dict() for e in self.entries]), config)

    def to_csv(self, path, config: dict | None = None):
        rows = [(e.inequality_id, e.domain_id, e.lhs, e.rhs, e.margin, e.ratio, e.budget,
                 "" if e.satisfied is None else e.satisfied, e.note) for e in self.entries]
        return reporting.write_csv(path, ["inequality_id", "domain_id", "lhs", "rhs", "margin", "ratio",
                                          "budget", "satisfied", "note"], rows, config)


# ---------------------------------------------------------------------------
# Domain data

@dataclass
class SolveData:
    """Extrapolated spectrum and torsion plus discrete sup statistics."""

    lambdas: np.ndarray
    lambda_err: np.ndarray
    T: float
    T_err: float
    w_max: float = math.nan
    w_max_err: float = 0.0
    u_sup: np.ndarray | None = None
    u_sup_err: np.ndarray | None = None
    uw_ratio: np.ndarray | None = None
    uw_ratio_err: np.ndarray | None = None
    domain: StarDomain | None = None

    @classmethod
    def ball(cls, K: int, n: int = N_DIM) -> "SolveData":
        lam = enumerate_spectrum(n, K).eigenvalues(K)
        return cls(lam, np.zeros(K), ball_torsion(n), 0.0, domain=unit_disk() if n == 2 else None)


def _field_stats(eig, tor):
    w = tor.w
    inner = w > 1e-14
    U = np.abs(eig.modes)
    u_sup = U.max(axis=0)
    uw = (U[inner] / w[inner, None]).max(axis=0)
    return float(w.max()), u_sup, uw


def solve_with_stats(domain: StarDomain, K: int = 6, levels=(2, 3)) -> SolveData:
    """Two-level solve. Sup statistics come from the fine level and their
    error estimate is the change from the coarse level."""
    lo, hi = levels
    if hi != lo + 1:
        raise ValueError("extrapolation needs consecutive levels")
    raw = []
    for lev in levels:
        mesh = build_mesh(domain, lev)
        e = solve_eigs(mesh, K)
        t = solve_torsion(mesh)
        raw.append((e.lambdas, t.T, _field_stats(e, t)))
        mesh._cache.clear()
    (l0, T0, s0), (l1, T1, s1) = raw
    ex_l = extrapolate(l0, l1, direction=+1)
    ex_t = extrapolate(T0, T1, direction=-1)
    return SolveData(np.asarray(ex_l.value), np.asarray(ex_l.err_est), float(ex_t.value),
                     float(ex_t.err_est), s1[0], abs(s1[0] - s0[0]), s1[1], np.abs(s1[1] - s0[1]),
                     s1[2], np.abs(s1[2] - s0[2]), domain)


@dataclass
class DomainData:
    domain_id: str
    domain: StarDomain
    omega: SolveData
    inter: SolveData | None
    sym_diff: float
    sym_diff_err: float
    outside: float
    outside_err: float
    fraenkel: FraenkelResult
    K: int

    @classmethod
    def compute(cls, domain_id: str, domain: StarDomain, K: int = 6, levels=(2, 3),
                intersection: bool = True) -> "DomainData":
        om = solve_with_stats(domain, K, levels)
        inter = solve_with_stats(IntersectionDomain(domain), K, levels) if intersection else None
        sd, sde = sym_diff_with_ball(domain, return_error=True)
        out, oute = outside_ball_area(domain, return_error=True)
        return cls(domain_id, domain, om, inter, sd, sde, out, oute, fraenkel_asymmetry(domain), K)


def _ball_ref(K: int) -> SolveData:
    return SolveData.ball(K)


# ---------------------------------------------------------------------------
# Explicit audits

def audit_growth(d: DomainData, K: int | None = None, scale: float = 1.0, n: int = N_DIM) -> list:
    K = K or d.K
    s, a = d.omega, li_yau_constant(n)
    out = []
    for k in range(1, K + 1):
        v = dict(lk=s.lambdas[k - 1], l1=s.lambdas[0])
        e = dict(lk=s.lambda_err[k - 1], l1=s.lambda_err[0])
        out.append(explicit_entry("growth-lower", d.domain_id, lambda lk, l1: a * k ** (2 / n),
                                  lambda lk, l1: lk, v, e, scale, f"k={k}"))
        out.append(explicit_entry("growth-upper", d.domain_id, lambda lk, l1: lk,
                                  lambda lk, l1: (1 + 4 / n) * l1 * k ** (2 / n), v, e, scale, f"k={k}"))
    out.append(explicit_entry("polya-torsion", d.domain_id, lambda l1, T: l1 * T,
                              lambda l1, T: ball_volume(n), dict(l1=s.lambdas[0], T=s.T),
                              dict(l1=s.lambda_err[0], T=s.T_err), scale))
    return out


def audit_supnorm(d: DomainData, scale: float = 1.0, n: int = N_DIM) -> list:
    s = d.omega
    out = [explicit_entry("supnorm-w", d.domain_id, lambda w: w, lambda w: 1 / (2 * n),
                          dict(w=s.w_max), dict(w=s.w_max_err), scale)]
    for k in range(1, len(s.lambdas) + 1):
        i = k - 1
        out.append(explicit_entry("supnorm-u", d.domain_id, lambda u, lk: u,
                                  lambda u, lk: E8 * lk ** (n / 4), dict(u=s.u_sup[i], lk=s.lambdas[i]),
                                  dict(u=s.u_sup_err[i], lk=s.lambda_err[i]), scale, f"k={k}"))
        out.append(explicit_entry("supnorm-uw", d.domain_id, lambda r, lk: r,
                                  lambda r, lk: E8 * lk ** (1 + n / 4), dict(r=s.uw_ratio[i], lk=s.lambdas[i]),
                                  dict(r=s.uw_ratio_err[i], lk=s.lambda_err[i]), scale,
                                  f"k={k}; lhs = max over nodes of |u_k|/w"))
    return out


def contained(inner: StarDomain, outer: StarDomain, samples: int = 2048) -> bool:
    """Radial containment test: inner boundary, pulled slightly toward its pole, lies in outer."""
    th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    p = np.asarray(inner.pole, dtype=float)
    pts = p + (1 - 1e-9) * (inner.boundary_points(th) - p)
    return bool(np.all(outer.contains(pts[:, 0], pts[:, 1])))


def nested_entry(domain_id: str, k: int, inner: SolveData, outer: SolveData, scale: float = 1.0,
                 n: int = N_DIM, note: str = "") -> Entry:
    i = k - 1
    return explicit_entry(
        "nested", domain_id,
        lambda lo, li, To, Ti: 1 / lo - 1 / li,
        lambda lo, li, To, Ti: E4 * k * lo ** (n / 2) * (To - Ti),
        dict(lo=outer.lambdas[i], li=inner.lambdas[i], To=outer.T, Ti=inner.T),
        dict(lo=outer.lambda_err[i], li=inner.lambda_err[i], To=outer.T_err, Ti=inner.T_err),
        scale, note or f"k={k}")


def audit_nested(inner: SolveData, outer: SolveData, k: int, domain_id: str = "",
                 scale: float = 1.0, check: bool = True, note: str = "") -> Entry:
    if check and inner.domain is not None and outer.domain is not None:
        if not contained(inner.domain, outer.domain):
            raise ValueError("inner domain is not contained in the outer domain")
    return nested_entry(domain_id, k, inner, outer, scale, note=note)


def audit_nested_pairs(d: DomainData, scale: float = 1.0) -> list:
    """Pairs (Omega cap B, Omega) and (Omega cap B, B) for k = 1..K."""
    ball = _ball_ref(d.K)
    ball.domain = DiskAbout(np.zeros(2), 1.0, d.domain.pole)
    out = []
    for k in range(1, d.K + 1):
        out.append(audit_nested(d.inter, d.omega, k, d.domain_id, scale, k == 1, f"k={k}; outer=Omega"))
        out.append(audit_nested(d.inter, ball, k, d.domain_id, scale, k == 1, f"k={k}; outer=B"))
    return out


def audit_auxiliary(d: DomainData, k: int, scale: float = 1.0, n: int = N_DIM) -> Entry:
    s = d.omega
    lB = _ball_ref(k).lambdas[k - 1]
    TB = ball_torsion(n)
    c = 1 / n + 1 / n ** 2
    C = (1 + 4 / n) ** (n / 2) * E4 * k ** 2
    return explicit_entry(
        "auxiliary", d.domain_id,
        lambda lk, l1, T, S: abs(1 / lk - 1 / lB),
        lambda lk, l1, T, S: C * l1 ** (n / 2) * (TB - T + c * S),
        dict(lk=s.lambdas[k - 1], l1=s.lambdas[0], T=s.T, S=d.sym_diff),
        dict(lk=s.lambda_err[k - 1], l1=s.lambda_err[0], T=s.T_err, S=d.sym_diff_err),
        scale, f"k={k}; |Omega sym B| about the centered position")


def audit_torsion_intersection(d: DomainData, scale: float = 1.0, n: int = N_DIM) -> Entry:
    c = 1 / n + 1 / n ** 2
    return explicit_entry(
        "torsion-intersection", d.domain_id,
        lambda T, Ti, S: T - Ti, lambda T, Ti, S: c * S,
        dict(T=d.omega.T, Ti=d.inter.T, S=d.outside),
        dict(T=d.omega.T_err, Ti=d.inter.T_err, S=d.outside_err), scale)


def audit_kohler_jobin(d: DomainData, scale: float = 1.0, n: int = N_DIM) -> list:
    s = d.omega
    lB = _ball_ref(1).lambdas[0]
    TB = ball_torsion(n)
    q = (n + 2) / 2
    v = dict(l1=s.lambdas[0], T=s.T)
    e = dict(l1=s.lambda_err[0], T=s.T_err)
    return [
        explicit_entry("kohler-jobin", d.domain_id, lambda l1, T: TB * lB ** q,
                       lambda l1, T: T * l1 ** q, v, e, scale),
        explicit_entry("kohler-jobin-chain", d.domain_id, lambda l1, T: 1 / T - 1 / TB,
                       lambda l1, T: q * lB ** (-q) / TB * l1 ** (n / 2) * (l1 - lB), v, e, scale),
    ]


# ---------------------------------------------------------------------------
# Implicit-constant statements (ratios only)

def audit_quantitative_fk(datas, scale: float = 1.0, n: int = N_DIM, min_F: float = 1e-6):
    """Deficit positivity (explicit) and deficits over F^2 (ratios).

    Returns (entries, min ratios per deficit)."""
    lB, TB = _ball_ref(1).lambdas[0], ball_torsion(n)
    out, mins = [], dict(lam=math.inf, tor=math.inf)
    for d in datas:
        s = d.omega
        out.append(explicit_entry("faber-krahn", d.domain_id, lambda l1: lB, lambda l1: l1,
                                  dict(l1=s.lambdas[0]), dict(l1=s.lambda_err[0]), scale))
        out.append(explicit_entry("saint-venant", d.domain_id, lambda T: T, lambda T: TB,
                                  dict(T=s.T), dict(T=s.T_err), scale))
        F = d.fraenkel.value
        if F < min_F:
            continue
        el = ratio_entry("qfk-lambda", d.domain_id, s.lambdas[0] - lB, F * F)
        et = ratio_entry("qfk-torsion", d.domain_id, 1 / s.T - 1 / TB, F * F)
        mins["lam"] = min(mins["lam"], el.ratio)
        mins["tor"] = min(mins["tor"], et.ratio)
        out += [el, et]
    return out, mins


def theorem_ratios(domain_id: str, s: SolveData, K: int | None = None, n: int = N_DIM,
                   volume: float | None = None, ball: SolveData | None = None) -> list:
    """Unit-constant ratios of the square-root, linear and cluster bounds."""
    K = K or len(s.lambdas)
    ball = ball or _ball_ref(K + 1)
    spec = enumerate_spectrum(n, K + 1)
    vol = ball_volume(n) if volume is None else volume
    TB = ball_torsion(n)
    tdef = 1 / s.T - 1 / TB
    dev = s.lambdas[:K] - ball.lambdas[:K]
    out = []
    if tdef <= FLOOR_FACTOR * s.T_err / s.T ** 2 or tdef <= 0:
        return out
    simple = set(simple_indices(n, K))
    for k in range(1, K + 1):
        out.append(ratio_entry("thm-sqrt", domain_id, abs(dev[k - 1]),
                               k ** (2 + 4 / n) * math.sqrt(s.lambdas[0] * vol * tdef), f"k={k}"))
        if k in simple:
            g = spectral_gap(n, k, spec)
            out.append(ratio_entry("thm-linear", domain_id, abs(dev[k - 1]),
                                   k ** (4 + 8 / n) / g * vol * tdef, f"k={k}"))
    k = 1
    while k <= K:
        m = spec.mode_of(k)
        lo, hi = m.index_lo, m.index_hi
        if hi <= K and hi > lo:
            g = spectral_gap(n, lo, spec)
            out.append(ratio_entry("thm-cluster", domain_id, abs(dev[lo - 1:hi].sum()),
                                   lo ** (6 + 10 / n) / g * vol * tdef, f"cluster={lo}-{hi}"))
        k = hi + 1
    return out


def Q_value(T: float, lam_sum: float, delta: float, n: int = N_DIM) -> float:
    return T * T / ball_volume(n) * ((n + 2) / (n * T) + 2 / n * delta * lam_sum)


def audit_Q(domain_id: str, s: SolveData, delta: float, k: int | None = None, cluster=None,
            n: int = N_DIM) -> Entry:
    """|Q - 1/n^2| against k^(2/n)|delta| (simple) or k^(1+2/n)|delta| (cluster from k)."""
    if (k is None) == (cluster is None):
        raise ValueError("give exactly one of k or cluster")
    if cluster is not None:
        lo, hi = cluster
        Q = Q_value(s.T, float(np.sum(s.lambdas[lo - 1:hi])), delta, n)
        return ratio_entry("Q-cluster", domain_id, abs(Q - 1 / n ** 2), lo ** (1 + 2 / n) * abs(delta),
                           f"cluster={lo}-{hi}; delta={delta:g}")
    Q = Q_value(s.T, float(s.lambdas[k - 1]), delta, n)
    return ratio_entry("Q-simple", domain_id, abs(Q - 1 / n ** 2), k ** (2 / n) * abs(delta),
                       f"k={k}; delta={delta:g}")


def audit_heat_trace(domain_id: str, s: SolveData, ts=HEAT_TIMES, n: int = N_DIM) -> list:
    """Heat-trace deviation ratios from the first K eigenvalues.

    Skipped when the lambda_1 deficit is within the error floor. The note
    carries the Li-Yau bound on the omitted terms of each trace.
    """
    K = len(s.lambdas)
    lB = _ball_ref(K).lambdas
    l1d = s.lambdas[0] - lB[0]
    if l1d <= FLOOR_FACTOR * s.lambda_err[0] or l1d <= 0:
        return []
    out = []
    for t in ts:
        dom = heat_trace_domain(s.lambdas, s.lambda_err, t, n)
        ball = heat_trace_domain(lB, None, t, n)
        out.append(ratio_entry("heat-trace", domain_id, abs(dom.value - ball.value),
                               t ** (-(4 * n + 3)) * l1d, f"t={t:g}; K={K}; tail<={dom.tail:.3g}"))
    return out


# ---------------------------------------------------------------------------
# Fuglede-type coercivity

@dataclass
class FugledeData:
    domain_id: str
    h: FourierProfile
    h_half_sq: float
    solve: SolveData


def fuglede_data(domain_id: str, profile: FourierProfile, K: int = 6, levels=(2, 3)) -> FugledeData:
    dom = make_domain(profile)
    h = effective_profile(dom)
    return FugledeData(domain_id, h, h_half_sq(h), solve_with_stats(dom, K, levels))


def audit_fuglede(data, scale: float = 1.0, n: int = N_DIM, ks=None) -> list:
    out = []
    for f in data:
        K = len(f.solve.lambdas)
        ball = _ball_ref(K)
        TB = ball_torsion(n)
        out.append(explicit_entry("fuglede-torsion", f.domain_id, lambda T: T,
                                  lambda T: TB - f.h_half_sq / (32 * n * n),
                                  dict(T=f.solve.T), dict(T=f.solve.T_err), scale,
                                  f"|h|^2={f.h_half_sq:.6g}"))
        for k in ks or [k for k in simple_indices(n, K)]:
            out.append(ratio_entry("fuglede-lambda", f.domain_id,
                                   abs(f.solve.lambdas[k - 1] - ball.lambdas[k - 1]), f.h_half_sq, f"k={k}"))
    return out


# ---------------------------------------------------------------------------
# Families

def random_profile(rng: np.random.Generator, max_mode: int = 6, max_amp: float = 0.2,
                   min_mode: int = 1) -> FourierProfile:
    """A few random modes in [min_mode, max_mode] rescaled so that sum|coeffs| is the amplitude."""
    count = int(rng.integers(1, 4))
    ms = rng.choice(np.arange(min_mode, max_mode + 1), size=min(count, max_mode - min_mode + 1),
                    replace=False)
    coeffs = {int(m): (float(rng.normal()), float(rng.normal())) for m in sorted(ms)}
    p = FourierProfile.from_modes(coeffs)
    amp = float(rng.uniform(0.1, 1.0)) * max_amp
    return p * (amp / p.coefficient_bound(0))


def standard_family(size: int = 50, seed: int = 0, max_mode: int = 6, max_amp: float = 0.2,
                    include_disk: bool = True) -> list:
    """[(domain_id, profile)], deterministic in the seed."""
    rng = np.random.default_rng(seed)
    fam = [("disk", FourierProfile.zero())] if include_disk else []
    fam += [(f"rand{seed}-{i:03d}", random_profile(rng, max_mode, max_amp)) for i in range(size)]
    return fam


def fuglede_family(size: int = 10, seed: int = 1, max_amp: float = 0.05) -> list:
    rng = np.random.default_rng(seed)
    return [(f"fug{seed}-{i:03d}", random_profile(rng, 6, max_amp, min_mode=2)) for i in range(size)]


# ---------------------------------------------------------------------------
# Sharpness experiment

SHARPNESS_TARGETS = {"lambda6": ((6, 6), 1.0), "lambda2": ((2, 2), 0.5), "cluster2-3": ((2, 3), 1.0)}


@dataclass
class ExponentFit:
    target: str
    expected: float
    slope: float
    intercept: float
    slope_vs_torsion: float
    eps_used: list
    eps_dropped: list

    def to_dict(self) -> dict:
        return dict(target=self.target, expected=self.expected, slope=self.slope,
                    intercept=self.intercept, slope_vs_torsion=self.slope_vs_torsion,
                    eps_used=self.eps_used, eps_dropped=self.eps_dropped)


@dataclass
class SharpnessRun:
    eps: np.ndarray
    lambda1_deficit: np.ndarray
    torsion_deficit: np.ndarray
    devs: dict
    dev_err: dict
    fits: dict
    entries: list

    def to_dict(self) -> dict:
        return dict(eps=self.eps, lambda1_deficit=self.lambda1_deficit, torsion_deficit=self.torsion_deficit,
                    devs=self.devs, dev_err=self.dev_err, fits={k: f.to_dict() for k, f in self.fits.items()})

    def rows(self):
        for i, e in enumerate(self.eps):
            yield [e, self.lambda1_deficit[i], self.torsion_deficit[i]] + \
                [v for t in self.devs for v in (self.devs[t][i], self.dev_err[t][i])]


def _fit(x, y, n_fit):
    if len(x) < 2:
        return math.nan, math.nan
    slope, icpt = np.polyfit(x[:n_fit], y[:n_fit], 1)
    return float(slope), float(icpt)


def sharpness(eps_grid=EPS_GRID, levels=(2, 3), mode: int = 2, K: int = 6, n_fit: int = 4,
              targets=None) -> SharpnessRun:
    """Deviations along h = eps cos(mode theta), each measured against the
    disk solved on the same mesh levels so discretization errors cancel.

    The entries carry the implicit-constant ratios (main theorems,
    quantitative Faber-Krahn, heat trace) at every eps for the stability
    check."""
    targets = targets or SHARPNESS_TARGETS
    eps = np.asarray(sorted(eps_grid), dtype=float)

    def raw(domain):
        out = []
        for lev in levels:
            mesh = build_mesh(domain, lev)
            e, t = solve_eigs(mesh, K), solve_torsion(mesh)
            out.append((e.lambdas, t.T))
            mesh._cache.clear()
        return out

    disk = raw(unit_disk())
    diffs = []   # per eps: (coarse, fine) difference vectors [lambdas..., 1/T]
    for e in eps:
        r = raw(make_domain(FourierProfile.cos(mode, float(e))))
        diffs.append([np.r_[r[j][0] - disk[j][0], 1 / r[j][1] - 1 / disk[j][1]] for j in range(2)])
    ex = [extrapolate(c, f) for c, f in diffs]
    val = np.array([x.value for x in ex])
    err = np.array([x.err_est for x in ex])
    l1d, tdd = val[:, 0], val[:, K]
    devs, dev_err, fits, entries = {}, {}, {}, []
    for name, ((lo, hi), expected) in targets.items():
        d = np.abs(val[:, lo - 1:hi].sum(axis=1))
        de = err[:, lo - 1:hi].sum(axis=1)
        devs[name], dev_err[name] = d, de
        keep = (d >= FLOOR_FACTOR * de) & (l1d > 0) & (tdd > 0)
        xs, ts, ys = np.log(l1d[keep]), np.log(tdd[keep]), np.log(d[keep])
        slope, icpt = _fit(xs, ys, n_fit)
        st, _ = _fit(ts, ys, n_fit)
        used = [float(v) for v in eps[keep][:n_fit]]
        fits[name] = ExponentFit(name, expected, slope, icpt, st, used,
                                 [float(v) for v in eps[~keep]])
    ball = _ball_ref(K + 1)
    for i, e in enumerate(eps):
        s = SolveData(ball.lambdas[:K] + val[i, :K], err[i, :K], 1 / (1 / ball_torsion(N_DIM) + tdd[i]),
                      0.0)
        did = f"cos{mode}-eps{e:g}"
        entries += theorem_ratios(did, s, K, ball=ball)
        F = fraenkel_asymmetry(make_domain(FourierProfile.cos(mode, float(e)))).value
        entries += [ratio_entry("qfk-lambda", did, l1d[i], F * F),
                    ratio_entry("qfk-torsion", did, tdd[i], F * F)]
        entries += audit_heat_trace(did, s)
    return SharpnessRun(eps, l1d, tdd, devs, dev_err, fits, entries)


# ---------------------------------------------------------------------------
# Orchestration

def _compute(args):
    did, profile, K, levels, need_inter = args
    dom = unit_disk() if profile.coefficient_bound(0) == 0 else make_domain(profile)
    return DomainData.compute(did, dom, K, levels, need_inter)


def _fuglede_compute(args):
    did, profile, K, levels = args
    return fuglede_data(did, profile, K, levels)


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_audit(family=None, only=None, K: int = 6, levels=(2, 3), budget_scale: float = 3.0,
              fuglede_profiles=None, deltas=(-1e-3, 1e-3), workers: int = 1,
              progress=None) -> AuditReport:
    """Run the selected groups over the family; ``only`` restricts to groups."""
    groups = set(only or GROUPS)
    unknown = groups - set(GROUPS)
    if unknown:
        raise ValueError(f"unknown audit groups: {sorted(unknown)}")
    family = family if family is not None else standard_family()
    report = AuditReport()
    domain_groups = groups - {"fuglede"}
    if domain_groups:
        need_inter = bool(domain_groups & {"nested", "torsion-intersection"})
        datas = _map(_compute, [(did, p, K, tuple(levels), need_inter) for did, p in family], workers)
        for d in datas:
            if progress:
                progress(d.domain_id)
            if "growth" in groups:
                report.extend(audit_growth(d, scale=budget_scale))
            if "supnorm" in groups:
                report.extend(audit_supnorm(d, scale=budget_scale))
            if "nested" in groups:
                report.extend(audit_nested_pairs(d, scale=budget_scale))
            if "auxiliary" in groups:
                report.extend(audit_auxiliary(d, k, budget_scale) for k in range(1, K + 1))
            if "torsion-intersection" in groups:
                report.entries.append(audit_torsion_intersection(d, budget_scale))
            if "kohler-jobin" in groups:
                report.extend(audit_kohler_jobin(d, budget_scale))
            if "main-theorems" in groups:
                report.extend(theorem_ratios(d.domain_id, d.omega, K))
            if "heat-trace" in groups:
                report.extend(audit_heat_trace(d.domain_id, d.omega))
            if "Q" in groups:
                for delta in deltas:
                    report.entries.append(audit_Q(d.domain_id, d.omega, delta, k=min(6, K)))
                    if K >= 3:
                        report.entries.append(audit_Q(d.domain_id, d.omega, delta, cluster=(2, 3)))
        if "quantitative-fk" in groups:
            entries, mins = audit_quantitative_fk(datas, budget_scale)
            report.extend(entries)
            report.extras["qfk_min_ratio"] = mins
        report.extras["domains"] = [dict(domain_id=d.domain_id, T=d.omega.T, T_err=d.omega.T_err,
                                         lambdas=d.omega.lambdas, lambda_err=d.omega.lambda_err,
                                         fraenkel=d.fraenkel.value, sym_diff=d.sym_diff) for d in datas]
    if "fuglede" in groups:
        fp = fuglede_profiles if fuglede_profiles is not None else fuglede_family()
        fd = _map(_fuglede_compute, [(did, p, K, tuple(levels)) for did, p in fp], workers)
        report.extend(audit_fuglede(fd, budget_scale))
    return report
