"""Heat traces, the gap-based partition of the indices, and weighted sums B_n(f).

Every infinite sum is reported as a partial sum together with a tail
bound obtained from the Li-Yau lower bound lambda_k >= a_n k^(2/n) and an
integral comparison.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .ball_spectrum import BallSpectrum, enumerate_spectrum, li_yau_constant

MAX_KCUT = 100_000


# ---------------------------------------------------------------------------
# Partition of the indices


def partition_constants(n: int, lambda1: float | None = None) -> tuple[float, float]:
    """(c_n, D_n) with c_n = a_n / n and D_n = ((1 + 4/n) 2 lambda_1(B) / a_n)^(n/2)."""
    a = li_yau_constant(n)
    if lambda1 is None:
        lambda1 = enumerate_spectrum(n, 1).eigenvalue(1)
    return a / n, ((1 + 4.0 / n) * 2 * lambda1 / a) ** (n / 2.0)


@dataclass
class ClusterPartition:
    n: int
    K: int
    intervals: list            # [(lo, hi)], 1-based inclusive, tiling 1..K
    classes: list              # per interval: list of equality classes (lo, hi)
    gaps: np.ndarray           # lambda_{i+1} - lambda_i for i = 1..K
    thresholds: np.ndarray     # c_n i^(2/n - 1)
    c_n: float
    D_n: float
    ratios: np.ndarray         # sup/inf per interval

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    @property
    def ok(self) -> bool:
        return bool(np.all(self.ratios <= self.D_n))


def cluster_partition(n: int, K: int, spectrum: BallSpectrum | None = None) -> ClusterPartition:
    """Split 1..K into intervals: i and i+1 share an interval iff
    lambda_{i+1}(B) - lambda_i(B) < c_n i^(2/n - 1)."""
    spec = spectrum if spectrum is not None and spectrum.count >= K + 1 else enumerate_spectrum(n, K + 1)
    lam = spec.eigenvalues(K + 1)
    c_n, D_n = partition_constants(n, lam[0])
    i = np.arange(1, K + 1)
    gaps = lam[1:] - lam[:-1]
    thr = c_n * i ** (2.0 / n - 1.0)
    join = gaps < thr
    intervals = []
    start = 1
    for idx in range(1, K + 1):
        if idx == K or not join[idx - 1]:
            intervals.append((start, idx))
            start = idx + 1
    # equality classes never straddle intervals: a zero gap always joins
    classes = [sorted({spec.cluster_of(k) for k in range(lo, hi + 1)}) for lo, hi in intervals]
    ratios = np.array([hi / lo for lo, hi in intervals], dtype=float)
    return ClusterPartition(n, K, intervals, classes, gaps, thr, c_n, D_n, ratios)


# ---------------------------------------------------------------------------
# Heat traces


def li_yau_tail(n: int, t: float, K: int) -> float:
    """Bound for sum_{k > K} exp(-t a_n k^(2/n)) by the integral from K."""
    a = li_yau_constant(n)
    x = t * a * K ** (2.0 / n)
    s = n / 2.0
    return float(s * (t * a) ** (-s) * special.gamma(s) * special.gammaincc(s, x))


@dataclass
class HeatTrace:
    t: float
    value: float        # partial sum (lower bound for the ball)
    tail: float         # rigorous bound on the omitted terms
    K_cut: int
    err: float = 0.0    # propagated eigenvalue error (domains only)

    @property
    def relative_tail(self) -> float:
        return self.tail / self.value


def heat_trace_ball(n: int, t: float, K_cut: int | None = None, rtol: float = 1e-10,
                    spectrum: BallSpectrum | None = None) -> HeatTrace:
    """Z_B(t) = sum_k exp(-t lambda_k(B)); K_cut raised until tail <= rtol * value."""
    if t <= 0:
        raise ValueError("t must be positive")
    K = K_cut or 64
    # Li-Yau also bounds Z_B from above; fail before enumerating if even
    # MAX_KCUT terms cannot certify the tail
    upper = math.exp(-t * li_yau_constant(n)) + li_yau_tail(n, t, 1)
    if K_cut is None and li_yau_tail(n, t, MAX_KCUT) > rtol * upper:
        raise ValueError(f"t={t} too small: tail certificate needs more than {MAX_KCUT} terms")
    while True:
        if K > MAX_KCUT:
            raise ValueError(f"t={t} too small: tail certificate needs more than {MAX_KCUT} terms")
        if spectrum is None or spectrum.count < K:
            spectrum = enumerate_spectrum(n, K)
        lam = spectrum.eigenvalues(K)
        val = float(np.sum(np.exp(-t * lam)))
        tail = li_yau_tail(n, t, K)
        if K_cut is not None or tail <= rtol * val:
            return HeatTrace(t, val, tail, K)
        K *= 2


def heat_trace_domain(lambdas, err_est, t: float, n: int = 2) -> HeatTrace:
    """Partial heat trace from FEM eigenvalues, error propagated to first order.

    The tail uses lambda_k(Omega) >= a_n k^(2/n), valid for any domain of
    the ball's volume.
    """
    lam = np.asarray(lambdas, dtype=float)
    e = np.zeros_like(lam) if err_est is None else np.asarray(err_est, dtype=float)
    terms = np.exp(-t * lam)
    return HeatTrace(t, float(terms.sum()), li_yau_tail(n, t, len(lam)), len(lam),
                     float(np.sum(t * terms * e)))


def heat_trace_ratio(dom: HeatTrace, ball: HeatTrace, lambda1_deficit: float, n: int = 2) -> float:
    """|Z_Omega - Z_B| / (t^{-(4n+3)} (lambda_1(Omega) - lambda_1(B)))."""
    return abs(dom.value - ball.value) / (dom.t ** (-(4 * n + 3)) * lambda1_deficit)


# ---------------------------------------------------------------------------
# B_n(f)


@dataclass(frozen=True)
class WeightSpec:
    kind: str        # 'exp' for exp(-t lambda), 'power' for lambda^(-s)
    param: float

    def __post_init__(self):
        if self.kind not in ("exp", "power"):
            raise ValueError("kind must be 'exp' or 'power'")
        if self.kind == "exp" and self.param <= 0:
            raise ValueError("t must be positive")

    def sup_derivs(self, x):
        """sup over [x, inf) of |f'| and |f''| (both decreasing, so at x)."""
        x = np.asarray(x, dtype=float)
        p = self.param
        if self.kind == "exp":
            e = np.exp(-p * x)
            return p * e, p * p * e
        return p * x ** (-p - 1), p * (p + 1) * x ** (-p - 2)


@dataclass
class BnSum:
    value: float
    tail: float
    converges: bool
    cutoff: int
    decay_onset: int | None
    terms: np.ndarray = field(repr=False)
    note: str = ""


def _bn_exponents(n):
    return 7 + 8.0 / n, 6 + 10.0 / n


def B_n_sum(n: int, weight: WeightSpec, cutoff: int = 2000) -> BnSum:
    """sum_i i^(7+8/n) sup|f'| + i^(6+10/n) sup|f''| over lambda >= a_n i^(2/n)."""
    a = li_yau_constant(n)
    e1, e2 = _bn_exponents(n)
    i = np.arange(1, cutoff + 1, dtype=float)
    x = a * i ** (2.0 / n)
    d1, d2 = weight.sup_derivs(x)
    terms = i ** e1 * d1 + i ** e2 * d2
    value = float(terms.sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = terms[1:] / terms[:-1]
    below = np.nonzero(ratio < 1)[0]
    onset = None
    if below.size:
        # first index after which the ratio stays below one
        above = np.nonzero(ratio >= 1)[0]
        onset = int(above.max() + 2) if above.size else 1
    s = weight.param
    if weight.kind == "power":
        # term_i = A i^(-q1) + B i^(-q2)
        q1 = -(e1 - 2.0 * (s + 1) / n)
        q2 = -(e2 - 2.0 * (s + 2) / n)
        A = s * a ** (-s - 1)
        B = s * (s + 1) * a ** (-s - 2)
        if q1 <= 1 or q2 <= 1:
            return BnSum(value, math.inf, False, cutoff, onset, terms,
                         f"diverges: s={s} <= {4 * n + 3} (term exponents {-q1:.3g}, {-q2:.3g})")
        N = float(cutoff)
        tail = A * N ** (1 - q1) / (q1 - 1) + B * N ** (1 - q2) / (q2 - 1)
        return BnSum(value, float(tail), True, cutoff, onset, terms)
    t = s
    tail = 0.0
    for e, c in ((e1, t), (e2, t * t)):
        # int_N^inf x^e c exp(-t a x^(2/n)) dx, valid once the integrand decreases
        b = t * a
        peak = (e * n / (2 * b)) ** (n / 2.0)
        if cutoff < peak:
            return BnSum(value, math.inf, True, cutoff, onset, terms,
                         "cutoff before the decay onset; raise cutoff")
        sh = (e + 1) * n / 2.0
        tail += c * (n / 2.0) * b ** (-sh) * special.gamma(sh) * special.gammaincc(sh, b * cutoff ** (2.0 / n))
    return BnSum(value, float(tail), True, cutoff, onset, terms)


# ---------------------------------------------------------------------------
# Export


def write_heat_csv(path, traces, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t", "Z", "tail"])
        for tr in traces:
            w.writerow([f"{tr.t:.17g}", f"{tr.value:.17g}", f"{tr.tail:.17g}"])


def write_terms_csv(path, terms, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["i", "term", "cumulative"])
        cum = np.cumsum(terms)
        for i, (t, c) in enumerate(zip(terms, cum), start=1):
            w.writerow([i, f"{t:.17g}", f"{c:.17g}"])
