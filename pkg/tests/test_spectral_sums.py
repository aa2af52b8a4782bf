import math

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given
from hypothesis import strategies as st

from nearball.ball_spectrum import enumerate_spectrum, li_yau_constant
from nearball.spectral_sums import (B_n_sum, WeightSpec, cluster_partition, heat_trace_ball,
                                    heat_trace_domain, heat_trace_ratio, li_yau_tail,
                                    partition_constants, write_heat_csv, write_terms_csv)

LAM1 = sp.jn_zeros(0, 1)[0] ** 2
SPEC = enumerate_spectrum(2, 401)


def scipy_disk_eigenvalues(L):
    """All unit-disk eigenvalues below L with multiplicity, from scipy zeros."""
    out = []
    m = 0
    while sp.jn_zeros(m, 1)[0] ** 2 < L:
        z = sp.jn_zeros(m, 200)
        z = z[z ** 2 < L] ** 2
        out.extend(z.tolist() * (1 if m == 0 else 2))
        m += 1
    return np.sort(out)


def test_partition_constants_planar():
    c, D = partition_constants(2)
    assert c == pytest.approx(1.0)
    assert D == pytest.approx(3 * LAM1, rel=1e-12)


@given(st.integers(1, 400))
def test_partition_tiles_indices(K):
    p = cluster_partition(2, K, SPEC)
    assert p.intervals[0][0] == 1 and p.intervals[-1][1] == K
    for (a, b), (c, _) in zip(p.intervals, p.intervals[1:]):
        assert c == b + 1
    # joins happen exactly where the gap is below the threshold
    for lo, hi in p.intervals:
        assert np.all(p.gaps[lo - 1:hi - 1] < p.thresholds[lo - 1:hi - 1])
        if hi < K:
            assert p.gaps[hi - 1] >= p.thresholds[hi - 1]


def test_partition_ratio_bound():
    p = cluster_partition(2, 2000)
    assert p.ok
    assert p.max_ratio <= p.D_n
    # equality classes sit inside their interval
    for (lo, hi), cls in zip(p.intervals, p.classes):
        assert all(lo <= a and b <= max(hi, b) for a, b in cls)


def test_li_yau_tail_bounds_direct_sum():
    a = li_yau_constant(2)
    for t, K in ((0.1, 50), (0.5, 10), (1.0, 5)):
        k = np.arange(K + 1, 200_000, dtype=float)
        direct = np.sum(np.exp(-t * a * k))
        assert direct <= li_yau_tail(2, t, K) <= direct + 1.0


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 2.0])
def test_heat_trace_against_scipy(t):
    h = heat_trace_ball(2, t)
    ref = np.sum(np.exp(-t * scipy_disk_eigenvalues(40.0 / t + 400)))
    assert h.relative_tail <= 1e-10
    slack = 1e-13 * h.value
    assert h.value - slack <= ref <= h.value + h.tail + slack
    assert ref == pytest.approx(h.value, rel=1e-9)


def test_heat_trace_small_t_guard():
    with pytest.raises(ValueError):
        heat_trace_ball(2, 0.0)
    with pytest.raises(ValueError):
        heat_trace_ball(2, 1e-5)


def test_heat_trace_domain_and_ratio():
    lam = enumerate_spectrum(2, 30).eigenvalues(30)
    dom = heat_trace_domain(lam * 1.01, np.full(30, 1e-3), 1.0)
    ball = heat_trace_ball(2, 1.0, K_cut=30)
    assert dom.value < ball.value
    assert dom.err > 0 and dom.K_cut == 30
    r = heat_trace_ratio(dom, ball, 0.01 * lam[0])
    assert r == pytest.approx((ball.value - dom.value) / (0.01 * lam[0]))


def test_Bn_power_threshold():
    # convergence needs s > 4n + 3 = 11 in the plane
    assert not B_n_sum(2, WeightSpec("power", 11.0)).converges
    b = B_n_sum(2, WeightSpec("power", 12.0), cutoff=4000)
    assert b.converges and math.isfinite(b.tail)
    longer = B_n_sum(2, WeightSpec("power", 12.0), cutoff=400_000)
    assert longer.value <= b.value + b.tail + 1e-9 * b.value
    assert longer.value >= b.value


def test_Bn_exponential_weight():
    b = B_n_sum(2, WeightSpec("exp", 1.0), cutoff=2000)
    assert b.converges and b.tail < 1e-12 * b.value
    assert b.decay_onset is not None and b.decay_onset < 2000
    short = B_n_sum(2, WeightSpec("exp", 0.01), cutoff=10)
    assert math.isinf(short.tail)
    with pytest.raises(ValueError):
        WeightSpec("exp", -1.0)


def test_exports(tmp_path):
    write_heat_csv(tmp_path / "h.csv", [heat_trace_ball(2, 1.0)], header_lines=["x"])
    assert (tmp_path / "h.csv").read_text().splitlines()[:2] == ["# x", "t,Z,tail"]
    write_terms_csv(tmp_path / "t.csv", np.array([1.0, 2.0]))
    assert (tmp_path / "t.csv").read_text().splitlines()[-1].startswith("2,2,3")
