import math

import numpy as np
import pytest

from nearball.ball_spectrum import ball_torsion, enumerate_spectrum
from nearball.geometry import DiskAbout, FourierProfile, make_domain, unit_disk
from nearball.inequality_audit import (CATALOGUE, E4, GROUPS, AuditReport, DomainData, Entry, SolveData,
                                       Q_value, audit_auxiliary, audit_growth, audit_kohler_jobin,
                                       audit_nested, audit_nested_pairs, audit_Q, audit_supnorm,
                                       audit_torsion_intersection, contained, explicit_entry,
                                       fuglede_data, audit_fuglede, fuglede_family, ratio_entry,
                                       run_audit, standard_family, theorem_ratios)

LAM = enumerate_spectrum(2, 10).eigenvalues(6)
TB = math.pi / 8


def test_catalogue_groups():
    assert {c.group for c in CATALOGUE.values()} == set(GROUPS)
    with pytest.raises(KeyError):
        Entry("no-such-bound", "x", 0.0, 1.0)


def test_explicit_entry_budget():
    # lhs x <= rhs 1 with err 0.1 on x: budget = scale * 0.1
    e = explicit_entry("supnorm-w", "d", lambda w: w, lambda w: 1.0, dict(w=1.05), dict(w=0.1), 3.0)
    assert e.budget == pytest.approx(0.3)
    assert e.satisfied and e.margin == pytest.approx(-0.05)
    strict = explicit_entry("supnorm-w", "d", lambda w: w, lambda w: 1.0, dict(w=1.05), dict(w=0.0))
    assert not strict.satisfied and strict.budget == 0.0
    r = ratio_entry("Q-simple", "d", 1.0, 4.0)
    assert r.satisfied is None and r.ratio == 0.25 and not r.explicit


def test_report_summary_and_failures():
    rep = AuditReport()
    rep.extend([explicit_entry("supnorm-w", "a", lambda w: w, lambda w: 1.0, dict(w=0.5), {}),
                explicit_entry("supnorm-w", "b", lambda w: w, lambda w: 1.0, dict(w=2.0), {}),
                ratio_entry("Q-simple", "a", 1.0, 2.0), ratio_entry("Q-simple", "b", 3.0, 2.0)])
    assert not rep.passed and [e.domain_id for e in rep.failures()] == ["b"]
    s = rep.summary()
    assert s["supnorm-w"]["failures"] == 1
    assert s["Q-simple"]["min_ratio"] == 0.5 and s["Q-simple"]["variation"] == 3.0


def test_Q_at_disk():
    # 2T/omega = 1/4 at delta = 0, and Q is affine in delta
    assert Q_value(TB, LAM[5], 0.0) == pytest.approx(0.25)
    assert Q_value(TB, LAM[5], 1e-3) + Q_value(TB, LAM[5], -1e-3) == pytest.approx(0.5)
    ball = SolveData.ball(6)
    e = audit_Q("disk", ball, 1e-3, k=6)
    # |Q - 1/4| = T^2 lambda_6 delta / pi against 6 delta
    assert e.lhs == pytest.approx(TB ** 2 * LAM[5] * 1e-3 / math.pi)
    assert e.rhs == pytest.approx(6 * 1e-3)
    with pytest.raises(ValueError):
        audit_Q("disk", ball, 1e-3)


def test_nested_dilated_disk_closed_form():
    outer = SolveData.ball(6)
    inner = SolveData(outer.lambdas / 0.81, np.zeros(6), TB * 0.9 ** 4, 0.0, domain=unit_disk().dilated(0.9))
    for k in (1, 2, 6):
        e = audit_nested(inner, outer, k)
        lk = LAM[k - 1]
        assert e.lhs == pytest.approx(0.19 / lk)
        assert e.rhs == pytest.approx(E4 * k * lk * TB * (1 - 0.9 ** 4))
        assert e.satisfied
    # equal domains: 0 <= 0
    same = audit_nested(outer, outer, 3)
    assert same.lhs == 0.0 and same.rhs == 0.0 and same.satisfied
    with pytest.raises(ValueError):
        audit_nested(outer, inner, 1)


def test_contained():
    base = make_domain(FourierProfile.cos(2, 0.2))
    assert contained(unit_disk().dilated(0.7), base)
    assert not contained(base, unit_disk())
    assert contained(unit_disk(), DiskAbout(np.zeros(2), 1.0, np.zeros(2)))


def test_ball_data_growth_and_kohler_jobin():
    d = DomainData("disk", unit_disk(), SolveData.ball(6), None, 0.0, 0.0, 0.0, 0.0, None, 6)
    g = audit_growth(d)
    assert all(e.satisfied for e in g)
    polya = [e for e in g if e.inequality_id == "polya-torsion"][0]
    assert polya.lhs == pytest.approx(LAM[0] * TB)
    assert polya.lhs == pytest.approx(2.2711, abs=1e-4)
    kj = audit_kohler_jobin(d)
    assert kj[0].lhs == pytest.approx(kj[0].rhs) and kj[1].lhs == 0.0


@pytest.fixture(scope="module")
def cos3():
    return DomainData.compute("cos3", make_domain(FourierProfile.cos(3, 0.2)), K=6, levels=(2, 3))


@pytest.fixture(scope="module")
def cos2():
    return DomainData.compute("cos2", make_domain(FourierProfile.cos(2, 0.15)), K=6, levels=(2, 3))


def test_perturbed_domain_explicit_checks(cos3):
    entries = (audit_growth(cos3, scale=3) + audit_supnorm(cos3, scale=3) + audit_nested_pairs(cos3, 3)
               + audit_kohler_jobin(cos3, 3))
    bad = [(e.inequality_id, e.note) for e in entries if not e.satisfied]
    assert bad == []
    assert cos3.omega.lambdas[0] > LAM[0] and cos3.omega.T < TB
    assert 0 < cos3.fraenkel.value <= cos3.sym_diff + 1e-12


def test_auxiliary_and_intersection(cos2):
    for k in (2, 6):
        assert audit_auxiliary(cos2, k, scale=3).satisfied
    e = audit_torsion_intersection(cos2, 3)
    assert e.satisfied and e.lhs > 0
    assert cos2.inter.T < cos2.omega.T


def test_theorem_ratios_skip_disk_and_report_perturbed(cos2):
    assert theorem_ratios("disk", SolveData.ball(6), 6) == []
    ids = {e.inequality_id for e in theorem_ratios("cos2", cos2.omega, 6)}
    assert ids == {"thm-sqrt", "thm-linear", "thm-cluster"}


@pytest.fixture(scope="module")
def fuglede_pair():
    return [fuglede_data(f"a{a}", FourierProfile.cos(2, a), K=6, levels=(2, 3)) for a in (0.05, 0.025)]


def test_fuglede_holds_and_scales(fuglede_pair):
    entries = audit_fuglede(fuglede_pair, scale=3)
    tors = [e for e in entries if e.inequality_id == "fuglede-torsion"]
    assert all(e.satisfied for e in tors)
    big, small = fuglede_pair
    # both the H^1/2 norm and the torsion deficit are quadratic in the amplitude
    assert small.h_half_sq / big.h_half_sq == pytest.approx(0.25, rel=0.1)
    assert (TB - small.solve.T) / (TB - big.solve.T) == pytest.approx(0.25, rel=0.1)


def test_families_deterministic():
    a, b = standard_family(8, seed=3), standard_family(8, seed=3)
    assert [i for i, _ in a] == [i for i, _ in b]
    for (_, p), (_, q) in zip(a, b):
        np.testing.assert_array_equal(p.a, q.a)
    assert a[0][0] == "disk"
    assert all(p.coefficient_bound(0) <= 0.2 + 1e-12 for _, p in a)
    assert all(0.0 <= p.coefficient_bound(0) <= 0.05 + 1e-12 for _, p in fuglede_family(5))
    assert all(p.a[1] == 0 and p.b[0] == 0 for _, p in fuglede_family(5) if p.M >= 1)


def test_run_audit_unknown_group():
    with pytest.raises(ValueError):
        run_audit([], only=["bogus"])


def test_report_files_byte_identical(tmp_path):
    fam = standard_family(2, seed=5)
    outs = []
    for i in range(2):
        rep = run_audit(fam, only=["kohler-jobin", "Q"], K=3, levels=(1, 2))
        rep.to_json(tmp_path / f"a{i}.json", {"k": 1})
        rep.to_csv(tmp_path / f"a{i}.csv", {"k": 1})
        outs.append(((tmp_path / f"a{i}.json").read_bytes(), (tmp_path / f"a{i}.csv").read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][1].decode().splitlines()
    assert header[0].startswith("# nearball")
    assert header[3].startswith("inequality_id,domain_id,lhs,rhs,margin,ratio,budget,satisfied")
