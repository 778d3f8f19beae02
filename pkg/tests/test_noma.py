from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thznoma.channel import ArrayGeometry
from thznoma.constellation import build_qam
from thznoma.detectors import ChannelFactors, DetectorKind, detect_stream, sic_cancel
from thznoma.errors import BudgetExhausted, EmptyDrop
from thznoma.noma import (NomaScenario, build_noma_links, dbm_to_watts, drop_users, jdcp,
                          large_scale_coefficient, noma_detect_pair, pair_plan)

from conftest import crandn

TABLE1 = NomaScenario()


def test_table1_defaults():
    assert TABLE1.rho_rx == pytest.approx(1e-13)
    assert TABLE1.budget == pytest.approx(0.1)
    assert TABLE1.mean_pairs == pytest.approx(7.853981634, rel=1e-9)
    assert dbm_to_watts(30) == 1.0


def test_drop_bounds():
    rng = np.random.default_rng(0)
    for _ in range(200):
        try:
            d = drop_users(TABLE1, rng)
        except EmptyDrop:
            continue
        assert len(d.inner_d) == len(d.outer_d) == d.K
        assert np.all((d.inner_d >= TABLE1.d_min) & (d.inner_d <= 5))
        assert np.all((d.outer_d > 5) & (d.outer_d <= 10))
        assert np.all(np.abs(d.inner_angle) <= TABLE1.sector / 2)


def test_zero_density_limit():
    s = NomaScenario(density_inner=1e-12, density_outer=1e-12)
    with pytest.raises(EmptyDrop):
        drop_users(s, np.random.default_rng(1))


def test_pairing_example():
    plan = jdcp([2.0, 4.0], [6.0, 9.0], TABLE1)
    pairs = [(plan.inner_d[a], plan.outer_d[b]) for a, b in plan.pairs]
    assert pairs == [(4.0, 9.0), (2.0, 6.0)]


def test_power_example():
    plan = jdcp([4.0], [9.0], TABLE1)
    p1, p2 = plan.powers[0]
    assert p1 == pytest.approx(1e-13 * 4 ** 2.2) and p1 == pytest.approx(2.111e-12, rel=1e-3)
    assert p2 == pytest.approx(10 * 1e-13 * 9 ** 2.2) and p2 == pytest.approx(1.257e-10, rel=1e-3)


def test_budget_cap_and_exhaustion():
    s = NomaScenario(rho_rx=1e-2, P_max=1.6)
    plan = jdcp([1.0], [9.0], s)
    p1, p2 = plan.powers[0]
    assert p1 + p2 == pytest.approx(s.budget)
    with pytest.raises(BudgetExhausted):
        jdcp([5.0], [9.0], s)


def test_unequal_groups_truncate(caplog):
    plan = jdcp([1.0, 2.0, 3.0], [7.0, 8.0], TABLE1)
    assert len(plan.pairs) == 2 and "truncating" in caplog.text


@given(st.lists(st.floats(0.5, 5.0), min_size=1, max_size=12), st.integers(0, 2**32 - 1))
def test_jdcp_properties(inner, seed):
    outer = np.random.default_rng(seed).uniform(5.001, 10.0, len(inner))
    plan = jdcp(inner, outer, TABLE1)
    o1 = sorted(range(len(inner)), key=lambda i: -inner[i])
    o2 = sorted(range(len(outer)), key=lambda i: -outer[i])
    assert [p[0] for p in plan.pairs] == o1 and [p[1] for p in plan.pairs] == o2
    for _, d1, d2, p1, p2 in plan.rows():
        assert p1 + p2 <= TABLE1.budget * (1 + 1e-12)
        if TABLE1.mu * TABLE1.rho_rx * d2 ** TABLE1.pathloss_exp <= TABLE1.budget - p1 and d2 > d1:
            assert p2 > p1


def test_large_scale_coefficient():
    assert large_scale_coefficient(2.0, 2.2) > large_scale_coefficient(3.0, 2.2)
    assert large_scale_coefficient(3.0, 2.2) == large_scale_coefficient(3.0, 2.2)
    r = large_scale_coefficient(6.0, 2.2) / large_scale_coefficient(3.0, 2.2)
    assert r == pytest.approx(2 ** -1.1) and r == pytest.approx(0.4665, abs=1e-4)


def test_build_links():
    plan = jdcp([3.0], [8.0], TABLE1)
    g = ArrayGeometry(2, 2, 2, 2, f=0.3e12, Delta=0.02)
    (link,) = build_noma_links(plan, TABLE1, g, tune_far=True)
    assert link.sigma_h1 > link.sigma_h2
    assert link.H2.sigma_h == link.sigma_h2
    assert link.H1.provenance["geometry"]["Delta"] == 0.02
    assert link.H2.provenance["geometry"]["Delta"] == pytest.approx(
        replace(g, D=8.0).tuned().Delta)
    assert link.H2.provenance["geometry"]["D"] == 8.0


@pytest.mark.parametrize("kind", list(DetectorKind))
def test_noiseless_diagonal_pair(kind):
    rng = np.random.default_rng(3)
    p1, p2 = 1.0, 1000.0
    c1, c2 = build_qam(4, p1), build_qam(4, p2)
    b1, b2 = rng.integers(0, 2, (5, 8)), rng.integers(0, 2, (5, 8))
    s = c1.modulate(b1) + c2.modulate(b2)
    H1 = np.diag([1.0, 0.8, 1.2, 0.9]).astype(complex)
    H2 = 0.5 * H1
    u1, u2 = noma_detect_pair(s @ H1.T, s @ H2.T, ChannelFactors(H1), ChannelFactors(H2),
                              (p1, p2), kind, order=4)
    assert np.array_equal(u1, b1) and np.array_equal(u2, b2)


def test_pair_matches_manual_sequence():
    rng = np.random.default_rng(5)
    p1, p2 = 1.0, 1000.0
    c1, c2 = build_qam(4, p1), build_qam(4, p2)
    H1, H2 = crandn(rng, 4, 4), 0.3 * crandn(rng, 4, 4)
    s = c1.modulate(rng.integers(0, 2, (100, 8))) + c2.modulate(rng.integers(0, 2, (100, 8)))
    y1 = s @ H1.T + 0.01 * crandn(rng, 100, 4)
    y2 = s @ H2.T + 0.01 * crandn(rng, 100, 4)
    f1, f2 = ChannelFactors(H1), ChannelFactors(H2)
    u1, u2 = noma_detect_pair(y1, y2, f1, f2, (p1, p2), "SSD", order=4)
    idx = (0, 1, 2, 3)
    x2, _ = detect_stream(y1, f1, idx, c2, DetectorKind.SSD)
    x1, _ = detect_stream(sic_cancel(y1, H1, x2), f1, idx, c1, DetectorKind.SSD)
    x2b, _ = detect_stream(y2, f2, idx, c2, DetectorKind.SSD)
    assert np.array_equal(u1, c1.demap(x1)) and np.array_equal(u2, c2.demap(x2b))


def test_pair_plan():
    plan = pair_plan(4, 1.0, 10.0, order=4)
    assert [s.size for s in plan.streams] == [4, 4]
    assert plan.total_power == 11.0


def test_scenario_validation():
    with pytest.raises(ValueError):
        NomaScenario(R_N=10, R_C=5)
    with pytest.raises(ValueError):
        NomaScenario(mu=0.5)
    with pytest.raises(ValueError):
        NomaScenario(d_min=6)
