import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homcomp import cost_model as cm
from homcomp.config import load


@pytest.fixture
def alexnet():
    return load().cluster


def test_default_vanilla_numbers(alexnet):
    p = cm.update_time(alexnet)
    assert p.t_cmt == 6.25
    assert p.t_tnf == pytest.approx(31.272730624, rel=1e-12)
    assert p.t_update == pytest.approx(37.522730624, rel=1e-12)
    assert cm.speedup(alexnet) == pytest.approx(100 / 37.522730624, rel=1e-12)


def test_crossover_and_optimum(alexnet):
    assert cm.crossover_workers(alexnet) == 8
    assert cm.continuous_optimum(alexnet) == pytest.approx(7.1528, abs=1e-4)
    m, s = cm.optimal_workers(alexnet)
    assert m == 7
    assert s == pytest.approx(cm.speedup(alexnet.with_workers(7)))


def test_crossover_larger_compute(alexnet):
    cfg = cm.ClusterConfig(16, 50.0, 200, alexnet.weight_bytes, alexnet.bandwidth)
    # sqrt(10000 * 125e6 / 244318208) = 71.53
    assert cm.crossover_workers(cfg) == 72


def test_homomorphic_examples(alexnet):
    prof = cm.CodecProfile(rho=0.2, h=1.3)
    assert cm.update_time(alexnet, "homomorphic", prof).t_update == pytest.approx(14.3795461248)
    m, _ = cm.optimal_workers(alexnet, "homomorphic", cm.CodecProfile(rho=0.2))
    assert m == 16
    assert cm.continuous_optimum(alexnet, "homomorphic", cm.CodecProfile(rho=0.2)) == \
        pytest.approx(15.994, abs=1e-3)


def test_repetitive_example(alexnet):
    prof = cm.CodecProfile.from_table_ratio(1.079, compress_s=8.079, decompress_s=1.898)
    t = cm.update_time(alexnet, cm.Strategy.REPETITIVE, prof).t_update
    expected = 6.25 + 8.079 + 16 * 1.898 + 8.079 + 1.898 + 31.272730624 / 1.079
    assert t == pytest.approx(expected, rel=1e-12)


def test_single_worker_never_speeds_up(alexnet):
    assert cm.speedup(alexnet.with_workers(1)) <= 1


def test_frontier_examples(alexnet):
    a = cm.frontier_h_max(alexnet, 0.2, 4)
    b = cm.frontier_h_max(alexnet, 0.5, 4)
    assert a.h_max == pytest.approx(2.999272620032, rel=1e-12)
    assert b.h_max == pytest.approx(1.49818155008, rel=1e-12)
    assert a.feasible and b.feasible
    assert not cm.frontier_h_max(alexnet, 1.0, 1).feasible
    assert cm.budget_time(alexnet, 4) == 25.0


@pytest.mark.parametrize("kwargs", [
    dict(workers=0), dict(minibatch_time=0), dict(iterations=-1),
    dict(weight_bytes=float("nan")), dict(bandwidth=-1), dict(workers=300),
    dict(workers=2.5),
])
def test_cluster_validation(kwargs):
    base = dict(workers=4, minibatch_time=0.5, iterations=10, weight_bytes=1e6, bandwidth=1e6)
    with pytest.raises(cm.ConfigError):
        cm.ClusterConfig(**{**base, **kwargs})


@pytest.mark.parametrize("kwargs", [dict(rho=0), dict(rho=1.1), dict(h=0.9),
                                    dict(compress_s=-1)])
def test_profile_validation(kwargs):
    with pytest.raises(cm.ConfigError):
        cm.CodecProfile(**{"rho": 0.5, **kwargs})


def test_strategy_needs_profile(alexnet):
    with pytest.raises(cm.ConfigError):
        cm.update_time(alexnet, "homomorphic")


def test_strategy_aliases():
    assert cm.Strategy.parse("HOMOMORPHIC") is cm.Strategy.HOMOMORPHIC
    with pytest.raises(cm.ConfigError):
        cm.Strategy.parse("gossip")


clusters = st.builds(
    lambda m, c, i, w, chi: cm.ClusterConfig(m, c, i, w, chi, minibatch=max(m, 256)),
    st.integers(1, 512),
    st.floats(1e-3, 10),
    st.integers(1, 1000),
    st.floats(1e3, 1e10),
    st.floats(1e5, 1e11),
)
profiles = st.builds(cm.CodecProfile, st.floats(0.01, 1.0), st.floats(1.0, 4.0))


@settings(max_examples=200, deadline=None)
@given(clusters)
def test_phases_sum_to_total(cfg):
    p = cm.update_time(cfg)
    assert p.t_update == p.t_cmt + p.t_tnf
    assert p.t_cmt == float(Fraction(cfg.iterations) * Fraction(cfg.minibatch_time)
                            / cfg.workers)


@settings(max_examples=200, deadline=None)
@given(clusters)
def test_cmt_falls_tnf_rises(cfg):
    if cfg.workers == cfg.minibatch:
        return
    nxt = cfg.with_workers(cfg.workers + 1)
    assert cm.computation_time(nxt) < cm.computation_time(cfg)
    assert cm.transfer_time(nxt) > cm.transfer_time(cfg)


@settings(max_examples=200, deadline=None)
@given(clusters, profiles)
def test_homomorphic_h1_dominates_vanilla(cfg, prof):
    prof = cm.CodecProfile(rho=prof.rho, h=1.0)
    assert cm.speedup(cfg, "homomorphic", prof) >= cm.speedup(cfg)


@settings(max_examples=200, deadline=None)
@given(clusters)
def test_crossover_is_first_transfer_bound_m(cfg):
    m = cm.crossover_workers(cfg)
    cu = Fraction(cfg.iterations) * Fraction(cfg.minibatch_time)
    w, chi = Fraction(cfg.weight_bytes), Fraction(cfg.bandwidth)
    assert m * m * w >= cu * chi
    assert m == 1 or (m - 1) ** 2 * w < cu * chi


@settings(max_examples=200, deadline=None)
@given(clusters)
def test_integer_optimum_follows_geometric_threshold(cfg):
    # the integer optimum switches from M to M+1 at x = sqrt(M(M+1)),
    # so it is floor(x) or ceil(x) but can be slightly more than 0.5 away
    x = cm.continuous_optimum(cfg)
    m, _ = cm.optimal_workers(cfg, m_limit=10_000)
    if x >= 10_000:
        return
    assert m in {max(1, math.floor(x)), math.ceil(x)}
    if x >= 1:
        lo = math.floor(x)
        assert abs(x - m) < 0.5 + 1 / (8 * lo) + 1e-9


@settings(max_examples=100, deadline=None)
@given(clusters, st.floats(0.01, 1.0), st.floats(1.0, 10.0))
def test_frontier_h_monotone_in_rho(cfg, rho, r):
    a = cm.frontier_h_max(cfg, rho, r).h_max
    b = cm.frontier_h_max(cfg, min(1.0, rho * 1.5), r).h_max
    assert b <= a


def test_repetitive_optimum_scans(alexnet):
    prof = cm.CodecProfile(rho=0.9, compress_s=1.0, decompress_s=0.5)
    m, s = cm.optimal_workers(alexnet, "repetitive", prof, m_limit=64)
    brute = max(range(1, 65),
                key=lambda k: (cm.speedup(alexnet.with_workers(k), "repetitive", prof), -k))
    assert m == brute
