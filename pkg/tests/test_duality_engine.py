import numpy as np
import pytest

from duality_engine import (
    DELTA, DELTA_BAR, build_pd_diagram, check_ladder_commutes, delta_difference_residual,
    kaminker_putnam_delta, pd_report, solve_theta, verify_delta_ev_vanishes,
)
from errors import HypothesisError
from exact_abelian import is_isomorphism
from graph_core import graph_from_adjacency, random_graph
from pimsner_k import DUAL_CHOICES, EBAR_OP, EOP


@pytest.mark.parametrize("choice", DUAL_CHOICES)
@pytest.mark.parametrize("name", ["loop", "o3", "suq2", "example24", "fibonacci"])
def test_ladder_commutes_and_theta_is_certified(load, name, choice):
    ladder = build_pd_diagram(load(name), choice)
    check = check_ladder_commutes(ladder)
    assert check.commutes, check.failing
    theta = solve_theta(ladder)
    assert theta.certified
    assert theta.sign0 in (1, -1) and theta.sign1 in (1, -1)
    assert is_isomorphism(theta.theta0) and is_isomorphism(theta.theta1)
    solved = ladder.with_theta(theta.theta0, theta.theta1)
    assert check_ladder_commutes(solved).commutes


def test_off_diagonal_rung_breaks_the_ladder(load):
    ladder = build_pd_diagram(load("example24"), EOP, rung=[[1, 1], [0, 1]])
    check = check_ladder_commutes(ladder)
    assert not check.commutes
    assert any(name.startswith('mu o') for name in check.failing)
    assert not solve_theta(ladder).found


def test_non_invertible_rung_is_not_certified(load):
    ladder = build_pd_diagram(load("loop"), EOP, rung=[[2]])
    assert check_ladder_commutes(ladder).commutes
    theta = solve_theta(ladder)
    assert not theta.certified


def test_ladder_requires_the_dual_hypotheses():
    sink = graph_from_adjacency([[1, 0], [1, 0]])
    with pytest.raises(HypothesisError):
        build_pd_diagram(sink, EOP)
    assert check_ladder_commutes(build_pd_diagram(sink, EBAR_OP)).commutes


def test_unknown_choice_is_rejected(load):
    with pytest.raises(ValueError):
        build_pd_diagram(load("loop"), 'E')


@pytest.mark.parametrize("name, count", [("example24", 8), ("o2", 4), ("k2full", 4), ("triangle_loops", 6)])
def test_kaminker_putnam_summand_counts(load, name, count):
    kp = kaminker_putnam_delta(load(name))
    assert kp.to_dict()['count'] == count
    assert len(kp.terms()) == count
    assert kp.terms()[0].startswith('-')


def test_kaminker_putnam_provenance(load):
    assert 'dual graph' in kaminker_putnam_delta(load("example24")).provenance
    assert kaminker_putnam_delta(load("k2full")).provenance == ''
    assert kaminker_putnam_delta(load("k2full"), DELTA_BAR).terms()[0].startswith('+')
    with pytest.raises(ValueError):
        kaminker_putnam_delta(load("k2full"), 'gamma')


def test_kaminker_putnam_needs_no_sinks():
    with pytest.raises(HypothesisError):
        kaminker_putnam_delta(graph_from_adjacency([[1, 0], [1, 0]]))


@pytest.mark.parametrize("sign", [DELTA, DELTA_BAR])
def test_delta_evaluation_vanishes(load, sign):
    assert (verify_delta_ev_vanishes(load("example24"), sign) == 0).all()


@pytest.mark.parametrize("seed", range(50))
def test_random_graph_ladders(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(int(rng.integers(1, 7)), rng, name=f"random{seed}")
    for choice in DUAL_CHOICES:
        ladder = build_pd_diagram(g, choice)
        assert check_ladder_commutes(ladder).commutes
        assert solve_theta(ladder).certified
    for sign in (DELTA, DELTA_BAR):
        assert (verify_delta_ev_vanishes(g, sign) == 0).all()


def test_delta_difference_vanishes(load):
    diff = delta_difference_residual(load("example24"))
    assert diff['available']
    assert diff['vanishes']


@pytest.mark.parametrize("name", ["o2", "example24"])
def test_pd_report_passes(load, name):
    report = pd_report(load(name), k_max=2, n_max=60)
    assert report['passed'], [k for k, v in report['checks'].items() if v is False]
    assert report['duals'][EOP]['theta']['certified']
    assert 'kp_class' in report['fundamental_classes'][DELTA]


def test_pd_report_flags_failing_super_strong(load):
    report = pd_report(load("fibonacci"), k_max=2, n_max=60)
    assert report['duals'][EBAR_OP]['super_strong']['holds'] is False
    assert 'flag' in report['duals'][EBAR_OP]
