import math
from fractions import Fraction

import pytest

import watatani
from errors import AssumptionError, HypothesisError
from graph_core import graph_from_adjacency, paths_of_length, path_range
from watatani import (
    AssumptionReport, GEOMETRIC, POLYNOMIAL, UNDEFINED, assumption_one_check, closed_form_coefficient, perron, phi_infinity,
    q_limit, ratio_sequence, sum_rule_check, super_strong_check, super_strong_coefficient,
    watatani_index,
)

GOLDEN = (math.sqrt(5) - 1) / 2


def test_watatani_index_counts_paths_by_range(load):
    g = load("example24")
    assert watatani_index(g, 0).values == (1, 1)
    assert watatani_index(g, 2).values == (7, 1)
    for n in range(4):
        vec = watatani_index(g, n)
        for v in g.vertices:
            assert vec.at(v) == sum(1 for p in paths_of_length(g, n) if path_range(g, p) == v)


def test_watatani_index_rejects_negative_level(load):
    with pytest.raises(ValueError):
        watatani_index(load("o2"), -1)


def test_ratio_sequence_is_exact(load):
    seq = ratio_sequence(load("fibonacci"), ("e",), 12)
    assert seq[:3] == [Fraction(1, 2), Fraction(2, 3), Fraction(3, 5)]


def test_cuntz_graph_limits_are_exact(load):
    g = load("o2")
    r = q_limit(g, ("e1",), n_max=40)
    assert r.exact and r.convergence == GEOMETRIC
    assert r.coefficient == Fraction(1, 2)
    assert q_limit(g, ("e1", "e2"), n_max=40).coefficient == Fraction(1, 4)
    assert r.closed_form_agrees


def test_fibonacci_limit_is_geometric(load):
    r = q_limit(load("fibonacci"), ("e",), n_max=120)
    assert r.convergence == GEOMETRIC
    assert r.coefficient == pytest.approx(GOLDEN, abs=1e-9)
    assert r.rate == pytest.approx(GOLDEN ** 2, rel=1e-2)
    assert r.closed_form == pytest.approx(GOLDEN, abs=1e-9)
    assert r.closed_form_agrees


def test_quantum_su2_limits_are_polynomial(load):
    g = load("suq2")
    e = q_limit(g, ("e",), n_max=200)
    f = q_limit(g, ("f",), n_max=200)
    assert e.convergence == POLYNOMIAL and e.coefficient == Fraction(1)
    assert f.convergence == POLYNOMIAL and f.coefficient == Fraction(0)
    assert e.exponent == pytest.approx(1.0, abs=0.05)
    assert q_limit(g, ("g",), n_max=200).coefficient == Fraction(1)


def test_q_limit_needs_a_long_enough_sequence(load):
    with pytest.raises(ValueError):
        q_limit(load("o2"), ("e1", "e2"), n_max=10)


def test_perron_data(load):
    data = perron(load("fibonacci"))
    assert data.primitive and data.converged
    assert data.lam == pytest.approx((1 + math.sqrt(5)) / 2)
    assert closed_form_coefficient(load("fibonacci"), ("f",), data) == pytest.approx(GOLDEN ** 2)
    assert not perron(load("suq2")).primitive
    with pytest.raises(HypothesisError):
        perron(graph_from_adjacency([[1, 0], [1, 0]]))


@pytest.mark.parametrize("name", ["o2", "suq2", "k2full", "fibonacci"])
def test_assumption_holds(load, name):
    report = assumption_one_check(load(name), k_max=2, n_max=120)
    assert report.holds
    assert report.per_k[1]['elements'] == len(load(name).edges)


def test_assumption_reports_polynomial_exponent(load):
    report = assumption_one_check(load("suq2"), k_max=1, n_max=200)
    assert report.min_exponent == pytest.approx(1.0, abs=0.05)
    assert report.to_dict()['per_k']['1']['holds']


@pytest.mark.parametrize("name, c1", [("k2full", Fraction(1, 2)), ("triangle_loops", Fraction(1, 2)),
                                       ("o3", Fraction(1, 3))])
def test_super_strong_holds(load, name, c1):
    g = load(name)
    result = super_strong_check(g, k_max=2, n_max=60)
    assert result.holds
    for v in g.vertices:
        assert super_strong_coefficient(result, 1, v) == c1
        assert super_strong_coefficient(result, 2, v) == c1 * c1
        assert super_strong_coefficient(result, 0, v) == 1


def test_super_strong_fails_for_fibonacci(load):
    result = super_strong_check(load("fibonacci"), k_max=2, n_max=120)
    assert not result.holds
    first, second, vertex = result.witness
    assert vertex == 'v'
    assert {first, second} == {("e",), ("f",)}


def test_super_strong_fails_for_quantum_su2(load):
    result = super_strong_check(load("suq2"), k_max=1, n_max=200)
    assert not result.holds
    assert result.witness[2] == 'v'


def test_super_strong_needs_the_assumption(load, monkeypatch):
    failing = AssumptionReport(holds=False, per_k={}, elements=[], min_exponent=None)
    monkeypatch.setattr(watatani, "assumption_one_check", lambda *args, **kwargs: failing)
    with pytest.raises(AssumptionError):
        super_strong_check(load("o2"), k_max=1, n_max=40)


def test_phi_infinity(load):
    g = load("o2")
    assert phi_infinity(g, ("e1",), ("e2",), n_max=40) == {'v': 0}
    assert phi_infinity(g, ("e1", "e1"), ("e1", "e1"), n_max=40) == {'v': Fraction(1, 4)}
    assert phi_infinity(g, ("@v",), ("@v",)) == {'v': 1}


@pytest.mark.parametrize("name", ["fibonacci", "example24", "k2full"])
def test_sum_rules(load, name):
    result = sum_rule_check(load(name), k_max=2, n_max=120)
    assert result['holds'], result


def test_ratio_sequence_rejects_an_empty_level():
    g = graph_from_adjacency([[0, 0], [1, 0]])
    with pytest.raises(HypothesisError) as info:
        ratio_sequence(g, ("e1_0_0",), 20)
    assert info.value.vertex == 'v1'


def test_assumption_fails_upstream_of_a_source():
    report = assumption_one_check(graph_from_adjacency([[0, 0], [1, 0]]), k_max=1, n_max=40)
    assert not report.holds
    (element,) = report.elements
    assert element.convergence == UNDEFINED
    assert "'v1'" in element.reason
    assert report.to_dict()['elements'][0]['reason'] == element.reason


def test_phi_infinity_needs_the_assumption():
    g = graph_from_adjacency([[0, 0], [1, 0]])
    with pytest.raises(AssumptionError):
        phi_infinity(g, ("e1_0_0",), ("e1_0_0",), n_max=40)
    with pytest.raises(AssumptionError):
        phi_infinity(g, ("e1_0_0",), ("@v1",), n_max=40)
    assert phi_infinity(g, ("@v0",), ("@v0",)) == {'v0': 1, 'v1': 0}
