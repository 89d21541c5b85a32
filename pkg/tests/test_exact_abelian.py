from itertools import combinations
from math import gcd

import numpy as np
import pytest
import sympy

from errors import IllDefinedHomError
from exact_abelian import (
    FgAbGroup, GroupHom, HomConstraint, ProjectionDatum, check_well_defined, cokernel, compose,
    free_group, group_from_dict, homs_equal, identity, int_matrix, integer_determinant,
    is_exact, is_injective, is_isomorphism, is_surjective, kernel, kernel_group, matmul,
    smith_decompose, solve_hom_constraints, solve_integer_system, transpose_projection_class,
)


def _determinantal_divisors(M) -> list:
    """Elementary divisors as ratios of gcds of k×k minors."""
    S = sympy.Matrix(M)
    m, n = S.shape
    divisors, previous = [], 1
    for k in range(1, min(m, n) + 1):
        g = 0
        for rows in combinations(range(m), k):
            for cols in combinations(range(n), k):
                g = gcd(g, int(S.extract(list(rows), list(cols)).det()))
        if g == 0:
            break
        divisors.append(g // previous)
        previous = g
    return divisors


def test_smith_form_of_small_matrix():
    S = smith_decompose([[2, 4], [6, 8]])
    assert S.diagonal() == [2, 4]
    assert S.rank == 2


def test_smith_decomposition_is_consistent(rng):
    for _ in range(20):
        M = int_matrix(rng.integers(-6, 7, size=(3, 4)).tolist())
        S = smith_decompose(M)
        assert (matmul(matmul(S.U, M), S.V) == S.D).all()
        assert (matmul(S.U, S.U_inv) == identity(3)).all()
        assert (matmul(S.V, S.V_inv) == identity(4)).all()
        divisors = S.elementary_divisors()
        assert all(b % a == 0 for a, b in zip(divisors, divisors[1:]))
        assert divisors == _determinantal_divisors(M.tolist())


def test_integer_determinant():
    assert integer_determinant([[2, 4], [6, 8]]) == -8
    assert integer_determinant([[1, 2, 3], [0, 1, 4], [5, 6, 0]]) == 1


def test_cokernel_canonical_form():
    G = cokernel([[2, 0], [0, 3]])
    assert G == FgAbGroup(0, (6,))
    assert str(G) == "Z/6"
    assert str(cokernel([[0]])) == "Z"
    assert str(cokernel(np.zeros((2, 0), dtype=object))) == "Z^2"
    assert str(cokernel([[1]])) == "0"
    assert cokernel([[2, 0], [0, 0]]) == FgAbGroup(1, (2,))


def test_invariant_factors_must_divide():
    with pytest.raises(ValueError):
        FgAbGroup(0, (2, 3))
    with pytest.raises(ValueError):
        FgAbGroup(0, (1,))
    assert group_from_dict({'free_rank': 1, 'torsion': [2, 4]}) == FgAbGroup(1, (2, 4))


def test_kernel_basis():
    K = kernel([[1, -1]])
    assert K.shape == (2, 1)
    assert abs(K[0, 0]) == 1 and K[0, 0] == K[1, 0]
    group, basis = kernel_group([[1, 1], [2, 2]])
    assert group == free_group(1)
    assert (matmul(int_matrix([[1, 1]]), basis) == 0).all()


def test_solve_integer_system():
    assert list(solve_integer_system([[2, 0], [0, 3]], [4, 9])) == [2, 3]
    assert solve_integer_system([[2]], [3]) is None
    assert solve_integer_system([[0, 0]], [1]) is None


def test_ill_defined_hom_reports_relation():
    h = GroupHom(FgAbGroup(0, (2,)), FgAbGroup(0, (3,)), int_matrix([[1]]), 'bad')
    with pytest.raises(IllDefinedHomError) as info:
        check_well_defined(h)
    assert info.value.relation_index == 0

    check_well_defined(GroupHom(FgAbGroup(0, (2,)), FgAbGroup(0, (4,)), int_matrix([[2]])))


def test_hom_predicates():
    Z = free_group(1)
    assert is_isomorphism(GroupHom(Z, Z, int_matrix([[-1]])))
    doubling = GroupHom(Z, Z, int_matrix([[2]]))
    assert is_injective(doubling)
    assert not is_surjective(doubling)

    Z2 = FgAbGroup(0, (2,))
    assert homs_equal(GroupHom(Z, Z2, int_matrix([[1]])), GroupHom(Z, Z2, int_matrix([[3]])))


def test_exactness():
    Z = free_group(1)
    Z2 = FgAbGroup(0, (2,))
    quotient = GroupHom(Z, Z2, int_matrix([[1]]))
    assert is_exact(GroupHom(Z, Z, int_matrix([[2]])), quotient)
    assert not is_exact(GroupHom(Z, Z, int_matrix([[4]])), quotient)
    assert not is_exact(GroupHom(Z, Z, int_matrix([[1]])), quotient)


def test_solve_hom_constraints():
    Z = free_group(1)
    doubling = GroupHom(Z, Z, int_matrix([[2]]))
    X = solve_hom_constraints(Z, Z, [HomConstraint(GroupHom(Z, Z, int_matrix([[4]])), right=doubling)])
    assert X is not None and X.matrix.tolist() == [[2]]

    assert solve_hom_constraints(Z, Z, [HomConstraint(GroupHom(Z, Z, int_matrix([[3]])), right=doubling)]) is None


def test_solve_hom_constraints_modulo_torsion():
    Z = free_group(1)
    Z4 = FgAbGroup(0, (4,))
    doubling = GroupHom(Z, Z, int_matrix([[2]]))
    target = GroupHom(Z, Z4, int_matrix([[2]]))
    X = solve_hom_constraints(Z, Z4, [HomConstraint(target, right=doubling)])
    assert X is not None
    assert homs_equal(compose(X, doubling), target)


def test_transpose_projection_class():
    p = ProjectionDatum(int_matrix([[1, 1], [0, 0]]), 'A')
    assert p.is_idempotent()
    q = transpose_projection_class(p)
    assert q.algebra == 'A^op'
    assert q.matrix.tolist() == [[1, 0], [1, 0]]
    assert q.is_idempotent()
    assert transpose_projection_class(q).algebra == 'A'
