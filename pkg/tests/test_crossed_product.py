import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from crossed_product import (
    build_graded_truncation, build_nsharpd, commutator_scaling, ext_index_pairing, parse_theta,
    parse_word, phase, rotation_delta_components, rotation_ew_exact, truncation_invariants,
    word_matrix, word_to_str,
)
from fock_numeric import max_abs


def test_parse_theta():
    assert parse_theta("3/10") == Fraction(3, 10)
    assert parse_theta("0.3") == Fraction(3, 10)
    assert parse_theta("1e-3") == Fraction(1, 1000)
    with pytest.raises(ValueError):
        parse_theta("abc")


def test_parse_word():
    assert parse_word("U^2 W z^-1") == [('U', 2), ('W', 1), ('z', -1)]
    assert parse_word("U*U") == [('U', 1), ('U', 1)]
    assert parse_word("U^(-3)") == [('U', -3)]
    assert word_to_str(parse_word("U^2 W")) == "U^2 W"
    with pytest.raises(ValueError):
        parse_word("X")
    with pytest.raises(ValueError):
        parse_word("   ")


def test_phase_reduces_rational_angles():
    assert phase(Fraction(1, 4), 1) == pytest.approx(1j)
    assert phase(Fraction(1, 4), 5) == pytest.approx(1j)
    assert phase(0.5, 1) == pytest.approx(-1)


def test_truncation_layout():
    trunc = build_graded_truncation(8, 8, Fraction(3, 10))
    assert trunc.dim == 17 * 8
    assert list(trunc.fourier) == list(range(-4, 4))
    assert trunc.position(-8, -4) == 0
    assert trunc.W.diagonal()[trunc.position(0, 1)] == pytest.approx(cmath.exp(2j * math.pi * 0.3))
    assert list(build_graded_truncation(4).fourier) == [0]


def test_truncation_arguments():
    with pytest.raises(ValueError):
        build_graded_truncation(3)
    with pytest.raises(ValueError):
        build_graded_truncation(8, 0)


def test_truncation_invariants():
    invariants = truncation_invariants(build_graded_truncation(8, 8, Fraction(3, 10)))
    assert set(invariants) >= {'U_unitary', 'N_U_commutator', 'z_unitary', 'covariance'}
    assert max(invariants.values()) < 1e-12
    assert set(truncation_invariants(build_graded_truncation(8))) == {
        'U_unitary', 'N_U_commutator', 'N_W_commutator', 'W_unitary'}


def test_word_matrix_inverse_letters():
    trunc = build_graded_truncation(6, 4, Fraction(1, 7))
    assert max_abs(word_matrix(trunc, parse_word("U^-1")) - trunc.U.conj().T) == 0.0
    assert max_abs(word_matrix(trunc, parse_word("z z")) - trunc.Z @ trunc.Z) == 0.0


@pytest.mark.parametrize("word, expected", [("U", -1), ("U^2", -2), ("U^-1", 1), ("W", 0)])
def test_pairing_with_the_extension(word, expected):
    result = ext_index_pairing(build_graded_truncation(16), word)
    assert result.normalized_index == expected
    assert result.stable


def test_pairing_is_additive_in_powers_of_u():
    trunc = build_graded_truncation(16)
    one = ext_index_pairing(trunc, "U").normalized_index
    for k in range(1, 4):
        assert ext_index_pairing(trunc, f"U^{k}").normalized_index == k * one


def test_pairing_certifies_kernel_and_cokernel():
    result = ext_index_pairing(build_graded_truncation(16), "U")
    assert (result.kernel_dim, result.cokernel_dim) == (0, 1)


def test_rotation_generators_against_both_gradings():
    trunc = build_graded_truncation(16, 8, Fraction(3, 10))
    assert ext_index_pairing(trunc, "z", 'N').normalized_index == 0
    assert ext_index_pairing(trunc, "W", 'N').normalized_index == 0
    circle = ext_index_pairing(trunc, "z", 'D')
    assert circle.normalized_index == -1
    assert circle.fiber_dim == 33
    assert circle.stable
    assert ext_index_pairing(trunc, "z", 'D', transpose=True).normalized_index == 1
    assert ext_index_pairing(trunc, "U", 'N', transpose=True).normalized_index == 1


def test_pairing_window_errors():
    with pytest.raises(ValueError):
        ext_index_pairing(build_graded_truncation(4), "U^5")
    with pytest.raises(ValueError):
        ext_index_pairing(build_graded_truncation(8, 1), "z")
    with pytest.raises(ValueError):
        ext_index_pairing(build_graded_truncation(8), "U", grading='Q')


def test_nsharpd():
    report = build_nsharpd(build_graded_truncation(16, 8))
    assert report.self_adjoint_residual == 0.0
    assert report.anticommutator_residual == 0.0
    assert report.commutators['U'] == pytest.approx(1.0, abs=1e-9)
    assert report.commutators['z'] == pytest.approx(1.0, abs=1e-9)
    assert report.commutators['W'] == 0.0


def test_commutators_stay_bounded_as_the_window_grows():
    scaling = commutator_scaling(modes=4, windows=(8, 16, 32))
    assert scaling['max_variation']['U'] < 1e-9
    assert scaling['max_variation']['z'] < 1e-9
    assert scaling['max_variation']['W'] == 0.0


@pytest.mark.parametrize("t", [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(10)])
def test_rotation_ew_is_an_exact_projection(t):
    assert rotation_ew_exact(t)


def test_rotation_delta_components():
    report = rotation_delta_components(Fraction(1, 3), n_max=8, modes=6)
    assert [s['sign'] for s in report['summands']] == [1, 1, -1, -1]
    rows = {(r['summand'], r['factor']): r for r in report['pairing_table']}
    assert rows[(1, 'w')]['pairs_with_N'] == -1
    assert rows[(1, 'w')]['pairs_with_D'] == 0
    assert rows[(0, 'z')]['pairs_with_D'] == -1
    assert rows[(1, 'z^op')]['pairs_with_N'] == 0
    assert rows[(1, 'z^op')]['pairs_with_D'] == 1
    assert rows[(2, 'w^op')]['pairs_with_N'] == 1
    assert rows[(0, 'iota')]['pairs_with_N'] is None
    assert not rows[(3, 'W^op')]['nontrivial']
    assert all(report['ew_projection_exact'].values())
    assert max(report['invariants'].values()) < 1e-12
