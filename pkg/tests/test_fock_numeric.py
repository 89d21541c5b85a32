import dataclasses
import math

import numpy as np
import pytest
import scipy.sparse as sp

from errors import BasisCapError, HypothesisError, SuperStrongError
from fock_numeric import (
    ConjugateOpWeights, PhiWeights, build_fock_rep, build_kp_projection, build_w_ew, build_xi_gram,
    commutator_decay, conjugate_gram_equality, conjugate_op_graph, fock_dimension,
    fredholm_index_compressed, homotopy_pt_check, kp_adjoint_deviation, max_abs, phi_word,
    phi_word_conjugate, spectral_norm, split_path, symbolic_ew_identity,
)
from graph_core import graph_from_adjacency, vertex_path
from pimsner_k import EBAR_OP, EOP


@pytest.mark.parametrize("name, L, dim", [("loop", 4, 5), ("o2", 3, 15), ("example24", 2, 14), ("o3", 2, 13)])
def test_fock_dimension(load, name, L, dim):
    g = load(name)
    assert fock_dimension(g, L) == dim
    assert build_fock_rep(g, L).dim == dim


def test_fock_rep_bounds(load):
    with pytest.raises(ValueError):
        build_fock_rep(load("o2"), 1)
    with pytest.raises(BasisCapError):
        build_fock_rep(load("o3"), 6, basis_cap=100)


@pytest.mark.parametrize("name", ["loop", "o2", "suq2", "example24", "fibonacci"])
def test_cuntz_krieger_relations_hold_on_the_interior(load, name):
    rep = build_fock_rep(load(name), 4)
    assert rep.self_test == {'isometry_relations': 0.0, 'range_sums': 0.0, 'frame_identity': 0.0}


def test_creation_operators_are_nilpotent_on_the_truncation(load):
    rep = build_fock_rep(load("loop"), 4)
    T = rep.T("e")
    power = T
    for _ in range(4):
        power = power @ T
    assert max_abs(power) == 0.0
    assert max_abs(T @ rep.vacuum()) == 1.0


@pytest.mark.parametrize("name", ["loop", "o2", "example24"])
def test_w_and_ew_identities(load, name):
    rep = build_fock_rep(load(name), 5)
    report = build_w_ew(rep)
    assert report.w_star_w_residual == 0.0
    assert report.vacuum_defect == 0.0
    assert report.q_residual == 0.0
    assert max(report.ew_residuals.values()) < 1e-12
    assert report.commutation_residual < 1e-12
    assert report.symbolic_identity


def test_ew_defect_lives_on_the_vacuum(load):
    report = build_w_ew(build_fock_rep(load("o2"), 4), t_samples=(0.0, 1.0, 2.0))
    assert report.ew_vacuum_terms[0.0] == pytest.approx(0.0, abs=1e-14)
    assert report.ew_vacuum_terms[1.0] == pytest.approx(0.25)
    assert report.ew_vacuum_terms[2.0] == pytest.approx(4.0 / 25.0)


def test_only_the_edge_frame_is_supported(load):
    with pytest.raises(ValueError):
        build_w_ew(build_fock_rep(load("loop"), 3), frame='vertices')


def test_symbolic_ew_identity():
    assert symbolic_ew_identity()


@pytest.mark.parametrize("name, L", [("loop", 4), ("o2", 6), ("o3", 5), ("k2full", 4), ("example24", 4)])
def test_index_equals_vertex_count(load, name, L):
    g = load(name)
    result = fredholm_index_compressed(build_fock_rep(g, L))
    assert result.index == g.n
    assert result.kk_pairing == -g.n
    assert result.cokernel_dim == 0
    assert result.kernel_by_vertex == {v: 1 for v in g.vertices}
    assert result.stable


def test_index_stability_respects_the_basis_cap(load):
    g = load("o3")
    result = fredholm_index_compressed(build_fock_rep(g, 4), basis_cap=200)
    assert result.index == 1
    assert result.stable is None


@pytest.mark.parametrize("name, dual", [("loop", EOP), ("o2", EOP), ("o2", EBAR_OP), ("k2full", EBAR_OP),
                                        ("example24", EOP)])
def test_kp_projection_is_an_isometry(load, name, dual):
    kp = build_kp_projection(load(name), 5, dual, n_max=80)
    assert kp.isometry_defect < 1e-10
    assert kp.projection_residual < 1e-10
    assert kp.symmetry_residual < 1e-10
    assert kp.adjoint_deviation < 1e-10
    for l, norm in kp.level_commutators.items():
        assert norm == pytest.approx(1.0 / math.sqrt(l + 2), abs=1e-10)


class _InflatedPhiWeights(PhiWeights):
    def q(self, alpha):
        return 1.1 * super().q(alpha)


@pytest.mark.parametrize("name, dual", [("fibonacci", EOP), ("example24", EOP), ("k2full", EBAR_OP)])
def test_kp_adjoint_on_extended_vectors(load, name, dual):
    g = load(name)
    kp = build_kp_projection(g, 4, dual, n_max=80)
    assert kp_adjoint_deviation(g, kp, cutoff=2, extension=2, n_max=80) < 1e-10


def test_kp_adjoint_detects_wrong_weights(load):
    g = load("fibonacci")
    kp = build_kp_projection(g, 4, EOP, n_max=80)
    assert PhiWeights(g, n_max=80).q(("e",)) != pytest.approx(1.0)
    inflated = _InflatedPhiWeights(g, n_max=80)
    assert kp_adjoint_deviation(g, kp, n_max=80, weights=inflated) > 1e-3


def test_kp_adjoint_detects_a_wrong_isometry(load):
    g = load("example24")
    kp = build_kp_projection(g, 4, EOP, n_max=80)
    V = kp.V.tolil()
    V[0, 0] *= 2
    broken = dataclasses.replace(kp, V=V.tocsr())
    assert kp_adjoint_deviation(g, broken, n_max=80) > 0.5


def test_kp_projection_hypotheses(load):
    with pytest.raises(HypothesisError):
        build_kp_projection(graph_from_adjacency([[1, 0], [1, 0]]), 4, EOP, n_max=40)
    with pytest.raises(SuperStrongError) as info:
        build_kp_projection(load("suq2"), 4, EBAR_OP, k_max=1)
    assert info.value.witness[2] == 'v'
    with pytest.raises(ValueError):
        build_kp_projection(load("o2"), 4, 'E')


def test_split_path(load):
    g = load("example24")
    assert split_path(g, ("e1", "f", "g"), 0) == (vertex_path("v"), ("e1", "f", "g"))
    assert split_path(g, ("e1", "f", "g"), 1) == (("e1",), ("f", "g"))
    assert split_path(g, ("e1", "f", "g"), 3) == (("e1", "f", "g"), vertex_path("w"))


def test_commutator_decay_follows_the_exact_rate(load):
    rows = commutator_decay(load("o2"), "e1", [8, 16, 32])
    by_level = {row['level']: row for row in rows}
    for l, row in by_level.items():
        assert row['norm'] == pytest.approx(1.0 / math.sqrt(l + 2), abs=1e-12)
        assert row['ratio_to_exact_rate'] == pytest.approx(1.0)
        assert row['sampled']
        assert row['tail_norm'] < row['norm']
    assert by_level[8]['ratio_to_sqrt_2_over_l'] == pytest.approx(math.sqrt(8 / 20), rel=1e-9)
    assert by_level[32]['norm'] / by_level[8]['norm'] == pytest.approx(math.sqrt(10 / 34))


def test_commutator_decay_on_the_loop_is_not_zero(load):
    rows = commutator_decay(load("loop"), "e", [0, 1, 2], L=4)
    assert [row['norm'] for row in rows] == pytest.approx([1 / math.sqrt(2), 1 / math.sqrt(3), 0.5])
    assert rows[0]['ratio_to_sqrt_2_over_l'] is None
    assert not rows[0]['sampled']


def test_commutator_decay_right_side(load):
    rows = commutator_decay(load("k2full"), "ab", [4], side='right', dual=EBAR_OP, n_max=60)
    assert rows[0]['norm'] == pytest.approx(1.0 / math.sqrt(6))


def test_commutator_decay_arguments(load):
    g = load("o2")
    assert commutator_decay(g, "e1", []) == []
    with pytest.raises(ValueError):
        commutator_decay(g, "e1", [8], L=6)
    with pytest.raises(ValueError):
        commutator_decay(g, "e1", [2], side='middle')


def test_phi_word_reduces_products(load):
    g = load("o2")
    weights = PhiWeights(g, n_max=40)
    v = vertex_path("v")
    assert phi_word(g, weights, v, ("e1",), ("e1", "e2"), ("e2",)) == pytest.approx(0.5)
    assert phi_word(g, weights, v, ("e1",), ("e2",), v) == 0.0
    assert phi_word(g, weights, ("e2",), ("e1", "e2"), ("e1",), v) == pytest.approx(0.5)


def test_xi_gram_factorizes(load):
    xi = build_xi_gram(load("o2"), alpha_cutoff=2, beta_cutoff=1, weights=PhiWeights(load("o2"), n_max=40))
    assert np.allclose(xi.gram, xi.gram.T)
    assert np.allclose(xi.coords.T @ xi.coords, xi.gram, atol=1e-8)
    assert xi.rank + xi.dropped == len(xi.labels)
    assert xi.fock_subgram_defect() == pytest.approx(0.0, abs=1e-12)
    assert not xi.null_vectors


def test_xi_gram_reports_zero_norm_vectors(load):
    xi = build_xi_gram(load("suq2"), alpha_cutoff=1, beta_cutoff=1, weights=PhiWeights(load("suq2"), n_max=200))
    assert ((("f",), ("f",))) in xi.null_vectors


def test_homotopy_through_projections(load):
    result = homotopy_pt_check(load("o2"), 4, n_max=40)
    assert result['max_residual'] < 1e-8
    assert result['endpoint_zero_distance'] < 1e-10
    assert result['endpoint_large_distance'] < 1e-2
    assert result['y_isometry_defect'] < 1e-10
    assert result['fock_subgram_defect'] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["o2", "fibonacci"])
def test_conjugate_gram_equality(load, name):
    assert conjugate_gram_equality(load(name), cutoff=2, n_max=80) < 1e-12


class _InflatedConjugateWeights(ConjugateOpWeights):
    def q(self, word):
        return 1.1 * super().q(word)


@pytest.mark.parametrize("name", ["o2", "fibonacci"])
def test_conjugate_gram_detects_wrong_weights(load, name):
    g = load(name)
    inflated = _InflatedConjugateWeights(conjugate_op_graph(g), n_max=80)
    assert conjugate_gram_equality(g, cutoff=2, n_max=80, conjugate_weights=inflated) > 1e-3


def test_conjugate_words_cancel_from_the_right(load):
    g = load("o2")
    gbar = conjugate_op_graph(g)
    assert gbar.name == "o2-bar^op"
    cw = ConjugateOpWeights(gbar, n_max=40)
    w = PhiWeights(g, n_max=40)
    a, b, c, d = ("e2",), ("e2", "e1"), ("e1",), vertex_path("v")
    assert phi_word_conjugate(gbar, cw, a, b, c, d) == pytest.approx(0.5)
    assert phi_word(g, w, a, b, c, d) == 0.0
    assert phi_word(g, w, d, c, ("e1", "e2"), ("e2",)) == pytest.approx(0.5)


def test_spectral_norm_paths():
    M = np.diag([3.0, 1.0])
    assert spectral_norm(M) == pytest.approx(3.0)
    rng = np.random.default_rng(0)
    rows, cols = rng.integers(0, 2000, size=(2, 4000))
    S = sp.csr_matrix((rng.standard_normal(4000), (rows, cols)), shape=(2000, 2000))
    assert spectral_norm(S) == pytest.approx(np.linalg.norm(S.toarray(), 2), rel=1e-6)
    assert spectral_norm(sp.csr_matrix((5, 5))) == 0.0
