"""
K-theory and K-homology of graph Cuntz–Pimsner algebras through the six-term sequence
over A = C(G⁰), the Dirac/Bott data (μ, β) of A, the three cap products against the
edge module and its two dual candidates, and the K-data of those dual algebras.

With A = C(G⁰) we have K₀(A) = K⁰(A) = ℤ^{G⁰} and K₁(A) = K¹(A) = 0, so each hexagon
collapses to a four-term exact sequence

    0 → K₁(𝒪) → ℤⁿ --(I − Aᵀ)--> ℤⁿ → K₀(𝒪) → 0        (K-theory)
    0 → K⁰(𝒪) → ℤⁿ --(I − A)---> ℤⁿ → K¹(𝒪) → 0        (K-homology)
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple

import numpy as np

from errors import HypothesisError
from exact_abelian import (
    IntMatrix, FgAbGroup, GroupHom, ProjectionDatum, cokernel, kernel_group, identity,
    matmul, int_matrix, free_group, transpose_projection_class, matrix_to_list,
)
from graph_core import DirectedGraph, adjacency, opposite_graph, dual_graph, predicates

EOP = 'Eop'
EBAR_OP = 'EbarOp'
DUAL_CHOICES = (EOP, EBAR_OP)

# Parity of (μ, β) for A = C(G⁰); the Cuntz–Pimsner duality classes have parity d + 1.
PAIRING_DEGREE = 0


@dataclass(frozen=True, eq=False)
class KData:
    """
    Groups and maps of one collapsed hexagon.

    For K-theory (variance='theory'): k0 = K₀(𝒪), k1 = K₁(𝒪), iota0: K₀(A) → K₀(𝒪) is the
    quotient map and boundary1: K₁(𝒪) → K₀(A) is the kernel inclusion.
    For K-homology (variance='homology'): k0 = K⁰(𝒪), k1 = K¹(𝒪), iota0: K⁰(𝒪) → K⁰(A) is
    the restriction (kernel inclusion) and boundary1: K⁰(A) → K¹(𝒪) is the quotient map.
    """
    label: str
    variance: str
    k0: FgAbGroup
    k1: FgAbGroup
    iota0: GroupHom
    boundary1: GroupHom
    presentation: IntMatrix
    base: FgAbGroup
    generator_classes: Tuple[ProjectionDatum, ...] = field(default=(), repr=False)

    @property
    def inclusion(self) -> GroupHom:
        """The kernel inclusion into ℤⁿ (odd K-theory group, even K-homology group)."""
        return self.boundary1 if self.variance == 'theory' else self.iota0

    @property
    def quotient(self) -> GroupHom:
        """The quotient map out of ℤⁿ."""
        return self.iota0 if self.variance == 'theory' else self.boundary1

    @property
    def middle(self) -> GroupHom:
        return GroupHom(self.base, self.base, self.presentation, f"pres({self.label})")

    def to_dict(self) -> Dict[str, Any]:
        even, odd = ('K0', 'K1') if self.variance == 'theory' else ('K^0', 'K^1')
        return {
            'algebra': self.label,
            'variance': self.variance,
            even: self.k0.to_dict(),
            odd: self.k1.to_dict(),
            'maps': {
                'presentation': matrix_to_list(self.presentation),
                'iota0': matrix_to_list(self.iota0.normalized().matrix),
                'boundary1': matrix_to_list(self.boundary1.normalized().matrix),
            },
        }


@dataclass(frozen=True, eq=False)
class PairingData:
    mu_matrix: IntMatrix
    beta_matrix: IntMatrix
    degree: int = PAIRING_DEGREE

    def realizes_identity(self) -> bool:
        """β ⊗_A μ and β ⊗_{A^op} μ both equal the identity at matrix level."""
        n = self.mu_matrix.shape[0]
        left = matmul(self.beta_matrix, self.mu_matrix)
        right = matmul(self.beta_matrix.T, self.mu_matrix.T)
        return bool((left == identity(n)).all() and (right == identity(n)).all())


@dataclass(frozen=True, eq=False)
class CapProducts:
    """The six adjacency forms in (range, source) indexing, with their equality verdicts."""
    matrices: Dict[str, IntMatrix]
    verdicts: Dict[str, Optional[bool]]
    notes: Tuple[str, ...] = ()

    def all_hold(self) -> bool:
        return all(v is not False for v in self.verdicts.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'matrices': {k: matrix_to_list(v) for k, v in self.matrices.items()},
            'verdicts': dict(self.verdicts),
            'notes': list(self.notes),
        }


# --- Hypotheses ---

def require_no_sources(g: DirectedGraph, purpose: str = ''):
    preds = predicates(g)
    if preds.has_sources:
        raise HypothesisError(
            f"Graph '{g.name}' has a source at vertex '{preds.sources[0]}'"
            f"{' (' + purpose + ')' if purpose else ''}: the left action is not injective",
            vertex=preds.sources[0])


def require_no_sinks(g: DirectedGraph, purpose: str = ''):
    preds = predicates(g)
    if preds.has_sinks:
        raise HypothesisError(
            f"Graph '{g.name}' has a sink at vertex '{preds.sinks[0]}'"
            f"{' (' + purpose + ')' if purpose else ''}: the opposite module has a non-injective left action",
            vertex=preds.sinks[0])


# --- Six-term sequences ---

def _hexagon(label: str, variance: str, M: IntMatrix) -> KData:
    n = M.shape[0]
    base = free_group(n)
    coker = cokernel(M)
    ker, incl = kernel_group(M)
    quot = GroupHom(base, coker, coker.witness.quotient, f"quot({label})").normalized()
    inc = GroupHom(ker, base, incl, f"incl({label})")
    units = tuple(ProjectionDatum(int_matrix([[1]]), algebra=label) for _ in range(n))
    if variance == 'theory':
        return KData(label, variance, k0=coker, k1=ker, iota0=quot, boundary1=inc,
                     presentation=M, base=base, generator_classes=units)
    return KData(label, variance, k0=ker, k1=coker, iota0=inc, boundary1=quot,
                 presentation=M, base=base, generator_classes=units)


def cp_k_theory(g: DirectedGraph) -> KData:
    """K₀(𝒪_E) = coker(I − Aᵀ), K₁(𝒪_E) = ker(I − Aᵀ)."""
    require_no_sources(g, 'K-theory of O_E')
    A = adjacency(g)
    return _hexagon(f"O({g.name})", 'theory', identity(g.n) - A.T)


def cp_k_homology(g: DirectedGraph) -> KData:
    """K⁰(𝒪_E) = ker(I − A), K¹(𝒪_E) = coker(I − A)."""
    require_no_sources(g, 'K-homology of O_E')
    A = adjacency(g)
    return _hexagon(f"O({g.name})", 'homology', identity(g.n) - A)


def transpose_k_data(kd: KData, label: str) -> KData:
    """
    The transpose functor KK(A, B) → KK(A^op, B^op) on presentation data: generator classes
    [p^op] go to [p^T] and the presentation matrix is transposed.
    """
    flipped = _hexagon(label, kd.variance, kd.presentation.T.copy())
    classes = tuple(transpose_projection_class(p) for p in kd.generator_classes)
    return KData(flipped.label, flipped.variance, flipped.k0, flipped.k1, flipped.iota0,
                 flipped.boundary1, flipped.presentation, flipped.base, classes)


def dual_k_data(g: DirectedGraph, choice: str) -> KData:
    """K-theory of the dual candidate: 𝒪_{E^op} (choice Eop) or 𝒪_E^op ≅ 𝒪_{Ē^op} (choice EbarOp)."""
    if choice == EOP:
        require_no_sinks(g, 'E^op needs an injective left action')
        kd = cp_k_theory(opposite_graph(g))
        return KData(f"O({g.name}^op)", kd.variance, kd.k0, kd.k1, kd.iota0, kd.boundary1,
                     kd.presentation, kd.base, kd.generator_classes)
    if choice == EBAR_OP:
        require_no_sources(g, 'Ebar^op needs an injective left action')
        return transpose_k_data(cp_k_theory(g), f"O({g.name})^op")
    raise ValueError(f"Unknown dual choice: {choice!r} (expected one of {DUAL_CHOICES})")


def pairing_data(g: DirectedGraph) -> PairingData:
    """μ = Σ_v [δ_v ⊗ δ_v^op]-pairing and β = Σ_v [δ_v] ⊗ [δ_v^op]: identities in the vertex basis."""
    return PairingData(mu_matrix=identity(g.n), beta_matrix=identity(g.n))


# --- Cap products ---

@dataclass(frozen=True, eq=False)
class VertexBimodule:
    """A bimodule over C(G⁰) on a finite basis: δ_v acts by the 0/1 diagonals left[v], right[v]."""
    label: str
    basis: Tuple[str, ...]
    left: Dict[str, np.ndarray]
    right: Dict[str, np.ndarray]


def edge_module(g: DirectedGraph, label: str = '') -> VertexBimodule:
    """ℓ²(edges) with (a·ξ·b)(e) = a(r(e)) ξ(e) b(s(e))."""
    def action(end: str) -> Dict[str, np.ndarray]:
        return {v: np.diag([1 if getattr(e, end) == v else 0 for e in g.edges]) for v in g.vertices}
    return VertexBimodule(label or g.name, tuple(e.name for e in g.edges), action('dst'), action('src'))


def conjugate_module(m: VertexBimodule) -> VertexBimodule:
    """a·ξ̄ = (ξ·a*)‾: the conjugate module acts on the left through the old right action."""
    return VertexBimodule(f"{m.label}-bar", m.basis, dict(m.right), dict(m.left))


def opposite_module(m: VertexBimodule) -> VertexBimodule:
    """a^op·ξ^op = (ξ·a)^op: the opposite module over A^op swaps the two actions."""
    return VertexBimodule(f"{m.label}^op", m.basis, dict(m.right), dict(m.left))


def mu_form(m: VertexBimodule, vertices: Tuple[str, ...]) -> IntMatrix:
    """[m] ⊗ μ: entry (u, w) is the rank of δ_u·m·δ_w."""
    return int_matrix([[int(np.trace(m.left[u] @ m.right[w])) for w in vertices] for u in vertices])


def beta_form(m: VertexBimodule, vertices: Tuple[str, ...], leg: str = 'left') -> IntMatrix:
    """
    β ⊗ [m] with β = Σ_x [δ_x] ⊗ [δ_x^op]: row x is δ_x·m when the A-leg is absorbed on the left
    (m·δ_x on the right), split by the remaining action.
    """
    if leg not in ('left', 'right'):
        raise ValueError(f"leg must be 'left' or 'right', got {leg!r}")
    absorb, remaining = (m.left, m.right) if leg == 'left' else (m.right, m.left)
    rows = []
    for x in vertices:
        piece = absorb[x]
        rows.append([int(np.trace(piece @ remaining[w] @ piece)) for w in vertices])
    return int_matrix(rows)


def cap_products(g: DirectedGraph) -> CapProducts:
    """
    Each product is read off the actions of its own module. E is ℓ²(edges) of g; E^op is the
    edge module of the opposite graph, an A^op-bimodule paired with μ on A^op ⊗ A and so read
    back transposed; Ē^op is the opposite of the conjugate of E. Every form is reported in
    (range, source) indexing.
    """
    require_no_sources(g, 'cap products')
    preds = predicates(g)
    vertices = g.vertices
    matrices: Dict[str, IntMatrix] = {}
    notes: List[str] = []

    e_module = edge_module(g, 'E')
    matrices['E_mu'] = mu_form(e_module, vertices)
    matrices['beta_E'] = beta_form(e_module, vertices)

    ebar_op = opposite_module(conjugate_module(e_module))
    matrices['Ebarop_mu'] = mu_form(ebar_op, vertices)
    matrices['beta_Ebarop'] = beta_form(ebar_op, vertices)

    if preds.has_sinks:
        notes.append(f"E^op products skipped: sink at '{preds.sinks[0]}'")
    else:
        e_op = edge_module(opposite_graph(g), 'E^op')
        matrices['Eop_mu'] = mu_form(e_op, vertices).T.copy()
        matrices['beta_Eop'] = beta_form(e_op, vertices, leg='right')

    def same(a: str, b: str) -> Optional[bool]:
        if a not in matrices or b not in matrices:
            return None
        return bool((matrices[a] == matrices[b]).all())

    verdicts = {
        'E_mu == Ebarop_mu': same('E_mu', 'Ebarop_mu'),
        'E_mu == Eop_mu': same('E_mu', 'Eop_mu'),
        'beta_E == beta_Ebarop': same('beta_E', 'beta_Ebarop'),
        'beta_E == beta_Eop': same('beta_E', 'beta_Eop'),
    }
    return CapProducts(matrices=matrices, verdicts=verdicts, notes=tuple(notes))


def dual_mu_key(choice: str) -> str:
    return 'Eop_mu' if choice == EOP else 'Ebarop_mu'


def dual_beta_key(choice: str) -> str:
    return 'beta_Eop' if choice == EOP else 'beta_Ebarop'


# --- Invariance ---

def dual_graph_invariance(g: DirectedGraph) -> Dict[str, Any]:
    """K-theory of g against K-theory of its line graph (the algebras are isomorphic)."""
    original = cp_k_theory(g)
    line = cp_k_theory(dual_graph(g))
    return {
        'K0': str(original.k0),
        'K1': str(original.k1),
        'dual_graph_vertices': len(g.edges),
        'K0_match': original.k0 == line.k0,
        'K1_match': original.k1 == line.k1,
    }


def euler_characteristic(kd: KData) -> int:
    return kd.k0.free_rank - kd.k1.free_rank


def k_summary(kd: KData) -> Dict[str, str]:
    even, odd = ('K0', 'K1') if kd.variance == 'theory' else ('K^0', 'K^1')
    return {'algebra': kd.label, even: str(kd.k0), odd: str(kd.k1)}
