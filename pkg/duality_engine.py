"""
Poincaré-duality ladder for graph Cuntz–Pimsner algebras.

The outer row is the K-theory sequence of the chosen dual algebra (𝒪_{E^op} or 𝒪_E^op),
the inner row is the K-homology sequence of 𝒪_E, and the rungs over the coefficient
algebra are the μ-maps. The dashed maps θ₀, θ₁ are solved for as an integer system and
then certified to be isomorphisms, which is the constructive content of the five lemma.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple

import console
import watatani
from errors import HypothesisError, LadderExactnessError, WorkbenchError
from exact_abelian import (
    IntMatrix, GroupHom, HomConstraint, compose, homs_equal, identity, int_matrix, is_exact,
    is_injective, is_surjective, is_isomorphism, scale_hom, solve_hom_constraints, matrix_to_list,
)
from graph_core import DirectedGraph, dual_graph, predicates
from pimsner_k import (
    EOP, EBAR_OP, DUAL_CHOICES, PAIRING_DEGREE, KData, CapProducts, cap_products, cp_k_homology,
    cp_k_theory, dual_k_data, dual_beta_key, dual_mu_key, pairing_data, dual_graph_invariance,
    require_no_sinks, require_no_sources,
)

DELTA = 'delta'            # δ, minus convention
DELTA_BAR = 'delta_bar'    # δ̄, plus convention
SIGNS = (DELTA, DELTA_BAR)


@dataclass(frozen=True, eq=False)
class SixTermLadder:
    graph_name: str
    choice: str
    outer: KData             # K-theory of the dual algebra
    inner: KData             # K-homology of O_E
    rung: GroupHom           # μ on ℤ^{G⁰}
    caps: CapProducts
    theta0: Optional[GroupHom] = None
    theta1: Optional[GroupHom] = None
    degree: int = PAIRING_DEGREE + 1

    def with_theta(self, theta0: GroupHom, theta1: GroupHom) -> 'SixTermLadder':
        return SixTermLadder(self.graph_name, self.choice, self.outer, self.inner, self.rung,
                             self.caps, theta0, theta1, self.degree)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'choice': self.choice,
            'outer': self.outer.to_dict(),
            'inner': self.inner.to_dict(),
            'rung': matrix_to_list(self.rung.matrix),
            'degree': self.degree,
        }


@dataclass
class LadderCheck:
    commutes: bool
    failing: List[str] = field(default_factory=list)
    checked: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'commutes': self.commutes, 'failing': list(self.failing), 'checked': list(self.checked)}


@dataclass
class ThetaResult:
    found: bool
    theta0: Optional[GroupHom] = None
    theta1: Optional[GroupHom] = None
    sign0: Optional[int] = None
    sign1: Optional[int] = None
    iso0: bool = False
    iso1: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.found and self.iso0 and self.iso1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'found': self.found,
            'certified': self.certified,
            'theta0': self.theta0.to_dict() if self.theta0 is not None else None,
            'theta1': self.theta1.to_dict() if self.theta1 is not None else None,
            'sign0': self.sign0,
            'sign1': self.sign1,
            'iso0': self.iso0,
            'iso1': self.iso1,
            'notes': list(self.notes),
        }


@dataclass(frozen=True)
class FormalKPClass:
    """Σ_g [S*_{e_g} ⊗ S_{f_g^op}], one summand per edge of the (possibly dual) graph."""
    summands: Tuple[str, ...]
    sign: str
    graph_name: str
    provenance: str = ''
    degree: int = PAIRING_DEGREE + 1

    def terms(self) -> List[str]:
        prefix = '-' if self.sign == DELTA else '+'
        return [f"{prefix}[S*_{e} (x) S_{e}^op]" for e in self.summands]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sign': self.sign,
            'graph': self.graph_name,
            'summands': list(self.summands),
            'count': len(self.summands),
            'provenance': self.provenance,
            'degree': self.degree,
        }


# --- Ladder construction ---

def _check_row_exact(kd: KData):
    incl, middle, quot = kd.inclusion, kd.middle, kd.quotient
    checks = {
        f"{kd.label}: inclusion injective": is_injective(incl),
        f"{kd.label}: exact at source copy": is_exact(incl, middle),
        f"{kd.label}: exact at range copy": is_exact(middle, quot),
        f"{kd.label}: quotient surjective": is_surjective(quot),
    }
    bad = [name for name, ok in checks.items() if not ok]
    if bad:
        raise LadderExactnessError(f"Hexagon not exact: {', '.join(bad)}")


def build_pd_diagram(g: DirectedGraph, choice: str = EOP, rung: Optional[IntMatrix] = None) -> SixTermLadder:
    """
    Populates the ladder for the chosen dual. `rung` replaces μ, which lets tests feed a
    deliberately wrong rung through check_ladder_commutes.
    """
    if choice not in DUAL_CHOICES:
        raise ValueError(f"Unknown dual choice: {choice!r}")
    caps = cap_products(g)
    outer = dual_k_data(g, choice)
    for key in ('E_mu', dual_mu_key(choice)), ('beta_E', dual_beta_key(choice)):
        a, b = key
        if not (caps.matrices[a] == caps.matrices[b]).all():
            raise HypothesisError(f"Cap products differ for {choice}: {a} != {b}")
    inner = cp_k_homology(g)

    mu = pairing_data(g).mu_matrix if rung is None else int_matrix(rung)
    rung_hom = GroupHom(inner.base, inner.base, mu, 'mu')
    _check_row_exact(outer)
    _check_row_exact(inner)
    return SixTermLadder(g.name, choice, outer, inner, rung_hom, caps)


def check_ladder_commutes(ladder: SixTermLadder) -> LadderCheck:
    """Exact verification of every solid square; failures are reported, not raised."""
    n = ladder.inner.base.ngens
    I = identity(n)
    mu = ladder.rung
    squares: Dict[str, bool] = {}

    squares['mu o (I - beta(x)[dual]) = (I - [E](x)mu) o mu'] = homs_equal(
        compose(mu, ladder.outer.middle), compose(ladder.inner.middle, mu))
    squares['outer presentation = I - beta(x)[dual]'] = bool(
        (ladder.outer.presentation == I - ladder.caps.matrices[dual_beta_key(ladder.choice)]).all())
    squares['inner presentation = I - [E](x)mu'] = bool(
        (ladder.inner.presentation == I - ladder.caps.matrices['E_mu']).all())

    if ladder.theta1 is not None:
        squares['incl_E o theta1 = +-mu o incl_dual'] = any(
            homs_equal(compose(ladder.inner.inclusion, ladder.theta1),
                       scale_hom(compose(mu, ladder.outer.inclusion), s)) for s in (1, -1))
    if ladder.theta0 is not None:
        squares['theta0 o quot_dual = +-quot_E o mu'] = any(
            homs_equal(compose(ladder.theta0, ladder.outer.quotient),
                       scale_hom(compose(ladder.inner.quotient, mu), s)) for s in (1, -1))

    failing = [name for name, ok in squares.items() if not ok]
    return LadderCheck(commutes=not failing, failing=failing, checked=list(squares))


def _solve_with_sign(build, domain, codomain, name: str) -> Tuple[Optional[GroupHom], Optional[int]]:
    for sign in (1, -1):
        theta = solve_hom_constraints(domain, codomain, [build(sign)], name=name)
        if theta is not None:
            return theta, sign
    return None, None


def solve_theta(ladder: SixTermLadder) -> ThetaResult:
    """
    θ₁: K₁(dual) → K⁰(𝒪_E) with incl_E∘θ₁ = σ₁·μ∘incl_dual, and
    θ₀: K₀(dual) → K¹(𝒪_E) with θ₀∘quot_dual = σ₀·quot_E∘μ.
    σ = +1 is tried before σ = −1; the sign that works is recorded.
    """
    check = check_ladder_commutes(ladder)
    if not check.commutes:
        return ThetaResult(found=False, notes=[f"ladder does not commute: {', '.join(check.failing)}"])

    outer, inner, mu = ladder.outer, ladder.inner, ladder.rung
    odd_target = compose(mu, outer.inclusion)
    even_target = compose(inner.quotient, mu)

    theta1, sign1 = _solve_with_sign(
        lambda s: HomConstraint(target=scale_hom(odd_target, s), left=inner.inclusion, label='odd rung'),
        outer.k1, inner.k0, 'theta1')
    theta0, sign0 = _solve_with_sign(
        lambda s: HomConstraint(target=scale_hom(even_target, s), right=outer.quotient, label='even rung'),
        outer.k0, inner.k1, 'theta0')

    notes: List[str] = []
    if theta1 is None:
        notes.append("no theta1 found")
    if theta0 is None:
        notes.append("no theta0 found")
    if notes:
        return ThetaResult(found=False, theta0=theta0, theta1=theta1, sign0=sign0, sign1=sign1, notes=notes)

    result = ThetaResult(found=True, theta0=theta0, theta1=theta1, sign0=sign0, sign1=sign1,
                         iso0=is_isomorphism(theta0), iso1=is_isomorphism(theta1))
    if not result.certified:
        result.notes.append("theta solves the constraints but is not an isomorphism")
    return result


# --- Fundamental classes ---

def kaminker_putnam_delta(g: DirectedGraph, sign: str = DELTA) -> FormalKPClass:
    if sign not in SIGNS:
        raise ValueError(f"Unknown sign tag: {sign!r}")
    require_no_sources(g, 'Kaminker-Putnam class')
    require_no_sinks(g, 'Kaminker-Putnam class')
    provenance = ''
    target = g
    if not predicates(g).at_most_one_edge_per_pair:
        target = dual_graph(g)
        provenance = f"'{g.name}' has parallel edges; built on its dual graph ({len(target.edges)} edges)"
    return FormalKPClass(
        summands=tuple(e.name for e in target.edges),
        sign=sign,
        graph_name=target.name,
        provenance=provenance,
    )


def verify_delta_ev_vanishes(g: DirectedGraph, sign: str = DELTA) -> IntMatrix:
    """β⊗[dual] − β⊗[E]: E^op for δ, Ē^op for δ̄. Zero whenever the cap products agree."""
    caps = cap_products(g)
    key = 'beta_Eop' if sign == DELTA else 'beta_Ebarop'
    if key not in caps.matrices:
        raise HypothesisError(f"'{g.name}': {key} unavailable ({'; '.join(caps.notes)})")
    return caps.matrices[key] - caps.matrices['beta_E']


def delta_difference_residual(g: DirectedGraph) -> Dict[str, Any]:
    """
    Induced-map shadow of (δ − δ̄)⊗[ext] = 0: the signed rung maps recovered through θ for the
    two dual choices, composed with the boundary legs, must agree.
    """
    results = {}
    for choice in DUAL_CHOICES:
        ladder = build_pd_diagram(g, choice)
        theta = solve_theta(ladder)
        if not theta.found:
            return {'available': False, 'reason': f"no theta for {choice}"}
        results[choice] = (ladder, theta)

    (lad_a, th_a), (lad_b, th_b) = results[EOP], results[EBAR_OP]
    if lad_a.outer.k1 != lad_b.outer.k1 or lad_a.outer.k0 != lad_b.outer.k0:
        return {'available': False, 'reason': 'dual K-data differ'}
    odd = (compose(lad_a.inner.inclusion, th_a.theta1).matrix
           - compose(lad_b.inner.inclusion, th_b.theta1).matrix)
    even = (compose(th_a.theta0, lad_a.outer.quotient).matrix
            - compose(th_b.theta0, lad_b.outer.quotient).matrix)
    even_zero = all(lad_a.inner.k1.contains_relation(even[:, j]) for j in range(even.shape[1]))
    return {
        'available': True,
        'odd_residual': matrix_to_list(odd),
        'even_residual': matrix_to_list(even),
        'vanishes': bool((odd == 0).all()) and even_zero,
    }


# --- Report ---

def _guard(fn, *args, **kwargs) -> Tuple[Any, Optional[str]]:
    try:
        return fn(*args, **kwargs), None
    except WorkbenchError as e:
        return None, str(e)


def pd_report(g: DirectedGraph, k_max: int = 2, n_max: int = 200) -> Dict[str, Any]:
    """Every duality check for one graph; individual failures are embedded, never raised."""
    preds = predicates(g)
    report: Dict[str, Any] = {
        'graph': g.name,
        'vertices': g.n,
        'edges': len(g.edges),
        'predicates': {
            'has_sources': preds.has_sources,
            'has_sinks': preds.has_sinks,
            'primitive': preds.primitive,
            'at_most_one_edge_per_pair': preds.at_most_one_edge_per_pair,
        },
    }
    checks: Dict[str, Optional[bool]] = {}

    k_theory, err = _guard(cp_k_theory, g)
    report['k_theory'] = k_theory.to_dict() if k_theory else {'error': err}
    k_homology, err = _guard(cp_k_homology, g)
    report['k_homology'] = k_homology.to_dict() if k_homology else {'error': err}
    if k_theory and k_homology:
        checks['K^0 torsion-free'] = k_homology.k0.is_torsion_free()
        checks['rank K^0 = rank K_1'] = k_homology.k0.free_rank == k_theory.k1.free_rank
        checks['rank K^1 = rank K_0'] = k_homology.k1.free_rank == k_theory.k0.free_rank
        checks['torsion K_0 = torsion K^1'] = k_theory.k0.torsion == k_homology.k1.torsion

    caps, err = _guard(cap_products, g)
    report['cap_products'] = caps.to_dict() if caps else {'error': err}
    if caps:
        checks['cap products agree'] = caps.all_hold()

    duals: Dict[str, Any] = {}
    dual_data: Dict[str, KData] = {}
    for choice in DUAL_CHOICES:
        entry: Dict[str, Any] = {}
        kd, err = _guard(dual_k_data, g, choice)
        if kd is None:
            entry['gate'] = err
            duals[choice] = entry
            continue
        dual_data[choice] = kd
        entry['k_theory'] = kd.to_dict()
        ladder, err = _guard(build_pd_diagram, g, choice)
        if ladder is None:
            entry['ladder_error'] = err
            checks[f'{choice}: ladder'] = False
        else:
            square_check = check_ladder_commutes(ladder)
            theta = solve_theta(ladder)
            entry['ladder'] = square_check.to_dict()
            entry['theta'] = theta.to_dict()
            checks[f'{choice}: ladder commutes'] = square_check.commutes
            checks[f'{choice}: theta certified'] = theta.certified
        if choice == EBAR_OP:
            ss, err = _guard(watatani.super_strong_check, g, k_max, n_max=n_max)
            if ss is not None:
                entry['super_strong'] = ss.to_dict()
                if not ss.holds:
                    entry['flag'] = 'super-strong condition fails: numeric EbarOp constructions unavailable'
            else:
                entry['super_strong'] = {'error': err}
        duals[choice] = entry
    report['duals'] = duals

    if len(dual_data) == 2:
        a, b = dual_data[EOP], dual_data[EBAR_OP]
        checks['dual candidates have isomorphic K-data'] = a.k0 == b.k0 and a.k1 == b.k1

    invariance, err = _guard(dual_graph_invariance, g)
    report['dual_graph_invariance'] = invariance if invariance else {'error': err}
    if invariance:
        checks['dual graph K-invariance'] = invariance['K0_match'] and invariance['K1_match']

    fundamental: Dict[str, Any] = {}
    for sign in SIGNS:
        residual, err = _guard(verify_delta_ev_vanishes, g, sign)
        kp, kp_err = _guard(kaminker_putnam_delta, g, sign)
        fundamental[sign] = {
            'ev_residual': matrix_to_list(residual) if residual is not None else None,
            'ev_vanishes': bool((residual == 0).all()) if residual is not None else None,
            'kp_class': kp.to_dict() if kp else {'gate': kp_err},
            'gate': err,
        }
        if residual is not None:
            checks[f'{sign} (x) ev = 0'] = bool((residual == 0).all())
    diff, err = _guard(delta_difference_residual, g)
    fundamental['difference'] = diff if diff else {'error': err}
    if diff and diff.get('available'):
        checks['(delta - delta_bar) (x) [ext] = 0'] = diff['vanishes']
    report['fundamental_classes'] = fundamental

    report['checks'] = checks
    report['passed'] = all(v is not False for v in checks.values())
    if not report['passed']:
        console.warn(f"'{g.name}': failing checks {[k for k, v in checks.items() if v is False]}")
    return report
