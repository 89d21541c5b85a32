"""
Truncated Fock-space models for graph modules.

The Fock space is truncated to paths of length ≤ L. Creation operators leak past the top
level, so operator identities are compared only after compressing to the interior
levels named in each check. Everything sparse uses scipy.sparse; Gram matrices of the Ξ
module are orthonormalized per (degree, vertex) block with scipy.linalg.eigh.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import sympy
from scipy.linalg import eigh
from scipy.sparse.linalg import svds, ArpackNoConvergence

import console
import watatani
from errors import AssumptionError, BasisCapError, SuperStrongError, WorkbenchError
from graph_core import (
    DirectedGraph, Path, concat, is_vertex_path, iter_paths_with_range, opposite_graph,
    path_length, path_range, path_source, paths_up_to, random_path_with_range, reverse_path,
    split_prefix, split_suffix, vertex_path,
)
from pimsner_k import EOP, EBAR_OP, DUAL_CHOICES, require_no_sinks, require_no_sources

DEFAULT_T_SAMPLES = (0.0, 0.5, 1.0, 2.0, 10.0)
DENSE_NORM_LIMIT = 1500


# --- Norms ---

def max_abs(M) -> float:
    if sp.issparse(M):
        M = M.tocsr()
        M.eliminate_zeros()
        return float(abs(M).max()) if M.nnz else 0.0
    M = np.asarray(M)
    return float(np.abs(M).max()) if M.size else 0.0


def _power_norm(M, iters: int = 500, tol: float = 1e-12) -> float:
    rng = np.random.default_rng(0)
    x = rng.standard_normal(M.shape[1]).astype(complex)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = M.conj().T @ (M @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        estimate = math.sqrt(ny)
        x = y / ny
        if abs(estimate - sigma) < tol * max(1.0, estimate):
            return estimate
        sigma = estimate
    return sigma


def spectral_norm(M, dense_limit: int = DENSE_NORM_LIMIT) -> float:
    """Largest singular value: dense SVD for small matrices, svds otherwise, power iteration as fallback."""
    if sp.issparse(M):
        M = M.tocsr()
        M.eliminate_zeros()
        if M.nnz == 0:
            return 0.0
        if min(M.shape) <= dense_limit:
            return float(np.linalg.norm(M.toarray(), 2))
        try:
            return float(svds(M, k=1, return_singular_vectors=False)[0])
        except (ArpackNoConvergence, ValueError):
            return _power_norm(M)
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _diag(values) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=complex)).tocsr()


# --- Fock representation ---

@dataclass(frozen=True, eq=False)
class TruncatedFockRep:
    graph: DirectedGraph
    level: int
    basis: Tuple[Path, ...]
    index: Dict[Path, int]
    lengths: np.ndarray
    ranges: Tuple[str, ...]
    creation: Dict[str, sp.csr_matrix]
    self_test: Dict[str, float] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def T(self, edge: str) -> sp.csr_matrix:
        return self.creation[edge]

    def level_projector(self, lo: int, hi: int) -> sp.csr_matrix:
        return _diag(((self.lengths >= lo) & (self.lengths <= hi)).astype(float))

    def interior(self, l: Optional[int] = None) -> sp.csr_matrix:
        """Π_{≤l}; defaults to Π_{≤L−1}."""
        return self.level_projector(0, self.level - 1 if l is None else l)

    def vacuum(self) -> sp.csr_matrix:
        return self.level_projector(0, 0)

    def phi(self, a: Dict[str, complex]) -> sp.csr_matrix:
        """Left action of a ∈ C(G⁰): δ_λ ↦ a(r(λ))δ_λ."""
        return _diag([a.get(v, 0.0) for v in self.ranges])

    def vertex_projector(self, v: str) -> sp.csr_matrix:
        return self.phi({v: 1.0})


def fock_dimension(g: DirectedGraph, L: int) -> int:
    return sum(sum(watatani.watatani_index(g, n).values) for n in range(L + 1))


def build_fock_rep(g: DirectedGraph, L: int, basis_cap: int = 200_000) -> TruncatedFockRep:
    """T_eδ_λ = δ_{eλ} when |λ| < L and s(e) = r(λ), else 0."""
    if L < 2:
        raise ValueError(f"Fock level must be at least 2, got {L}")
    size = fock_dimension(g, L)
    if size > basis_cap:
        raise BasisCapError(f"Fock basis of '{g.name}' at L={L} has {size} elements (cap {basis_cap})")

    basis = tuple(paths_up_to(g, L))
    index = {p: i for i, p in enumerate(basis)}
    lengths = np.array([path_length(p) for p in basis])
    ranges = tuple(path_range(g, p) for p in basis)
    creation: Dict[str, sp.csr_matrix] = {}
    for e in g.edges:
        rows, cols = [], []
        for i, p in enumerate(basis):
            if lengths[i] < L and ranges[i] == e.src:
                rows.append(index[(e.name,) if is_vertex_path(p) else (e.name,) + p])
                cols.append(i)
        creation[e.name] = sp.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(size, size))

    rep = TruncatedFockRep(g, L, basis, index, lengths, ranges, creation)
    rep.self_test.update(ck_relation_residuals(rep))
    bad = {k: v for k, v in rep.self_test.items() if v > 1e-12}
    if bad:
        console.warn(f"Cuntz-Krieger self-test on '{g.name}' (L={L}) off by {bad}")
    return rep


def ck_relation_residuals(rep: TruncatedFockRep) -> Dict[str, float]:
    """Entrywise deviations of the Cuntz–Krieger relations (exact 0/1 matrices, so 0 means exact)."""
    g, L = rep.graph, rep.level
    inner = rep.interior(L - 1)
    isometries = 0.0
    for e in g.edges:
        for f in g.edges:
            M = rep.T(e.name).conj().T @ rep.T(f.name)
            if e.name == f.name:
                M = M - rep.vertex_projector(e.src)
            isometries = max(isometries, max_abs(inner @ M @ inner))
    ranges = 0.0
    for v in g.vertices:
        total = sp.csr_matrix((rep.dim, rep.dim), dtype=complex)
        for e in g.edges_with_range(v):
            total = total + rep.T(e.name) @ rep.T(e.name).conj().T
        expected = rep.vertex_projector(v) - rep.vertex_projector(v) @ rep.vacuum()
        ranges = max(ranges, max_abs(total - expected))
    level_one = rep.level_projector(1, 1)
    frame = sum((rep.T(e.name) @ rep.T(e.name).conj().T for e in g.edges),
                sp.csr_matrix((rep.dim, rep.dim), dtype=complex))
    return {
        'isometry_relations': isometries,
        'range_sums': ranges,
        'frame_identity': max_abs(level_one @ (frame - sp.identity(rep.dim, dtype=complex)) @ level_one),
    }


# --- The partial isometry w and e_w(t) ---

@dataclass(eq=False)
class WEwReport:
    w: sp.csr_matrix
    q: sp.csr_matrix
    w_star_w_residual: float
    vacuum_defect: float
    vacuum_rank: int
    q_residual: float
    ew_residuals: Dict[float, float]
    ew_vacuum_terms: Dict[float, float]
    commutation_residual: float
    symbolic_identity: bool

    def max_residual(self) -> float:
        return max([self.w_star_w_residual, self.vacuum_defect, self.q_residual, self.commutation_residual]
                   + list(self.ew_residuals.values()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'w_star_w_residual': self.w_star_w_residual,
            'vacuum_defect': self.vacuum_defect,
            'vacuum_rank': self.vacuum_rank,
            'q_residual': self.q_residual,
            'ew_residuals': {str(t): r for t, r in self.ew_residuals.items()},
            'ew_vacuum_terms': {str(t): r for t, r in self.ew_vacuum_terms.items()},
            'commutation_residual': self.commutation_residual,
            'symbolic_identity': self.symbolic_identity,
        }


def w_column(rep: TruncatedFockRep) -> sp.csr_matrix:
    """w = (T*_{e₁}; …; T*_{e_k}): ℱ → ℱ^k for the edge frame {δ_e}."""
    return sp.vstack([rep.T(e.name).conj().T for e in rep.graph.edges]).tocsr()


def ew_matrix(w: sp.csr_matrix, q: sp.csr_matrix, t: float) -> sp.csr_matrix:
    s = 1.0 / (1.0 + t * t)
    slots, dim = w.shape
    top = sp.hstack([sp.identity(slots, dtype=complex) - s * q, -1j * t * s * w])
    bottom = sp.hstack([1j * t * s * w.conj().T, s * sp.identity(dim, dtype=complex)])
    return sp.vstack([top, bottom]).tocsr()


def build_w_ew(rep: TruncatedFockRep, frame: Optional[str] = None,
               t_samples: Sequence[float] = DEFAULT_T_SAMPLES) -> WEwReport:
    """
    w*w = 1 − p_vac on the whole truncation, so w*w = 1 is measured on levels 1..L−1 and the
    vacuum projection is reported as the defect. q = ww* is compared with diag(φ(δ_{s(e)})) on
    slot levels ≤ L−1. e_w(t)² − e_w(t) vanishes off the vacuum of the ℱ summand.
    """
    if frame not in (None, 'edges'):
        raise ValueError(f"Only the edge frame is supported, got {frame!r}")
    g, L, dim = rep.graph, rep.level, rep.dim
    edges = list(g.edges)
    w = w_column(rep)
    w_star = w.conj().T.tocsr()
    identity = sp.identity(dim, dtype=complex, format='csr')

    wsw = (w_star @ w).tocsr()
    middle = rep.level_projector(1, L - 1)
    wsw_res = max_abs(middle @ (wsw - identity) @ middle)
    vacuum_defect = max_abs(wsw - (identity - rep.vacuum()))

    q = (w @ w_star).tocsr()
    slot_inner = sp.block_diag([rep.interior(L - 1)] * len(edges)).tocsr()
    q_phi = sp.block_diag([rep.vertex_projector(e.src) for e in edges]).tocsr()
    q_res = max_abs(slot_inner @ (q - q_phi) @ slot_inner)

    off_vacuum = sp.block_diag([sp.identity(w.shape[0], dtype=complex), rep.level_projector(1, L)]).tocsr()
    vacuum_only = sp.block_diag([sp.csr_matrix((w.shape[0], w.shape[0]), dtype=complex), rep.vacuum()]).tocsr()
    ew_res: Dict[float, float] = {}
    ew_vac: Dict[float, float] = {}
    commutation = 0.0
    for t in t_samples:
        E = ew_matrix(w, q, t)
        R = (E @ E - E).tocsr()
        ew_res[t] = spectral_norm(off_vacuum @ R @ off_vacuum)
        ew_vac[t] = spectral_norm(vacuum_only @ R @ vacuum_only)
        for v in g.vertices:
            a = {v: 1.0}
            phi_k = sp.block_diag([a.get(e.dst, 0.0) * rep.vertex_projector(e.src) for e in edges])
            D = sp.block_diag([phi_k, rep.phi(a)]).tocsr()
            commutation = max(commutation, max_abs(E @ D - D @ E))

    return WEwReport(
        w=w, q=q, w_star_w_residual=wsw_res, vacuum_defect=vacuum_defect, vacuum_rank=g.n,
        q_residual=q_res, ew_residuals=ew_res, ew_vacuum_terms=ew_vac,
        commutation_residual=commutation, symbolic_identity=symbolic_ew_identity(),
    )


_EW_RULES = {
    ('w_star', 'w'): (),
    ('w', 'w_star'): ('q',),
    ('q', 'q'): ('q',),
    ('q', 'w'): ('w',),
    ('w_star', 'q'): ('w_star',),
}


def _rewrite(word: Tuple[str, ...]) -> Tuple[str, ...]:
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            pair = (word[i], word[i + 1])
            if pair in _EW_RULES:
                word = word[:i] + _EW_RULES[pair] + word[i + 2:]
                changed = True
                break
    return word


def _word_coefficients(expr) -> Dict[Tuple[str, ...], Any]:
    collected: Dict[Tuple[str, ...], Any] = {}
    for term in sympy.Add.make_args(sympy.expand(expr)):
        commuting, letters = term.args_cnc()
        word: List[str] = []
        for factor in letters:
            if factor.is_Pow:
                word.extend([factor.base.name] * int(factor.exp))
            else:
                word.append(factor.name)
        key = _rewrite(tuple(word))
        collected[key] = collected.get(key, 0) + sympy.Mul(*commuting)
    return collected


def symbolic_ew_identity() -> bool:
    """e_w(t)² = e_w(t) in the algebra generated by w, w*, q with w*w = 1, ww* = q, q² = q, qw = w."""
    t = sympy.symbols('t', real=True)
    w, w_star, q = sympy.symbols('w w_star q', commutative=False)
    s = 1 / (1 + t ** 2)
    E = [[1 - s * q, -sympy.I * t * s * w], [sympy.I * t * s * w_star, s]]
    for i in range(2):
        for j in range(2):
            entry = sum(E[i][m] * E[m][j] for m in range(2)) - E[i][j]
            if any(sympy.simplify(c) != 0 for c in _word_coefficients(entry).values()):
                return False
    return True


# --- Fredholm index ---

@dataclass
class IndexResult:
    index: int
    kernel_dim: int
    cokernel_dim: int
    kernel_by_vertex: Dict[str, int]
    level: int
    stable: Optional[bool] = None

    @property
    def kk_pairing(self) -> int:
        """Pairing with the extension class, which carries the opposite sign of the index."""
        return -self.index

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'kk_pairing': self.kk_pairing,
            'kernel_dim': self.kernel_dim,
            'cokernel_dim': self.cokernel_dim,
            'kernel_by_vertex': dict(self.kernel_by_vertex),
            'level': self.level,
            'stable': self.stable,
        }


def fredholm_index_compressed(rep: TruncatedFockRep, w: Optional[sp.csr_matrix] = None,
                              check_stability: bool = True, basis_cap: int = 200_000) -> IndexResult:
    """
    index = dim ker − dim coker of w from ℱ_{≤L} into qℱ^k at slot levels ≤ L−1. The rank is
    trace(w*w) once w*w is confirmed to be a diagonal projection.
    """
    g, L = rep.graph, rep.level
    if w is None:
        w = w_column(rep)
    wsw = (w.conj().T @ w).tocsr()
    diag = wsw.diagonal()
    if max_abs(wsw - _diag(diag)) > 1e-12 or np.abs(diag * (diag - 1)).max(initial=0.0) > 1e-12:
        raise WorkbenchError(f"w*w on '{g.name}' is not a diagonal projection; index by trace is invalid")
    rank = int(round(float(diag.real.sum())))

    codomain = sp.block_diag([rep.vertex_projector(e.src) @ rep.interior(L - 1) for e in g.edges]).tocsr()
    codim = int(round(float(codomain.diagonal().real.sum())))
    leak = max_abs(w - codomain @ w)
    if leak > 1e-12:
        console.warn(f"w leaves the compressed codomain on '{g.name}' (deviation {leak:.2e})")

    kernel_by_vertex = {v: 0 for v in g.vertices}
    for i, d in enumerate(diag):
        if abs(d) < 0.5:
            kernel_by_vertex[rep.ranges[i]] += 1
    kernel_dim = rep.dim - rank
    cokernel_dim = codim - rank
    result = IndexResult(kernel_dim - cokernel_dim, kernel_dim, cokernel_dim, kernel_by_vertex, L)

    if check_stability:
        try:
            bigger = build_fock_rep(g, L + 2, basis_cap)
            result.stable = fredholm_index_compressed(bigger, check_stability=False).index == result.index
            if not result.stable:
                console.warn(f"Index of w on '{g.name}' changes between L={L} and L={L + 2}")
        except BasisCapError as e:
            console.warn(f"Index stability not checked: {e}")
    return result


# --- Φ∞ weights and the Ξ module ---

class PhiWeights:
    """Cached q-coefficients Φ∞(S_αS*_α)(r(α)) of one graph, as floats."""

    def __init__(self, g: DirectedGraph, n_max: int = 200, tol: float = 1e-6):
        self.graph = g
        self.n_max = n_max
        self.tol = tol
        self._perron = watatani.perron_if_available(g)
        self._cache: Dict[Path, float] = {}

    def q(self, alpha: Path) -> float:
        if is_vertex_path(alpha):
            return 1.0
        if alpha not in self._cache:
            n_max = max(self.n_max, 2 * len(alpha) + 8)
            result = watatani.q_limit(self.graph, alpha, n_max, self.tol, self._perron)
            if not result.converges:
                raise AssumptionError(f"q({'.'.join(alpha)}) on '{self.graph.name}' has no limit ({result.convergence})")
            self._cache[alpha] = float(result.coefficient)
        return self._cache[alpha]

    def reference(self, v: str, k: int) -> float:
        """c_k(v), read off the first path of length k with range v."""
        if k == 0:
            return 1.0
        return self.q(next(iter_paths_with_range(self.graph, v, k)))


def phi_word(g: DirectedGraph, weights: PhiWeights, a: Path, b: Path, c: Path, d: Path) -> float:
    """Φ∞(S_a S*_b S_c S*_d), reduced with S*_bS_c = S_{c'} (c = bc') or S*_{b'} (b = cb')."""
    rest = split_prefix(g, c, b)
    if rest is not None:
        left = concat(g, a, rest)
        return weights.q(d) if left is not None and left == d else 0.0
    rest = split_prefix(g, b, c)
    if rest is not None:
        right = concat(g, d, rest)
        return weights.q(a) if right is not None and right == a else 0.0
    return 0.0


@dataclass(eq=False)
class XiGram:
    labels: List[Tuple[Path, Path]]        # (α, β) for W_{α,β} = S_αS*_β
    vertices: List[str]                    # r(β): W_{α,β}·δ_{r(β)} = W_{α,β}
    gram: np.ndarray
    blocks: Dict[Tuple[int, str], List[int]]
    coords: np.ndarray                     # rank × len(labels), coordinates in an orthonormal basis
    rank: int
    dropped: int
    null_vectors: List[Tuple[Path, Path]] = field(default_factory=list)

    def position(self, label: Tuple[Path, Path]) -> int:
        return self.labels.index(label)

    def fock_subgram_defect(self) -> float:
        """The Gram of {W_{μ,1}} against the identity."""
        ix = [i for i, (_, beta) in enumerate(self.labels) if is_vertex_path(beta)]
        sub = self.gram[np.ix_(ix, ix)]
        return float(np.abs(sub - np.eye(len(ix))).max()) if ix else 0.0


def build_xi_gram(g: DirectedGraph, alpha_cutoff: int, beta_cutoff: Optional[int] = None,
                  weights: Optional[PhiWeights] = None, tol: float = 1e-10) -> XiGram:
    """(W_{μ,ν} | W_{ρ,σ}) = Φ∞(S_ν S*_μ S_ρ S*_σ), orthonormalized per (|α|−|β|, r(β)) block."""
    weights = weights or PhiWeights(g)
    beta_cutoff = alpha_cutoff if beta_cutoff is None else beta_cutoff
    alphas, betas = paths_up_to(g, alpha_cutoff), paths_up_to(g, beta_cutoff)
    labels = [(a, b) for a in alphas for b in betas if path_source(g, a) == path_source(g, b)]
    vertices = [path_range(g, b) for _, b in labels]
    blocks: Dict[Tuple[int, str], List[int]] = {}
    for i, (a, b) in enumerate(labels):
        blocks.setdefault((path_length(a) - path_length(b), vertices[i]), []).append(i)

    n = len(labels)
    gram = np.zeros((n, n))
    for ix in blocks.values():
        for i in ix:
            mu, nu = labels[i]
            for j in ix:
                rho, sigma = labels[j]
                gram[i, j] = phi_word(g, weights, nu, mu, rho, sigma)

    rows: List[np.ndarray] = []
    dropped = 0
    null_vectors = [labels[i] for i in range(n) if gram[i, i] <= tol]
    if null_vectors:
        console.warn(f"Xi Gram of '{g.name}': {len(null_vectors)} spanning vectors have zero norm and are dropped")
    for key in sorted(blocks, key=lambda k: (k[0], k[1])):
        ix = blocks[key]
        evals, evecs = eigh(gram[np.ix_(ix, ix)])
        if evals.min(initial=0.0) < -tol:
            console.warn(f"Xi Gram block {key} of '{g.name}' has eigenvalue {evals.min():.3e} < 0")
        keep = evals > tol * max(1.0, float(evals.max(initial=0.0)))
        dropped += int((~keep).sum())
        block = np.zeros((int(keep.sum()), n))
        block[:, ix] = np.sqrt(evals[keep])[:, None] * evecs[:, keep].T
        rows.append(block)
    coords = np.vstack(rows) if rows else np.zeros((0, n))
    return XiGram(labels, vertices, gram, blocks, coords, coords.shape[0], dropped, null_vectors)


# --- Kaminker–Putnam isometry ---

def split_path(g: DirectedGraph, lam: Path, j: int) -> Tuple[Path, Path]:
    """λ = prefix·suffix with |prefix| = j; empty pieces become vertex paths."""
    if is_vertex_path(lam):
        return lam, lam
    m = len(lam)
    prefix = lam[:j] if j > 0 else vertex_path(path_range(g, lam))
    suffix = lam[j:] if j < m else vertex_path(path_source(g, lam))
    return prefix, suffix


def _split_weight(g: DirectedGraph, dual: str, weights: Optional[PhiWeights], suffix: Path) -> float:
    """ω = q(suffix)/c_{|suffix|}(r(suffix)) for Ē^op; 1 for E^op."""
    if dual == EOP or is_vertex_path(suffix):
        return 1.0
    return weights.q(suffix) / weights.reference(path_range(g, suffix), len(suffix))


@dataclass(eq=False)
class KPProjectionData:
    graph_name: str
    dual: str
    level: int
    rep: TruncatedFockRep
    V: sp.csr_matrix
    P: sp.csr_matrix
    target_labels: List[Tuple[Path, Path, str]]
    target_paths: List[Path]
    isometry_defect: float
    projection_residual: float
    symmetry_residual: float
    level_commutators: Dict[int, float]
    adjoint_deviation: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'graph': self.graph_name,
            'dual': self.dual,
            'level': self.level,
            'fock_dim': self.rep.dim,
            'target_dim': len(self.target_labels),
            'isometry_defect': self.isometry_defect,
            'projection_residual': self.projection_residual,
            'symmetry_residual': self.symmetry_residual,
            'level_commutators': {str(l): v for l, v in self.level_commutators.items()},
            'adjoint_deviation': self.adjoint_deviation,
        }


def _check_kp_hypotheses(g: DirectedGraph, dual: str, k_max: int, n_max: int, tol: float):
    if dual not in DUAL_CHOICES:
        raise ValueError(f"Unknown dual choice: {dual!r}")
    require_no_sources(g, 'Fock isometry')
    if dual == EOP:
        require_no_sinks(g, 'Fock isometry into the opposite module')
    report = watatani.assumption_one_check(g, k_max, n_max, tol)
    if not report.holds:
        raise AssumptionError(f"'{g.name}': the asymptotic assumption fails")
    if dual == EBAR_OP:
        ss = watatani.super_strong_check(g, k_max, tol, n_max)
        if not ss.holds:
            raise SuperStrongError(f"'{g.name}': super-strong condition fails, {ss.reason}", ss.witness)


def build_kp_projection(g: DirectedGraph, L: int, dual: str = EOP, k_max: int = 2, n_max: int = 200,
                        tol: float = 1e-6, basis_cap: int = 200_000) -> KPProjectionData:
    """
    Vδ_λ = Σ_j √(ω_j/(m+1)) ẽ(λ, j) with ẽ(λ, j) the normalized W_{prefix,1} ⊗ W_{suffix^op,1} ⊗ δ
    for the split λ = prefix·suffix at j; P = VV* is block diagonal in λ.
    """
    _check_kp_hypotheses(g, dual, k_max, n_max, tol)
    rep = build_fock_rep(g, L, basis_cap)
    weights = PhiWeights(g, n_max, tol) if dual == EBAR_OP else None

    target_labels: List[Tuple[Path, Path, str]] = []
    target_paths: List[Path] = []
    rows, cols, vals = [], [], []
    for col, lam in enumerate(rep.basis):
        m = path_length(lam)
        for j in range(m + 1):
            prefix, suffix = split_path(g, lam, j)
            if dual == EBAR_OP and not is_vertex_path(suffix) and weights.q(suffix) < tol:
                raise WorkbenchError(f"Degenerate Xi block at split ({'.'.join(prefix)} | {'.'.join(suffix)}) of '{g.name}'")
            omega = _split_weight(g, dual, weights, suffix)
            rows.append(len(target_labels))
            cols.append(col)
            vals.append(math.sqrt(omega / (m + 1)))
            target_labels.append((prefix, suffix, path_source(g, prefix)))
            target_paths.append(lam)
    if len(target_labels) > basis_cap:
        raise BasisCapError(f"Split-path basis of '{g.name}' at L={L} has {len(target_labels)} elements")

    V = sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(len(target_labels), rep.dim))
    P = (V @ V.conj().T).tocsr()
    inner = rep.interior(L - 1)
    identity = sp.identity(rep.dim, dtype=complex, format='csr')
    isometry_defect = spectral_norm(inner @ (V.conj().T @ V - identity) @ inner)
    projection_residual = spectral_norm(P @ P - P)
    target_identity = sp.identity(P.shape[0], dtype=complex, format='csr')
    symmetry = 2 * P - target_identity
    symmetry_residual = spectral_norm(symmetry @ symmetry - target_identity)

    data = KPProjectionData(
        graph_name=g.name, dual=dual, level=L, rep=rep, V=V, P=P, target_labels=target_labels,
        target_paths=target_paths, isometry_defect=isometry_defect,
        projection_residual=projection_residual, symmetry_residual=symmetry_residual,
        level_commutators={}, adjoint_deviation=0.0,
    )
    data.level_commutators = _level_commutators(g, data)
    data.adjoint_deviation = kp_adjoint_deviation(g, data, cutoff=min(L, 2), n_max=n_max, tol=tol, weights=weights)
    return data


def _left_creation_on_targets(g: DirectedGraph, data: KPProjectionData, edge: str) -> sp.csr_matrix:
    """S_e ⊗ 1: the split (prefix | suffix) of λ goes to (e·prefix | suffix) of eλ."""
    position = {(lab[0], lab[1]): i for i, lab in enumerate(data.target_labels)}
    rows, cols = [], []
    e = g.edge(edge)
    for i, (prefix, suffix, _) in enumerate(data.target_labels):
        if path_range(g, prefix) != e.src:
            continue
        new_prefix = concat(g, (edge,), prefix)
        key = (new_prefix, suffix)
        if key in position:
            rows.append(position[key])
            cols.append(i)
    n = len(data.target_labels)
    return sp.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(n, n))


def _level_commutators(g: DirectedGraph, data: KPProjectionData) -> Dict[int, float]:
    levels = np.array([path_length(lam) for lam in data.target_paths])
    out: Dict[int, float] = {}
    creations = {e.name: _left_creation_on_targets(g, data, e.name) for e in g.edges}
    for l in range(0, data.level - 1):
        restrict = _diag((levels == l).astype(float))
        worst = 0.0
        for S in creations.values():
            C = (data.P @ S - S @ data.P) @ restrict
            worst = max(worst, spectral_norm(C))
        out[l] = worst
    return out


def _extensions(g: DirectedGraph, v: str, extension: int) -> List[Path]:
    """Paths of length ≤ extension with range v."""
    return [p for k in range(extension + 1) for p in iter_paths_with_range(g, v, k)]


def kp_adjoint_deviation(g: DirectedGraph, data: KPProjectionData, cutoff: int = 2, extension: int = 1,
                         n_max: int = 200, tol: float = 1e-6, weights: Optional[PhiWeights] = None,
                         op_weights: Optional[PhiWeights] = None) -> float:
    """
    Max deviation of V*(W_{α,β} ⊗ W_{μ^op,ν^op} ⊗ δ_v) from
    Φ∞(S_βS*_β)(v)·Φ∞^op(S_{ν^op}S*_{ν^op})(v)·√(ω/(m+1))·δ_λ, over λ = prefix·suffix with
    |λ| ≤ cutoff, α = prefix·β, μ = ν·suffix and |β|, |ν| ≤ extension.

    The inner products with the split basis are reduced by phi_word and pushed through the
    assembled V*; the expected side reads q from the exact Watatani limits. For Ē^op the second
    factor is the normalized split vector itself, so ν stays a vertex.
    """
    opposite = opposite_graph(g)
    weights = weights or PhiWeights(g, n_max, tol)
    if data.dual == EOP:
        op_weights = op_weights or PhiWeights(opposite, n_max, tol)
    V_star = data.V.conj().T.tocsc()
    by_shape: Dict[Tuple[str, int, int], List[int]] = {}
    for i, (prefix, suffix, v) in enumerate(data.target_labels):
        by_shape.setdefault((v, path_length(prefix), path_length(suffix)), []).append(i)

    exact: Dict[Tuple[bool, Path], Optional[float]] = {}

    def exact_q(graph: DirectedGraph, p: Path) -> Optional[float]:
        if is_vertex_path(p):
            return 1.0
        key = (graph is opposite, p)
        if key not in exact:
            try:
                value = watatani.phi_infinity(graph, p, p, max(n_max, 2 * len(p) + 8), tol)
                exact[key] = float(value[path_range(graph, p)])
            except AssumptionError:
                exact[key] = None
        return exact[key]

    def exact_omega(suffix: Path) -> Optional[float]:
        if data.dual == EOP or is_vertex_path(suffix):
            return 1.0
        reference = next(iter_paths_with_range(g, path_range(g, suffix), len(suffix)))
        top, bottom = exact_q(g, suffix), exact_q(g, reference)
        return None if top is None or not bottom else top / bottom

    worst = 0.0
    for lam in data.rep.basis:
        m = path_length(lam)
        if m > cutoff:
            continue
        for j in range(m + 1):
            prefix, suffix = split_path(g, lam, j)
            v = path_source(g, prefix)
            unit = vertex_path(v)
            omega = exact_omega(suffix)
            if omega is None:
                continue
            scale = math.sqrt(omega / (m + 1))
            nus = ([reverse_path(opposite, p) for p in _extensions(opposite, v, extension)]
                   if data.dual == EOP else [unit])
            for beta in _extensions(g, v, extension):
                q_beta = exact_q(g, beta)
                alpha = concat(g, prefix, beta)
                for nu in nus:
                    nu_op = reverse_path(g, nu)
                    q_nu = exact_q(opposite, nu_op) if data.dual == EOP else 1.0
                    if q_beta is None or q_nu is None:
                        continue
                    mu = concat(g, nu, suffix)
                    mu_op = reverse_path(g, mu)
                    numeric = np.zeros(data.rep.dim, dtype=complex)
                    for lp in {path_length(prefix), path_length(alpha)}:
                        for lt in {path_length(suffix), path_length(mu)}:
                            for i in by_shape.get((v, lp, lt), []):
                                p_i, t_i, _ = data.target_labels[i]
                                left = phi_word(g, weights, unit, p_i, alpha, beta)
                                if left == 0.0:
                                    continue
                                if data.dual == EOP:
                                    t_op = reverse_path(g, t_i)
                                    right = phi_word(opposite, op_weights, unit, t_op, mu_op, nu_op)
                                else:
                                    right = 1.0 if t_i == suffix else 0.0
                                if right:
                                    numeric += left * right * V_star[:, i].toarray().ravel()
                    expected = np.zeros(data.rep.dim, dtype=complex)
                    expected[data.rep.index[lam]] = q_beta * q_nu * scale
                    worst = max(worst, float(np.abs(numeric - expected).max()))
    return worst


# --- Commutator decay ---

def _split_vector(g: DirectedGraph, lam: Path, dual: str, weights: Optional[PhiWeights]) -> np.ndarray:
    m = path_length(lam)
    return np.array([math.sqrt(_split_weight(g, dual, weights, split_path(g, lam, j)[1]) / (m + 1))
                     for j in range(m + 1)])


def _block_norm(g: DirectedGraph, lam: Path, edge: str, side: str, dual: str,
                weights: Optional[PhiWeights]) -> float:
    """‖vvᵀS − Suuᵀ‖ on the split block of λ, where S adds the edge on the chosen side."""
    m = path_length(lam)
    u = _split_vector(g, lam, dual, weights)
    if side == 'left':
        longer = concat(g, (edge,), lam)
        shift = np.zeros((m + 2, m + 1))
        shift[np.arange(1, m + 2), np.arange(m + 1)] = 1.0
    else:
        longer = concat(g, lam, (edge,))
        shift = np.zeros((m + 2, m + 1))
        shift[np.arange(m + 1), np.arange(m + 1)] = 1.0
    v = _split_vector(g, longer, dual, weights)
    C = np.outer(v, v) @ shift - shift @ np.outer(u, u)
    return float(np.linalg.norm(C, 2))


def _level_paths(g: DirectedGraph, edge: str, l: int, side: str, limit: int,
                 rng: np.random.Generator) -> Tuple[List[Path], bool]:
    """Paths λ of length l composable with the edge; exhaustive when there are at most `limit`."""
    e = g.edge(edge)
    if side == 'left':
        graph, anchor = g, e.src
    else:
        graph, anchor = opposite_graph(g), e.dst
    count = watatani.watatani_index(graph, l).at(anchor)
    if count <= limit:
        found = list(iter_paths_with_range(graph, anchor, l))
        sampled = False
    else:
        found = [random_path_with_range(graph, anchor, l, rng) for _ in range(limit)]
        sampled = True
    if side == 'right':
        found = [reverse_path(graph, p) for p in found]
    return found, sampled


def commutator_decay(g: DirectedGraph, edge: str, l_range: Sequence[int], L: Optional[int] = None,
                     dual: str = EOP, side: str = 'left', paths_per_level: int = 64, seed: int = 0,
                     n_max: int = 200, tol: float = 1e-6) -> List[Dict[str, Any]]:
    """
    ‖(VV*(S⊗1) − (S⊗1)VV*)|_{Y_l}‖ per level l, from the rank-one split blocks of the paths of
    length l. The block norm is 1/√(l+2) whenever every split weight is 1.
    """
    if side not in ('left', 'right'):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    levels = sorted(set(int(l) for l in l_range))
    if L is not None and levels and levels[-1] > L - 2:
        raise ValueError(f"Levels up to {levels[-1]} need a truncation of at least {levels[-1] + 2}, got {L}")
    if not levels:
        return []
    weights = PhiWeights(g, n_max, tol) if dual == EBAR_OP else None
    rng = np.random.default_rng(seed)

    norms: Dict[int, float] = {}
    counts: Dict[int, Tuple[int, bool]] = {}
    for l in range(levels[0], levels[-1] + 2):
        paths, sampled = _level_paths(g, edge, l, side, paths_per_level, rng)
        norms[l] = max((_block_norm(g, lam, edge, side, dual, weights) for lam in paths), default=0.0)
        counts[l] = (len(paths), sampled)

    table = []
    for l in levels:
        exact = 1.0 / math.sqrt(l + 2)
        table.append({
            'level': l,
            'norm': norms[l],
            'tail_norm': max(norms[k] for k in norms if k > l),
            'exact_rate': exact,
            'ratio_to_sqrt_2_over_l': norms[l] / math.sqrt(2.0 / l) if l > 0 else None,
            'ratio_to_exact_rate': norms[l] / exact,
            'paths': counts[l][0],
            'sampled': counts[l][1],
        })
    return table


# --- Homotopy ℙ_t ---

def fock_into_xi(xi: XiGram, rep: TruncatedFockRep) -> np.ndarray:
    """Y: δ_μ ↦ W_{μ,1} in orthonormal Ξ coordinates."""
    g = rep.graph
    Y = np.zeros((xi.rank, rep.dim), dtype=complex)
    position = {label: i for i, label in enumerate(xi.labels)}
    for col, mu in enumerate(rep.basis):
        Y[:, col] = xi.coords[:, position[(mu, vertex_path(path_source(g, mu)))]]
    return Y


def homotopy_pt_check(g: DirectedGraph, L: int, t_samples: Sequence[float] = DEFAULT_T_SAMPLES,
                      dual: str = EOP, k_max: int = 2, n_max: int = 200, tol: float = 1e-6,
                      basis_cap: int = 200_000, large_t: float = 1e3) -> Dict[str, Any]:
    """
    ℙ_t = RR* with R = (V; tY)/√(1+t²). ℙ_t is a projection whenever V and Y are isometries;
    at t = 0 it is diag(VV*, 0) and for large t it approaches diag(0, Q) with Q = YY*.
    """
    kp = build_kp_projection(g, L, dual, k_max, n_max, tol, basis_cap)
    xi = build_xi_gram(g, alpha_cutoff=L, beta_cutoff=1, weights=PhiWeights(g, n_max, tol))
    Y = fock_into_xi(xi, kp.rep)
    V = kp.V.toarray()
    n_v, n_y = V.shape[0], Y.shape[0]
    Q = Y @ Y.conj().T

    def projection(t: float) -> np.ndarray:
        R = np.vstack([V, t * Y]) / math.sqrt(1.0 + t * t)
        return R @ R.conj().T

    residuals = {}
    for t in t_samples:
        Pt = projection(t)
        residuals[t] = spectral_norm(Pt @ Pt - Pt)

    zero_end = np.zeros((n_v + n_y, n_v + n_y), dtype=complex)
    zero_end[:n_v, :n_v] = kp.P.toarray()
    far_end = np.zeros_like(zero_end)
    far_end[n_v:, n_v:] = Q
    return {
        'graph': g.name,
        'level': L,
        'residuals': {str(t): r for t, r in residuals.items()},
        'max_residual': max(residuals.values()) if residuals else 0.0,
        'endpoint_zero_distance': spectral_norm(projection(0.0) - zero_end),
        'endpoint_large_distance': spectral_norm(projection(large_t) - far_end),
        'large_t': large_t,
        'y_isometry_defect': spectral_norm(Y.conj().T @ Y - np.eye(kp.rep.dim)),
        'xi_rank': xi.rank,
        'xi_dropped': xi.dropped,
        'fock_subgram_defect': xi.fock_subgram_defect(),
    }


# --- Conjugate module ---

def conjugate_op_graph(g: DirectedGraph) -> DirectedGraph:
    """The graph carrying Ē^op: a path λ of g is stored as the reversed word λ̄ on g^op."""
    op = opposite_graph(g)
    return DirectedGraph(op.vertices, op.edges, f"{g.name}-bar^op")


class ConjugateOpWeights:
    """
    q-coefficients for words of Ē^op. A stored word w ends where the path it conjugates starts,
    so its weight is the q-coefficient of reverse(w) read on the graph underneath.
    """

    def __init__(self, gbar: DirectedGraph, n_max: int = 200, tol: float = 1e-6,
                 underlying: Optional[PhiWeights] = None):
        self.graph = gbar
        self._underlying = underlying or PhiWeights(opposite_graph(gbar), n_max, tol)

    def q(self, word: Path) -> float:
        if is_vertex_path(word):
            return 1.0
        return self._underlying.q(tuple(reversed(word)))


def phi_word_conjugate(gbar: DirectedGraph, weights: ConjugateOpWeights, a: Path, b: Path, c: Path,
                       d: Path) -> float:
    """
    Φ∞ of S_a S*_b S_c S*_d in Ē^op with every word stored reversed, so S*_bS_c cancels from the
    right: b = c'c leaves c', c = b'b leaves b'.
    """
    rest = split_suffix(gbar, b, c)
    if rest is not None:
        left = concat(gbar, rest, d)
        return weights.q(a) if left is not None and left == a else 0.0
    rest = split_suffix(gbar, c, b)
    if rest is not None:
        right = concat(gbar, rest, a)
        return weights.q(d) if right is not None and right == d else 0.0
    return 0.0


def conjugate_gram_equality(g: DirectedGraph, cutoff: int = 3, n_max: int = 200, tol: float = 1e-6,
                            weights: Optional[PhiWeights] = None,
                            conjugate_weights: Optional[ConjugateOpWeights] = None) -> float:
    """
    Max deviation between Φ∞(S_ν̄ S*_μ̄ S_ρ̄ S*_σ̄), evaluated on the reversed words of Ē^op, and
    Φ∞(S_σ S*_ρ S_μ S*_ν) on g, over pairs W_{μ,ν}, W_{ρ,σ} in one (|μ|−|ν|, r(μ)) block.
    """
    gbar = conjugate_op_graph(g)
    weights = weights or PhiWeights(g, n_max, tol)
    conjugate_weights = conjugate_weights or ConjugateOpWeights(gbar, n_max, tol)
    paths = paths_up_to(g, cutoff)
    labels = [(a, b) for a in paths for b in paths if path_source(g, a) == path_source(g, b)]
    reversed_labels = {label: (reverse_path(g, label[0]), reverse_path(g, label[1])) for label in labels}
    worst = 0.0
    for mu, nu in labels:
        mu_bar, nu_bar = reversed_labels[(mu, nu)]
        for rho, sigma in labels:
            if path_range(g, mu) != path_range(g, rho):
                continue
            if path_length(mu) - path_length(nu) != path_length(rho) - path_length(sigma):
                continue
            rho_bar, sigma_bar = reversed_labels[(rho, sigma)]
            conjugate = phi_word_conjugate(gbar, conjugate_weights, nu_bar, mu_bar, rho_bar, sigma_bar)
            plain = phi_word(g, weights, sigma, rho, mu, nu)
            worst = max(worst, abs(conjugate - plain))
    return worst
