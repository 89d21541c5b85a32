"""
The circle and rotation-algebra instances of the graded Fock picture.

Basis vectors δ_{n,m} carry a grade n ∈ [−N_max, N_max] (the ℤ-graded Fock space) and a
Fourier mode m ∈ [m_min, m_min + M − 1] of L²(S¹). Index (n + N_max)·M + (m − m_min).
θ is measured in turns: W_α = diag(e^{2πiθm}), and z = Σ_n e^{−2πiθn}|n⟩⟨n| ⊗ F with F the
Fourier shift, so UzU* = e^{2πiθ}z.
"""

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

import console
from fock_numeric import spectral_norm, max_abs

Theta = Union[Fraction, float]
Word = List[Tuple[str, int]]

LETTERS = ('U', 'W', 'z')
GRADINGS = ('N', 'D')
SCALING_WINDOWS = (16, 32, 64, 128)
TOKEN_PATTERN = re.compile(r'\s*([UWz])(?:\^\(?(-?\d+)\)?)?\s*\*?')


def parse_theta(text: str) -> Theta:
    """'3/10' and '0.3' both become Fraction(3, 10); anything Fraction rejects is read as a float."""
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        return float(text)


def phase(theta: Theta, k: int) -> complex:
    """e^{2πiθk}, reduced mod 1 first when θ is rational."""
    if isinstance(theta, Fraction):
        return complex(np.exp(2j * np.pi * float((theta * k) % 1)))
    return complex(np.exp(2j * np.pi * theta * k))


def parse_word(text: str) -> Word:
    """'U^2 W z^-1' or 'U*U*W' → [('U', 2), ('W', 1), ('z', -1)]."""
    word: Word = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = TOKEN_PATTERN.match(text, pos)
        if not match or match.end() == pos:
            raise ValueError(f"Cannot parse generator word {text!r} at position {pos}")
        word.append((match.group(1), int(match.group(2)) if match.group(2) else 1))
        pos = match.end()
    if not word:
        raise ValueError("Empty generator word")
    return word


def word_to_str(word: Word) -> str:
    return ' '.join(letter if k == 1 else f"{letter}^{k}" for letter, k in word)


# --- Graded truncation ---

@dataclass(frozen=True, eq=False)
class GradedTruncation:
    n_max: int
    modes: int
    theta: Theta
    grades: np.ndarray
    fourier: np.ndarray
    U: sp.csr_matrix
    W: sp.csr_matrix
    Z: sp.csr_matrix
    N: sp.csr_matrix
    D: sp.csr_matrix

    @property
    def dim(self) -> int:
        return len(self.grades) * len(self.fourier)

    @property
    def m_min(self) -> int:
        return int(self.fourier[0])

    def position(self, n: int, m: int) -> int:
        return (n + self.n_max) * self.modes + (m - self.m_min)

    def generator(self, letter: str) -> sp.csr_matrix:
        return {'U': self.U, 'W': self.W, 'z': self.Z}[letter]

    def interior(self) -> sp.csr_matrix:
        """Projection onto |n| ≤ N_max − 1 and modes away from both window edges."""
        n_ok = np.abs(self.grades) <= self.n_max - 1
        if self.modes > 2:
            m_ok = (self.fourier > self.fourier[0]) & (self.fourier < self.fourier[-1])
        else:
            m_ok = np.ones(self.modes, dtype=bool)
        return sp.diags(np.kron(n_ok, m_ok).astype(complex)).tocsr()


def _fourier_modes(M: int) -> np.ndarray:
    return np.arange(-(M // 2), M - M // 2) if M > 1 else np.array([0])


def build_graded_truncation(n_max: int, modes: int = 1, theta: Theta = Fraction(0)) -> GradedTruncation:
    if n_max < 4:
        raise ValueError(f"Grading window must be at least 4, got {n_max}")
    if modes < 1:
        raise ValueError(f"Need at least one Fourier mode, got {modes}")
    grades = np.arange(-n_max, n_max + 1)
    fourier = _fourier_modes(modes)
    G, M = len(grades), len(fourier)

    shift = sp.diags(np.ones(G - 1), -1, shape=(G, G), dtype=complex)
    fourier_shift = sp.diags(np.ones(M - 1), -1, shape=(M, M), dtype=complex) if M > 1 \
        else sp.csr_matrix((1, 1), dtype=complex)
    U = sp.kron(shift, sp.identity(M, dtype=complex)).tocsr()
    W = sp.kron(sp.identity(G, dtype=complex), sp.diags([phase(theta, int(m)) for m in fourier])).tocsr()
    twist = sp.diags([phase(theta, -int(n)) for n in grades])
    Z = sp.kron(twist, fourier_shift).tocsr()
    N = sp.kron(sp.diags(grades.astype(complex)), sp.identity(M, dtype=complex)).tocsr()
    D = sp.kron(sp.identity(G, dtype=complex), sp.diags(fourier.astype(complex))).tocsr()
    return GradedTruncation(n_max, modes, theta, grades, fourier, U, W, Z, N, D)


def truncation_invariants(trunc: GradedTruncation) -> Dict[str, float]:
    """Entrywise deviations: 0 for the shift identities, rounding-level for those involving phases."""
    P = trunc.interior()
    I = sp.identity(trunc.dim, dtype=complex, format='csr')
    U, W, N = trunc.U, trunc.W, trunc.N
    out = {
        'U_unitary': max(max_abs(P @ (U.conj().T @ U - I) @ P), max_abs(P @ (U @ U.conj().T - I) @ P)),
        'N_U_commutator': max_abs(P @ (N @ U - U @ N - U) @ P),
        'N_W_commutator': max_abs(N @ W - W @ N),
        'W_unitary': max_abs(W.conj().T @ W - I),
    }
    if trunc.modes > 2:
        Z = trunc.Z
        out['z_unitary'] = max_abs(P @ (Z.conj().T @ Z - I) @ P)
        out['covariance'] = max_abs(P @ (U @ Z @ U.conj().T - phase(trunc.theta, 1) * Z) @ P)
    return out


def word_matrix(trunc: GradedTruncation, word: Word) -> sp.csr_matrix:
    out = sp.identity(trunc.dim, dtype=complex, format='csr')
    for letter, k in word:
        base = trunc.generator(letter)
        if k < 0:
            base, k = base.conj().T.tocsr(), -k
        for _ in range(k):
            out = out @ base
    return out.tocsr()


# --- Index pairing ---

def _action_shifts(word: Word, transpose: bool) -> List[Tuple[int, int]]:
    """(grade, mode) shifts of the letters in the order they act on a vector."""
    step = {'U': (1, 0), 'z': (0, 1), 'W': (0, 0)}
    ordered = list(word) if transpose else list(reversed(word))
    sign = -1 if transpose else 1
    out = []
    for letter, k in ordered:
        da, dj = step[letter]
        out.extend([(sign * da * np.sign(k), sign * dj * np.sign(k))] * abs(k))
    return out


def _safe_interval(lo: int, hi: int, shifts: Sequence[int]) -> Tuple[int, int]:
    """Values x with x + every partial sum of shifts inside [lo, hi]."""
    partial = np.concatenate([[0], np.cumsum(shifts)]) if len(shifts) else np.array([0])
    return lo - int(partial.min()), hi - int(partial.max())


@dataclass
class ExtIndexResult:
    word: str
    grading: str
    transpose: bool
    index: int
    normalized_index: int
    kernel_dim: int
    cokernel_dim: int
    fiber_dim: int
    window: int
    stable: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'word': self.word,
            'grading': self.grading,
            'transpose': self.transpose,
            'index': self.index,
            'normalized_index': self.normalized_index,
            'kernel_dim': self.kernel_dim,
            'cokernel_dim': self.cokernel_dim,
            'fiber_dim': self.fiber_dim,
            'window': self.window,
            'stable': self.stable,
        }


def ext_index_pairing(trunc: GradedTruncation, generator: Union[str, Word], grading: str = 'N',
                      transpose: bool = False, check_stability: bool = True,
                      tol: float = 1e-10) -> ExtIndexResult:
    """
    Index of P_{X≥0}·g·P_{X≥0} with X = N (the extension) or X = D (the circle class).
    The domain keeps every vector whose orbit under the letters of g stays in the window; the
    codomain is the image interval cut at 0. The rank of the compressed block is computed by
    SVD, so the kernel and cokernel are certified separately. The normalized index divides by
    the dimension of the fiber axis.
    """
    if grading not in GRADINGS:
        raise ValueError(f"grading must be one of {GRADINGS}, got {grading!r}")
    word = parse_word(generator) if isinstance(generator, str) else list(generator)
    shifts = _action_shifts(word, transpose)
    axis = 0 if grading == 'N' else 1
    pair_shifts = [s[axis] for s in shifts]
    fiber_shifts = [s[1 - axis] for s in shifts]
    total, fiber_total = sum(pair_shifts), sum(fiber_shifts)

    pair_values = trunc.grades if axis == 0 else trunc.fourier
    fiber_values = trunc.fourier if axis == 0 else trunc.grades
    low, top = _safe_interval(int(pair_values[0]), int(pair_values[-1]), pair_shifts)
    fiber_lo, fiber_hi = _safe_interval(int(fiber_values[0]), int(fiber_values[-1]), fiber_shifts)
    dom_lo = max(0, low)
    if dom_lo > 0 or top + total < 0 or top < abs(total):
        raise ValueError(f"Window too small for {word_to_str(word)} against {grading}")
    if fiber_hi < fiber_lo:
        raise ValueError(f"No fiber survives {word_to_str(word)}; add Fourier modes or widen the window")

    dom_pair = range(0, top + 1)
    cod_pair = range(0, top + total + 1)
    fiber = range(fiber_lo, fiber_hi + 1)

    def positions(pairs, fibers):
        if axis == 0:
            return [trunc.position(n, m) for n in pairs for m in fibers]
        return [trunc.position(n, m) for n in fibers for m in pairs]

    columns = positions(dom_pair, fiber)
    rows = positions(cod_pair, [f + fiber_total for f in fiber])
    X = word_matrix(trunc, word)
    if transpose:
        X = X.T.tocsr()
    block = X[rows][:, columns].toarray()
    rank = int(np.linalg.matrix_rank(block, tol)) if block.size else 0
    kernel_dim, cokernel_dim = len(columns) - rank, len(rows) - rank
    index = kernel_dim - cokernel_dim
    fiber_dim = len(fiber)
    if index % fiber_dim:
        console.warn(f"Index {index} of {word_to_str(word)} is not a multiple of the fiber dimension {fiber_dim}")
    window = trunc.n_max if axis == 0 else trunc.modes
    result = ExtIndexResult(word_to_str(word), grading, transpose, index, index // fiber_dim,
                            kernel_dim, cokernel_dim, fiber_dim, window)

    if check_stability:
        bigger = build_graded_truncation(trunc.n_max + 4, trunc.modes, trunc.theta) if axis == 0 \
            else build_graded_truncation(trunc.n_max, trunc.modes + 4, trunc.theta)
        again = ext_index_pairing(bigger, word, grading, transpose, check_stability=False, tol=tol)
        result.stable = again.normalized_index == result.normalized_index
        if not result.stable:
            console.warn(f"Pairing of {result.word} with {grading} moved from "
                         f"{result.normalized_index} to {again.normalized_index} when the window grew")
    return result


# --- N#D ---

@dataclass(eq=False)
class NSharpD:
    operator: sp.csr_matrix
    grading: sp.csr_matrix
    self_adjoint_residual: float
    anticommutator_residual: float
    commutators: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dim': self.operator.shape[0],
            'self_adjoint_residual': self.self_adjoint_residual,
            'anticommutator_residual': self.anticommutator_residual,
            'commutators': dict(self.commutators),
        }


def build_nsharpd(trunc: GradedTruncation, generators: Sequence[str] = LETTERS) -> NSharpD:
    """[[0, N − iD], [N + iD, 0]] with ‖[N#D, g ⊕ g]‖ compressed to the interior."""
    n = trunc.dim
    zero = sp.csr_matrix((n, n), dtype=complex)
    X = sp.bmat([[zero, trunc.N - 1j * trunc.D], [trunc.N + 1j * trunc.D, zero]]).tocsr()
    I = sp.identity(n, dtype=complex)
    gamma = sp.block_diag([I, -I]).tocsr()
    P = sp.block_diag([trunc.interior(), trunc.interior()]).tocsr()

    commutators = {}
    for name in generators:
        g = word_matrix(trunc, parse_word(name))
        G = sp.block_diag([g, g]).tocsr()
        commutators[name] = spectral_norm(P @ (X @ G - G @ X) @ P)
    return NSharpD(
        operator=X,
        grading=gamma,
        self_adjoint_residual=max_abs(X - X.conj().T),
        anticommutator_residual=max_abs(gamma @ X + X @ gamma),
        commutators=commutators,
    )


def commutator_scaling(modes: int = 8, theta: Theta = Fraction(0), windows: Sequence[int] = SCALING_WINDOWS,
                       generators: Sequence[str] = LETTERS) -> Dict[str, Any]:
    """‖[N#D, g]‖ across window sizes; bounded commutators show as a flat row."""
    norms: Dict[str, Dict[int, float]] = {g: {} for g in generators}
    for window in windows:
        report = build_nsharpd(build_graded_truncation(window, modes, theta), generators)
        for g in generators:
            norms[g][window] = report.commutators[g]
    variation = {}
    for g, row in norms.items():
        top = max(row.values())
        variation[g] = (top - min(row.values())) / top if top > 0 else 0.0
    return {'norms': norms, 'max_variation': variation}


# --- δ for the rotation algebra ---

@dataclass(frozen=True)
class DeltaSummand:
    sign: int
    factors: Tuple[str, ...]                 # e.g. ('z', 'W', 'iota')
    pairings: Tuple[Tuple[str, Optional[str], bool], ...]   # (factor, word, transpose)

    def label(self) -> str:
        return ' ⊗ '.join(f"[{f}]" for f in self.factors)


# factor name → generator word and whether it lives in the opposite algebra
FACTOR_WORDS: Dict[str, Tuple[Optional[str], bool]] = {
    'z': ('z', False),
    'w': ('U', False),
    'W': ('W', False),
    'iota': (None, False),
    'z^op': ('z', True),
    'w^op': ('U', True),
    'W^op': ('W', True),
}

ROTATION_DELTA = (
    (+1, ('z', 'W', 'iota')),
    (+1, ('w', 'z^op')),
    (-1, ('z', 'w^op')),
    (-1, ('iota', 'z^op', 'W^op')),
)


def _fraction_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.dot(A, B) if A.size and B.size else np.zeros((A.shape[0], B.shape[1]), dtype=object)


def rotation_ew_exact(t: Fraction, size: int = 5) -> bool:
    """
    e_w(t) = (1/(1+t²))[[t², −itU], [itU*, 1]] with U a cyclic permutation, split as R + iJ over the
    rationals; e² = e iff R² − J² = R and RJ + JR = J.
    """
    t = Fraction(t)
    s = Fraction(1) / (1 + t * t)
    U = np.array([[Fraction(int(j == (i + 1) % size)) for j in range(size)] for i in range(size)], dtype=object)
    I = np.array([[Fraction(int(i == j)) for j in range(size)] for i in range(size)], dtype=object)
    Z = np.zeros((size, size), dtype=object) + Fraction(0)
    R = np.block([[s * t * t * I, Z], [Z, s * I]])
    J = np.block([[Z, -s * t * U], [s * t * U.T, Z]])
    real = _fraction_matmul(R, R) - _fraction_matmul(J, J) - R
    imag = _fraction_matmul(R, J) + _fraction_matmul(J, R) - J
    return all(x == 0 for x in real.ravel()) and all(x == 0 for x in imag.ravel())


def rotation_delta_components(theta: Theta, n_max: int = 16, modes: int = 8,
                              t_samples: Sequence[Fraction] = (Fraction(0), Fraction(1, 2), Fraction(1),
                                                               Fraction(2), Fraction(10))) -> Dict[str, Any]:
    """
    The four signed summands of δ for the rotation algebra. Every unitary factor is paired with
    the extension (grading N) and with the circle class (grading D); op factors are paired
    through their transpose.
    """
    trunc = build_graded_truncation(n_max, modes, theta)
    summands = [DeltaSummand(sign, factors, tuple((f,) + FACTOR_WORDS[f] for f in factors))
                for sign, factors in ROTATION_DELTA]
    table: List[Dict[str, Any]] = []
    for index, summand in enumerate(summands):
        for factor, word, transpose in summand.pairings:
            row = {'summand': index, 'sign': summand.sign, 'label': summand.label(), 'factor': factor,
                   'word': word, 'pairs_with_N': None, 'pairs_with_D': None}
            if word is not None:
                row['pairs_with_N'] = ext_index_pairing(trunc, word, 'N', transpose).normalized_index
                row['pairs_with_D'] = ext_index_pairing(trunc, word, 'D', transpose).normalized_index
            row['nontrivial'] = bool(row['pairs_with_N'] or row['pairs_with_D'])
            table.append(row)
    return {
        'theta': str(theta),
        'summands': [{'sign': s.sign, 'label': s.label()} for s in summands],
        'pairing_table': table,
        'ew_projection_exact': {str(t): rotation_ew_exact(t) for t in t_samples},
        'invariants': truncation_invariants(trunc),
    }
