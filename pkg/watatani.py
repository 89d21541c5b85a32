"""
Watatani indices of graph modules and the asymptotic data built on them.

e^{β_n}(v) counts the paths of length n with range v, so e^{β_{n+1}} = A·e^{β_n}. The
limit operator acts on a frame element δ_α (|α| = k) by the scalar

    q(δ_α) = lim_n e^{β_{n−k}}(s(α)) / e^{β_n}(r(α)),

which is evaluated here as an exact rational sequence and classified by how its
increments decay.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Any, List, Optional, Tuple, Union

import numpy as np

import console
from errors import AssumptionError, HypothesisError
from graph_core import (
    DirectedGraph, Path, adjacency, is_vertex_path, path_length, path_range, path_source,
    paths_of_length, predicates,
)

Number = Union[Fraction, float]

GEOMETRIC = 'geometric'
POLYNOMIAL = 'polynomial'
DIVERGENT_TO_ZERO = 'divergent-to-zero'
NO_LIMIT = 'none'
UNDEFINED = 'undefined'
CONVERGENT_CLASSES = (GEOMETRIC, POLYNOMIAL)

# A log-space fit with RMS residual above this is treated as no fit at all.
POOR_FIT_RMS = 0.5


@dataclass(frozen=True)
class WatataniVector:
    n: int
    values: Tuple[int, ...]
    vertices: Tuple[str, ...]

    def at(self, v: str) -> int:
        return self.values[self.vertices.index(v)]

    def to_dict(self) -> Dict[str, Any]:
        return {'n': self.n, 'values': dict(zip(self.vertices, self.values))}


@dataclass(frozen=True)
class PerronData:
    primitive: bool
    lam: Optional[float] = None
    w: Optional[Tuple[float, ...]] = None
    spectral_gap: Optional[float] = None
    second_ratio: Optional[float] = None
    converged: bool = False
    iterations: int = 0
    residual: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'primitive': self.primitive,
            'lambda': self.lam,
            'w': list(self.w) if self.w is not None else None,
            'spectral_gap': self.spectral_gap,
            'second_ratio': self.second_ratio,
            'converged': self.converged,
            'iterations': self.iterations,
            'residual': self.residual,
        }


@dataclass
class QLimitResult:
    path: Path
    coefficient: Number
    convergence: str
    exact: bool = False
    exponent: Optional[float] = None      # c_n − q ∈ O(n^{−exponent}) for the polynomial class
    rate: Optional[float] = None          # |c_{n+1} − c_n| ≈ C·rateⁿ for the geometric class
    closed_form: Optional[float] = None
    closed_form_agrees: Optional[bool] = None
    residual_trace: List[float] = field(default_factory=list)
    reason: str = ''

    @property
    def converges(self) -> bool:
        return self.convergence in CONVERGENT_CLASSES

    def to_dict(self) -> Dict[str, Any]:
        return {
            'path': list(self.path),
            'coefficient': _jsonable(self.coefficient),
            'convergence': self.convergence,
            'exact': self.exact,
            'exponent': self.exponent,
            'rate': self.rate,
            'closed_form': self.closed_form,
            'closed_form_agrees': self.closed_form_agrees,
            'residual_tail': self.residual_trace[-5:],
            'reason': self.reason,
        }


@dataclass
class AssumptionReport:
    holds: bool
    per_k: Dict[int, Dict[str, Any]]
    elements: List[QLimitResult]
    min_exponent: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'holds': self.holds,
            'min_exponent': self.min_exponent,
            'per_k': {str(k): v for k, v in self.per_k.items()},
            'elements': [e.to_dict() for e in self.elements],
        }


@dataclass
class SuperStrongResult:
    holds: bool
    coefficients: Dict[int, Dict[str, Number]]
    witness: Optional[Tuple[Path, Optional[Path], str]] = None
    reason: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {
            'holds': self.holds,
            'c_k': {str(k): {v: _jsonable(c) for v, c in vec.items()} for k, vec in self.coefficients.items()},
            'witness': ([list(self.witness[0]), list(self.witness[1]) if self.witness[1] else None, self.witness[2]]
                        if self.witness else None),
            'reason': self.reason,
        }


def _jsonable(x: Number):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    return float(x)


# --- Indices ---

@lru_cache(maxsize=64)
def _levels(g: DirectedGraph, n: int) -> Tuple[Tuple[int, ...], ...]:
    A = adjacency(g)
    current = np.array([1] * g.n, dtype=object)
    out = [tuple(int(x) for x in current)]
    for _ in range(n):
        current = np.dot(A, current) if g.n else current
        out.append(tuple(int(x) for x in current))
    return tuple(out)


def watatani_index(g: DirectedGraph, n: int) -> WatataniVector:
    """e^{β_n} = Aⁿ𝟙 in exact integers."""
    if n < 0:
        raise ValueError(f"Level must be non-negative, got {n}")
    return WatataniVector(n, _levels(g, n)[n], g.vertices)


def perron(g: DirectedGraph, tol: float = 1e-12, max_iter: int = 10_000) -> PerronData:
    preds = predicates(g)
    if preds.has_sources or preds.has_sinks:
        bad = (preds.sources or preds.sinks)[0]
        raise HypothesisError(f"Perron data needs no sources and no sinks (vertex '{bad}')", vertex=bad)
    if not preds.primitive:
        return PerronData(primitive=False)

    A = adjacency(g).astype(float)
    x = np.ones(g.n)
    lam = 0.0
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = A @ x
        lam = float(y.max())
        x = y / lam
        residual = float(np.abs(A @ x - lam * x).max())
        if residual < tol:
            break
    converged = residual < tol
    if not converged:
        console.warn(f"Power iteration on '{g.name}' stopped at residual {residual:.2e} after {iterations} steps")

    moduli = np.sort(np.abs(np.linalg.eigvals(A)))[::-1]
    second = float(moduli[1] / moduli[0]) if len(moduli) > 1 else 0.0
    return PerronData(
        primitive=True, lam=lam, w=tuple(float(v) for v in x / x.max()),
        spectral_gap=1.0 - second, second_ratio=second,
        converged=converged, iterations=iterations, residual=residual,
    )


# --- q-limits ---

def _log_abs(x: Fraction) -> float:
    return math.log(abs(x.numerator)) - math.log(x.denominator)


def _fit(xs: List[float], ys: List[float]) -> Tuple[float, float]:
    """Least-squares line through (xs, ys): (slope, RMS residual)."""
    slope, intercept = np.polyfit(xs, ys, 1)
    rms = float(np.sqrt(np.mean((np.polyval([slope, intercept], xs) - np.asarray(ys)) ** 2)))
    return float(slope), rms


def ratio_sequence(g: DirectedGraph, alpha: Path, n_max: int) -> List[Fraction]:
    """
    c_n = e^{β_{n−k}}(s(α)) / e^{β_n}(r(α)) for n = k..n_max.

    Raises HypothesisError when no path of some length n ≤ n_max ends at r(α), which
    happens as soon as everything upstream of r(α) runs back into a source.
    """
    k = path_length(alpha)
    idx = g.vertex_index()
    v = path_range(g, alpha)
    r, s = idx[v], idx[path_source(g, alpha)]
    levels = _levels(g, n_max)
    empty = next((n for n in range(k, n_max + 1) if levels[n][r] == 0), None)
    if empty is not None:
        raise HypothesisError(f"No path of length {empty} has range '{v}'; the index ratio is undefined",
                              vertex=v)
    return [Fraction(levels[n - k][s], levels[n][r]) for n in range(k, n_max + 1)]


def closed_form_coefficient(g: DirectedGraph, alpha: Path, data: PerronData) -> Optional[float]:
    if not data.primitive or data.lam is None:
        return None
    idx = g.vertex_index()
    k = path_length(alpha)
    return data.w[idx[path_source(g, alpha)]] / (data.lam ** k * data.w[idx[path_range(g, alpha)]])


def q_limit(g: DirectedGraph, alpha: Path, n_max: int = 200, tol: float = 1e-6,
            perron_data: Optional[PerronData] = None) -> QLimitResult:
    """
    The increments Δ_n = c_{n+1} − c_n over n ∈ [n_max/2, n_max] are fitted log-linearly
    (geometric) and log-log (polynomial); the better fit names the class and supplies the
    tail estimate used to extrapolate the limit.
    """
    k = path_length(alpha)
    if n_max < 2 * k + 8:
        raise ValueError(f"n_max={n_max} too small for a path of length {k}")
    try:
        seq = ratio_sequence(g, alpha, n_max)
    except HypothesisError as e:
        return QLimitResult(alpha, Fraction(0), UNDEFINED, reason=str(e))
    start = max(0, n_max // 2 - k)
    window = list(range(start, len(seq) - 1))
    deltas = [seq[i + 1] - seq[i] for i in window]
    ns = [i + k for i in window]
    last = seq[-1]
    N = n_max - 1
    delta_N = deltas[-1]

    if all(d == 0 for d in deltas):
        return _finish(g, alpha, QLimitResult(alpha, last, GEOMETRIC, exact=True, rate=0.0), seq, tol, perron_data)

    nonzero = [(n, d) for n, d in zip(ns, deltas) if d != 0]
    xs = [float(n) for n, _ in nonzero]
    logs = [_log_abs(d) for _, d in nonzero]
    slope_g, rms_g = _fit(xs, logs)
    slope_p, rms_p = _fit([math.log(x) for x in xs], logs)
    c_N = float(last)

    if min(rms_g, rms_p) > POOR_FIT_RMS:
        head = seq[start]
        if all(c >= 0 for c in seq[start:]) and c_N < 0.05 * float(head):
            return _finish(g, alpha, QLimitResult(alpha, 0.0, DIVERGENT_TO_ZERO), seq, tol, perron_data)
        return _finish(g, alpha, QLimitResult(alpha, c_N, NO_LIMIT), seq, tol, perron_data)

    if rms_g <= rms_p:
        rho = math.exp(slope_g)
        if rho >= 1.0:
            return _finish(g, alpha, QLimitResult(alpha, c_N, NO_LIMIT, rate=rho), seq, tol, perron_data)
        signed = rho if deltas[-1] * deltas[-2] > 0 else -rho
        tail = float(delta_N) * signed / (1.0 - signed)
        result = QLimitResult(alpha, c_N + tail, GEOMETRIC, rate=rho)
    else:
        decay = -slope_p - 1.0
        if decay <= 0:
            return _finish(g, alpha, QLimitResult(alpha, c_N, NO_LIMIT), seq, tol, perron_data)
        tail = float(delta_N) * N / decay
        result = QLimitResult(alpha, c_N + tail, POLYNOMIAL)

    nearest = round(result.coefficient)
    if abs(result.coefficient - nearest) < max(tol, 0.05 * abs(tail)):
        result.coefficient = Fraction(nearest)
    return _finish(g, alpha, result, seq, tol, perron_data)


def _finish(g: DirectedGraph, alpha: Path, result: QLimitResult, seq: List[Fraction], tol: float,
            perron_data: Optional[PerronData]) -> QLimitResult:
    k = path_length(alpha)
    n_max = k + len(seq) - 1
    start = max(0, n_max // 2 - k)
    limit = result.coefficient
    residuals = [abs(c - limit) if isinstance(limit, Fraction) else abs(float(c) - limit) for c in seq[start:]]
    result.residual_trace = [float(r) for r in residuals]

    if result.convergence == POLYNOMIAL and isinstance(limit, Fraction) and all(r > 0 for r in residuals):
        xs = [math.log(n) for n in range(start + k, n_max + 1)]
        ys = [_log_abs(r) for r in residuals]
        slope, _ = _fit(xs, ys)
        result.exponent = -slope
    elif result.convergence == POLYNOMIAL:
        nonzero = [(n, abs(seq[start + i + 1] - seq[start + i])) for i, n in enumerate(range(start + k, n_max))
                   if seq[start + i + 1] != seq[start + i]]
        slope, _ = _fit([math.log(n) for n, _ in nonzero], [_log_abs(d) for _, d in nonzero])
        result.exponent = -slope - 1.0

    if perron_data is None:
        preds = predicates(g)
        if preds.primitive and not preds.has_sources and not preds.has_sinks:
            perron_data = perron(g)
    if perron_data is not None and perron_data.primitive:
        result.closed_form = closed_form_coefficient(g, alpha, perron_data)
        result.closed_form_agrees = abs(float(limit) - result.closed_form) < max(tol, 1e-6)
    return result


# --- Assumption checks ---

def frame_elements(g: DirectedGraph, k: int) -> List[Path]:
    return paths_of_length(g, k)


def assumption_one_check(g: DirectedGraph, k_max: int = 2, n_max: int = 200, tol: float = 1e-6) -> AssumptionReport:
    """
    For each δ_α with 1 ≤ |α| ≤ k_max, ν̃ = q(δ_α)·δ_α and the residual |c_n − q(δ_α)| must
    decay geometrically or like n^{−δ} with δ > 0. Exponents are reported per element and
    as their minimum (geometric elements do not bound the minimum).
    """
    data = perron_if_available(g)
    per_k: Dict[int, Dict[str, Any]] = {}
    elements: List[QLimitResult] = []
    exponents: List[float] = []
    for k in range(1, k_max + 1):
        results = [q_limit(g, alpha, n_max, tol, data) for alpha in frame_elements(g, k)]
        elements.extend(results)
        holds = all(r.convergence == GEOMETRIC or (r.convergence == POLYNOMIAL and (r.exponent or 0) > 0)
                    for r in results)
        poly = [r.exponent for r in results if r.convergence == POLYNOMIAL and r.exponent is not None]
        exponents.extend(poly)
        per_k[k] = {
            'holds': holds,
            'elements': len(results),
            'classes': sorted({r.convergence for r in results}),
            'min_exponent': min(poly) if poly else None,
            'max_rate': max((r.rate for r in results if r.rate is not None), default=None),
        }
    return AssumptionReport(
        holds=all(v['holds'] for v in per_k.values()),
        per_k=per_k,
        elements=elements,
        min_exponent=min(exponents) if exponents else None,
    )


def perron_if_available(g: DirectedGraph) -> Optional[PerronData]:
    preds = predicates(g)
    if preds.has_sources or preds.has_sinks:
        return None
    return perron(g)


def _same(a: Number, b: Number, tol: float) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) < tol


def super_strong_check(g: DirectedGraph, k_max: int = 2, tol: float = 1e-6, n_max: int = 200) -> SuperStrongResult:
    """q(δ_α) = c_{|α|}(r(α))·δ_α with every c_k(v) nonzero, for |α| ≤ k_max."""
    report = assumption_one_check(g, k_max, n_max, tol)
    if not report.holds:
        raise AssumptionError(f"'{g.name}': the asymptotic assumption fails, q is not available")
    by_path = {r.path: r for r in report.elements}
    coefficients: Dict[int, Dict[str, Number]] = {}
    for k in range(1, k_max + 1):
        vec: Dict[str, Number] = {}
        first_path: Dict[str, Path] = {}
        for alpha in frame_elements(g, k):
            c = by_path[alpha].coefficient
            v = path_range(g, alpha)
            if v not in vec:
                vec[v], first_path[v] = c, alpha
            elif not _same(vec[v], c, tol):
                return SuperStrongResult(
                    holds=False, coefficients=coefficients, witness=(first_path[v], alpha, v),
                    reason=f"coefficients {_jsonable(vec[v])} vs {_jsonable(c)} at vertex '{v}' (k={k})")
        for v, c in vec.items():
            if abs(float(c)) < tol:
                return SuperStrongResult(
                    holds=False, coefficients=coefficients, witness=(first_path[v], None, v),
                    reason=f"zero coefficient at vertex '{v}' (k={k})")
        coefficients[k] = {v: vec[v] for v in g.vertices if v in vec}
    return SuperStrongResult(holds=True, coefficients=coefficients)


def super_strong_coefficient(result: SuperStrongResult, k: int, v: str) -> Number:
    if k == 0:
        return Fraction(1)
    return result.coefficients[k][v]


@lru_cache(maxsize=64)
def _assumption_holds(g: DirectedGraph, k_max: int, n_max: int, tol: float) -> bool:
    return assumption_one_check(g, k_max, n_max, tol).holds


def phi_infinity(g: DirectedGraph, mu: Path, nu: Path, n_max: int = 200, tol: float = 1e-6) -> Dict[str, Number]:
    """
    Φ∞(S_μ S_ν*) as a function on G⁰: zero unless μ = ν, else q(δ_μ)·δ_{r(μ)}.

    Raises AssumptionError when the asymptotic assumption fails up to max(|μ|, |ν|).
    """
    k = max(path_length(mu), path_length(nu))
    if k and not _assumption_holds(g, k, n_max, tol):
        raise AssumptionError(f"'{g.name}': the asymptotic assumption fails up to length {k}; "
                              f"Phi_infinity undefined")
    out: Dict[str, Number] = {v: Fraction(0) for v in g.vertices}
    if mu != nu:
        return out
    if is_vertex_path(mu):
        out[path_range(g, mu)] = Fraction(1)
        return out
    result = q_limit(g, mu, n_max, tol, perron_if_available(g))
    if not result.converges:
        raise AssumptionError(f"q({'.'.join(mu)}) has no limit ({result.convergence}); Phi_infinity undefined")
    out[path_range(g, mu)] = result.coefficient
    return out


def sum_rule_check(g: DirectedGraph, k_max: int = 2, n_max: int = 200, tol: float = 1e-6) -> Dict[str, Any]:
    """
    Σ_{α ∈ s(e)G^k} Φ∞(S_{eα}S*_{eα})(r(e)) = Φ∞(S_eS*_e)(r(e)) for every edge and k ≤ k_max,
    and Σ_{r(e)=v} q(δ_e) = 1 at every vertex.
    """
    data = perron_if_available(g)
    worst = 0.0
    for e in g.edges:
        base = q_limit(g, (e.name,), n_max, tol, data).coefficient
        for k in range(1, k_max):
            total = sum((q_limit(g, (e.name,) + tail, n_max, tol, data).coefficient
                         for tail in _tails(g, e.src, k)), Fraction(0))
            worst = max(worst, abs(float(total) - float(base)))
    level_one = {}
    for v in g.vertices:
        incoming = [q_limit(g, (e.name,), n_max, tol, data).coefficient for e in g.edges_with_range(v)]
        level_one[v] = float(sum(incoming, Fraction(0)))
    vertex_dev = max((abs(s - 1.0) for s in level_one.values()), default=0.0)
    return {
        'edge_sum_deviation': worst,
        'level_one_sums': level_one,
        'vertex_sum_deviation': vertex_dev,
        'holds': worst < max(tol, 1e-4) and vertex_dev < max(tol, 1e-4),
    }


def _tails(g: DirectedGraph, v: str, k: int) -> List[Path]:
    """Paths of length k whose range is v."""
    return [p for p in paths_of_length(g, k) if path_range(g, p) == v]
