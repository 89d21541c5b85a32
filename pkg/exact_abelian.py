"""
Exact integer linear algebra: Smith normal form, finitely generated abelian groups
in canonical coordinates, homomorphisms between them, Diophantine solving and the
exactness / isomorphism checks used by the duality ladder.

All matrices are numpy arrays of dtype=object holding Python ints, so entries never
overflow.

Canonical coordinates: a group ℤ/d₁ ⊕ … ⊕ ℤ/d_t ⊕ ℤ^f (each d_i > 1, d_i | d_{i+1})
is stored with its t torsion coordinates first and its f free coordinates last.
Every GroupHom matrix is written in these coordinates.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Tuple, Optional, Sequence

import numpy as np

from errors import IllDefinedHomError, WorkbenchError

IntMatrix = np.ndarray


# --- Matrix helpers ---

def int_matrix(data, shape: Optional[Tuple[int, int]] = None) -> IntMatrix:
    """Converts nested lists / arrays to a 2-D object array of Python ints."""
    arr = np.array(data, dtype=object)
    if shape is not None:
        arr = arr.reshape(shape)
    if arr.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got shape {arr.shape}")
    out = np.empty(arr.shape, dtype=object)
    for idx, value in np.ndenumerate(arr):
        out[idx] = int(value)
    return out


def identity(n: int) -> IntMatrix:
    out = np.zeros((n, n), dtype=object)
    for i in range(n):
        out[i, i] = 1
    return out


def zeros(m: int, n: int) -> IntMatrix:
    return np.zeros((m, n), dtype=object)


def int_vector(data) -> np.ndarray:
    return np.array([int(x) for x in data], dtype=object)


def matmul(A: IntMatrix, B: IntMatrix) -> IntMatrix:
    """Exact product; handles empty inner dimensions."""
    if A.shape[1] == 0:
        return zeros(A.shape[0], B.shape[1])
    return np.dot(A, B)


def integer_determinant(M: IntMatrix) -> int:
    """Exact determinant (fraction-free Bareiss elimination)."""
    A = [list(row) for row in int_matrix(M)]
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if A[i][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


# --- Smith normal form ---

@dataclass(frozen=True, eq=False)
class SmithDecomposition:
    """U·M·V = D with U, V unimodular; U_inv and V_inv are their exact inverses."""
    U: IntMatrix
    D: IntMatrix
    V: IntMatrix
    rank: int
    U_inv: IntMatrix
    V_inv: IntMatrix

    def diagonal(self) -> List[int]:
        return [int(self.D[i, i]) for i in range(min(self.D.shape))]

    def elementary_divisors(self) -> List[int]:
        return [d for d in self.diagonal()[:self.rank]]


def smith_decompose(M) -> SmithDecomposition:
    """
    Smith normal form by repeated elimination around a pivot of minimal absolute value.
    The pivot is re-chosen whenever a remainder appears in its row or column, and an
    entry not divisible by the pivot is pulled into the pivot row, so d₁ | d₂ | …
    """
    A = int_matrix(M).copy()
    m, n = A.shape
    U, U_inv = identity(m), identity(m)
    V, V_inv = identity(n), identity(n)

    def swap_rows(i, j):
        if i != j:
            A[[i, j]] = A[[j, i]]
            U[[i, j]] = U[[j, i]]
            U_inv[:, [i, j]] = U_inv[:, [j, i]]

    def swap_cols(i, j):
        if i != j:
            A[:, [i, j]] = A[:, [j, i]]
            V[:, [i, j]] = V[:, [j, i]]
            V_inv[[i, j]] = V_inv[[j, i]]

    t = 0
    while t < min(m, n):
        nonzero = np.argwhere(A[t:, t:] != 0)
        if len(nonzero) == 0:
            break
        i, j = min(((int(i) + t, int(j) + t) for i, j in nonzero), key=lambda ij: abs(A[ij]))
        swap_rows(t, i)
        swap_cols(t, j)

        while True:
            p = A[t, t]
            if t + 1 < m:
                q = A[t + 1:, t] // p
                A[t + 1:] -= np.outer(q, A[t])
                U[t + 1:] -= np.outer(q, U[t])
                U_inv[:, t] += matmul(U_inv[:, t + 1:], q.reshape(-1, 1))[:, 0]
            if t + 1 < n:
                q = A[t, t + 1:] // p
                A[:, t + 1:] -= np.outer(A[:, t], q)
                V[:, t + 1:] -= np.outer(V[:, t], q)
                V_inv[t] += matmul(q.reshape(1, -1), V_inv[t + 1:])[0]

            leftovers = [(abs(A[i, t]), 0, i) for i in range(t + 1, m) if A[i, t] != 0]
            leftovers += [(abs(A[t, j]), 1, j) for j in range(t + 1, n) if A[t, j] != 0]
            if leftovers:
                _, axis, k = min(leftovers)
                if axis == 0:
                    swap_rows(t, k)
                else:
                    swap_cols(t, k)
                continue

            p = A[t, t]
            bad = np.argwhere(A[t + 1:, t + 1:] % p != 0) if t + 1 < m and t + 1 < n else []
            if len(bad):
                k = int(bad[0][0]) + t + 1
                A[t] += A[k]
                U[t] += U[k]
                U_inv[:, k] -= U_inv[:, t]
                continue
            break
        t += 1

    for i in range(min(m, n)):
        if A[i, i] < 0:
            A[i] *= -1
            U[i] *= -1
            U_inv[:, i] *= -1

    rank = sum(1 for i in range(min(m, n)) if A[i, i] != 0)
    return SmithDecomposition(U=U, D=A, V=V, rank=rank, U_inv=U_inv, V_inv=V_inv)


def solve_integer_system(A, b) -> Optional[np.ndarray]:
    """One integer solution x of A·x = b, or None when the system has none."""
    A = int_matrix(A)
    b = int_vector(b)
    m, n = A.shape
    if b.shape[0] != m:
        raise ValueError(f"Right-hand side has length {b.shape[0]}, expected {m}")
    S = smith_decompose(A)
    c = matmul(S.U, b.reshape(-1, 1))[:, 0] if m else b
    y = np.zeros(n, dtype=object)
    for i in range(S.rank):
        d = S.D[i, i]
        if c[i] % d != 0:
            return None
        y[i] = c[i] // d
    for i in range(S.rank, m):
        if c[i] != 0:
            return None
    return matmul(S.V, y.reshape(-1, 1))[:, 0] if n else y


def kernel(M) -> IntMatrix:
    """Basis columns of {x : M·x = 0}; the basis is primitive (columns of a unimodular V)."""
    M = int_matrix(M)
    S = smith_decompose(M)
    return S.V[:, S.rank:].copy()


# --- Groups ---

@dataclass(frozen=True, eq=False)
class Presentation:
    """How a canonical group sits over ℤ^generators / im(relations)."""
    generators: int
    relations: IntMatrix
    smith: SmithDecomposition
    quotient: IntMatrix   # canonical coordinates × generators
    lift: IntMatrix       # generators × canonical coordinates


@dataclass(frozen=True, eq=False)
class FgAbGroup:
    free_rank: int
    torsion: Tuple[int, ...] = ()
    witness: Optional[Presentation] = field(default=None, repr=False)

    def __post_init__(self):
        for a, b in zip(self.torsion, self.torsion[1:]):
            if b % a != 0:
                raise ValueError(f"Invariant factors must divide each other: {self.torsion}")
        if any(d <= 1 for d in self.torsion):
            raise ValueError(f"Invariant factors must exceed 1: {self.torsion}")

    def __eq__(self, other):
        if not isinstance(other, FgAbGroup):
            return NotImplemented
        return (self.free_rank, tuple(self.torsion)) == (other.free_rank, tuple(other.torsion))

    def __hash__(self):
        return hash((self.free_rank, tuple(self.torsion)))

    @property
    def ngens(self) -> int:
        return len(self.torsion) + self.free_rank

    def is_trivial(self) -> bool:
        return self.ngens == 0

    def is_torsion_free(self) -> bool:
        return not self.torsion

    def order_of_torsion(self) -> int:
        out = 1
        for d in self.torsion:
            out *= d
        return out

    def relation_matrix(self) -> IntMatrix:
        R = zeros(self.ngens, len(self.torsion))
        for i, d in enumerate(self.torsion):
            R[i, i] = d
        return R

    def reduce(self, x) -> np.ndarray:
        x = int_vector(x)
        for i, d in enumerate(self.torsion):
            x[i] %= d
        return x

    def contains_relation(self, x) -> bool:
        """True when x is zero in the group (lies in the relation lattice)."""
        x = int_vector(x)
        t = len(self.torsion)
        return all(x[i] % d == 0 for i, d in enumerate(self.torsion)) and all(v == 0 for v in x[t:])

    def to_dict(self) -> Dict[str, Any]:
        return {'free_rank': self.free_rank, 'torsion': list(self.torsion)}

    def __str__(self) -> str:
        parts = [f"Z/{d}" for d in self.torsion]
        if self.free_rank == 1:
            parts.append("Z")
        elif self.free_rank > 1:
            parts.append(f"Z^{self.free_rank}")
        return " + ".join(parts) if parts else "0"


def free_group(n: int) -> FgAbGroup:
    return FgAbGroup(free_rank=n)


def group_from_dict(data: Dict[str, Any]) -> FgAbGroup:
    return FgAbGroup(free_rank=int(data['free_rank']), torsion=tuple(int(d) for d in data.get('torsion', [])))


def cokernel(M) -> FgAbGroup:
    """ℤ^rows / im(M) in canonical form, carrying the quotient and lift matrices."""
    M = int_matrix(M)
    m = M.shape[0]
    S = smith_decompose(M)
    diag = S.diagonal()
    torsion_idx = [i for i in range(S.rank) if diag[i] > 1]
    free_idx = list(range(S.rank, m))
    keep = torsion_idx + free_idx
    witness = Presentation(
        generators=m,
        relations=M,
        smith=S,
        quotient=S.U[keep, :].copy() if keep else zeros(0, m),
        lift=S.U_inv[:, keep].copy() if keep else zeros(m, 0),
    )
    return FgAbGroup(free_rank=len(free_idx), torsion=tuple(diag[i] for i in torsion_idx), witness=witness)


def kernel_group(M) -> Tuple[FgAbGroup, IntMatrix]:
    """ker(M) as a free group together with its inclusion matrix (basis columns)."""
    M = int_matrix(M)
    S = smith_decompose(M)
    basis = S.V[:, S.rank:].copy()
    witness = Presentation(
        generators=M.shape[1],
        relations=zeros(basis.shape[1], 0),
        smith=S,
        quotient=S.V_inv[S.rank:, :].copy(),
        lift=basis,
    )
    return FgAbGroup(free_rank=basis.shape[1], witness=witness), basis


# --- Homomorphisms ---

@dataclass(frozen=True, eq=False)
class GroupHom:
    domain: FgAbGroup
    codomain: FgAbGroup
    matrix: IntMatrix
    name: str = ''

    def __post_init__(self):
        expected = (self.codomain.ngens, self.domain.ngens)
        if tuple(self.matrix.shape) != expected:
            raise ValueError(f"Hom '{self.name}': matrix shape {self.matrix.shape}, expected {expected}")

    def normalized(self) -> 'GroupHom':
        M = self.matrix.copy()
        for i, d in enumerate(self.codomain.torsion):
            M[i] = M[i] % d
        return GroupHom(self.domain, self.codomain, M, self.name)

    def apply(self, x) -> np.ndarray:
        return self.codomain.reduce(matmul(self.matrix, int_vector(x).reshape(-1, 1))[:, 0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'domain': self.domain.to_dict(),
            'codomain': self.codomain.to_dict(),
            'matrix': [[int(v) for v in row] for row in self.normalized().matrix],
        }


def identity_hom(G: FgAbGroup, name: str = 'id') -> GroupHom:
    return GroupHom(G, G, identity(G.ngens), name)


def zero_hom(G: FgAbGroup, H: FgAbGroup, name: str = '0') -> GroupHom:
    return GroupHom(G, H, zeros(H.ngens, G.ngens), name)


def compose(g: GroupHom, f: GroupHom, name: str = '') -> GroupHom:
    """g∘f."""
    if f.codomain != g.domain:
        raise ValueError(f"Cannot compose {g.name or 'g'}∘{f.name or 'f'}: {f.codomain} vs {g.domain}")
    return GroupHom(f.domain, g.codomain, matmul(g.matrix, f.matrix), name or f"{g.name}∘{f.name}").normalized()


def scale_hom(f: GroupHom, k: int) -> GroupHom:
    return GroupHom(f.domain, f.codomain, f.matrix * k, f"{k}·{f.name}").normalized()


def in_relations(G: FgAbGroup, x) -> bool:
    """x ∈ im(relations of G), decided by a Smith preimage."""
    x = int_vector(x)
    if G.ngens == 0:
        return True
    return solve_integer_system(G.relation_matrix(), x) is not None


def check_well_defined(h: GroupHom) -> None:
    """Raises IllDefinedHomError when some domain relation d_j·e_j is not sent to zero."""
    R = h.domain.relation_matrix()
    for j in range(R.shape[1]):
        image = matmul(h.matrix, R[:, j:j + 1])[:, 0]
        if not in_relations(h.codomain, image):
            raise IllDefinedHomError(
                f"Hom '{h.name}' is ill-defined: relation #{j} ({h.domain.torsion[j]}·e{j}) maps to {list(image)}",
                relation_index=j)


def homs_equal(f: GroupHom, g: GroupHom) -> bool:
    if f.domain != g.domain or f.codomain != g.codomain:
        return False
    diff = f.matrix - g.matrix
    return all(f.codomain.contains_relation(diff[:, j]) for j in range(diff.shape[1]))


def hom_kernel_generators(h: GroupHom) -> IntMatrix:
    """Columns generating {x ∈ ℤ^{domain gens} : h(x) = 0}."""
    R = h.codomain.relation_matrix()
    stacked = np.concatenate([h.matrix, R], axis=1) if R.shape[1] else h.matrix
    K = kernel(stacked)
    return K[:h.domain.ngens, :]


def image_contains(h: GroupHom, y) -> bool:
    """y ∈ im(h) in the codomain."""
    R = h.codomain.relation_matrix()
    stacked = np.concatenate([h.matrix, R], axis=1) if R.shape[1] else h.matrix
    if stacked.shape[1] == 0:
        return h.codomain.contains_relation(y)
    return solve_integer_system(stacked, int_vector(y)) is not None


def is_surjective(h: GroupHom) -> bool:
    I = identity(h.codomain.ngens)
    return all(image_contains(h, I[:, i]) for i in range(h.codomain.ngens))


def is_injective(h: GroupHom) -> bool:
    K = hom_kernel_generators(h)
    return all(h.domain.contains_relation(K[:, j]) for j in range(K.shape[1]))


def is_isomorphism(h: GroupHom) -> bool:
    """Bijectivity of a well-defined hom; raises IllDefinedHomError otherwise."""
    check_well_defined(h)
    return is_surjective(h) and is_injective(h)


def is_exact(f: GroupHom, g: GroupHom) -> bool:
    """im(f) = ker(g) at the middle group (g∘f = 0 and ker g ⊆ im f)."""
    if f.codomain != g.domain:
        raise ValueError("is_exact needs f: A → B and g: B → C")
    composite = matmul(g.matrix, f.matrix)
    if not all(g.codomain.contains_relation(composite[:, j]) for j in range(composite.shape[1])):
        return False
    K = hom_kernel_generators(g)
    return all(image_contains(f, K[:, j]) for j in range(K.shape[1]))


# --- Constrained solving ---

@dataclass(frozen=True, eq=False)
class HomConstraint:
    """left ∘ X ∘ right = target, where a missing left/right means the identity."""
    target: GroupHom
    left: Optional[GroupHom] = None
    right: Optional[GroupHom] = None
    label: str = ''


def solve_hom_constraints(domain: FgAbGroup, codomain: FgAbGroup,
                          constraints: Sequence[HomConstraint], name: str = 'X') -> Optional[GroupHom]:
    """
    Finds a well-defined X: domain → codomain satisfying every constraint, or None when
    the integer system is infeasible. Congruences modulo torsion orders are turned into
    equations with one slack unknown each.
    """
    c, d = codomain.ngens, domain.ngens
    n_x = c * d
    rows: List[Dict[int, int]] = []
    rhs: List[int] = []
    slack_orders: List[int] = []

    def add_row(coeffs: Dict[int, int], value: int, modulus: Optional[int]):
        if modulus is not None:
            coeffs = dict(coeffs)
            coeffs[n_x + len(slack_orders)] = -modulus
            slack_orders.append(modulus)
        rows.append(coeffs)
        rhs.append(value)

    for con in constraints:
        L = con.left.matrix if con.left is not None else identity(c)
        R = con.right.matrix if con.right is not None else identity(d)
        Z = con.left.codomain if con.left is not None else codomain
        W = con.right.domain if con.right is not None else domain
        if con.left is not None and con.left.domain != codomain:
            raise ValueError(f"Constraint '{con.label}': left map does not start at the unknown's codomain")
        if con.right is not None and con.right.codomain != domain:
            raise ValueError(f"Constraint '{con.label}': right map does not end at the unknown's domain")
        if con.target.domain != W or con.target.codomain != Z:
            raise ValueError(f"Constraint '{con.label}': target has the wrong shape")
        T = con.target.matrix
        for w in range(W.ngens):
            for z in range(Z.ngens):
                coeffs: Dict[int, int] = {}
                for i in range(c):
                    if L[z, i] == 0:
                        continue
                    for j in range(d):
                        if R[j, w] != 0:
                            coeffs[i * d + j] = coeffs.get(i * d + j, 0) + L[z, i] * R[j, w]
                modulus = Z.torsion[z] if z < len(Z.torsion) else None
                add_row(coeffs, int(T[z, w]), modulus)

    # X must send each torsion relation d_j e_j of the domain to zero
    for j, dj in enumerate(domain.torsion):
        for i in range(c):
            modulus = codomain.torsion[i] if i < len(codomain.torsion) else None
            add_row({i * d + j: dj}, 0, modulus)

    n_unknowns = n_x + len(slack_orders)
    if n_x == 0:
        X = zeros(c, d)
    elif not rows:
        X = zeros(c, d)
    else:
        system = zeros(len(rows), n_unknowns)
        for r, coeffs in enumerate(rows):
            for k, v in coeffs.items():
                system[r, k] = v
        solution = solve_integer_system(system, rhs)
        if solution is None:
            return None
        X = np.array(list(solution[:n_x]), dtype=object).reshape(c, d) if n_x else zeros(c, d)

    result = GroupHom(domain, codomain, X, name).normalized()
    check_well_defined(result)
    for con in constraints:
        lhs = result
        if con.right is not None:
            lhs = compose(lhs, con.right)
        if con.left is not None:
            lhs = compose(con.left, lhs)
        if not homs_equal(lhs, con.target):
            raise WorkbenchError(f"Solved hom '{name}' fails constraint '{con.label}' on recomputation")
    return result


# --- Opposite algebras ---

@dataclass(frozen=True, eq=False)
class ProjectionDatum:
    matrix: IntMatrix
    algebra: str = 'A'

    def is_idempotent(self) -> bool:
        return bool((matmul(self.matrix, self.matrix) == self.matrix).all())


def opposite_label(label: str) -> str:
    return label[:-3] if label.endswith('^op') else f"{label}^op"


def transpose_projection_class(p: ProjectionDatum) -> ProjectionDatum:
    """[p^op] ↦ [p^T]: transpose the datum and flip the algebra label to the opposite."""
    return ProjectionDatum(matrix=int_matrix(p.matrix).T.copy(), algebra=opposite_label(p.algebra))


def matrix_to_list(M: IntMatrix) -> List[List[int]]:
    return [[int(v) for v in row] for row in M]
