"""Exact integer linear algebra and canonical forms for l-local modules.

Everything here is computed over Z with exact (arbitrary size) integers and
interpreted l-locally only at the very end, when a presentation is collapsed
to its canonical form.  Localisation at l is flat, so kernels, cokernels and
tensor products may be computed over Z first and read off l-locally at the
end; no rounding ever happens.

The two carrier types:

* :class:`LModule` -- a finitely generated module over the l-adic integers in
  canonical form ``Zl^r (+) Z/l^e1 (+) ... (+) Z/l^ek`` with e1 >= ... >= ek.
* :class:`CoLGroup` -- a cofinitely generated l-primary torsion group,
  represented by the finitely generated module it is the Pontryagin dual of.

Maps are integer matrices on canonical generators (:class:`LMap`).  A map may
carry a working precision N, meaning its entries are only known modulo l^N;
operations that cannot certify their output at that precision raise
:class:`~devissage.errors.PrecisionExhausted` rather than guess.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import MismatchedPrime, PrecisionExhausted


# ---------------------------------------------------------------------------
# small integer helpers


def is_prime(n: int) -> bool:
    """Trial-division primality check, adequate for the small primes used here."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def valuation(x: int, ell: int) -> int:
    """l-adic valuation of a nonzero integer.

    >>> valuation(48, 2)
    4
    """
    if x == 0:
        raise ValueError("valuation of zero is infinite")
    v = 0
    x = abs(x)
    while x % ell == 0:
        x //= ell
        v += 1
    return v


# ---------------------------------------------------------------------------
# immutable integer matrices
#
# A tiny shape-aware wrapper.  Bare lists of lists lose track of the column
# count the moment a matrix has zero rows, and zero-dimensional matrices are
# everywhere in this project (trivial kernels, empty relation sets).


class IntMatrix:
    """Immutable integer matrix with explicit shape."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data: Iterable[Iterable[int]]):
        self.rows = rows
        self.cols = cols
        tup = tuple(tuple(int(x) for x in row) for row in data)
        if len(tup) != rows or any(len(r) != cols for r in tup):
            raise ValueError("shape mismatch in IntMatrix")
        self.data = tup

    # -- constructors -------------------------------------------------

    @classmethod
    def from_rows(cls, data: Sequence[Sequence[int]], cols: Optional[int] = None) -> "IntMatrix":
        data = list(data)
        if cols is None:
            cols = len(data[0]) if data else 0
        return cls(len(data), cols, data)

    @classmethod
    def identity(cls, n: int) -> "IntMatrix":
        return cls(n, n, [[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "IntMatrix":
        return cls(rows, cols, [[0] * cols for _ in range(rows)])

    @classmethod
    def diagonal(cls, entries: Sequence[int]) -> "IntMatrix":
        n = len(entries)
        return cls(n, n, [[entries[i] if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def column(cls, entries: Sequence[int]) -> "IntMatrix":
        return cls(len(entries), 1, [[x] for x in entries])

    # -- basic ops ----------------------------------------------------

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IntMatrix)
            and self.rows == other.rows
            and self.cols == other.cols
            and self.data == other.data
        )

    def __hash__(self):
        return hash((self.rows, self.cols, self.data))

    def __repr__(self):
        return f"IntMatrix({self.rows}x{self.cols}, {self.data!r})"

    def entry(self, i: int, j: int) -> int:
        return self.data[i][j]

    def row(self, i: int) -> tuple:
        return self.data[i]

    def col(self, j: int) -> tuple:
        return tuple(self.data[i][j] for i in range(self.rows))

    def transpose(self) -> "IntMatrix":
        return IntMatrix(self.cols, self.rows, [self.col(j) for j in range(self.cols)])

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        if self.cols != other.rows:
            raise ValueError(f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}")
        out = []
        od = other.data
        for r in self.data:
            row = [0] * other.cols
            for k, a in enumerate(r):
                if a:
                    ork = od[k]
                    for j in range(other.cols):
                        row[j] += a * ork[j]
            out.append(row)
        return IntMatrix(self.rows, other.cols, out)

    def __add__(self, other: "IntMatrix") -> "IntMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch")
        return IntMatrix(
            self.rows,
            self.cols,
            [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.data, other.data)],
        )

    def __sub__(self, other: "IntMatrix") -> "IntMatrix":
        return self + other.scale(-1)

    def scale(self, c: int) -> "IntMatrix":
        return IntMatrix(self.rows, self.cols, [[c * x for x in r] for r in self.data])

    def mod(self, m: int) -> "IntMatrix":
        return IntMatrix(self.rows, self.cols, [[x % m for x in r] for r in self.data])

    def apply(self, vec: Sequence[int]) -> tuple:
        if len(vec) != self.cols:
            raise ValueError("vector length mismatch")
        return tuple(sum(a * v for a, v in zip(row, vec)) for row in self.data)

    def hstack(self, other: "IntMatrix") -> "IntMatrix":
        if self.rows != other.rows:
            raise ValueError("row mismatch in hstack")
        return IntMatrix(
            self.rows, self.cols + other.cols,
            [r1 + r2 for r1, r2 in zip(self.data, other.data)],
        )

    def vstack(self, other: "IntMatrix") -> "IntMatrix":
        if self.cols != other.cols:
            raise ValueError("column mismatch in vstack")
        return IntMatrix(self.rows + other.rows, self.cols, self.data + other.data)

    def take_rows(self, idx: Sequence[int]) -> "IntMatrix":
        return IntMatrix(len(idx), self.cols, [self.data[i] for i in idx])

    def take_cols(self, idx: Sequence[int]) -> "IntMatrix":
        return IntMatrix(self.rows, len(idx), [[r[j] for j in idx] for r in self.data])

    def kron(self, other: "IntMatrix") -> "IntMatrix":
        out = []
        for r1 in self.data:
            for r2 in other.data:
                out.append([a * b for a in r1 for b in r2])
        return IntMatrix(self.rows * other.rows, self.cols * other.cols, out)

    def is_zero(self) -> bool:
        return all(x == 0 for r in self.data for x in r)

    def det(self) -> int:
        """Exact determinant via fraction-free Bareiss elimination."""
        if self.rows != self.cols:
            raise ValueError("determinant of non-square matrix")
        n = self.rows
        if n == 0:
            return 1
        a = [list(r) for r in self.data]
        sign = 1
        prev = 1
        for k in range(n - 1):
            if a[k][k] == 0:
                # find a pivot row below
                for i in range(k + 1, n):
                    if a[i][k] != 0:
                        a[k], a[i] = a[i], a[k]
                        sign = -sign
                        break
                else:
                    return 0
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
                a[i][k] = 0
            prev = a[k][k]
        return sign * a[n - 1][n - 1]


# ---------------------------------------------------------------------------
# Smith normal form


def smith_with_inverses(A: IntMatrix):
    """Smith normal form with all four transforms.

    Returns (U, D, V, Uinv, Vinv) with U A V = D, U and V unimodular,
    Uinv = U^-1, Vinv = V^-1, D diagonal with non-negative entries and
    d_i | d_{i+1}.

    Pivot choice: the nonzero entry of smallest absolute value in the active
    block, ties broken in row-major order, which makes every run fully
    deterministic.  The diagonal D is the classical invariant-factor form and
    does not depend on the pivot rule.
    """
    m, n = A.rows, A.cols
    a = [list(r) for r in A.data]
    U = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    Ui = [[1 if i == j else 0 for j in range(m)] for i in range(m)]
    V = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    Vi = [[1 if i == j else 0 for j in range(n)] for i in range(n)]

    def row_swap(i, j):
        if i == j:
            return
        a[i], a[j] = a[j], a[i]
        U[i], U[j] = U[j], U[i]
        for r in Ui:
            r[i], r[j] = r[j], r[i]

    def row_add(i, j, c):
        # row_i += c * row_j
        if c == 0:
            return
        ai, aj = a[i], a[j]
        for k in range(n):
            ai[k] += c * aj[k]
        ui, uj = U[i], U[j]
        for k in range(m):
            ui[k] += c * uj[k]
        for r in Ui:
            r[j] -= c * r[i]

    def col_swap(i, j):
        if i == j:
            return
        for r in a:
            r[i], r[j] = r[j], r[i]
        for r in V:
            r[i], r[j] = r[j], r[i]
        Vi[i], Vi[j] = Vi[j], Vi[i]

    def col_add(j, i, c):
        # col_j += c * col_i
        if c == 0:
            return
        for r in a:
            r[j] += c * r[i]
        for r in V:
            r[j] += c * r[i]
        vij, vjj = Vi[i], Vi[j]
        for k in range(n):
            vij[k] -= c * vjj[k]

    def negate_row(i):
        a[i] = [-x for x in a[i]]
        U[i] = [-x for x in U[i]]
        for r in Ui:
            r[i] = -r[i]

    t = 0
    while t < m and t < n:
        # locate pivot: min |entry|, row-major ties
        best = None
        for i in range(t, m):
            for j in range(t, n):
                x = a[i][j]
                if x != 0 and (best is None or abs(x) < best[0]):
                    best = (abs(x), i, j)
        if best is None:
            break
        row_swap(t, best[1])
        col_swap(t, best[2])
        while True:
            # reduce column t
            dirty = False
            for i in range(m):
                if i != t and a[i][t] != 0:
                    q = a[i][t] // a[t][t]
                    row_add(i, t, -q)
                    if a[i][t] != 0:
                        dirty = True
            if dirty:
                # a smaller residue exists below; promote it and repeat
                best = None
                for i in range(m):
                    if i != t and a[i][t] != 0 and (best is None or abs(a[i][t]) < best[0]):
                        best = (abs(a[i][t]), i)
                row_swap(t, best[1])
                continue
            # reduce row t
            dirty = False
            for j in range(n):
                if j != t and a[t][j] != 0:
                    q = a[t][j] // a[t][t]
                    col_add(j, t, -q)
                    if a[t][j] != 0:
                        dirty = True
            if dirty:
                best = None
                for j in range(n):
                    if j != t and a[t][j] != 0 and (best is None or abs(a[t][j]) < best[0]):
                        best = (abs(a[t][j]), j)
                col_swap(t, best[1])
                continue
            if any(a[i][t] for i in range(m) if i != t):
                continue
            # pivot must divide the rest of the block
            d = a[t][t]
            stuck = None
            for i in range(t + 1, m):
                for j in range(t + 1, n):
                    if a[i][j] % d != 0:
                        stuck = i
                        break
                if stuck is not None:
                    break
            if stuck is None:
                break
            row_add(t, stuck, 1)
        if a[t][t] < 0:
            negate_row(t)
        t += 1

    return (
        IntMatrix.from_rows(U, m),
        IntMatrix.from_rows(a, n),
        IntMatrix.from_rows(V, n),
        IntMatrix.from_rows(Ui, m),
        IntMatrix.from_rows(Vi, n),
    )


def smith_normal_form(A) -> tuple:
    """(U, D, V) with U A V = D in invariant-factor form.

    Accepts an IntMatrix or a list of rows.

    >>> U, D, V, = smith_normal_form([[2, 4], [6, 8]])
    >>> [D.entry(i, i) for i in range(2)]
    [2, 4]
    """
    if not isinstance(A, IntMatrix):
        A = IntMatrix.from_rows(A)
    U, D, V, _, _ = smith_with_inverses(A)
    return U, D, V


def invariant_factors(A) -> list:
    """Nonzero diagonal entries of the Smith form, in divisibility order."""
    if not isinstance(A, IntMatrix):
        A = IntMatrix.from_rows(A)
    _, D, _ = smith_normal_form(A)
    out = []
    for i in range(min(D.rows, D.cols)):
        d = D.entry(i, i)
        if d != 0:
            out.append(d)
    return out


def integer_kernel_basis(A: IntMatrix) -> IntMatrix:
    """Basis of {x in Z^cols : A x = 0} as columns of the returned matrix.

    The basis spans a saturated sublattice (the honest kernel, not a finite
    index subgroup of it).
    """
    _, D, V, _, _ = smith_with_inverses(A)
    r = 0
    for i in range(min(D.rows, D.cols)):
        if D.entry(i, i) != 0:
            r += 1
    idx = list(range(r, A.cols))
    return V.take_cols(idx)


def rank(A: IntMatrix) -> int:
    """Rank over Q."""
    return len(invariant_factors(A))


def solve_integer(A: IntMatrix, b: Sequence[int]):
    """One integer solution x of A x = b, or None when none exists."""
    U, D, V, _, _ = smith_with_inverses(A)
    c = U.apply(b)
    y = [0] * A.cols
    for i in range(A.rows):
        d = D.entry(i, i) if i < min(D.rows, D.cols) else 0
        if d == 0:
            if c[i] != 0:
                return None
        else:
            if c[i] % d != 0:
                return None
            y[i] = c[i] // d
    return V.apply(y)


# ---------------------------------------------------------------------------
# canonical l-local modules


@dataclass(frozen=True)
class LModule:
    """Finitely generated Zl-module in canonical form.

    ``Zl^free_rank (+) Z/l^e1 (+) ... (+) Z/l^ek`` with weakly decreasing
    exponents.  Two modules are isomorphic iff they are equal as values.

    Generator convention: generators 0..free_rank-1 are free, generator
    free_rank+i has order l^torsion_exponents[i].

    >>> M = LModule(2, 1, (3, 1))
    >>> str(M)
    'Z2 x C8 x C2'
    """

    ell: int
    free_rank: int
    torsion_exponents: tuple = ()

    def __post_init__(self):
        if not is_prime(self.ell):
            raise ValueError(f"l must be prime, got {self.ell}")
        if self.free_rank < 0:
            raise ValueError("negative free rank")
        exps = tuple(int(e) for e in self.torsion_exponents)
        object.__setattr__(self, "torsion_exponents", exps)
        if any(e < 1 for e in exps):
            raise ValueError("torsion exponents must be >= 1")
        if any(exps[i] < exps[i + 1] for i in range(len(exps) - 1)):
            raise ValueError("torsion exponents must be weakly decreasing")

    # -- structure queries -------------------------------------------

    @property
    def num_gens(self) -> int:
        return self.free_rank + len(self.torsion_exponents)

    @property
    def is_trivial(self) -> bool:
        return self.num_gens == 0

    @property
    def is_finite(self) -> bool:
        return self.free_rank == 0

    @property
    def exponent_valuation(self) -> int:
        """v_l of the exponent of the torsion part (0 when torsion free)."""
        return self.torsion_exponents[0] if self.torsion_exponents else 0

    def order(self) -> Optional[int]:
        """Cardinality for finite modules, None otherwise."""
        if not self.is_finite:
            return None
        return self.ell ** sum(self.torsion_exponents)

    def gen_orders(self) -> tuple:
        """Per-generator order exponent, None meaning free."""
        return (None,) * self.free_rank + self.torsion_exponents

    def standard_relation_rows(self) -> IntMatrix:
        """Relation matrix of the defining presentation, one row per torsion generator."""
        n = self.num_gens
        rows = []
        for i, e in enumerate(self.torsion_exponents):
            row = [0] * n
            row[self.free_rank + i] = self.ell ** e
            rows.append(row)
        return IntMatrix.from_rows(rows, n)

    def relation_cols(self) -> IntMatrix:
        return self.standard_relation_rows().transpose()

    def element_count_of_level(self, k: int) -> int:
        """Number of elements killed by l^k (finite part only contributes min)."""
        if not self.is_finite:
            raise ValueError("level counting needs a finite module")
        return self.ell ** sum(min(e, k) for e in self.torsion_exponents)

    def all_elements(self):
        """Iterate coefficient tuples of all elements of a finite module."""
        if not self.is_finite:
            raise ValueError("cannot enumerate an infinite module")
        orders = [self.ell ** e for e in self.torsion_exponents]

        def rec(i, prefix):
            if i == len(orders):
                yield tuple(prefix)
                return
            for c in range(orders[i]):
                yield from rec(i + 1, prefix + [c])

        yield from rec(0, [])

    def reduce_vector(self, vec: Sequence[int]) -> tuple:
        """Reduce generator coordinates into canonical range."""
        out = []
        for x, e in zip(vec, self.gen_orders()):
            out.append(int(x) if e is None else int(x) % self.ell ** e)
        return tuple(out)

    # -- constructions ------------------------------------------------

    def _check_prime(self, other: "LModule"):
        if self.ell != other.ell:
            raise MismatchedPrime(f"l={self.ell} vs l={other.ell}")

    def direct_sum(self, other: "LModule") -> "LModule":
        self._check_prime(other)
        exps = tuple(sorted(self.torsion_exponents + other.torsion_exponents, reverse=True))
        return LModule(self.ell, self.free_rank + other.free_rank, exps)

    def tensor(self, other: "LModule") -> "LModule":
        """Tensor product over Zl, via the closed form on cyclic factors."""
        mod, _ = tensor_with_index(self, other)
        return mod

    def tor1(self, other: "LModule") -> "LModule":
        """First derived functor of tensor over Zl.

        Cyclic rules: Tor1(Z/l^a, Z/l^b) = Z/l^min(a,b); free factors
        contribute nothing.  Higher Tor vanishes (see :func:`tor_dimension_bound`).
        """
        self._check_prime(other)
        exps = sorted(
            (min(a, b) for a in self.torsion_exponents for b in other.torsion_exponents),
            reverse=True,
        )
        return LModule(self.ell, 0, tuple(exps))

    def dual(self) -> "CoLGroup":
        """Pontryagin dual: Zl^r (+) F  ->  (Ql/Zl)^r (+) F."""
        return CoLGroup(self)

    def __str__(self):
        if self.is_trivial:
            return "0"
        parts = []
        if self.free_rank:
            parts.append(f"Z{self.ell}" + (f"^{self.free_rank}" if self.free_rank > 1 else ""))
        parts.extend(f"C{self.ell ** e}" for e in self.torsion_exponents)
        return " x ".join(parts)


def tor_dimension_bound(i: int) -> bool:
    """True iff Tor^i can be nonzero.  Zl has global dimension 1."""
    return i in (0, 1)


@dataclass(frozen=True)
class CoLGroup:
    """Cofinitely generated l-primary torsion group.

    ``(Ql/Zl)^corank (+) finite``, stored through its Pontryagin dual, which
    is a finitely generated LModule with the same numerical data.

    >>> C = LModule(3, 2, (1,)).dual()
    >>> str(C)
    '(Q3/Z3)^2 x C3'
    >>> C.level(2)
    LModule(ell=3, free_rank=0, torsion_exponents=(2, 2, 1))
    """

    dual_module: LModule

    @property
    def ell(self) -> int:
        return self.dual_module.ell

    @property
    def corank(self) -> int:
        return self.dual_module.free_rank

    @property
    def finite_exponents(self) -> tuple:
        return self.dual_module.torsion_exponents

    @property
    def is_divisible(self) -> bool:
        return not self.finite_exponents

    @property
    def is_finite(self) -> bool:
        return self.corank == 0

    @property
    def is_trivial(self) -> bool:
        return self.dual_module.is_trivial

    def dual(self) -> LModule:
        return self.dual_module

    def level(self, s: int) -> LModule:
        """The l^s-torsion subgroup, a finite module.

        (Ql/Zl) contributes Z/l^s per copy, a finite cyclic factor C(l^e)
        contributes Z/l^min(e,s).
        """
        if s < 0:
            raise ValueError("level must be >= 0")
        exps = [s] * self.corank + [min(e, s) for e in self.finite_exponents]
        exps = tuple(sorted((e for e in exps if e > 0), reverse=True))
        return LModule(self.ell, 0, exps)

    def level_inclusion_matrix(self, s: int, t: int) -> IntMatrix:
        """Matrix of the natural inclusion of the l^s-torsion into the l^t-torsion.

        Coordinates on both sides are the dual module's generators; the
        inclusion scales coordinate i by l^(cap_i(t) - cap_i(s)).
        """
        if not 0 <= s <= t:
            raise ValueError("need 0 <= s <= t")
        ell = self.ell
        scales = []
        for e in self.dual_module.gen_orders():
            cap_s = s if e is None else min(e, s)
            cap_t = t if e is None else min(e, t)
            scales.append(ell ** (cap_t - cap_s))
        return IntMatrix.diagonal(scales)

    def __str__(self):
        if self.is_trivial:
            return "0"
        parts = []
        ell = self.ell
        if self.corank:
            parts.append(f"(Q{ell}/Z{ell})" + (f"^{self.corank}" if self.corank > 1 else ""))
        parts.extend(f"C{ell ** e}" for e in self.finite_exponents)
        return " x ".join(parts)


def dual(x):
    """Pontryagin duality in either direction.  Involutive."""
    return x.dual()


# ---------------------------------------------------------------------------
# presentations


@dataclass(frozen=True)
class Presentation:
    """A module given by generators and integer relation rows.

    The module is Z^num_generators modulo the row span, read l-locally.
    """

    ell: int
    num_generators: int
    relation_rows: tuple

    def __post_init__(self):
        rows = tuple(tuple(int(x) for x in r) for r in self.relation_rows)
        object.__setattr__(self, "relation_rows", rows)
        if any(len(r) != self.num_generators for r in rows):
            raise ValueError("relation row width disagrees with generator count")

    def relation_matrix(self) -> IntMatrix:
        return IntMatrix.from_rows(self.relation_rows, self.num_generators)


@dataclass(frozen=True)
class Canonicalized:
    """Canonical form of a presentation plus the change of coordinates.

    project: (module gens) x (presentation gens), image of each presentation
    generator in canonical coordinates.
    lift: (presentation gens) x (module gens), a chosen preimage of each
    canonical generator.  project @ lift is the identity on the module.
    """

    module: LModule
    project: IntMatrix
    lift: IntMatrix


def canonicalize_with_maps(pres: Presentation) -> Canonicalized:
    """Collapse a presentation to canonical form, keeping the coordinate maps.

    Invariant factors prime to l are units l-locally and their generators are
    dropped; mixed factors u*l^v keep only the l-part l^v.
    """
    p = pres.num_generators
    ell = pres.ell
    rel_cols = pres.relation_matrix().transpose()  # p x q
    U, D, V, Ui, Vi = smith_with_inverses(rel_cols)
    r = 0
    for i in range(min(D.rows, D.cols)):
        if D.entry(i, i) != 0:
            r += 1
    # classify the z-coordinates
    free_idx = list(range(r, p))
    torsion = []  # (exponent, index)
    for i in range(r):
        v = valuation(D.entry(i, i), ell)
        if v > 0:
            torsion.append((v, i))
    torsion.sort(key=lambda t: (-t[0], t[1]))
    exps = tuple(v for v, _ in torsion)
    module = LModule(ell, len(free_idx), exps)
    selected = free_idx + [i for _, i in torsion]
    project = U.take_rows(selected)
    lift = Ui.take_cols(selected)
    return Canonicalized(module, project, lift)


def canonicalize(pres: Presentation) -> LModule:
    """Canonical form of a presentation.

    >>> P = Presentation(2, 2, ((2, 0), (0, 3)))
    >>> str(canonicalize(P))
    'C2'
    """
    return canonicalize_with_maps(pres).module


# ---------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class LMap:
    """Module map between canonical LModules, as an integer matrix.

    matrix has shape (codomain gens) x (domain gens) and acts on coefficient
    columns.  Entries are normalised: rows belonging to torsion generators of
    the codomain are reduced modulo the generator order.

    precision=N marks a map whose entries are only known modulo l^N; exact
    maps use precision=None.  A torsion domain generator can never map to a
    free codomain generator (Zl has no torsion), so those entries must be 0.
    """

    domain: LModule
    codomain: LModule
    matrix: IntMatrix
    precision: Optional[int] = None

    def __post_init__(self):
        if self.domain.ell != self.codomain.ell:
            raise MismatchedPrime("map between modules over different primes")
        mat = self.matrix
        if not isinstance(mat, IntMatrix):
            mat = IntMatrix.from_rows(mat, self.domain.num_gens)
        if mat.rows != self.codomain.num_gens or mat.cols != self.domain.num_gens:
            raise ValueError(
                f"matrix shape {mat.rows}x{mat.cols} does not match map "
                f"{self.codomain.num_gens}x{self.domain.num_gens}"
            )
        ell = self.domain.ell
        N = self.precision
        if N is not None:
            if N < 1:
                raise ValueError("precision must be >= 1")
            if any(e > N for e in self.codomain.torsion_exponents):
                raise PrecisionExhausted(
                    f"codomain exponent exceeds working precision {N}; raise precision"
                )
        dom_orders = self.domain.gen_orders()
        cod_orders = self.codomain.gen_orders()
        rows = []
        for i, bo in enumerate(cod_orders):
            row = []
            for j, ao in enumerate(dom_orders):
                x = mat.entry(i, j)
                if bo is None:
                    if ao is not None:
                        if N is None:
                            if x != 0:
                                raise ValueError(
                                    "torsion generator cannot map to the free part"
                                )
                        elif x % ell ** N != 0:
                            raise ValueError(
                                "torsion generator cannot map to the free part"
                            )
                        x = 0
                    elif N is not None:
                        x %= ell ** N
                else:
                    x %= ell ** bo
                    if ao is not None:
                        need = max(bo - ao, 0)
                        if need and x % ell ** need != 0:
                            raise ValueError(
                                f"entry ({i},{j}) violates well-definedness: "
                                f"needs divisibility by l^{need}"
                            )
                row.append(x)
            rows.append(row)
        object.__setattr__(self, "matrix", IntMatrix.from_rows(rows, self.domain.num_gens))

    # -- constructors -------------------------------------------------

    @classmethod
    def identity_on(cls, module: LModule) -> "LMap":
        return cls(module, module, IntMatrix.identity(module.num_gens))

    @classmethod
    def zero(cls, domain: LModule, codomain: LModule) -> "LMap":
        return cls(domain, codomain, IntMatrix.zeros(codomain.num_gens, domain.num_gens))

    # -- map algebra --------------------------------------------------

    def _merge_precision(self, other: "LMap"):
        if self.precision is None:
            return other.precision
        if other.precision is None:
            return self.precision
        return min(self.precision, other.precision)

    def compose(self, other: "LMap") -> "LMap":
        """self after other."""
        if other.codomain != self.domain:
            raise ValueError("composition mismatch")
        return LMap(
            other.domain, self.codomain, self.matrix @ other.matrix,
            self._merge_precision(other),
        )

    def __add__(self, other: "LMap") -> "LMap":
        if self.domain != other.domain or self.codomain != other.codomain:
            raise ValueError("sum of maps with different (co)domains")
        return LMap(self.domain, self.codomain, self.matrix + other.matrix,
                    self._merge_precision(other))

    def __sub__(self, other: "LMap") -> "LMap":
        return self + other.scale(-1)

    def scale(self, c: int) -> "LMap":
        return LMap(self.domain, self.codomain, self.matrix.scale(c), self.precision)

    def apply(self, vec: Sequence[int]) -> tuple:
        return self.codomain.reduce_vector(self.matrix.apply(vec))

    def is_zero_map(self) -> bool:
        return self.matrix.is_zero()

    def equal_as_maps(self, other: "LMap") -> bool:
        return (
            self.domain == other.domain
            and self.codomain == other.codomain
            and self.matrix == other.matrix
        )

    def dual_map(self) -> "LMap":
        """Pontryagin dual of a map of finite modules.

        For f: X -> Y the dual runs Y^D -> X^D; on canonical generators the
        entry is f_ij * l^(a_j - b_i), an exact integer by well-definedness.
        Finite modules are canonically their own duals, so domain and
        codomain swap as LModules.
        """
        if not (self.domain.is_finite and self.codomain.is_finite):
            raise ValueError("dual_map needs finite modules")
        ell = self.domain.ell
        a = self.domain.torsion_exponents
        b = self.codomain.torsion_exponents
        rows = []
        for j in range(self.domain.num_gens):
            row = []
            for i in range(self.codomain.num_gens):
                num = self.matrix.entry(i, j) * ell ** a[j]
                den = ell ** b[i]
                if num % den != 0:
                    raise ValueError("well-definedness violated in dual_map")
                row.append(num // den)
            rows.append(row)
        return LMap(self.codomain, self.domain,
                    IntMatrix.from_rows(rows, self.codomain.num_gens), self.precision)


# ---------------------------------------------------------------------------
# kernels, cokernels, images


@dataclass(frozen=True)
class KernelResult:
    module: LModule
    inclusion: LMap
    precision_capped: bool = False


@dataclass(frozen=True)
class CokernelResult:
    module: LModule
    projection: LMap
    precision_capped: bool = False


def _guard_precision(f: LMap, where: str):
    if f.precision is not None and (f.domain.free_rank or f.codomain.free_rank):
        raise PrecisionExhausted(
            f"{where} of an approximate map with a free carrier cannot be "
            f"certified at precision {f.precision}; raise precision or supply "
            "an exact matrix"
        )


def kernel(f: LMap) -> KernelResult:
    """Kernel of a map, with its inclusion into the domain.

    Lift to presentations: u in Z^m represents a kernel element iff
    F u lies in the relation lattice of the codomain.  Two saturated integer
    kernel computations and one canonicalization, all exact.
    """
    _guard_precision(f, "kernel")
    dom, cod = f.domain, f.codomain
    ell = dom.ell
    block = f.matrix.hstack(cod.relation_cols())
    kb = integer_kernel_basis(block)
    B = kb.take_rows(range(dom.num_gens)) if kb.cols else IntMatrix.zeros(dom.num_gens, 0)
    # relations among the kernel generators: preimages of the domain relations
    block2 = B.hstack(dom.relation_cols())
    yb = integer_kernel_basis(block2)
    rel_rows = yb.take_rows(range(B.cols)).transpose()
    canon = canonicalize_with_maps(Presentation(ell, B.cols, rel_rows.data))
    inc_matrix = B @ canon.lift
    inc = LMap(canon.module, dom, inc_matrix)
    capped = _capped(f, canon.module)
    return KernelResult(canon.module, inc, capped)


def cokernel(f: LMap) -> CokernelResult:
    """Cokernel of a map, with the projection from the codomain."""
    _guard_precision(f, "cokernel")
    cod = f.codomain
    rel = cod.standard_relation_rows().vstack(f.matrix.transpose())
    canon = canonicalize_with_maps(Presentation(cod.ell, cod.num_gens, rel.data))
    proj = LMap(cod, canon.module, canon.project)
    capped = _capped(f, canon.module)
    return CokernelResult(canon.module, proj, capped)


def _capped(f: LMap, result: LModule) -> bool:
    if f.precision is None:
        return False
    return any(e >= f.precision for e in result.torsion_exponents)


def image(f: LMap) -> LModule:
    """Image of a map, as an abstract module (domain modulo kernel)."""
    k = kernel(f)
    return cokernel(k.inclusion).module


def preimage(f: LMap, vec: Sequence[int]):
    """Some x with f(x) = vec in the codomain, or None.

    Solves F x + R w = vec over Z, R the codomain relation columns.
    """
    block = f.matrix.hstack(f.codomain.relation_cols())
    sol = solve_integer(block, list(vec))
    if sol is None:
        return None
    return f.domain.reduce_vector(sol[: f.domain.num_gens])


def induced_into_kernel(f: LMap, k: KernelResult) -> LMap:
    """Factor f through a kernel containing its image.

    Requires that every generator image of f lies in the kernel submodule;
    raises ValueError otherwise.
    """
    cols = []
    for j in range(f.domain.num_gens):
        v = f.matrix.col(j)
        y = preimage(k.inclusion, v)
        if y is None:
            raise ValueError("map does not factor through the kernel")
        cols.append(y)
    mat = IntMatrix.from_rows(list(map(list, zip(*cols))), f.domain.num_gens) \
        if cols else IntMatrix.zeros(k.module.num_gens, 0)
    if k.module.num_gens == 0:
        mat = IntMatrix.zeros(0, f.domain.num_gens)
    return LMap(f.domain, k.module, mat, f.precision)


def homology_at(incoming: Optional[LMap], outgoing: Optional[LMap],
                carrier: LModule) -> LModule:
    """ker(outgoing) / im(incoming) at a chain position.

    None stands for the zero map off the end of a complex.
    """
    if outgoing is None:
        k = KernelResult(carrier, LMap.identity_on(carrier))
    else:
        if outgoing.domain != carrier:
            raise ValueError("outgoing map does not start at the carrier")
        k = kernel(outgoing)
    if incoming is None:
        return k.module
    if incoming.codomain != carrier:
        raise ValueError("incoming map does not end at the carrier")
    h = induced_into_kernel(incoming, k)
    return cokernel(h).module


# ---------------------------------------------------------------------------
# sums and tensors with coordinate bookkeeping


def direct_sum_with_maps(mods: Sequence[LModule]):
    """Direct sum in canonical order plus injections and projections."""
    if not mods:
        raise ValueError("empty direct sum")
    ell = mods[0].ell
    for m in mods:
        if m.ell != ell:
            raise MismatchedPrime("direct sum across primes")
    entries = []  # (sort key, block, local index, order)
    for b, m in enumerate(mods):
        for i, e in enumerate(m.gen_orders()):
            key = (0, b, i) if e is None else (1, -e, b, i)
            entries.append((key, b, i, e))
    entries.sort(key=lambda t: t[0])
    free_rank = sum(1 for _, _, _, e in entries if e is None)
    exps = tuple(e for _, _, _, e in entries if e is not None)
    total = LModule(ell, free_rank, exps)
    pos = {(b, i): p for p, (_, b, i, _) in enumerate(entries)}
    injections, projections = [], []
    for b, m in enumerate(mods):
        inj = IntMatrix.from_rows(
            [[1 if pos[(b, j)] == p else 0 for j in range(m.num_gens)]
             for p in range(total.num_gens)],
            m.num_gens,
        )
        injections.append(LMap(m, total, inj))
        projections.append(LMap(total, m, inj.transpose()))
    return total, injections, projections


def tensor_with_index(M: LModule, N: LModule):
    """Tensor product with the pair ordering of its canonical generators.

    Returns (module, pairs) where pairs[p] = (i, j) names the generator
    x_i (x) y_j sitting at canonical position p.
    """
    if M.ell != N.ell:
        raise MismatchedPrime("tensor across primes")
    a = M.gen_orders()
    b = N.gen_orders()
    entries = []
    for i in range(M.num_gens):
        for j in range(N.num_gens):
            if a[i] is None and b[j] is None:
                e = None
            elif a[i] is None:
                e = b[j]
            elif b[j] is None:
                e = a[i]
            else:
                e = min(a[i], b[j])
            key = (0, i, j) if e is None else (1, -e, i, j)
            entries.append((key, i, j, e))
    entries.sort(key=lambda t: t[0])
    free_rank = sum(1 for _, _, _, e in entries if e is None)
    exps = tuple(e for _, _, _, e in entries if e is not None)
    return LModule(M.ell, free_rank, exps), [(i, j) for _, i, j, _ in entries]


def tensor_maps(f: LMap, g: LMap) -> LMap:
    """f (x) g on tensor products in canonical coordinates."""
    dom, dpairs = tensor_with_index(f.domain, g.domain)
    cod, cpairs = tensor_with_index(f.codomain, g.codomain)
    rows = []
    for (i, k) in cpairs:
        row = []
        for (j, l) in dpairs:
            row.append(f.matrix.entry(i, j) * g.matrix.entry(k, l))
        rows.append(row)
    prec = f._merge_precision(g)
    return LMap(dom, cod, IntMatrix.from_rows(rows, dom.num_gens), prec)


def tensor_power_with_index(M: LModule, n: int):
    """n-fold tensor power with multi-index bookkeeping.

    Returns (module, tuples) where tuples[p] is the n-tuple of generator
    indices at canonical position p.  The 0-th power is Zl with the empty
    tuple.
    """
    if n < 0:
        raise ValueError("negative tensor power")
    mod = LModule(M.ell, 1)
    tuples = [()]
    for _ in range(n):
        nxt, pairs = tensor_with_index(mod, M)
        tuples = [tuples[i] + (j,) for i, j in pairs]
        mod = nxt
    return mod, tuples
