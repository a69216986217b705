"""The modified tensor calculus on l-primary torsion groups.

The discrete category here is that of l-primary torsion groups of cofinite
type, ``(Ql/Zl)^corank (+) finite``.  The product is not the usual tensor
(which is poorly behaved on divisible groups) but the double-dual twist

    A box B  :=  dual( dual(A) (x) dual(B) )

computed entirely on the finitely generated dual side, where tensor products
are classical.  The unit is Ql/Zl and box powers use A^box0 = Ql/Zl.

Maps of discrete groups are stored through their Pontryagin duals
(:class:`CoMap`); kernels and cokernels swap under duality, so exactness
checks reduce to the exact machinery of :mod:`devissage.exactlin`.

Frobenius data (:class:`FrobObject`) keeps the arithmetic Frobenius as an
exact integer matrix together with a power of q, so negative Tate twists
never force a lossy modular inverse: multiplication by a q-power is an
automorphism and can be cleared before any kernel or cokernel is taken.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Optional, Sequence, Union

from .errors import (
    InputNotExact,
    MismatchedBase,
    MismatchedPrime,
    NotCofinitelyGenerated,
    NotDivisible,
    NotFiniteExponent,
)
from .exactlin import (
    CoLGroup,
    IntMatrix,
    LMap,
    LModule,
    cokernel,
    homology_at,
    kernel,
    tensor_maps,
    tensor_power_with_index,
)

Carrier = Union[LModule, CoLGroup]


# ---------------------------------------------------------------------------
# coercion and the box product


def as_colgroup(x: Carrier) -> CoLGroup:
    """View x inside the discrete category.

    Finite modules are canonically their own Pontryagin duals.  A module
    with free part is profinite, not torsion, and is rejected: no operation
    here is allowed to leave the cofinitely generated torsion subcategory.
    """
    if isinstance(x, CoLGroup):
        return x
    if isinstance(x, LModule):
        if x.free_rank:
            raise NotCofinitelyGenerated(
                "a module with free part is not an l-primary torsion group"
            )
        return CoLGroup(x)
    raise TypeError(f"cannot interpret {x!r} as a discrete l-primary group")


def box_unit(ell: int) -> CoLGroup:
    """The unit Ql/Zl of the box product."""
    return CoLGroup(LModule(ell, 1))


def co_direct_sum(A: Carrier, B: Carrier) -> CoLGroup:
    """Direct sum of discrete groups, through the dual sum."""
    a, b = as_colgroup(A), as_colgroup(B)
    if a.ell != b.ell:
        raise MismatchedPrime("direct sum across primes")
    return CoLGroup(a.dual_module.direct_sum(b.dual_module))


def box(A: Carrier, B: Carrier) -> CoLGroup:
    """Modified tensor product, via duals.

    >>> str(box(box_unit(2), box_unit(2)))
    '(Q2/Z2)'
    """
    a, b = as_colgroup(A), as_colgroup(B)
    if a.ell != b.ell:
        raise MismatchedPrime("box product across primes")
    return CoLGroup(a.dual_module.tensor(b.dual_module))


def box_power(A: Carrier, n: int) -> CoLGroup:
    """n-fold box power; the 0th power is the unit Ql/Zl."""
    if n < 0:
        raise ValueError("negative box power")
    a = as_colgroup(A)
    out = box_unit(a.ell)
    for _ in range(n):
        out = box(out, a)
    return out


def tor_box(A: Carrier, B: Carrier) -> CoLGroup:
    """First derived functor of the box product.

    Closed form: finite cyclic pieces pair by minimum exponent, divisible
    pieces (free duals) contribute nothing.
    """
    a, b = as_colgroup(A), as_colgroup(B)
    if a.ell != b.ell:
        raise MismatchedPrime("tor across primes")
    return CoLGroup(a.dual_module.tor1(b.dual_module))


def tor_box_i(A: Carrier, B: Carrier, i: int) -> CoLGroup:
    """Degree-i derived functor: box for i=0, tor_box for i=1, zero beyond.

    The dual side has global dimension one, so everything in degree >= 2
    vanishes identically; this is exposed as a constant query rather than
    recomputed.
    """
    if i < 0:
        raise ValueError("negative derived degree")
    if i == 0:
        return box(A, B)
    if i == 1:
        return tor_box(A, B)
    return CoLGroup(LModule(as_colgroup(A).ell, 0))


# ---------------------------------------------------------------------------
# maps of discrete groups


@dataclass(frozen=True)
class CoMap:
    """Map of discrete l-primary groups, stored via its Pontryagin dual.

    dual_map runs from codomain.dual_module to domain.dual_module.
    """

    domain: CoLGroup
    codomain: CoLGroup
    dual_map: LMap

    def __post_init__(self):
        if self.dual_map.domain != self.codomain.dual_module:
            raise ValueError("dual map must start at the codomain dual")
        if self.dual_map.codomain != self.domain.dual_module:
            raise ValueError("dual map must end at the domain dual")

    @classmethod
    def from_dual_matrix(cls, domain: CoLGroup, codomain: CoLGroup, matrix) -> "CoMap":
        return cls(domain, codomain,
                   LMap(codomain.dual_module, domain.dual_module, matrix))

    @classmethod
    def from_level_matrix(cls, domain: CoLGroup, codomain: CoLGroup, matrix) -> "CoMap":
        """Build from one integer matrix acting on every torsion level.

        Only uniform cases admit such a description: both groups divisible
        (the dual is then the plain transpose) or both finite (classical
        finite duality).  Mixed maps must supply their dual directly.
        """
        if not isinstance(matrix, IntMatrix):
            matrix = IntMatrix.from_rows(matrix, domain.dual_module.num_gens)
        if domain.is_divisible and codomain.is_divisible:
            return cls.from_dual_matrix(domain, codomain, matrix.transpose())
        if domain.is_finite and codomain.is_finite:
            f = LMap(domain.dual_module, codomain.dual_module, matrix)
            return cls(domain, codomain, f.dual_map())
        raise ValueError(
            "a single level matrix only determines a map in the uniform "
            "divisible/divisible or finite/finite cases"
        )

    @classmethod
    def identity_on(cls, C: CoLGroup) -> "CoMap":
        return cls(C, C, LMap.identity_on(C.dual_module))

    @classmethod
    def zero(cls, domain: CoLGroup, codomain: CoLGroup) -> "CoMap":
        return cls(domain, codomain,
                   LMap.zero(codomain.dual_module, domain.dual_module))

    @classmethod
    def multiplication(cls, C: CoLGroup, c: int) -> "CoMap":
        return cls(C, C, LMap.identity_on(C.dual_module).scale(c))

    def compose(self, other: "CoMap") -> "CoMap":
        """self after other; duals compose the other way round."""
        if other.codomain != self.domain:
            raise ValueError("composition mismatch")
        return CoMap(other.domain, self.codomain,
                     other.dual_map.compose(self.dual_map))

    def is_zero_map(self) -> bool:
        return self.dual_map.is_zero_map()

    def level_map(self, s: int) -> LMap:
        """Restriction to the l^s-torsion subgroups, an honest finite map."""
        ell = self.domain.ell
        ms = _dual_mod_level(self.codomain.dual_module, s)
        mt = _dual_mod_level(self.domain.dual_module, s)
        g = LMap(ms, mt, self.dual_map.matrix)
        return g.dual_map()


def _dual_mod_level(M: LModule, s: int) -> LModule:
    """M / l^s with the generator indexing of M itself."""
    exps = tuple(s if e is None else min(e, s) for e in M.gen_orders())
    return LModule(M.ell, 0, exps)


def box_maps(f: CoMap, g: CoMap) -> CoMap:
    """f box g, computed as the tensor of the dual maps."""
    dom = box(f.domain, g.domain)
    cod = box(f.codomain, g.codomain)
    return CoMap(dom, cod, tensor_maps(f.dual_map, g.dual_map))


def co_kernel(f: CoMap):
    """Kernel of a discrete map: dual of the cokernel of the dual.

    Returns (subgroup, inclusion CoMap).
    """
    ck = cokernel(f.dual_map)
    sub = CoLGroup(ck.module)
    inc = CoMap(sub, f.domain, ck.projection)
    return sub, inc


def co_cokernel(f: CoMap):
    """Cokernel of a discrete map: dual of the kernel of the dual.

    Returns (quotient, projection CoMap).
    """
    k = kernel(f.dual_map)
    quo = CoLGroup(k.module)
    proj = CoMap(f.codomain, quo, k.inclusion)
    return quo, proj


def co_exactness(maps: Sequence[CoMap]):
    """Homology of a complex of discrete groups at every position.

    maps = [f1, ..., fn] for 0 -> T0 -f1-> T1 -> ... -> Tn -> 0 with zero
    maps implied off both ends.  Returns the list of homology groups; all
    trivial means exact.  Computed on the dual complex, which reverses the
    arrows but preserves exactness position by position.
    """
    for a, b in zip(maps, maps[1:]):
        if a.codomain != b.domain:
            raise ValueError("maps do not form a chain")
        if not b.compose(a).is_zero_map():
            raise InputNotExact("consecutive maps do not compose to zero")
    terms = [maps[0].domain] + [f.codomain for f in maps]
    n = len(terms)
    out = []
    for i in range(n):
        incoming = maps[i].dual_map if i < n - 1 else None
        outgoing = maps[i - 1].dual_map if i >= 1 else None
        h = homology_at(incoming, outgoing, terms[i].dual_module)
        out.append(CoLGroup(h))
    return out


# ---------------------------------------------------------------------------
# torsion levels


def level(A: Carrier, s: int) -> LModule:
    """The l^s-torsion subgroup as a finite module."""
    return as_colgroup(A).level(s)


def finite_box_power(F: LModule, n: int) -> LModule:
    """Box power of a finite group, which is just the tensor power of itself."""
    if not F.is_finite:
        raise NotFiniteExponent("finite box power needs a finite module")
    if n < 1:
        raise ValueError("finite box power needs n >= 1; the unit is Ql/Zl")
    mod, _ = tensor_power_with_index(F, n)
    return mod


@dataclass(frozen=True)
class TorsLevelReport:
    """Level-s snapshot comparison for a box power."""

    box_side: LModule
    tensor_side: LModule
    agree: bool


def tors_level_check(A: CoLGroup, n: int, s: int) -> TorsLevelReport:
    """l^s-torsion of A^box n versus the n-th tensor power of the l^s-torsion.

    For divisible A these are canonically isomorphic; the report compares
    canonical forms.
    """
    if not A.is_divisible:
        raise NotDivisible("level comparison is stated for divisible groups")
    box_side = box_power(A, n).level(s)
    if n == 0:
        # empty products: the level of the unit Ql/Zl is cyclic of order l^s
        tensor_side = LModule(A.ell, 0, (s,))
    else:
        tensor_side, _ = tensor_power_with_index(A.level(s), n)
    return TorsLevelReport(box_side, tensor_side, box_side == tensor_side)


@dataclass(frozen=True)
class TorsBisData:
    """The level-raising maps on tensor powers of torsion levels.

    f_st: divide each tensor leg by l^(t-s) inside the level-t subgroup,
    then multiply the whole tensor back; phi_s and phi_t identify tensor
    powers of levels with levels of the box power; incl is the natural
    inclusion of the s-level of the box power into its t-level.
    The square  incl o phi_s = phi_t o f_st  must commute.
    """

    f_st: LMap
    phi_s: LMap
    phi_t: LMap
    incl: LMap
    commutes: bool


def torsbis_maps(A: CoLGroup, s: int, t: int, n: int, rng=None) -> TorsBisData:
    """Construct the level-raising diagram for A^box n between levels s <= t.

    With an rng the lifts used in f_st are perturbed by random l^s-multiples;
    the outcome must not change, which demonstrates well-definedness of the
    divide-then-multiply recipe.
    """
    if not A.is_divisible:
        raise NotDivisible("level-raising maps need a divisible group")
    if not 1 <= s <= t:
        raise ValueError("need 1 <= s <= t")
    ell = A.ell
    c = A.corank
    As, At = A.level(s), A.level(t)
    if n == 0:
        dom = LModule(ell, 0, (s,))
        cod = LModule(ell, 0, (t,))
        f_st = LMap(dom, cod, [[ell ** (t - s)]])
    else:
        dom, didx = tensor_power_with_index(As, n)
        cod, cidx = tensor_power_with_index(At, n)
        cols = []
        for tup in didx:
            # lift each leg: a_{i} = l^(t-s) * b with b = e_i + l^s * z
            legs = []
            for i in tup:
                lift = [0] * c
                lift[i] = 1
                if rng is not None:
                    for j in range(c):
                        lift[j] += ell ** s * rng.randint(0, ell - 1)
                legs.append(lift)
            vec = [0] * len(cidx)
            for p, ctup in enumerate(cidx):
                prod = 1
                for leg, j in zip(legs, ctup):
                    prod *= leg[j]
                vec[p] = (prod * ell ** (t - s)) % ell ** t
            cols.append(vec)
        mat = [[cols[j][i] for j in range(len(didx))] for i in range(len(cidx))]
        f_st = LMap(dom, cod, IntMatrix.from_rows(mat, len(didx)))
    # level tensor powers and box-power levels share their multi-index order
    phi_s = LMap(dom, box_power(A, n).level(s), IntMatrix.identity(dom.num_gens))
    phi_t = LMap(cod, box_power(A, n).level(t), IntMatrix.identity(cod.num_gens))
    incl_mat = box_power(A, n).level_inclusion_matrix(s, t)
    incl = LMap(phi_s.codomain, phi_t.codomain, incl_mat)
    lhs = incl.compose(phi_s)
    rhs = phi_t.compose(f_st)
    return TorsBisData(f_st, phi_s, phi_t, incl, lhs.equal_as_maps(rhs))


@dataclass
class DirectSystem:
    """Finite snapshots of a discrete group along its torsion levels.

    Structure claims are only emitted once the top two levels agree with the
    candidate; until then the system reports itself as not stabilised.
    """

    group: CoLGroup
    depth: int = 6

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be at least 2")
        self.levels = [self.group.level(s) for s in range(1, self.depth + 1)]

    def inclusion(self, s: int, t: int) -> IntMatrix:
        return self.group.level_inclusion_matrix(s, t)

    def structure_claim(self):
        """Infer (corank, finite part) from the top snapshots.

        Returns (claim, stable).  The claim is the group whose levels match
        the observed top two snapshots; stable is False when even that
        reconstruction disagrees, which at full depth cannot happen for an
        honest cofinitely generated group.
        """
        top = self.levels[-1]
        s = self.depth
        corank = sum(1 for e in top.torsion_exponents if e == s)
        finite = tuple(e for e in top.torsion_exponents if e < s)
        claim = CoLGroup(LModule(self.group.ell, corank, finite))
        stable = (claim.level(s) == top
                  and claim.level(s - 1) == self.levels[-2])
        return claim, stable


# ---------------------------------------------------------------------------
# Frobenius objects


@dataclass(frozen=True)
class FrobObject:
    """A carrier together with its arithmetic Frobenius.

    The Frobenius is q^qpow * matrix with an exact integer matrix; the
    q-power is kept symbolic so that negative Tate twists stay exact
    (q is a unit at l, so clearing it never changes kernels or cokernels).

    Coordinates: for a profinite/finite LModule carrier the matrix acts on
    its canonical generators.  For a divisible CoLGroup carrier the matrix
    acts on every torsion level at once, in the coordinate labels of the
    dual module; the action on the dual itself is the transpose.  For a
    finite CoLGroup carrier the matrix stores the dual-module endomorphism
    outright (the group action is its Pontryagin dual), which is also what
    the well-definedness validation below enforces.  Mixed discrete
    carriers (positive corank plus finite part) do not admit a single
    matrix in either convention and are rejected.
    """

    carrier: Carrier
    matrix: IntMatrix
    q: int
    qpow: int = 0
    twist_tag: int = 0
    precision: int = 8

    def __post_init__(self):
        mat = self.matrix
        if not isinstance(mat, IntMatrix):
            mat = IntMatrix.from_rows(mat, self.rep_module.num_gens)
            object.__setattr__(self, "matrix", mat)
        n = self.rep_module.num_gens
        if mat.rows != n or mat.cols != n:
            raise ValueError("frobenius matrix must be square on the carrier")
        if gcd(self.q, self.ell) != 1:
            raise MismatchedBase(f"q={self.q} is not a unit at l={self.ell}")
        if self.q < 2:
            raise ValueError("q must be a prime power >= 2")
        if isinstance(self.carrier, CoLGroup):
            if self.carrier.corank and self.carrier.finite_exponents:
                raise ValueError(
                    "mixed discrete carriers do not admit a single level matrix"
                )
        if n and not self.carrier_is_trivial():
            det = mat.det()
            if det == 0 or det % self.ell == 0:
                raise ValueError("frobenius must be an automorphism at l")
        # the integer part must act on the representative
        LMap(self.rep_module, self.rep_module, mat)

    def carrier_is_trivial(self) -> bool:
        return self.rep_module.is_trivial

    @property
    def ell(self) -> int:
        return self.carrier.ell if isinstance(self.carrier, LModule) \
            else self.carrier.dual_module.ell

    @property
    def rep_module(self) -> LModule:
        """The finitely generated coordinate container."""
        if isinstance(self.carrier, LModule):
            return self.carrier
        return self.carrier.dual_module

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.carrier, CoLGroup)

    # -- materialisation ---------------------------------------------

    def qpow_mod(self, modulus: int) -> int:
        """q^qpow modulo the given l-power; exact inverse for negative powers."""
        if self.qpow >= 0:
            return pow(self.q, self.qpow, modulus)
        return pow(pow(self.q, -1, modulus), -self.qpow, modulus)

    def matrix_mod(self, s: int) -> IntMatrix:
        """Frobenius matrix modulo l^s, q-power folded in."""
        m = self.ell ** s
        return self.matrix.scale(self.qpow_mod(m)).mod(m)

    def frob_minus_one_cleared(self, transpose: bool = False) -> LMap:
        """An exact integer map with the kernel and cokernel of frobenius - 1.

        q^t*F - 1 equals the unit q^t times (F - q^-t); clearing the unit
        changes neither kernel nor cokernel up to canonical isomorphism.
        For discrete carriers pass transpose=True to act on the dual.
        """
        mod = self.rep_module
        mat = self.matrix.transpose() if transpose else self.matrix
        n = mod.num_gens
        if self.qpow >= 0:
            cleared = mat.scale(self.q ** self.qpow) - IntMatrix.identity(n)
        else:
            cleared = mat - IntMatrix.identity(n).scale(self.q ** (-self.qpow))
        return LMap(mod, mod, cleared)

    # -- constructions ------------------------------------------------

    def twist(self, r: int) -> "FrobObject":
        """Tate twist: multiply the Frobenius by q^r, tracked exactly."""
        return FrobObject(self.carrier, self.matrix, self.q,
                          self.qpow + r, self.twist_tag + r, self.precision)

    def level_action(self, s: int) -> LMap:
        """Arithmetic Frobenius on the l^s-torsion of a divisible carrier.

        Levels of a divisible group are free over Z/l^s in the dual labels,
        so the stored matrix acts verbatim.  For finite carriers the torsion
        subgroups embed with scaled coordinates; act on the carrier instead.
        """
        if not self.is_discrete or not self.carrier.is_divisible:
            raise ValueError("level_action needs a divisible discrete carrier")
        lvl = self.carrier.level(s)
        return LMap(lvl, lvl, self.matrix_mod(s))


def box_frob(X: FrobObject, Y: FrobObject) -> FrobObject:
    """Box product of Frobenius objects; q-powers add, matrices multiply.

    Twisted scalars distribute over the product:
    (q^a F) box (q^b G) = q^(a+b) (F box G).
    """
    if X.ell != Y.ell:
        raise MismatchedPrime("box of frobenius objects across primes")
    if X.q != Y.q:
        raise MismatchedBase("box of frobenius objects over different bases")
    if X.is_discrete != Y.is_discrete:
        raise ValueError("cannot box a discrete with a profinite carrier")
    fx = LMap(X.rep_module, X.rep_module, X.matrix)
    fy = LMap(Y.rep_module, Y.rep_module, Y.matrix)
    big = tensor_maps(fx, fy)
    if X.is_discrete:
        carrier: Carrier = box(X.carrier, Y.carrier)
    else:
        carrier = X.rep_module.tensor(Y.rep_module)
    return FrobObject(carrier, big.matrix, X.q, X.qpow + Y.qpow,
                      X.twist_tag + Y.twist_tag, min(X.precision, Y.precision))


def box_frob_power(X: FrobObject, n: int) -> FrobObject:
    """n-fold box power of a Frobenius object; the 0th power is the unit."""
    if n < 0:
        raise ValueError("negative box power")
    if n == 0:
        if X.is_discrete:
            unit: Carrier = box_unit(X.ell)
        else:
            unit = LModule(X.ell, 1)
        return FrobObject(unit, IntMatrix.identity(1), X.q, 0, 0, X.precision)
    out = X
    for _ in range(n - 1):
        out = box_frob(out, X)
    return out


# ---------------------------------------------------------------------------
# probes and sequence transforms


@dataclass(frozen=True)
class ProbeResult:
    """Outcome of boxing a short exact sequence with a fixed group."""

    terms: tuple
    injective: bool
    middle_exact: bool
    surjective: bool
    obstruction: CoLGroup

    @property
    def left_exact(self) -> bool:
        return self.injective and self.middle_exact


def _require_ses(iota: CoMap, pi: CoMap):
    if iota.codomain != pi.domain:
        raise ValueError("maps do not compose into a sequence")
    hs = co_exactness([iota, pi])
    if any(not h.is_trivial for h in hs):
        raise InputNotExact("input sequence is not exact")


def left_exactness_probe(iota: CoMap, pi: CoMap, A: Carrier) -> ProbeResult:
    """Box an exact 0 -> X -> Y -> Z -> 0 with A and measure what survives.

    The boxed sequence is always exact except possibly at the right end;
    the cokernel of the right map is reported as the obstruction.
    """
    _require_ses(iota, pi)
    Ac = as_colgroup(A)
    idA = CoMap.identity_on(Ac)
    bi = box_maps(iota, idA)
    bp = box_maps(pi, idA)
    hs = co_exactness([bi, bp])
    obstruction, _ = co_cokernel(bp)
    return ProbeResult(
        terms=(bi.domain, bi.codomain, bp.codomain),
        injective=hs[0].is_trivial,
        middle_exact=hs[1].is_trivial,
        surjective=obstruction.is_trivial,
        obstruction=obstruction,
    )


def box_monomial(A: Carrier, B: Carrier, C: Carrier, j: Sequence[int],
                 D=None) -> CoLGroup:
    """A^box j0 box B^box j1 box C^box j2 box D."""
    a = as_colgroup(A)
    out = box_power(a, j[0])
    out = box(out, box_power(as_colgroup(B), j[1]))
    out = box(out, box_power(as_colgroup(C), j[2]))
    if D is not None:
        if isinstance(D, FrobObject):
            D = D.carrier
        out = box(out, as_colgroup(D))
    return out


@dataclass(frozen=True)
class TransformResult:
    """Verified output of the sequence transformer.

    mode 'divisible': the boxed sequence stays short exact.
    mode 'finite': the boxed sequence is left exact with a finite-exponent
    defect J at the right end, bounded by the reported tor term; es1 and es2
    are the two derived short sequences around the image I.
    """

    mode: str
    terms: tuple
    exact_positions: tuple
    obstruction: Optional[CoLGroup]
    tor_term: Optional[CoLGroup]
    es1_exact: Optional[bool] = None
    es2_exact: Optional[bool] = None
    notes: tuple = ()


def abstract_sequence_transform(iota: CoMap, pi: CoMap, j: Sequence[int],
                                D=None, mode: str = "auto") -> TransformResult:
    """Box an exact sequence with the monomial in its own three terms.

    For divisible first term the result is again short exact.  For a first
    term of finite exponent the failure of right exactness is confined to a
    finite-exponent group embedding into the matching tor term; both derived
    short sequences are built and checked.
    """
    _require_ses(iota, pi)
    A, B, C = iota.domain, iota.codomain, pi.codomain
    if mode == "auto":
        if A.is_divisible:
            mode = "divisible"
        elif A.is_finite:
            mode = "finite"
        else:
            raise NotDivisible(
                "mixed first term: choose a divisible or finite-exponent model"
            )
    X = box_monomial(A, B, C, j, D)
    idX = CoMap.identity_on(X)
    bi = box_maps(iota, idX)
    bp = box_maps(pi, idX)
    hs = co_exactness([bi, bp])
    obstruction, _ = co_cokernel(bp)
    terms = (bi.domain, bi.codomain, bp.codomain)
    ok = (hs[0].is_trivial, hs[1].is_trivial, obstruction.is_trivial)
    if mode == "divisible":
        if not A.is_divisible:
            raise NotDivisible("divisible mode needs a divisible first term")
        return TransformResult("divisible", terms, ok, None, None)
    if not A.is_finite:
        raise NotFiniteExponent("finite mode needs a finite-exponent first term")
    tor_term = tor_box(A, X)
    # es1: 0 -> A box X -> B box X -> I -> 0 with I the cokernel of the
    # left map; middle exactness makes I the image of the right map
    img, proj_to_img = co_cokernel(bi)
    es1 = co_exactness([bi, proj_to_img])
    # cross-check the image through the right map: its dual is the
    # coimage of the dual, the cokernel of the dual kernel inclusion
    im_sub_dual = cokernel(kernel(bp.dual_map).inclusion)
    ok1 = all(h.is_trivial for h in es1)
    ok1 = ok1 and (img.dual_module == im_sub_dual.module)
    # es2: 0 -> I -> C box X -> J -> 0 is exact by construction of J;
    # the content is that J has finite exponent and fits inside the tor term
    J = obstruction
    ok2 = J.corank == 0
    je = sorted(J.finite_exponents, reverse=True)
    te = sorted(tor_term.finite_exponents, reverse=True)
    fits = len(je) <= len(te) and all(a <= b for a, b in zip(je, te))
    notes = []
    if not ok2:
        notes.append("defect has positive corank")
    if not fits:
        notes.append("defect does not embed in the tor term")
    return TransformResult("finite", terms, ok, J, tor_term,
                           es1_exact=ok1, es2_exact=ok2 and fits,
                           notes=tuple(notes))
