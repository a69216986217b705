"""Bipartite configuration graphs with a finite symmetry action.

A graph here records how the irreducible pieces of a one dimensional
configuration meet: vertices split into components (each carrying a genus
label) and nodes, and every node lies on exactly two distinct components.
A finite list of permutations acts on the picture; in finite field mode the
list has length one and the single permutation plays the role of Frobenius.

On top of the combinatorics the module computes cycle homology together with
the induced action, enumerates spanning trees and their orbits, extracts the
gcd invariant m of the orbit sizes, and assembles the finite level module Xi
from a divisor configuration, with the explicit section psi of the residue
projection phi and its Bezout combination across orbits.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    BalanceViolated,
    ConfigIncompatible,
    EnumerationCapExceeded,
    GcdShortfall,
    NotAnOrbit,
    NotASpanningTree,
)
from .exactlin import (
    IntMatrix,
    KernelResult,
    LMap,
    LModule,
    induced_into_kernel,
    integer_kernel_basis,
    kernel,
    preimage,
    solve_integer,
)

Edge = Tuple[str, str]

DEFAULT_TREE_CAP = 10 ** 6


# ---------------------------------------------------------------------------
# the graph


class DualGraph:
    """Bipartite graph of components and nodes with its symmetry action.

    components: iterable of (id, genus) pairs.
    nodes: iterable of node ids.
    edges: iterable of two element collections, each joining a component id
        and a node id (in either order).
    action: iterable of permutations, each given as a mapping id -> id;
        ids omitted from a mapping are fixed.

    Everything is sorted on construction so that derived data (boundary
    matrices, homology bases, tree enumerations) never depends on input
    order.  Validation enforces: bipartite edges, every node on exactly two
    distinct components, connectivity, and action permutations preserving
    the two vertex classes, the edge set and the genus labels.
    """

    def __init__(self, components, nodes, edges, action=()):
        comps = sorted((str(c), int(g)) for c, g in components)
        node_ids = sorted(str(n) for n in nodes)
        comp_ids = [c for c, _ in comps]
        if len(set(comp_ids)) != len(comp_ids):
            raise ValueError("duplicate component id")
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("duplicate node id")
        if set(comp_ids) & set(node_ids):
            raise ValueError("component and node ids must be disjoint")
        if any(g < 0 for _, g in comps):
            raise ValueError("negative genus")
        if not comps:
            raise ValueError("graph needs at least one component")
        self.components: Tuple[Tuple[str, int], ...] = tuple(comps)
        self.nodes: Tuple[str, ...] = tuple(node_ids)
        self._genus = dict(comps)
        cset, nset = set(comp_ids), set(node_ids)

        norm: List[Edge] = []
        for e in edges:
            pair = list(e)
            if len(pair) != 2:
                raise ValueError(f"edge {pair!r} must have two endpoints")
            a, b = str(pair[0]), str(pair[1])
            if a in cset and b in nset:
                norm.append((a, b))
            elif b in cset and a in nset:
                norm.append((b, a))
            else:
                raise ValueError(f"edge {pair!r} must join a component and a node")
        if len(set(norm)) != len(norm):
            raise ValueError("duplicate edge")
        self.edges: Tuple[Edge, ...] = tuple(sorted(norm))

        at_node: Dict[str, List[str]] = {n: [] for n in self.nodes}
        for c, n in self.edges:
            at_node[n].append(c)
        for n, cs in at_node.items():
            if len(cs) != 2 or len(set(cs)) != 2:
                raise ValueError(
                    f"node {n} must lie on exactly two distinct components, "
                    f"found {sorted(cs)}"
                )
        self._node_comps = {n: tuple(sorted(cs)) for n, cs in at_node.items()}
        comp_nodes: Dict[str, List[str]] = {c: [] for c in comp_ids}
        for c, n in self.edges:
            comp_nodes[c].append(n)
        self._comp_nodes = {c: tuple(sorted(ns)) for c, ns in comp_nodes.items()}

        self._check_connected()
        self.action: Tuple[Dict[str, str], ...] = tuple(
            self._normalize_perm(p) for p in action
        )

    # -- validation helpers ------------------------------------------

    def _check_connected(self):
        verts = set(self._genus) | set(self.nodes)
        if len(verts) <= 1:
            return
        adj: Dict[str, List[str]] = {v: [] for v in verts}
        for c, n in self.edges:
            adj[c].append(n)
            adj[n].append(c)
        seen = {next(iter(sorted(verts)))}
        stack = list(seen)
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if seen != verts:
            raise ValueError("graph is not connected")

    def _normalize_perm(self, p) -> Dict[str, str]:
        verts = list(self._genus) + list(self.nodes)
        full = {v: v for v in verts}
        for k, v in dict(p).items():
            k, v = str(k), str(v)
            if k not in full:
                raise ValueError(f"permutation moves unknown id {k!r}")
            full[k] = v
        if sorted(full.values()) != sorted(verts):
            raise ValueError("action entry is not a permutation of the vertices")
        for c in self._genus:
            if full[c] not in self._genus:
                raise ValueError(f"action must map components to components ({c})")
            if self._genus[full[c]] != self._genus[c]:
                raise ValueError(f"action must preserve genus labels ({c})")
        for n in self.nodes:
            if full[n] not in self._node_comps:
                raise ValueError(f"action must map nodes to nodes ({n})")
        mapped = {(full[c], full[n]) for c, n in self.edges}
        if mapped != set(self.edges):
            raise ValueError("action does not preserve the edge set")
        return full

    # -- queries -----------------------------------------------------

    @property
    def component_ids(self) -> Tuple[str, ...]:
        return tuple(c for c, _ in self.components)

    def genus(self, comp_id: str) -> int:
        return self._genus[comp_id]

    def node_components(self, node_id: str) -> Tuple[str, str]:
        return self._node_comps[node_id]

    def component_nodes(self, comp_id: str) -> Tuple[str, ...]:
        return self._comp_nodes[comp_id]

    @property
    def vertex_ids(self) -> Tuple[str, ...]:
        # components first, then nodes, each block sorted
        return self.component_ids + self.nodes

    def edge_image(self, perm: Dict[str, str], e: Edge) -> Edge:
        return (perm[e[0]], perm[e[1]])

    def _orbits(self, ids: Sequence[str]) -> Tuple[Tuple[str, ...], ...]:
        remaining = set(ids)
        orbits = []
        for start in sorted(ids):
            if start not in remaining:
                continue
            orbit = {start}
            frontier = [start]
            while frontier:
                v = frontier.pop()
                for p in self.action:
                    w = p[v]
                    if w not in orbit:
                        orbit.add(w)
                        frontier.append(w)
            orbits.append(tuple(sorted(orbit)))
            remaining -= orbit
        return tuple(orbits)

    def component_orbits(self) -> Tuple[Tuple[str, ...], ...]:
        return self._orbits(self.component_ids)

    def node_orbits(self) -> Tuple[Tuple[str, ...], ...]:
        return self._orbits(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DualGraph):
            return NotImplemented
        return (
            self.components == other.components
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.action == other.action
        )

    def __repr__(self):
        return (
            f"DualGraph({len(self.components)} components, "
            f"{len(self.nodes)} nodes, {len(self.edges)} edges, "
            f"{len(self.action)} action generators)"
        )


def betti(graph: DualGraph) -> int:
    """First Betti number |E| - |V| + 1 of the (connected) graph."""
    nverts = len(graph.components) + len(graph.nodes)
    return len(graph.edges) - nverts + 1


def n_x(graph: DualGraph) -> int:
    """Sum of the genus labels plus the first Betti number."""
    return sum(g for _, g in graph.components) + betti(graph)


# ---------------------------------------------------------------------------
# cycle homology and the induced action


@dataclass(frozen=True)
class HomologyLattice:
    """Integer cycle lattice of a graph with the action expressed in a basis.

    basis columns span ker of the boundary map Z^E -> Z^V for the fixed
    orientation component -> node, edges in sorted order.  action_matrices
    give, per generator, the matrix M with basis @ M = P @ basis where P
    permutes oriented edges.
    """

    basis: IntMatrix
    action_matrices: Tuple[IntMatrix, ...]
    edge_order: Tuple[Edge, ...]

    @property
    def rank(self) -> int:
        return self.basis.cols


def _boundary_matrix(graph: DualGraph) -> IntMatrix:
    verts = graph.vertex_ids
    vindex = {v: i for i, v in enumerate(verts)}
    rows = [[0] * len(graph.edges) for _ in verts]
    for j, (c, n) in enumerate(graph.edges):
        rows[vindex[n]][j] += 1
        rows[vindex[c]][j] -= 1
    return IntMatrix.from_rows(rows, len(graph.edges))


def _edge_perm_matrix(graph: DualGraph, perm: Dict[str, str]) -> IntMatrix:
    eindex = {e: i for i, e in enumerate(graph.edges)}
    nedges = len(graph.edges)
    rows = [[0] * nedges for _ in range(nedges)]
    for j, e in enumerate(graph.edges):
        rows[eindex[graph.edge_image(perm, e)]][j] = 1
    return IntMatrix.from_rows(rows, nedges)


def _express_in_basis(basis: IntMatrix, cols: IntMatrix) -> IntMatrix:
    """Solve basis @ X = cols over Z, columnwise; the basis is saturated."""
    out = []
    for j in range(cols.cols):
        x = solve_integer(basis, list(cols.col(j)))
        if x is None:
            raise ArithmeticError("vector outside the cycle lattice; "
                                  "the action does not preserve cycles")
        out.append(list(x))
    if not out:
        return IntMatrix.zeros(basis.cols, 0)
    return IntMatrix.from_rows(list(map(list, zip(*out))), len(out))


def _compose_perms(first: Dict[str, str], then: Dict[str, str]) -> Dict[str, str]:
    # apply `first`, then `then`
    return {k: then[v] for k, v in first.items()}


def h1_lattice(graph: DualGraph) -> HomologyLattice:
    """Cycle lattice with the action induced by permuting oriented edges.

    The orientation is component -> node throughout; the action preserves
    the two vertex classes, so permuted oriented edges keep their
    orientation and no sign corrections arise.  Group relations of the
    generators are re-checked on all short words.
    """
    boundary = _boundary_matrix(graph)
    basis = integer_kernel_basis(boundary)
    c = basis.cols
    mats = []
    perms = []
    for p in graph.action:
        P = _edge_perm_matrix(graph, p)
        M = _express_in_basis(basis, P @ basis)
        if (basis @ M) != (P @ basis):
            raise ArithmeticError("induced matrix does not reproduce the edge action")
        if c and M.det() not in (1, -1):
            raise ArithmeticError("induced action matrix is not unimodular")
        mats.append(M)
        perms.append(p)

    # relation check: every word of length <= 4 in the generators must act
    # through the matrix computed from the composed permutation
    ngen = len(perms)
    if ngen and c:
        words: List[Tuple[int, ...]] = [()]
        for _ in range(4):
            words = [w + (i,) for w in words for i in range(ngen)]
            if len(words) > 700:
                break
            for w in words:
                perm = {v: v for v in graph.vertex_ids}
                mat = IntMatrix.identity(c)
                for i in w:
                    perm = _compose_perms(perm, perms[i])
                    mat = mats[i] @ mat
                direct = _express_in_basis(
                    basis, _edge_perm_matrix(graph, perm) @ basis)
                if direct != mat:
                    raise ArithmeticError(
                        f"action matrices violate the group relation for word {w}")
    return HomologyLattice(basis, tuple(mats), graph.edges)


def invariant_rank(lattice: HomologyLattice) -> int:
    """Rank of the common fixed sublattice of all action matrices."""
    c = lattice.rank
    if not lattice.action_matrices or c == 0:
        return c
    stacked = None
    for M in lattice.action_matrices:
        diff = M - IntMatrix.identity(c)
        stacked = diff if stacked is None else stacked.vstack(diff)
    return integer_kernel_basis(stacked).cols


def rho(graph: DualGraph) -> int:
    """Rank of the fixed part of the cycle lattice under the action."""
    return invariant_rank(h1_lattice(graph))


# ---------------------------------------------------------------------------
# spanning trees, orbits, m


def _laplacian(graph: DualGraph) -> IntMatrix:
    verts = graph.vertex_ids
    vindex = {v: i for i, v in enumerate(verts)}
    n = len(verts)
    rows = [[0] * n for _ in range(n)]
    for c, nd in graph.edges:
        i, j = vindex[c], vindex[nd]
        rows[i][i] += 1
        rows[j][j] += 1
        rows[i][j] -= 1
        rows[j][i] -= 1
    return IntMatrix.from_rows(rows, n)


class _DSU:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True

    def clone(self) -> "_DSU":
        d = _DSU(0)
        d.parent = list(self.parent)
        return d


def spanning_trees(graph: DualGraph, cap: int = DEFAULT_TREE_CAP):
    """All spanning trees, each a sorted tuple of edges.

    Deletion/contraction recursion in sorted edge order: at every edge the
    branch that keeps it contracts (union in the forest), the branch that
    drops it prunes when the remaining edges can no longer connect the
    graph.  The count is cross checked against a Laplacian cofactor; a
    mismatch means the enumerator itself is broken and raises immediately.
    """
    verts = graph.vertex_ids
    vindex = {v: i for i, v in enumerate(verts)}
    nverts = len(verts)
    edges = graph.edges
    target = nverts - 1
    found: List[Tuple[int, ...]] = []

    def connected_using(dsu: _DSU, start: int) -> bool:
        probe = dsu.clone()
        parts = nverts - sum(1 for i in range(nverts) if probe.find(i) != i)
        for c, nd in edges[start:]:
            if probe.union(vindex[c], vindex[nd]):
                parts -= 1
        return parts == 1

    def rec(i: int, dsu: _DSU, chosen: Tuple[int, ...]):
        if len(chosen) == target:
            found.append(chosen)
            if len(found) > cap:
                raise EnumerationCapExceeded(
                    f"more than {cap} spanning trees; raise the cap to enumerate")
            return
        if i == len(edges) or len(chosen) + (len(edges) - i) < target:
            return
        if not connected_using(dsu, i):
            return
        c, nd = edges[i]
        a, b = vindex[c], vindex[nd]
        if dsu.find(a) != dsu.find(b):
            inc = dsu.clone()
            inc.union(a, b)
            rec(i + 1, inc, chosen + (i,))
        rec(i + 1, dsu, chosen)

    if nverts == 1:
        found = [()]
    else:
        rec(0, _DSU(nverts), ())
    trees = sorted(tuple(edges[i] for i in t) for t in found)

    L = _laplacian(graph)
    if nverts == 1:
        cofactor = 1
    else:
        idx = list(range(1, nverts))
        cofactor = L.take_rows(idx).take_cols(idx).det()
    if cofactor != len(trees):
        raise ArithmeticError(
            f"spanning tree enumeration found {len(trees)} trees but the "
            f"Laplacian cofactor is {cofactor}")
    return tuple(trees)


def tree_orbits(graph: DualGraph, cap: int = DEFAULT_TREE_CAP):
    """Orbits of the spanning tree set under the generated action group."""
    trees = [frozenset(t) for t in spanning_trees(graph, cap)]
    tree_set = set(trees)
    orbits = []
    seen = set()
    for t in trees:
        if t in seen:
            continue
        orbit = {t}
        frontier = [t]
        while frontier:
            cur = frontier.pop()
            for p in graph.action:
                img = frozenset(graph.edge_image(p, e) for e in cur)
                if img not in tree_set:
                    raise ArithmeticError("action image of a spanning tree is not a spanning tree")
                if img not in orbit:
                    orbit.add(img)
                    frontier.append(img)
        seen |= orbit
        orbits.append(tuple(sorted(tuple(sorted(t)) for t in orbit)))
    return tuple(sorted(orbits))


def m_gamma(graph: DualGraph, cap: int = DEFAULT_TREE_CAP) -> int:
    """Gcd of the spanning tree orbit sizes under the action."""
    sizes = [len(o) for o in tree_orbits(graph, cap)]
    out = 0
    for s in sizes:
        out = gcd(out, s)
    return out


# ---------------------------------------------------------------------------
# the balanced tree solver


def _validate_tree(graph: DualGraph, tree) -> Tuple[Edge, ...]:
    edges = []
    eset = set(graph.edges)
    for e in tree:
        pair = tuple(e)
        cand = pair if pair in eset else (pair[1], pair[0])
        if cand not in eset:
            raise NotASpanningTree(f"edge {pair!r} is not an edge of the graph")
        edges.append(cand)
    if len(set(edges)) != len(edges):
        raise NotASpanningTree("repeated edge in the tree")
    verts = graph.vertex_ids
    if len(edges) != len(verts) - 1:
        raise NotASpanningTree(
            f"{len(edges)} edges cannot span {len(verts)} vertices")
    vindex = {v: i for i, v in enumerate(verts)}
    dsu = _DSU(len(verts))
    for c, n in edges:
        if not dsu.union(vindex[c], vindex[n]):
            raise NotASpanningTree("tree edges contain a cycle")
    return tuple(sorted(edges))


def tree_solve(graph: DualGraph, tree, values, modulus: Optional[int] = None):
    """Unique edge values on a spanning tree with prescribed vertex sums.

    values maps vertex ids to the required sum of incident edge values;
    missing vertices default to 0.  Each edge joins one component and one
    node, so summing the defining equations over either vertex class counts
    every edge once: the two class totals must agree (mod the modulus when
    one is given) or no solution exists.  Leaf elimination is subtraction
    only, hence exact over Z and over Z/m alike.
    """
    edges = _validate_tree(graph, tree)
    verts = graph.vertex_ids
    known = set(verts)
    for k in values:
        if str(k) not in known:
            raise ValueError(f"value attached to unknown vertex {k!r}")
    residual = {v: values.get(v, 0) for v in verts}

    comp_total = sum(residual[c] for c in graph.component_ids)
    node_total = sum(residual[n] for n in graph.nodes)
    diff = comp_total - node_total
    if (diff % modulus if modulus else diff) != 0:
        raise BalanceViolated(
            f"class totals differ by {diff}; the vertex sums admit no solution")

    incident: Dict[str, List[Edge]] = {v: [] for v in verts}
    for e in edges:
        incident[e[0]].append(e)
        incident[e[1]].append(e)
    degree = {v: len(incident[v]) for v in verts}
    removed = set()
    consumed = set()
    leaves = [v for v in verts if degree[v] == 1]
    x: Dict[Edge, int] = {}
    while leaves:
        v = leaves.pop()
        if degree[v] != 1:
            continue
        e = next(ed for ed in incident[v] if ed not in removed)
        x[e] = residual[v]
        other = e[1] if e[0] == v else e[0]
        residual[other] -= x[e]
        removed.add(e)
        consumed.add(v)
        degree[v] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            leaves.append(other)
    if any(degree[v] > 0 for v in verts):
        raise NotASpanningTree("leaf elimination left a cycle")
    # exactly one vertex is never peeled; balance forces its residual to 0
    for v in verts:
        if v in consumed:
            continue
        r = residual[v]
        if (r % modulus if modulus else r) != 0:
            raise BalanceViolated(
                "internal: leaf elimination ended with a nonzero residual "
                f"{r} at {v} despite the balance precheck")
    if modulus:
        return {e: val % modulus for e, val in x.items()}
    return dict(x)


# ---------------------------------------------------------------------------
# divisor configurations


class DivisorConfig:
    """Finite marking of points used to truncate the residue calculus.

    Each divisor is attached either to a node or to a fresh free point on a
    declared component; the attachment must be equivariant for the graph
    action, and every component orbit must carry at least one free point
    divisor.  Ids live in their own namespace, disjoint from the graph's.
    """

    def __init__(self, graph: DualGraph, divisors, action=()):
        if not isinstance(graph, DualGraph):
            raise TypeError("first argument must be a DualGraph")
        self.graph = graph
        entries = []
        for d in divisors:
            div_id, anchor = d
            kind, target = anchor
            div_id, kind, target = str(div_id), str(kind), str(target)
            if kind not in ("node", "free"):
                raise ValueError(f"anchor kind {kind!r} must be 'node' or 'free'")
            if kind == "node" and target not in graph.nodes:
                raise ValueError(f"divisor {div_id} anchored at unknown node {target!r}")
            if kind == "free" and target not in graph.component_ids:
                raise ValueError(
                    f"divisor {div_id} placed on unknown component {target!r}")
            entries.append((div_id, kind, target))
        ids = [d for d, _, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate divisor id")
        graph_ids = set(graph.vertex_ids)
        if graph_ids & set(ids):
            raise ValueError("divisor ids must not reuse graph ids")
        node_anchors = [t for _, k, t in entries if k == "node"]
        if len(set(node_anchors)) != len(node_anchors):
            raise ValueError("at most one divisor per node")
        if not entries:
            raise ConfigIncompatible("empty divisor set")
        self.divisors: Tuple[Tuple[str, str, str], ...] = tuple(sorted(entries))
        self._by_id = {d: (k, t) for d, k, t in self.divisors}

        if len(tuple(action)) != len(graph.action):
            raise ConfigIncompatible(
                "divisor action must supply one permutation per graph generator")
        self.action: Tuple[Dict[str, str], ...] = tuple(
            self._normalize_perm(p) for p in action
        )
        for gi, (gp, dp) in enumerate(zip(graph.action, self.action)):
            for d, kind, target in self.divisors:
                ik, it = self._by_id[dp[d]]
                if ik != kind or it != gp[target]:
                    raise ConfigIncompatible(
                        f"divisor action is not equivariant at {d} "
                        f"under generator {gi}")

        covered = set()
        for d, kind, target in self.divisors:
            if kind == "free":
                covered.add(target)
        for orbit in graph.component_orbits():
            if not covered & set(orbit):
                raise ConfigIncompatible(
                    f"component orbit {orbit} has no free point divisor")

    def _normalize_perm(self, p) -> Dict[str, str]:
        full = {d: d for d, _, _ in self.divisors}
        for k, v in dict(p).items():
            k, v = str(k), str(v)
            if k not in full:
                raise ValueError(f"divisor action moves unknown id {k!r}")
            full[k] = v
        if sorted(full.values()) != sorted(full):
            raise ValueError("divisor action entry is not a permutation")
        return full

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(d for d, _, _ in self.divisors)

    def anchor(self, div_id: str) -> Tuple[str, str]:
        return self._by_id[div_id]

    def free_on(self, comp_id: str) -> Tuple[str, ...]:
        return tuple(d for d, k, t in self.divisors if k == "free" and t == comp_id)

    def anchored_at(self, node_id: str) -> Optional[str]:
        for d, k, t in self.divisors:
            if k == "node" and t == node_id:
                return d
        return None

    def support_points(self) -> Tuple[str, ...]:
        free = [d for d, k, _ in self.divisors if k == "free"]
        return tuple(sorted(tuple(self.graph.nodes) + tuple(free)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DivisorConfig):
            return NotImplemented
        return (self.graph == other.graph and self.divisors == other.divisors
                and self.action == other.action)


def default_divisors(graph: DualGraph) -> DivisorConfig:
    """One free point divisor on every component, equivariantly labeled."""
    divisors = [(f"p_{c}", ("free", c)) for c in graph.component_ids]
    action = [
        {f"p_{c}": f"p_{p[c]}" for c in graph.component_ids}
        for p in graph.action
    ]
    return DivisorConfig(graph, divisors, action)


# ---------------------------------------------------------------------------
# the module Xi at a finite level


@dataclass
class XiModule:
    """Level s assembly of the residue kernel with its two structure maps.

    The ambient coordinates are one alpha per divisor and one y per
    incidence (component, support point on it).  The defining constraints:
    the y family on each component sums to zero, and at every support point
    the alpha sitting there (when one does) plus the incident y values sum
    to zero.  The cycle lattice embeds via the y coordinates on node
    incidences; phi projects onto the divisor block.
    """

    graph: DualGraph
    config: DivisorConfig
    ell: int
    level: int
    ambient: LModule
    constraint: LMap
    module: LModule
    inclusion: LMap
    divisor_block: LModule
    phi_ambient: LMap
    phi: LMap
    cycle_embedding: LMap
    h1_inclusion: LMap
    var_names: tuple
    support: tuple
    ambient_actions: Tuple[IntMatrix, ...]
    divisor_actions: Tuple[IntMatrix, ...]
    spl2_exact: bool
    phi_onto_ker_sum: bool

    @property
    def modulus(self) -> int:
        return self.ell ** self.level


def _free_level(ell: int, s: int, n: int) -> LModule:
    return LModule(ell, 0, (s,) * n)


def _span_contains(amb: LModule, A: IntMatrix, cols: IntMatrix) -> bool:
    """Every column of cols lies in the mod l^s column span of A."""
    dom = _free_level(amb.ell, amb.torsion_exponents[0] if amb.torsion_exponents else 1,
                      A.cols)
    f = LMap(dom, amb, A)
    for j in range(cols.cols):
        if preimage(f, cols.col(j)) is None:
            return False
    return True


def build_xi(graph: DualGraph, config: DivisorConfig, ell: int, s: int) -> XiModule:
    """Assemble the level s kernel module with verified structure maps.

    Verifies, by explicit solving mod l^s, that the cycle embedding lands
    exactly on the kernel of phi and that phi maps onto the zero sum part
    of the divisor block; both are re-derived here rather than assumed.
    """
    if config.graph is not graph and config.graph != graph:
        raise ConfigIncompatible("divisor configuration belongs to a different graph")
    if s < 1:
        raise ValueError("level must be >= 1")
    mod = ell ** s

    div_ids = config.ids
    ndiv = len(div_ids)
    div_index = {d: i for i, d in enumerate(div_ids)}
    support = config.support_points()
    sindex = {w: i for i, w in enumerate(support)}

    comp_points: Dict[str, Tuple[str, ...]] = {}
    for c in graph.component_ids:
        pts = tuple(sorted(tuple(graph.component_nodes(c)) + config.free_on(c)))
        comp_points[c] = pts
    var_names: List[tuple] = [("alpha", d) for d in div_ids]
    for c in graph.component_ids:
        for p in comp_points[c]:
            var_names.append(("y", c, p))
    vindex = {name: i for i, name in enumerate(var_names)}
    nvars = len(var_names)

    rows: List[List[int]] = []
    for c in graph.component_ids:
        row = [0] * nvars
        for p in comp_points[c]:
            row[vindex[("y", c, p)]] = 1
        rows.append(row)
    for w in support:
        row = [0] * nvars
        if w in div_index:                      # free point: its own alpha
            row[div_index[w]] = 1
        else:
            anchored = config.anchored_at(w)
            if anchored is not None:
                row[div_index[anchored]] = 1
        if w in div_index:
            carriers = [config.anchor(w)[1]]
        else:
            carriers = list(graph.node_components(w))
        for c in carriers:
            row[vindex[("y", c, w)]] = 1
        rows.append(row)
    C = IntMatrix.from_rows(rows, nvars)

    ambient = _free_level(ell, s, nvars)
    row_block = _free_level(ell, s, C.rows)
    constraint = LMap(ambient, row_block, C)
    K: KernelResult = kernel(constraint)

    divisor_block = _free_level(ell, s, ndiv)
    proj_rows = [[1 if j == i else 0 for j in range(nvars)] for i in range(ndiv)]
    phi_ambient = LMap(ambient, divisor_block, IntMatrix.from_rows(proj_rows, nvars))
    phi = phi_ambient.compose(K.inclusion)

    # cycle lattice into the y coordinates on node incidences
    boundary = _boundary_matrix(graph)
    cycles = integer_kernel_basis(boundary)
    c_rank = cycles.cols
    hrows = [[0] * c_rank for _ in range(nvars)]
    for j, (comp, node) in enumerate(graph.edges):
        for k in range(c_rank):
            hrows[vindex[("y", comp, node)]][k] = cycles.entry(j, k)
    H = IntMatrix.from_rows(hrows, c_rank)
    h1_dom = _free_level(ell, s, c_rank)
    cycle_embedding = LMap(h1_dom, ambient, H)

    if not (C @ H).is_zero():
        raise ArithmeticError("cycle columns do not satisfy the point constraints")
    if not (phi_ambient.matrix @ H).is_zero():
        raise ArithmeticError("cycle columns leak into the divisor block")
    h1_inclusion = induced_into_kernel(cycle_embedding, K)

    # exactness in the middle: kernel of phi coincides with the cycle image
    k2 = kernel(phi)
    ker_amb = K.inclusion.matrix @ k2.inclusion.matrix
    spl2_exact = (_span_contains(ambient, H, ker_amb)
                  and _span_contains(ambient, ker_amb, H))
    if not spl2_exact:
        raise ArithmeticError("kernel of phi differs from the cycle image at this level")

    ones = IntMatrix.from_rows([[1] * ndiv], ndiv)
    if not (ones @ phi.matrix).mod(mod).is_zero():
        raise ArithmeticError("phi image does not lie in the zero sum block")
    phi_onto = True
    for i in range(ndiv - 1):
        target = [0] * ndiv
        target[i], target[-1] = 1, -1
        if preimage(phi, target) is None:
            phi_onto = False
            break
    if not phi_onto:
        raise ArithmeticError("phi misses part of the zero sum block")

    ambient_actions = []
    divisor_actions = []
    for gi, gp in enumerate(graph.action):
        dp = config.action[gi]

        def var_image(name):
            if name[0] == "alpha":
                return ("alpha", dp[name[1]])
            _, comp, pt = name
            new_pt = dp[pt] if pt in div_index else gp[pt]
            return ("y", gp[comp], new_pt)

        prows = [[0] * nvars for _ in range(nvars)]
        for old, name in enumerate(var_names):
            prows[vindex[var_image(name)]][old] = 1
        P = IntMatrix.from_rows(prows, nvars)
        drows = [[0] * ndiv for _ in range(ndiv)]
        for old, d in enumerate(div_ids):
            drows[div_index[dp[d]]][old] = 1
        PD = IntMatrix.from_rows(drows, ndiv)
        if (phi_ambient.matrix @ P) != (PD @ phi_ambient.matrix):
            raise ArithmeticError("divisor projection is not equivariant")
        if not (C @ (P @ K.inclusion.matrix)).mod(mod).is_zero():
            raise ArithmeticError("action does not preserve the assembled kernel")
        ambient_actions.append(P)
        divisor_actions.append(PD)

    return XiModule(
        graph=graph, config=config, ell=ell, level=s,
        ambient=ambient, constraint=constraint,
        module=K.module, inclusion=K.inclusion,
        divisor_block=divisor_block, phi_ambient=phi_ambient, phi=phi,
        cycle_embedding=cycle_embedding, h1_inclusion=h1_inclusion,
        var_names=tuple(var_names), support=support,
        ambient_actions=tuple(ambient_actions),
        divisor_actions=tuple(divisor_actions),
        spl2_exact=spl2_exact, phi_onto_ker_sum=phi_onto,
    )


# ---------------------------------------------------------------------------
# the explicit section psi and its Bezout combination


@dataclass
class PsiSplitting:
    """Section data for one spanning tree orbit.

    psi_ambient sends the difference basis of the zero sum divisor block
    into ambient Xi coordinates; phi after psi multiplies by the orbit size
    m, and psi commutes with the action.  Both facts are verified exactly
    during construction.
    """

    xi: XiModule
    trees: tuple
    m: int
    domain: LModule
    basis: IntMatrix
    psi_ambient: LMap
    phi_check: bool
    equivariance_check: bool


def _difference_basis(ndiv: int) -> IntMatrix:
    rows = [[0] * (ndiv - 1) for _ in range(ndiv)]
    for j in range(ndiv - 1):
        rows[j][j] = 1
        rows[ndiv - 1][j] = -1
    return IntMatrix.from_rows(rows, ndiv - 1)


def _psi_column(xi: XiModule, trees, alpha: Dict[str, int]) -> List[int]:
    """The proof's assignment for one zero sum alpha vector, exactly over Z."""
    graph, config = xi.graph, xi.config
    m = len(trees)
    a: Dict[str, int] = {}
    for c in graph.component_ids:
        a[c] = sum(alpha[d] for d in config.free_on(c))
    for n in graph.nodes:
        anchored = config.anchored_at(n)
        a[n] = -alpha[anchored] if anchored is not None else 0
    solutions = [tree_solve(graph, t, a) for t in trees]

    col = [0] * len(xi.var_names)
    for d, value in alpha.items():
        col[xi.var_names.index(("alpha", d))] = m * value
    for i, name in enumerate(xi.var_names):
        if name[0] != "y":
            continue
        _, comp, pt = name
        if pt in graph.nodes:
            col[i] = sum(sol.get((comp, pt), 0) for sol in solutions)
        else:
            col[i] = -m * alpha[pt]
    return col


def build_psi(graph: DualGraph, config: DivisorConfig, tree_orbit, ell: int,
              s: int, xi: Optional[XiModule] = None) -> PsiSplitting:
    """Construct the section for one orbit of spanning trees.

    tree_orbit must be a full orbit under the generated action group: every
    member a spanning tree, closed under each generator, and reachable from
    any member.  The construction sums the balanced tree solutions over the
    orbit, which is what makes the result equivariant.
    """
    if xi is None:
        xi = build_xi(graph, config, ell, s)
    mod = ell ** s

    normalized = []
    for t in tree_orbit:
        normalized.append(frozenset(_validate_tree(graph, t)))
    if len(set(normalized)) != len(normalized):
        raise NotAnOrbit("repeated tree in the orbit")
    tree_set = set(normalized)
    for t in normalized:
        for p in graph.action:
            img = frozenset(graph.edge_image(p, e) for e in t)
            if img not in tree_set:
                raise NotAnOrbit("orbit is not closed under the action")
    reached = {normalized[0]}
    frontier = [normalized[0]]
    while frontier:
        cur = frontier.pop()
        for p in graph.action:
            img = frozenset(graph.edge_image(p, e) for e in cur)
            if img not in reached:
                reached.add(img)
                frontier.append(img)
    if reached != tree_set:
        raise NotAnOrbit("the given trees split into several orbits")

    trees = sorted(tuple(sorted(t)) for t in tree_set)
    m = len(trees)
    div_ids = config.ids
    ndiv = len(div_ids)
    B = _difference_basis(ndiv)
    domain = _free_level(ell, s, ndiv - 1)

    cols = []
    for j in range(ndiv - 1):
        alpha = {d: B.entry(i, j) for i, d in enumerate(div_ids)}
        cols.append(_psi_column(xi, trees, alpha))
    Psi = (IntMatrix.from_rows(list(map(list, zip(*cols))), len(cols))
           if cols else IntMatrix.zeros(len(xi.var_names), 0))

    if not (xi.constraint.matrix @ Psi).is_zero():
        raise BalanceViolated(
            "internal: psi columns violate the defining constraints")
    phi_check = (xi.phi_ambient.matrix @ Psi) == B.scale(m)
    if not phi_check:
        raise ArithmeticError("phi after psi is not multiplication by the orbit size")

    equis = True
    for P, PD in zip(xi.ambient_actions, xi.divisor_actions):
        R = _express_in_basis(B, PD @ B)
        if (P @ Psi) != (Psi @ R):
            equis = False
    if not equis:
        raise ArithmeticError("psi does not commute with the action")

    return PsiSplitting(
        xi=xi, trees=tuple(trees), m=m, domain=domain, basis=B,
        psi_ambient=LMap(domain, xi.ambient, Psi),
        phi_check=phi_check, equivariance_check=equis,
    )


@dataclass
class CombinedSplitting:
    xi: XiModule
    m: int
    coefficients: Tuple[int, ...]
    orbit_sizes: Tuple[int, ...]
    psi_ambient: LMap
    phi_check: bool


def bezout_combine(splittings: Sequence[PsiSplitting],
                   cap: int = DEFAULT_TREE_CAP) -> CombinedSplitting:
    """Combine per orbit sections into one achieving the orbit size gcd.

    The gcd of the supplied orbit sizes must equal the gcd over all orbits;
    otherwise more orbits are needed and GcdShortfall reports both numbers.
    """
    if not splittings:
        raise ValueError("no splittings supplied")
    xi = splittings[0].xi
    for sp in splittings[1:]:
        if sp.xi is not xi and not (
                sp.xi.graph == xi.graph and sp.xi.config == xi.config
                and sp.xi.ell == xi.ell and sp.xi.level == xi.level):
            raise ValueError("splittings belong to different assemblies")
    sizes = [sp.m for sp in splittings]
    g = 0
    for szv in sizes:
        g = gcd(g, szv)
    full = m_gamma(xi.graph, cap)
    if g != full:
        raise GcdShortfall(
            f"orbit sizes {sizes} reach gcd {g}, but the full orbit gcd is "
            f"{full}; supply more orbits")

    # fold extended gcds into one coefficient list
    coeffs = [1]
    acc = sizes[0]
    for szv in sizes[1:]:
        old_g, x, y = _egcd(acc, szv)
        coeffs = [ci * x for ci in coeffs] + [y]
        acc = old_g
    Psi = None
    for ci, sp in zip(coeffs, splittings):
        term = sp.psi_ambient.matrix.scale(ci)
        Psi = term if Psi is None else Psi + term
    B = splittings[0].basis
    # stored map matrices are already reduced mod l^s, so compare there
    phi_check = ((xi.phi_ambient.matrix @ Psi) - B.scale(g)).mod(xi.modulus).is_zero()
    if not phi_check:
        raise ArithmeticError("combined section misses the gcd multiple")
    return CombinedSplitting(
        xi=xi, m=g, coefficients=tuple(coeffs), orbit_sizes=tuple(sizes),
        psi_ambient=LMap(splittings[0].domain, xi.ambient, Psi),
        phi_check=phi_check,
    )


def _egcd(a: int, b: int):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


# ---------------------------------------------------------------------------
# randomized legal instances for property sweeps


def random_legal_graph(rng, max_components: int = 4, max_extra_nodes: int = 3,
                       genus_pool: Sequence[int] = (0, 0, 0, 1, 2),
                       allow_action: bool = True) -> DualGraph:
    """A random valid graph, optionally with a random nontrivial symmetry.

    Components are joined into a random tree by degree two nodes, then extra
    nodes add independent cycles, so the Betti number equals the number of
    extras by construction.  When allow_action is set, a nontrivial
    automorphism is searched for by brute force over genus preserving
    component permutations and used as a single generator when found.
    """
    n1 = rng.randint(1, max_components)
    comps = [(f"c{i}", rng.choice(genus_pool)) for i in range(1, n1 + 1)]
    nodes: List[str] = []
    edges: List[Tuple[str, str]] = []
    counter = 0
    for i in range(2, n1 + 1):
        counter += 1
        node = f"n{counter}"
        other = f"c{rng.randint(1, i - 1)}"
        nodes.append(node)
        edges.append((f"c{i}", node))
        edges.append((other, node))
    if n1 >= 2:
        for _ in range(rng.randint(0, max_extra_nodes)):
            counter += 1
            node = f"n{counter}"
            a = rng.randint(1, n1)
            b = rng.randint(1, n1)
            while b == a:
                b = rng.randint(1, n1)
            nodes.append(node)
            edges.append((f"c{a}", node))
            edges.append((f"c{b}", node))
    graph = DualGraph(comps, nodes, edges)
    if not allow_action or rng.random() < 0.5:
        return graph

    autos = _component_automorphisms(graph)
    nontrivial = [a for a in autos if any(a[v] != v for v in a)]
    if not nontrivial:
        return graph
    pick = nontrivial[rng.randrange(len(nontrivial))]
    return DualGraph(comps, nodes, edges, action=[pick])


def _component_automorphisms(graph: DualGraph) -> List[Dict[str, str]]:
    """Automorphisms obtained from genus preserving component permutations.

    Nodes are grouped by their unordered component pair; a component
    permutation extends to the nodes exactly when every group maps onto a
    group of equal size, and the extension pairs the sorted groups.
    """
    from itertools import permutations

    comp_ids = list(graph.component_ids)
    groups: Dict[Tuple[str, str], List[str]] = {}
    for n in graph.nodes:
        groups.setdefault(graph.node_components(n), []).append(n)
    for pair in groups:
        groups[pair].sort()
    out = []
    for perm in permutations(comp_ids):
        mapping = dict(zip(comp_ids, perm))
        if any(graph.genus(c) != graph.genus(mapping[c]) for c in comp_ids):
            continue
        node_map: Dict[str, str] = {}
        ok = True
        for pair, members in groups.items():
            image_pair = tuple(sorted((mapping[pair[0]], mapping[pair[1]])))
            targets = groups.get(image_pair)
            if targets is None or len(targets) != len(members):
                ok = False
                break
            node_map.update(zip(members, targets))
        if not ok:
            continue
        full = dict(mapping)
        full.update(node_map)
        try:
            DualGraph(graph.components, graph.nodes, graph.edges, action=[full])
        except ValueError:
            continue
        out.append(full)
    return out
