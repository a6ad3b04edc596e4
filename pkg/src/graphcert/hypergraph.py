"""Graphs and weighted hypergraphs plus their stabilizer / nullifier families.

Vertices are 1-based everywhere, including serialized formats.  A plain graph
is the special case where every hyperedge has exactly two vertices and unit
weight; only plain graphs support the qudit stabilizer family, while any
weighted hypergraph supports the CV nullifier family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_EDGE_CAP_FACTOR = 10  # cap |edges| at factor * n**3


class GraphError(ValueError):
    """Invalid graph/hypergraph structure or serialized form."""


@dataclass(frozen=True)
class WeightedHypergraph:
    """Vertex count, hyperedges (1-based vertex sets) and real edge weights.

    Immutable after construction and safe to share across concurrent trials.
    The hyperedge count is capped at ``edge_cap_factor * n**3`` so that test
    evaluation stays polynomial in n.
    """

    n: int
    edges: tuple[frozenset[int], ...]
    weights: tuple[float, ...]
    edge_cap_factor: int = DEFAULT_EDGE_CAP_FACTOR

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"vertex count must be >= 1, got {self.n}")
        if len(self.edges) != len(self.weights):
            raise GraphError(
                f"{len(self.edges)} edges but {len(self.weights)} weights"
            )
        cap = self.edge_cap_factor * self.n**3
        if len(self.edges) > cap:
            raise GraphError(
                f"{len(self.edges)} hyperedges exceeds cap {cap} (= {self.edge_cap_factor}*n^3)"
            )
        seen = set()
        for e in self.edges:
            if len(e) < 1:
                raise GraphError("empty hyperedge")
            for v in e:
                if not (1 <= v <= self.n):
                    raise GraphError(f"vertex {v} outside [1, {self.n}]")
            if e in seen:
                raise GraphError(f"repeated hyperedge {sorted(e)}")
            seen.add(e)

    @classmethod
    def build(cls, n, edge_lists, weights=None, edge_cap_factor=DEFAULT_EDGE_CAP_FACTOR):
        """Construct from vertex lists, checking for duplicate vertices per edge."""
        frozen = []
        for vs in edge_lists:
            vs = list(vs)
            if len(set(vs)) != len(vs):
                raise GraphError(f"duplicate vertex within hyperedge {vs}")
            frozen.append(frozenset(vs))
        if weights is None:
            weights = [1.0] * len(frozen)
        return cls(
            n=n,
            edges=tuple(frozen),
            weights=tuple(float(w) for w in weights),
            edge_cap_factor=edge_cap_factor,
        )

    def is_plain_graph(self) -> bool:
        """True when every hyperedge joins exactly two vertices."""
        return all(len(e) == 2 for e in self.edges)

    def has_unit_weights(self) -> bool:
        return all(w == 1.0 for w in self.weights)

    def neighbors(self, vertex: int) -> frozenset[int]:
        """Adjacent vertices of ``vertex``; defined for plain graphs only."""
        if not self.is_plain_graph():
            raise GraphError("neighbors() requires a plain graph")
        out = set()
        for e in self.edges:
            if vertex in e:
                out.update(e - {vertex})
        return frozenset(out)

    def incident_edges(self, vertex: int) -> list[int]:
        """Indices of hyperedges containing ``vertex``."""
        return [j for j, e in enumerate(self.edges) if vertex in e]


@dataclass(frozen=True)
class StabilizerSpec:
    """One qudit stabilizer: Pauli X on ``vertex`` and Pauli Z on each neighbor."""

    vertex: int
    neighbors: frozenset[int]
    d: int

    def __post_init__(self):
        if self.d < 2:
            raise GraphError(f"local dimension must be >= 2, got {self.d}")
        if self.vertex in self.neighbors:
            raise GraphError(f"vertex {self.vertex} listed as its own neighbor")

    @property
    def sites(self) -> tuple[int, ...]:
        """All measured sites, ascending."""
        return tuple(sorted({self.vertex} | self.neighbors))


@dataclass(frozen=True)
class NullifierSpec:
    """One CV nullifier: p on ``vertex`` minus the weighted products of x's.

    ``terms`` holds one (weight, partner vertices) pair per hyperedge that
    contains ``vertex``; a single-vertex hyperedge contributes an empty
    partner set (a constant offset).
    """

    vertex: int
    terms: tuple[tuple[float, frozenset[int]], ...]

    @property
    def x_sites(self) -> tuple[int, ...]:
        """Sites measured in the x basis, ascending."""
        out = set()
        for _, partners in self.terms:
            out.update(partners)
        return tuple(sorted(out))

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(sorted({self.vertex} | set(self.x_sites)))


def build_stabilizers(graph: WeightedHypergraph, d: int) -> list[StabilizerSpec]:
    """Stabilizer specs for each vertex of a plain unit-weight graph."""
    if d < 2:
        raise GraphError(f"local dimension must be >= 2, got {d}")
    for e in graph.edges:
        if len(e) != 2:
            raise GraphError(
                f"qudit stabilizers need |e| = 2; got hyperedge {sorted(e)}"
            )
    if not graph.has_unit_weights():
        raise GraphError("qudit graphs carry no edge weights; all must be 1.0")
    return [
        StabilizerSpec(vertex=i, neighbors=graph.neighbors(i), d=d)
        for i in range(1, graph.n + 1)
    ]


def build_nullifiers(whg: WeightedHypergraph) -> list[NullifierSpec]:
    """Nullifier specs for each vertex of a weighted hypergraph."""
    specs = []
    for i in range(1, whg.n + 1):
        terms = []
        for j in whg.incident_edges(i):
            terms.append((whg.weights[j], whg.edges[j] - {i}))
        specs.append(NullifierSpec(vertex=i, terms=tuple(terms)))
    return specs


# -- preset families ---------------------------------------------------------


def path_graph(n: int) -> WeightedHypergraph:
    return WeightedHypergraph.build(n, [(i, i + 1) for i in range(1, n)])


def cycle_graph(n: int) -> WeightedHypergraph:
    if n < 3:
        raise GraphError(f"cycle needs n >= 3, got {n}")
    edges = [(i, i + 1) for i in range(1, n)] + [(n, 1)]
    return WeightedHypergraph.build(n, edges)


def complete_graph(n: int) -> WeightedHypergraph:
    edges = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    return WeightedHypergraph.build(n, edges)


def cluster2d(rows: int, cols: int) -> WeightedHypergraph:
    """Rectangular 2D cluster (grid) graph, row-major vertex numbering."""
    if rows < 1 or cols < 1:
        raise GraphError("cluster2d needs rows >= 1 and cols >= 1")
    n = rows * cols
    idx = lambda r, c: r * cols + c + 1
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c)))
    return WeightedHypergraph.build(n, edges)


def preset(name: str, n: int | None = None) -> WeightedHypergraph:
    """Build a named preset: path, cycle, complete, or cluster2d:RxC."""
    if name.startswith("cluster2d"):
        if ":" in name:
            _, dims = name.split(":", 1)
            try:
                rows, cols = (int(t) for t in dims.lower().split("x"))
            except ValueError:
                raise GraphError(f"bad cluster2d spec {name!r}; want cluster2d:RxC")
            return cluster2d(rows, cols)
        if n is None:
            raise GraphError("cluster2d preset needs explicit rows x cols or n")
        # nearest-to-square factorization of n
        r = int(n**0.5)
        while n % r != 0:
            r -= 1
        return cluster2d(r, n // r)
    if n is None:
        raise GraphError(f"preset {name!r} needs a vertex count")
    builders = {"path": path_graph, "cycle": cycle_graph, "complete": complete_graph}
    if name not in builders:
        raise GraphError(f"unknown preset {name!r}")
    return builders[name](n)


# -- text format --------------------------------------------------------------
#
# Header line `n <count>`, then one line per hyperedge:
#     edge v1 v2 ... vk [weight]
# The final token counts as the weight only when it is written as a float
# (contains '.', an exponent, or a sign); bare integers are vertex indices.
# Omitted weight means 1.0.  Vertex indices are 1-based.


def _looks_like_weight(token: str) -> bool:
    if any(ch in token for ch in ".eE+-"):
        try:
            float(token)
            return True
        except ValueError:
            return False
    return False


def parse_hypergraph(text: str, edge_cap_factor: int = DEFAULT_EDGE_CAP_FACTOR) -> WeightedHypergraph:
    """Parse the `n ... / edge ...` text format."""
    n = None
    edge_lists: list[list[int]] = []
    weights: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "n":
            if n is not None:
                raise GraphError(f"line {lineno}: duplicate header")
            if len(tokens) != 2:
                raise GraphError(f"line {lineno}: header must be `n <count>`")
            try:
                n = int(tokens[1])
            except ValueError:
                raise GraphError(f"line {lineno}: bad vertex count {tokens[1]!r}")
        elif tokens[0] == "edge":
            if n is None:
                raise GraphError(f"line {lineno}: edge before `n` header")
            body = tokens[1:]
            if not body:
                raise GraphError(f"line {lineno}: empty edge")
            weight = 1.0
            if _looks_like_weight(body[-1]):
                weight = float(body[-1])
                body = body[:-1]
            if not body:
                raise GraphError(f"line {lineno}: edge with weight but no vertices")
            try:
                verts = [int(t) for t in body]
            except ValueError:
                raise GraphError(f"line {lineno}: bad vertex token in {body}")
            edge_lists.append(verts)
            weights.append(weight)
        else:
            raise GraphError(f"line {lineno}: unknown directive {tokens[0]!r}")
    if n is None:
        raise GraphError("missing `n <count>` header")
    return WeightedHypergraph.build(n, edge_lists, weights, edge_cap_factor=edge_cap_factor)


def format_hypergraph(whg: WeightedHypergraph) -> str:
    """Serialize back to the text format (weights always explicit floats)."""
    lines = [f"n {whg.n}"]
    for e, w in zip(whg.edges, whg.weights):
        verts = " ".join(str(v) for v in sorted(e))
        lines.append(f"edge {verts} {w!r}")
    return "\n".join(lines) + "\n"


def load_hypergraph(path) -> WeightedHypergraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hypergraph(fh.read())
