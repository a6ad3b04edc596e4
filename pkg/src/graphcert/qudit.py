"""Qudit graph-state simulation and the single-site stabilizer test.

Conventions (fixed repository-wide, validated against the dense oracle):

- omega = exp(2 pi i / d); X|k> = |k+1 mod d>; Z|k> = omega^k |k>, so
  Z X = omega X Z.
- A Pauli word is stored as (xExp, zExp, phaseExp) meaning
  omega^phase * prod_site X^x Z^z (X factors left of Z factors per site).
- A generator g with phase p stabilizes the state: g|psi> = |psi>.
- Measuring a Pauli W returns the outcome r in {0..d-1} labeling the
  eigenvalue omega^r; the post-measurement state is stabilized by
  omega^(-r) W.
- On the deviated basis state prod_i Z_i^{a_i} |G_d>, the test for vertex i
  gives residual x_i + sum_j z_j = -a_i (mod d) deterministically.

All qudit arithmetic is integer arithmetic mod d; no floating point enters
outcome generation.  The tableau measurement rules require prime d; composite
d is served by the graph-basis fast path and the dense statevector state,
both exact for graph-basis inputs at any d.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .hypergraph import StabilizerSpec, WeightedHypergraph, build_stabilizers

DENSE_SIZE_LIMIT = 2**20


class DimensionError(ValueError):
    """State and test disagree on qudit count or local dimension."""


class CompositeDimensionError(ValueError):
    """Tableau measurement asked for a composite local dimension."""


def _is_prime(d: int) -> bool:
    if d < 2:
        return False
    f = 2
    while f * f <= d:
        if d % f == 0:
            return False
        f += 1
    return True


def _prime_factors(d: int) -> list[int]:
    out = []
    f = 2
    while f * f <= d:
        if d % f == 0:
            out.append(f)
            while d % f == 0:
                d //= f
        f += 1
    if d > 1:
        out.append(d)
    return out


# -- Pauli words ---------------------------------------------------------------


@dataclass(frozen=True)
class QuditPauli:
    """An n-qudit Pauli word omega^phase * prod X^x Z^z, exponents mod d."""

    d: int
    x: tuple[int, ...]
    z: tuple[int, ...]
    phase: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise DimensionError(f"d must be >= 2, got {self.d}")
        if len(self.x) != len(self.z):
            raise DimensionError("x and z exponent vectors differ in length")
        object.__setattr__(self, "x", tuple(v % self.d for v in self.x))
        object.__setattr__(self, "z", tuple(v % self.d for v in self.z))
        object.__setattr__(self, "phase", self.phase % self.d)

    @property
    def n(self) -> int:
        return len(self.x)

    def __mul__(self, other: "QuditPauli") -> "QuditPauli":
        if self.d != other.d or self.n != other.n:
            raise DimensionError("mismatched Pauli words")
        cross = sum(zi * xj for zi, xj in zip(self.z, other.x))
        return QuditPauli(
            self.d,
            tuple(a + b for a, b in zip(self.x, other.x)),
            tuple(a + b for a, b in zip(self.z, other.z)),
            self.phase + other.phase + cross,
        )

    def __pow__(self, m: int) -> "QuditPauli":
        # closed form is exact for any m >= 0; do not reduce m mod d here,
        # since for even d the phase of g^d need not vanish
        if m < 0:
            raise ValueError("negative Pauli powers unsupported")
        zx = sum(zi * xi for zi, xi in zip(self.z, self.x))
        return QuditPauli(
            self.d,
            tuple(m * v for v in self.x),
            tuple(m * v for v in self.z),
            m * self.phase + zx * (m * (m - 1) // 2),
        )

    def symplectic(self, other: "QuditPauli") -> int:
        """sigma with self * other = omega^sigma * other * self."""
        zx = sum(zi * xj for zi, xj in zip(self.z, other.x))
        xz = sum(zj * xi for zj, xi in zip(other.z, self.x))
        return (zx - xz) % self.d

    def commutes(self, other: "QuditPauli") -> bool:
        return self.symplectic(other) == 0

    @classmethod
    def single_x(cls, d: int, n: int, site: int) -> "QuditPauli":
        x = [0] * n
        x[site - 1] = 1
        return cls(d, tuple(x), (0,) * n)

    @classmethod
    def single_z(cls, d: int, n: int, site: int) -> "QuditPauli":
        z = [0] * n
        z[site - 1] = 1
        return cls(d, (0,) * n, tuple(z))


# -- test outcome --------------------------------------------------------------


@dataclass(frozen=True)
class TestOutcome:
    """Result of one stabilizer test: raw site outcomes and the residual."""

    residual: int
    passed: bool
    raw: dict[int, tuple[str, int]]  # site -> (basis, outcome)

    def __post_init__(self):
        if self.passed != (self.residual == 0):
            raise ValueError("passed flag inconsistent with residual")


def residual_from_values(spec: StabilizerSpec, values: dict[int, int]) -> int:
    """x_i + sum_{j in N(i)} z_j mod d from per-site outcomes."""
    total = values[spec.vertex] + sum(values[j] for j in sorted(spec.neighbors))
    return total % spec.d


# -- stabilizer tableau ---------------------------------------------------------


class StabilizerTableau:
    """n commuting independent Pauli generators of an n-qudit stabilizer state.

    Single-owner: measurement mutates the tableau.  Generators are re-checked
    for pairwise commutation after every mutation.
    """

    def __init__(self, d: int, generators: list[QuditPauli], validate: bool = True):
        if not generators:
            raise DimensionError("tableau needs at least one generator")
        self.d = d
        self.n = generators[0].n
        self.generators = list(generators)
        if len(self.generators) != self.n:
            raise DimensionError(
                f"{len(self.generators)} generators for {self.n} qudits"
            )
        for g in self.generators:
            if g.d != d or g.n != self.n:
                raise DimensionError("generator shape mismatch")
        if validate:
            self.check()
            self._check_independent()

    def copy(self) -> "StabilizerTableau":
        tab = StabilizerTableau.__new__(StabilizerTableau)
        tab.d = self.d
        tab.n = self.n
        tab.generators = list(self.generators)
        return tab

    def check(self):
        """Assert all generator pairs commute (symplectic products vanish)."""
        for i, g in enumerate(self.generators):
            for h in self.generators[i + 1 :]:
                if not g.commutes(h):
                    raise DimensionError("tableau generators do not commute")

    def _symplectic_rows(self) -> np.ndarray:
        return np.array(
            [list(g.x) + list(g.z) for g in self.generators], dtype=np.int64
        )

    def _check_independent(self):
        rows = self._symplectic_rows()
        for p in _prime_factors(self.d):
            if _rank_mod_p(rows % p, p) != self.n:
                raise DimensionError(
                    f"generators are dependent mod {p}; group order below d^n"
                )

    def apply_deviation(self, a) -> "StabilizerTableau":
        """Tableau of prod_i Z_i^{a_i} |state>: conjugation adds a.x_g to phases."""
        a = tuple(int(v) % self.d for v in a)
        if len(a) != self.n:
            raise DimensionError(f"deviation length {len(a)} != n = {self.n}")
        gens = [
            QuditPauli(g.d, g.x, g.z, g.phase + sum(ai * xi for ai, xi in zip(a, g.x)))
            for g in self.generators
        ]
        tab = StabilizerTableau(self.d, gens, validate=False)
        tab.check()
        return tab

    # -- measurement ------------------------------------------------------

    def _measured_word(self, site: int, basis: str) -> QuditPauli:
        if not (1 <= site <= self.n):
            raise DimensionError(f"site {site} outside [1, {self.n}]")
        if basis == "X":
            return QuditPauli.single_x(self.d, self.n, site)
        if basis == "Z":
            return QuditPauli.single_z(self.d, self.n, site)
        raise ValueError(f"unknown qudit basis {basis!r}")

    def outcome_is_random(self, site: int, basis: str) -> bool:
        w = self._measured_word(site, basis)
        return any(w.symplectic(g) != 0 for g in self.generators)

    def measure_site(self, site, basis, rng=None, force=None) -> int:
        """Measure X or Z on one site; returns the outcome in {0..d-1}.

        Deterministic outcomes leave the tableau unchanged; random outcomes
        are uniform over Z_d (prime d), drawn from ``rng`` unless ``force``
        pins the collapse branch.
        """
        w = self._measured_word(site, basis)
        sv = [w.symplectic(g) for g in self.generators]
        anti = [k for k, s in enumerate(sv) if s != 0]
        if not anti:
            return self._deterministic_outcome(w)
        if not _is_prime(self.d):
            raise CompositeDimensionError(
                f"tableau measurement needs prime d, got {self.d}; "
                "use the graph-basis or dense state instead"
            )
        if force is not None:
            r = int(force) % self.d
        else:
            r = int(rng.integers(self.d))
        alpha = anti[0]
        g_alpha = self.generators[alpha]
        inv = pow(sv[alpha], -1, self.d)
        for k in anti[1:]:
            t = (-sv[k] * inv) % self.d
            self.generators[k] = self.generators[k] * (g_alpha**t)
        self.generators[alpha] = QuditPauli(self.d, w.x, w.z, -r)
        self.check()
        return r

    def _deterministic_outcome(self, w: QuditPauli) -> int:
        rows = self._symplectic_rows().T  # (2n, n): columns are generators
        target = np.array(list(w.x) + list(w.z), dtype=np.int64)
        if _is_prime(self.d):
            m = _solve_mod_prime(rows % self.d, target % self.d, self.d)
        else:
            m = _solve_mod_composite(rows, target, self.d)
        if m is None:
            raise DimensionError("commuting word outside stabilizer span")
        word = None
        for k, mk in enumerate(m):
            if mk % self.d == 0:
                continue
            term = self.generators[k] ** int(mk)
            word = term if word is None else word * term
        phase = 0 if word is None else word.phase
        return (-phase) % self.d


def _rank_mod_p(mat: np.ndarray, p: int) -> int:
    a = mat.copy() % p
    rows, cols = a.shape
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if a[i, c] % p:
                piv = i
                break
        if piv is None:
            continue
        a[[r, piv]] = a[[piv, r]]
        a[r] = (a[r] * pow(int(a[r, c]), -1, p)) % p
        for i in range(rows):
            if i != r and a[i, c] % p:
                a[i] = (a[i] - a[i, c] * a[r]) % p
        r += 1
    return r


def _solve_mod_prime(a: np.ndarray, b: np.ndarray, p: int):
    """Solve a @ m = b over F_p; returns None when inconsistent."""
    rows, cols = a.shape
    aug = np.concatenate([a % p, (b % p).reshape(-1, 1)], axis=1)
    pivots = []
    r = 0
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if aug[i, c] % p:
                piv = i
                break
        if piv is None:
            continue
        aug[[r, piv]] = aug[[piv, r]]
        aug[r] = (aug[r] * pow(int(aug[r, c]), -1, p)) % p
        for i in range(rows):
            if i != r and aug[i, c] % p:
                aug[i] = (aug[i] - aug[i, c] * aug[r]) % p
        pivots.append(c)
        r += 1
    for i in range(r, rows):
        if aug[i, -1] % p:
            return None
    m = np.zeros(cols, dtype=np.int64)
    for row, c in enumerate(pivots):
        m[c] = aug[row, -1] % p
    return m


def _solve_mod_composite(a: np.ndarray, b: np.ndarray, d: int):
    """Solve a @ m = b mod composite d by brute CRT-free search on small d.

    Only reached for deterministic outcomes on composite-d tableaux, which in
    this package are graph-state tableaux whose X block is the identity; the
    solution is then read off directly.
    """
    rows, cols = a.shape
    x_block = a[: cols, :]
    if np.array_equal(x_block % d, np.eye(cols, dtype=np.int64)):
        m = b[:cols] % d
        if np.all((a @ m) % d == b % d):
            return m
    # fall back: exhaustive search is exponential; refuse rather than guess
    raise CompositeDimensionError(
        f"deterministic outcome solve unsupported for composite d = {d}"
    )


def graph_state_tableau(graph: WeightedHypergraph, d: int) -> StabilizerTableau:
    """Tableau of |G_d>: generator i is X_i prod_{j in N(i)} Z_j with phase 0."""
    specs = build_stabilizers(graph, d)
    n = graph.n
    gens = []
    for spec in specs:
        x = [0] * n
        z = [0] * n
        x[spec.vertex - 1] = 1
        for j in spec.neighbors:
            z[j - 1] = 1
        gens.append(QuditPauli(d, tuple(x), tuple(z)))
    return StabilizerTableau(d, gens)


# -- graph-basis fast path -------------------------------------------------------


@dataclass(frozen=True)
class GraphBasisState:
    """The deviated graph-basis state prod_i Z_i^{a_i} |G_d>, any d >= 2.

    Immutable and shareable: per-register measurement state lives in the
    session object.  Joint test outcomes are uniform over the residue
    constraint x_v + sum_{j in N(v)} z_j = -a_v (mod d).
    """

    graph: WeightedHypergraph
    d: int
    a: tuple[int, ...]

    def __post_init__(self):
        if self.d < 2:
            raise DimensionError(f"d must be >= 2, got {self.d}")
        if len(self.a) != self.graph.n:
            raise DimensionError(
                f"deviation length {len(self.a)} != n = {self.graph.n}"
            )
        object.__setattr__(self, "a", tuple(int(v) % self.d for v in self.a))

    @property
    def n(self) -> int:
        return self.graph.n

    def is_ideal(self) -> bool:
        return all(v == 0 for v in self.a)

    def session(self) -> "GraphBasisSession":
        return GraphBasisSession(self)


class GraphBasisSession:
    """Sequential single-site measurement of one GraphBasisState register.

    Outcomes are sampled conditionally on what was already measured: a site is
    uniform until it completes the test pattern of the unique X-measured
    vertex (X at v, Z on all neighbors of v), at which point its value is
    forced by the residue constraint.  At most one X measurement per register
    is supported, which covers the protocol's measurement patterns.
    """

    def __init__(self, state: GraphBasisState):
        self.state = state
        self.values: dict[int, int] = {}
        self.bases: dict[int, str] = {}
        self.x_vertex: int | None = None

    def measure(self, site: int, basis: str, rng) -> int:
        st = self.state
        if not (1 <= site <= st.n):
            raise DimensionError(f"site {site} outside [1, {st.n}]")
        if basis not in ("X", "Z"):
            raise ValueError(f"unknown qudit basis {basis!r}")
        if site in self.values:
            if self.bases[site] != basis:
                raise DimensionError(f"site {site} already measured in another basis")
            return self.values[site]
        if basis == "X":
            if self.x_vertex is not None:
                raise DimensionError("at most one X measurement per register")
            self.x_vertex = site
        value = self._forced_value(site, basis)
        if value is None:
            value = int(rng.integers(st.d))
        self.values[site] = value
        self.bases[site] = basis
        return value

    def _forced_value(self, site: int, basis: str) -> int | None:
        v = self.x_vertex
        if v is None:
            return None
        cluster = {v} | set(self.state.graph.neighbors(v))
        if site not in cluster:
            return None
        pending = [u for u in cluster if u != site and u not in self.values]
        if pending:
            return None
        for u in cluster:
            if u == site:
                continue
            want = "X" if u == v else "Z"
            if self.bases.get(u) != want:
                return None
        partial = sum(self.values[u] for u in cluster if u != site)
        return (-self.state.a[v - 1] - partial) % self.state.d


def graph_basis_test_distribution(
    graph: WeightedHypergraph, d: int, a, spec: StabilizerSpec
) -> dict[tuple[int, ...], Fraction]:
    """Exact joint outcome law of the fast path: uniform on the constraint set."""
    state = GraphBasisState(graph, d, tuple(a))
    sites = spec.sites
    m = len(sites)
    weight = Fraction(1, d ** (m - 1))
    target = (-state.a[spec.vertex - 1]) % d
    out = {}
    # free values on sites[:-1]; the final site is forced by the constraint
    for combo in np.ndindex(*([d] * (m - 1))):
        last = (target - sum(combo)) % d
        out[tuple(int(v) for v in combo) + (last,)] = weight
    return out


# -- dense statevector ------------------------------------------------------------


class DenseState:
    """Full d^n statevector with per-site X/Z measurement; any d >= 2.

    Serves as the independent oracle substrate and as the simulation path for
    composite d.  Mutated by measurement.
    """

    def __init__(self, d: int, psi: np.ndarray):
        self.d = d
        self.n = psi.ndim
        if d**self.n > DENSE_SIZE_LIMIT:
            raise DimensionError(f"d^n = {d**self.n} exceeds {DENSE_SIZE_LIMIT}")
        self.psi = psi.astype(np.complex128)

    @classmethod
    def from_graph(cls, graph: WeightedHypergraph, d: int, a=None) -> "DenseState":
        """Build prod Z^a (prod CZ) |+_d>^n by phase accumulation."""
        for e in graph.edges:
            if len(e) != 2:
                raise DimensionError("dense qudit state needs a plain graph")
        if not graph.has_unit_weights():
            raise DimensionError("qudit graphs carry no edge weights")
        n = graph.n
        if d**n > DENSE_SIZE_LIMIT:
            raise DimensionError(f"d^n = {d**n} exceeds {DENSE_SIZE_LIMIT}")
        if a is None:
            a = (0,) * n
        a = tuple(int(v) % d for v in a)
        k = [np.arange(d, dtype=np.int64).reshape([d if j == i else 1 for j in range(n)]) for i in range(n)]
        phase = np.zeros((d,) * n, dtype=np.int64)
        for e in graph.edges:
            u, v = sorted(e)
            phase = phase + k[u - 1] * k[v - 1]
        for i, ai in enumerate(a):
            if ai:
                phase = phase + ai * k[i]
        psi = np.exp(2j * np.pi * (phase % d) / d) / d ** (n / 2.0)
        return cls(d, psi)

    def _x_eigenvector(self, r: int) -> np.ndarray:
        ks = np.arange(self.d)
        return np.exp(-2j * np.pi * r * ks / self.d) / np.sqrt(self.d)

    def site_probabilities(self, site: int, basis: str) -> np.ndarray:
        axis = site - 1
        if basis == "Z":
            amp2 = np.abs(self.psi) ** 2
            return amp2.sum(axis=tuple(i for i in range(self.n) if i != axis))
        if basis == "X":
            f = np.exp(
                2j
                * np.pi
                * np.outer(np.arange(self.d), np.arange(self.d))
                / self.d
            ) / np.sqrt(self.d)
            transformed = np.tensordot(f, self.psi, axes=([1], [axis]))
            transformed = np.moveaxis(transformed, 0, axis)
            amp2 = np.abs(transformed) ** 2
            return amp2.sum(axis=tuple(i for i in range(self.n) if i != axis))
        raise ValueError(f"unknown qudit basis {basis!r}")

    def measure_site(self, site, basis, rng=None, force=None) -> int:
        probs = self.site_probabilities(site, basis)
        if force is not None:
            r = int(force) % self.d
            if probs[r] <= 1e-12:
                raise DimensionError("forced outcome has zero probability")
        else:
            r = int(rng.choice(self.d, p=probs / probs.sum()))
        axis = site - 1
        if basis == "Z":
            vec = np.zeros(self.d, dtype=np.complex128)
            vec[r] = 1.0
        else:
            vec = self._x_eigenvector(r)
        rest = np.tensordot(np.conj(vec), self.psi, axes=([0], [axis]))
        norm = np.sqrt(np.sum(np.abs(rest) ** 2))
        if norm < 1e-12:
            raise DimensionError("projected onto zero-probability branch")
        self.psi = np.moveaxis(np.multiply.outer(vec, rest / norm), 0, axis)
        return r


def dense_test_distribution(
    graph: WeightedHypergraph, d: int, a, vertex: int
) -> dict[tuple[int, ...], Fraction]:
    """Exact joint outcome distribution of the test at ``vertex`` on
    prod Z^a |G_d>, by full statevector construction.

    Keys are outcome tuples over the measured sites in ascending site order;
    probabilities are exact rationals with denominator d^(n+1) (floating-point
    values are snapped and the snap error is asserted tiny).
    """
    state = DenseState.from_graph(graph, d, a)
    n, psi = state.n, state.psi
    axis = vertex - 1
    f = np.exp(
        2j * np.pi * np.outer(np.arange(d), np.arange(d)) / d
    ) / np.sqrt(d)
    psi_x = np.moveaxis(np.tensordot(f, psi, axes=([1], [axis])), 0, axis)
    probs = np.abs(psi_x) ** 2
    spec = StabilizerSpec(vertex=vertex, neighbors=graph.neighbors(vertex), d=d)
    sites = spec.sites
    drop = tuple(i for i in range(n) if (i + 1) not in sites)
    if drop:
        probs = probs.sum(axis=drop)
    denom = d ** (n + 1)
    out = {}
    for idx in np.ndindex(*probs.shape):
        p = float(probs[idx])
        num = round(p * denom)
        if abs(p - num / denom) > 1e-9:
            raise DimensionError("oracle probability failed rational snap")
        if num:
            out[tuple(int(v) for v in idx)] = Fraction(num, denom)
    total = sum(out.values())
    if total != 1:
        raise DimensionError(f"oracle distribution sums to {total}")
    return out


def tableau_test_distribution(
    tableau: StabilizerTableau, spec: StabilizerSpec
) -> dict[tuple[int, ...], Fraction]:
    """Exact joint outcome distribution of one test on a tableau state,
    by branching the measurement over every random collapse."""
    if spec.d != tableau.d:
        raise DimensionError("spec and tableau disagree on d")
    sites = spec.sites
    branches = [(tableau.copy(), (), Fraction(1))]
    for site in sites:
        basis = "X" if site == spec.vertex else "Z"
        grown = []
        for tab, outs, pr in branches:
            if tab.outcome_is_random(site, basis):
                share = pr / tableau.d
                for r in range(tableau.d):
                    t2 = tab.copy()
                    t2.measure_site(site, basis, force=r)
                    grown.append((t2, outs + (r,), share))
            else:
                r = tab.measure_site(site, basis)
                grown.append((tab, outs + (r,), pr))
        branches = grown
    dist: dict[tuple[int, ...], Fraction] = {}
    for _, outs, pr in branches:
        dist[outs] = dist.get(outs, Fraction(0)) + pr
    return dist


# -- the test -----------------------------------------------------------------


def measure_stabilizer_test(state, spec: StabilizerSpec, rng) -> TestOutcome:
    """Run one stabilizer test: X on spec.vertex, Z on each neighbor.

    Only the |N(i)| + 1 involved sites are touched.  Accepts a
    GraphBasisState (shared, non-mutating), a StabilizerTableau, or a
    DenseState (both single-owner, mutated by the measurement).
    """
    if isinstance(state, GraphBasisState):
        if state.d != spec.d:
            raise DimensionError(f"state d={state.d} but spec d={spec.d}")
        if spec.vertex > state.n or any(j > state.n for j in spec.neighbors):
            raise DimensionError("spec references sites outside the state")
        session = state.session()
        measure = session.measure
        n = state.n
    elif isinstance(state, (StabilizerTableau, DenseState)):
        if state.d != spec.d:
            raise DimensionError(f"state d={state.d} but spec d={spec.d}")
        if spec.vertex > state.n or any(j > state.n for j in spec.neighbors):
            raise DimensionError("spec references sites outside the state")
        measure = lambda site, basis, rng: state.measure_site(site, basis, rng)
        n = state.n
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    raw = {}
    values = {}
    for site in spec.sites:
        basis = "X" if site == spec.vertex else "Z"
        value = measure(site, basis, rng)
        raw[site] = (basis, value)
        values[site] = value
    residual = residual_from_values(spec, values)
    return TestOutcome(residual=residual, passed=(residual == 0), raw=raw)
