"""Source-side register models: what state each of the N_total registers is in.

An assignment fixes every register's state before any verifier randomness is
drawn (a non-adaptive source).  Strategies materialize assignments as pure
functions of (params, strategy arguments, trial index), so identical inputs
replay identical assignments.  Supported register states are graph-basis
diagonal states (ideal / deviated / Weyl-shifted) plus explicit small-n
stabilizer tableaux; cross-register correlations are classical only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .cv import NullifierModel
from .qudit import GraphBasisState, StabilizerTableau


class AdversaryError(ValueError):
    """Invalid strategy arguments or assignment file."""


# -- register entries -----------------------------------------------------------


@dataclass(frozen=True)
class Ideal:
    """Register holds the ideal state."""

    def fidelity_to_ideal(self, ctx) -> float:
        return 1.0


@dataclass(frozen=True)
class Deviated:
    """Qudit register holds prod Z^a |G_d> for the given deviation vector."""

    a: tuple[int, ...]

    def fidelity_to_ideal(self, ctx) -> float:
        return 1.0 if all(v % ctx.d == 0 for v in self.a) else 0.0


@dataclass(frozen=True)
class Shifted:
    """CV register holds prod Z_i(s_i) |G_CV> for the given shifts."""

    shifts: tuple[float, ...]

    def fidelity_to_ideal(self, ctx) -> float:
        return 1.0 if all(s == 0.0 for s in self.shifts) else 0.0


@dataclass(frozen=True)
class TableauState:
    """Qudit register holds an explicit stabilizer-tableau state (small n)."""

    tableau: StabilizerTableau

    def fidelity_to_ideal(self, ctx) -> float | None:
        return None  # outside the diagonal family; not tracked


Entry = Ideal | Deviated | Shifted | TableauState

_IDEAL = Ideal()


@dataclass(frozen=True)
class RegisterAssignment:
    """One entry per register, fixed before the protocol samples anything.

    Stored sparsely: ``nonideal`` maps 1-based register ids to their entries
    and every unlisted register is Ideal.  Typical sources are mostly ideal,
    so scoring and fidelity accounting stay O(#nonideal).
    """

    n_total: int
    nonideal: dict[int, Entry]

    def __post_init__(self):
        if self.n_total < 1:
            raise AdversaryError("assignment needs at least one register")
        for reg, e in self.nonideal.items():
            if not (1 <= reg <= self.n_total):
                raise AdversaryError(f"register id {reg} outside [1, {self.n_total}]")
            if isinstance(e, Ideal):
                raise AdversaryError("Ideal entries belong in the implicit default")

    def entry(self, register: int) -> Entry:
        """1-based register lookup."""
        if not (1 <= register <= self.n_total):
            raise AdversaryError(f"register id {register} outside [1, {self.n_total}]")
        return self.nonideal.get(register, _IDEAL)

    def fidelity_array(self, ctx) -> np.ndarray:
        """Per-register fidelity to the ideal state; NaN where untracked."""
        out = np.ones(self.n_total)
        for reg, e in self.nonideal.items():
            f = e.fidelity_to_ideal(ctx)
            out[reg - 1] = np.nan if f is None else f
        return out


# -- simulation context: how entries become measurable states --------------------


@dataclass(frozen=True)
class SimContext:
    """Everything an entry needs to become a measurable state."""

    mode: str  # 'qudit' | 'cv'
    graph: object
    d: int | None
    noise: object | None  # NoiseModel for CV
    ideal_cache: object = None

    def ideal_state(self):
        if self.mode == "qudit":
            return GraphBasisState(self.graph, self.d, (0,) * self.graph.n)
        return NullifierModel(self.graph, (0.0,) * self.graph.n, self.noise)


def state_for_entry(entry: Entry, ctx: SimContext):
    """Measurable state object for one register (tableaux are copied:
    measurement mutates them)."""
    if isinstance(entry, Ideal):
        if ctx.ideal_cache is not None:
            return ctx.ideal_cache
        return ctx.ideal_state()
    if isinstance(entry, Deviated):
        if ctx.mode != "qudit":
            raise AdversaryError("deviation entries need qudit mode")
        return GraphBasisState(ctx.graph, ctx.d, entry.a)
    if isinstance(entry, Shifted):
        if ctx.mode != "cv":
            raise AdversaryError("shift entries need CV mode")
        if ctx.ideal_cache is not None and not isinstance(
            ctx.ideal_cache, NullifierModel
        ):
            return ctx.ideal_cache.with_weyl_shifts(entry.shifts)
        return NullifierModel(ctx.graph, entry.shifts, ctx.noise)
    if isinstance(entry, TableauState):
        if ctx.mode != "qudit":
            raise AdversaryError("tableau entries need qudit mode")
        return entry.tableau.copy()
    raise AdversaryError(f"unknown entry type {type(entry).__name__}")


def make_context(params) -> SimContext:
    if params.mode == "qudit":
        ideal = GraphBasisState(params.graph, params.d, (0,) * params.graph.n)
    elif getattr(params, "cv_gaussian", False):
        from .cv import prepare_cv_graph_state

        ideal = prepare_cv_graph_state(params.graph, params.noise.squeeze_sigma)
    else:
        ideal = NullifierModel(params.graph, (0.0,) * params.graph.n, params.noise)
    return SimContext(
        mode=params.mode,
        graph=params.graph,
        d=params.d,
        noise=params.noise,
        ideal_cache=ideal,
    )


# -- deviation models for noisy sources -------------------------------------------


@dataclass(frozen=True)
class FixedDeviation:
    """Always the same deviation vector (length 1 broadcasts to all sites)."""

    a: tuple[int, ...]

    def draw(self, rng, params) -> Entry:
        a = tuple(int(v) for v in self.a)
        if len(a) == 1:
            a = a * params.graph.n
        if len(a) != params.graph.n:
            raise AdversaryError(
                f"deviation length {len(a)} != n = {params.graph.n}"
            )
        return Deviated(a)


@dataclass(frozen=True)
class AllNonzeroDeviation:
    """Deviation 1 on every site: fails every stabilizer test with certainty.

    This is the worst-case wrong state assumed by the closed-form acceptance
    probability.
    """

    def draw(self, rng, params) -> Entry:
        return Deviated((1,) * params.graph.n)


@dataclass(frozen=True)
class UniformNonzeroDeviation:
    """Uniform over all nonzero deviation vectors."""

    def draw(self, rng, params) -> Entry:
        n, d = params.graph.n, params.d
        while True:
            a = tuple(int(v) for v in rng.integers(0, d, n))
            if any(a):
                return Deviated(a)


@dataclass(frozen=True)
class FixedShift:
    """Always the same CV shift vector (length 1 broadcasts to all modes)."""

    shifts: tuple[float, ...]

    def draw(self, rng, params) -> Entry:
        s = tuple(float(v) for v in self.shifts)
        if len(s) == 1:
            s = s * params.graph.n
        if len(s) != params.graph.n:
            raise AdversaryError(f"shift length {len(s)} != n = {params.graph.n}")
        return Shifted(s)


# -- strategies ------------------------------------------------------------------


@dataclass(frozen=True)
class HonestStrategy:
    """Every register holds the ideal state."""

    def materialize(self, params, trial_index: int) -> RegisterAssignment:
        return RegisterAssignment(n_total=params.n_total, nonideal={})


@dataclass(frozen=True)
class IIDNoiseStrategy:
    """Each register is independently ideal with probability 1 - epsilon,
    else a draw from the bad model (the diagonal-ensemble realization of a
    mixed i.i.d. source)."""

    epsilon: float
    bad_model: object

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise AdversaryError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    def materialize(self, params, trial_index: int) -> RegisterAssignment:
        rng = rngmod.assignment_stream(params.seed, trial_index)
        bad = rng.random(params.n_total) < self.epsilon
        nonideal = {
            int(k) + 1: self.bad_model.draw(rng, params) for k in np.flatnonzero(bad)
        }
        return RegisterAssignment(n_total=params.n_total, nonideal=nonideal)


@dataclass(frozen=True)
class SingleBadStrategy:
    """Exactly one register holds a wrong state; the rest are ideal."""

    bad_entry: Entry
    position: int | None = None  # 1-based; None -> uniform random placement

    def materialize(self, params, trial_index: int) -> RegisterAssignment:
        if self.position is None:
            rng = rngmod.assignment_stream(params.seed, trial_index)
            pos = int(rng.integers(1, params.n_total + 1))
        else:
            pos = self.position
            if not (1 <= pos <= params.n_total):
                raise AdversaryError(f"position {pos} outside [1, {params.n_total}]")
        nonideal = {} if isinstance(self.bad_entry, Ideal) else {pos: self.bad_entry}
        return RegisterAssignment(n_total=params.n_total, nonideal=nonideal)


@dataclass(frozen=True)
class ScriptedStrategy:
    """Verbatim assignment, e.g. parsed from an assignment file."""

    entries: tuple[Entry, ...]

    def materialize(self, params, trial_index: int) -> RegisterAssignment:
        if len(self.entries) != params.n_total:
            raise AdversaryError(
                f"scripted assignment has {len(self.entries)} entries, "
                f"need N_total = {params.n_total}"
            )
        nonideal = {
            k + 1: e for k, e in enumerate(self.entries) if not isinstance(e, Ideal)
        }
        return RegisterAssignment(n_total=params.n_total, nonideal=nonideal)


# -- assignment file format --------------------------------------------------------
#
# One line per register:
#     ideal
#     dev a1,a2,...,an        (qudit deviation exponents)
#     shift s1,s2,...,sn      (CV Weyl shifts)


def parse_assignment_text(text: str, n: int, mode: str) -> tuple[Entry, ...]:
    entries: list[Entry] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split(None, 1)
        kind = tokens[0]
        if kind == "ideal":
            entries.append(_IDEAL)
        elif kind == "dev":
            if mode != "qudit":
                raise AdversaryError(f"line {lineno}: dev entry in CV mode")
            if len(tokens) != 2:
                raise AdversaryError(f"line {lineno}: dev needs a vector")
            try:
                a = tuple(int(t) for t in tokens[1].split(","))
            except ValueError:
                raise AdversaryError(f"line {lineno}: bad deviation vector")
            if len(a) != n:
                raise AdversaryError(
                    f"line {lineno}: deviation length {len(a)} != n = {n}"
                )
            entries.append(Deviated(a))
        elif kind == "shift":
            if mode != "cv":
                raise AdversaryError(f"line {lineno}: shift entry in qudit mode")
            if len(tokens) != 2:
                raise AdversaryError(f"line {lineno}: shift needs a vector")
            try:
                s = tuple(float(t) for t in tokens[1].split(","))
            except ValueError:
                raise AdversaryError(f"line {lineno}: bad shift vector")
            if len(s) != n:
                raise AdversaryError(f"line {lineno}: shift length {len(s)} != n = {n}")
            entries.append(Shifted(s))
        else:
            raise AdversaryError(f"line {lineno}: unknown entry kind {kind!r}")
    return tuple(entries)


def load_assignment(path, n: int, mode: str) -> ScriptedStrategy:
    with open(path, "r", encoding="utf-8") as fh:
        return ScriptedStrategy(entries=parse_assignment_text(fh.read(), n, mode))
