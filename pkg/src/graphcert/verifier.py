"""The four-step certification protocol: group sampling, stabilizer tests,
target selection, and the accept/reject verdict with certified bounds.

Acceptance is decided in exact integer arithmetic:

    accept  <=>  2 n N_pass >= (2 n^2 - 1) N_test

which is the threshold sum N_pass >= (n - 1/(2n)) N_test cleared of
fractions, so no float comparison sits on the decision path.

Group selection draws one uniform permutation of the register ids and
partitions it in order: n disjoint test groups of N_test, then ntilde
targets, then discards.  This is distributionally identical to sequential
uniform without-replacement draws and costs O(N_total).

The default natural logarithm enters through N_test = ceil(5 n^4 ln n / 32);
see bounds.compute_n_test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversary import (
    Deviated,
    Ideal,
    RegisterAssignment,
    Shifted,
    TableauState,
    make_context,
    state_for_entry,
)
from .bounds import compute_n_test
from .cv import CVError, NoiseModel, run_cv_stabilizer_test
from .hypergraph import WeightedHypergraph, build_nullifiers, build_stabilizers
from .qudit import measure_stabilizer_test
from .rng import TrialStreams


class ProtocolError(ValueError):
    """Parameters that cannot run at all (as opposed to regime warnings)."""


class RegimeError(ProtocolError):
    """Strict mode: parameters outside the certified-bound regime."""


C_MIN = 64.0 / 5.0


def c_max(n: int, ntilde: int) -> float:
    """Largest admissible c for the certified bound at the given target count."""
    if ntilde == 1:
        return (n - 1) ** 2 / 4.0
    edge = n / ntilde - 32.0 * (ntilde - 1) / (5.0 * ntilde * n**4 * math.log(n)) - 1.0
    return edge**2 / 4.0


@dataclass(frozen=True)
class ProtocolParams:
    """All public parameters of one protocol configuration.

    ``n_test`` defaults to ceil(5 n^4 ln n / 32) and ``n_total`` to
    2 n N_test.  Out-of-regime values (c, n, nonstandard N_total) are
    permitted with warnings in ``regime_flags`` unless ``strict`` is set,
    in which case they raise RegimeError; flagged runs are labeled
    out-of-theorem-regime in the verdict.
    """

    graph: WeightedHypergraph
    mode: str = "qudit"  # 'qudit' | 'cv'
    d: int | None = 2
    c: float = 13.0
    n_test: int | None = None
    n_total: int | None = None
    ntilde: int = 1
    seed: int = 1
    noise: NoiseModel | None = None
    tau: float = 0.0
    cv_gaussian: bool = False
    strict: bool = False
    regime_flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.mode not in ("qudit", "cv"):
            raise ProtocolError(f"mode must be 'qudit' or 'cv', got {self.mode!r}")
        if self.mode == "qudit":
            if self.d is None or self.d < 2:
                raise ProtocolError(f"qudit mode needs d >= 2, got {self.d}")
            build_stabilizers(self.graph, self.d)  # validates plain unit graph
        else:
            if self.noise is None:
                object.__setattr__(self, "noise", NoiseModel())
            if self.tau < 0:
                raise ProtocolError(f"tau must be >= 0, got {self.tau}")
            if self.tau == 0 and not self.noise.is_symbolic():
                raise ProtocolError("tau = 0 requires symbolic mode (zero noise)")
            if self.cv_gaussian:
                if self.noise.squeeze_sigma <= 0:
                    raise ProtocolError(
                        "Gaussian CV backend needs squeeze_sigma > 0"
                    )
                if not self.graph.is_plain_graph():
                    raise ProtocolError(
                        "Gaussian CV backend covers plain weighted graphs only"
                    )
        if self.ntilde < 1:
            raise ProtocolError(f"ntilde must be >= 1, got {self.ntilde}")
        n = self.graph.n
        if self.n_test is None:
            object.__setattr__(self, "n_test", compute_n_test(n))
        if self.n_test < 1:
            raise ProtocolError(
                f"n_test must be >= 1 to run (n = {n} gives {self.n_test})"
            )
        if self.n_total is None:
            object.__setattr__(self, "n_total", 2 * n * self.n_test)
        if self.n_total < n * self.n_test + self.ntilde:
            raise ProtocolError(
                f"N_total = {self.n_total} cannot host {n} groups of "
                f"{self.n_test} plus {self.ntilde} targets"
            )
        flags = []
        if self.c <= C_MIN:
            flags.append("c-at-or-below-64/5")
        if n > 1 and self.c >= c_max(n, self.ntilde):
            flags.append("c-at-or-above-max")
        if n < 9 * self.ntilde:
            flags.append("n-below-9*ntilde")
        if self.n_total != 2 * n * self.n_test:
            flags.append("ntotal-not-2nNtest")
        object.__setattr__(self, "regime_flags", tuple(flags))
        if self.strict and flags:
            raise RegimeError(f"outside certified regime: {', '.join(flags)}")

    @property
    def n(self) -> int:
        return self.graph.n

    def in_regime(self) -> bool:
        return not self.regime_flags


# -- bounds ---------------------------------------------------------------------


def certified_fidelity_bound(n: int, c: float, n_pass, n_test: int) -> float:
    """1 - 2 sqrt(c)/n - 2n (1 - N_pass / (n N_test)); the single-target
    certified fidelity floor (raw value, may fall below zero)."""
    if n_test == 0:
        raise ProtocolError("n_test must be nonzero")
    return 1.0 - 2.0 * math.sqrt(c) / n - 2.0 * n * (1.0 - n_pass / (n * n_test))


def multi_copy_bound(n: int, c: float, ntilde: int, n_pass, n_test: int) -> float:
    """Certified fidelity floor for ntilde jointly selected targets;
    coincides with the single-target bound at ntilde = 1."""
    denom = n * n_test - (ntilde - 1)
    if denom <= 0:
        raise ProtocolError(f"n N_test - (ntilde - 1) = {denom} must be positive")
    num = (2.0 * math.sqrt(c) + 2.0 * n * n - 2.0 * n * n_pass / n_test) * ntilde * n_test
    return 1.0 - num / denom


def accepts(n: int, n_pass: int, n_test: int) -> bool:
    """Integer-exact acceptance predicate."""
    return 2 * n * n_pass >= (2 * n * n - 1) * n_test


def threshold_pass_count(n: int, n_test: int) -> float:
    """(n - 1/(2n)) N_test, the real-valued acceptance threshold."""
    return (n - 1.0 / (2.0 * n)) * n_test


# -- group selection --------------------------------------------------------------


@dataclass(frozen=True)
class GroupSelection:
    """Disjoint test groups, target ids, and the underlying permutation."""

    groups: tuple[tuple[int, ...], ...]
    targets: tuple[int, ...]
    permutation: np.ndarray = field(compare=False, repr=False)


def sample_groups(params: ProtocolParams, rng) -> GroupSelection:
    """Partition one uniform permutation of [1..N_total]: n groups of
    N_test, then ntilde targets, rest discarded."""
    n, nt = params.n, params.n_test
    perm = rng.permutation(params.n_total) + 1  # 1-based register ids
    groups = tuple(
        tuple(int(r) for r in perm[i * nt : (i + 1) * nt]) for i in range(n)
    )
    targets = tuple(int(r) for r in perm[n * nt : n * nt + params.ntilde])
    return GroupSelection(groups=groups, targets=targets, permutation=perm)


# -- transcript and verdict --------------------------------------------------------


@dataclass(frozen=True)
class TestRecord:
    """One executed stabilizer test."""

    register: int
    group: int  # 1-based stabilizer index i
    residual: float | int
    passed: bool
    raw: dict


@dataclass(frozen=True)
class Transcript:
    """Full record of one trial's selections and outcomes."""

    seed: int
    trial_index: int
    groups: tuple[tuple[int, ...], ...]
    targets: tuple[int, ...]
    n_pass_groups: tuple[int, ...]
    outcomes: tuple[TestRecord, ...] | None  # None when raw recording is off


@dataclass(frozen=True)
class Verdict:
    """Accept/reject plus the certified bound and its confidence.

    Contains only what the verifier itself can know; simulation ground truth
    such as the source's true ensemble fidelity lives in harness truth
    records instead (see :func:`ensemble_fidelity`).
    """

    accepted: bool
    n_pass: int
    fidelity_bound: float
    confidence: float  # clamped to [0, 1]
    confidence_raw: float
    regime_flags: tuple[str, ...]
    n: int
    c: float
    n_test: int
    n_total: int
    ntilde: int
    seed: int
    trial_index: int


# -- protocol execution -------------------------------------------------------------


def make_verdict(params: ProtocolParams, n_pass_groups, trial_index: int) -> Verdict:
    """Verdict from the per-group pass counts (pure verifier-side data)."""
    n_pass = int(sum(n_pass_groups))
    n = params.n
    if params.ntilde == 1:
        bound = certified_fidelity_bound(n, params.c, n_pass, params.n_test)
    else:
        bound = multi_copy_bound(n, params.c, params.ntilde, n_pass, params.n_test)
    conf_raw = 1.0 - float(n) ** (1.0 - 5.0 * params.c / 64.0)
    return Verdict(
        accepted=accepts(n, n_pass, params.n_test),
        n_pass=n_pass,
        fidelity_bound=bound,
        confidence=min(max(conf_raw, 0.0), 1.0),
        confidence_raw=conf_raw,
        regime_flags=params.regime_flags,
        n=n,
        c=params.c,
        n_test=params.n_test,
        n_total=params.n_total,
        ntilde=params.ntilde,
        seed=params.seed,
        trial_index=trial_index,
    )


def ensemble_fidelity(
    params: ProtocolParams, assignment: RegisterAssignment, transcript: Transcript
) -> float | None:
    """Average fidelity to the ideal state over the post-test remainder
    (simulation ground truth; the real verifier cannot evaluate this).

    Graph-basis entries contribute exactly 0 or 1, so this equals the
    probability that a uniformly chosen target is the ideal state.  Returns
    None when the assignment holds entries outside the tracked family.
    """
    ctx = make_context(params)
    fid = assignment.fidelity_array(ctx)
    tested = np.zeros(params.n_total, dtype=bool)
    for grp in transcript.groups:
        tested[np.asarray(grp) - 1] = True
    rem_fid = fid[~tested]
    if np.isnan(rem_fid).any():
        return None
    return float(rem_fid.mean())


def run_protocol(
    params: ProtocolParams,
    assignment: RegisterAssignment,
    streams: TrialStreams,
    trial_index: int = 0,
    record_raw: bool = False,
) -> tuple[Transcript, Verdict]:
    """Execute one trial, sampling every measurement outcome.

    Registers are visited once each, in ascending id order (streaming order),
    and only the tested sites of tested registers are measured.  The select
    stream drives the partition; the outcome stream drives measurement
    sampling, in exactly the order a streaming source would serve it.
    """
    if assignment.n_total != params.n_total:
        raise ProtocolError(
            f"assignment holds {assignment.n_total} registers, "
            f"params say {params.n_total}"
        )
    n = params.n
    selection = sample_groups(params, streams.select)
    group_of = np.full(params.n_total + 1, -1, dtype=np.int64)
    for i, grp in enumerate(selection.groups):
        group_of[list(grp)] = i
    if params.mode == "qudit":
        specs = build_stabilizers(params.graph, params.d)
    else:
        specs = build_nullifiers(params.graph)
    ctx = make_context(params)
    n_pass_groups = [0] * n
    records = [] if record_raw else None
    rng = streams.outcome
    for reg in range(1, params.n_total + 1):
        gi = int(group_of[reg])
        if gi < 0:
            continue
        spec = specs[gi]
        state = state_for_entry(assignment.entry(reg), ctx)
        if params.mode == "qudit":
            outcome = measure_stabilizer_test(state, spec, rng)
        else:
            outcome = run_cv_stabilizer_test(state, spec, params.noise, params.tau, rng)
        if outcome.passed:
            n_pass_groups[gi] += 1
        if record_raw:
            records.append(
                TestRecord(
                    register=reg,
                    group=gi + 1,
                    residual=outcome.residual,
                    passed=outcome.passed,
                    raw=outcome.raw,
                )
            )
    transcript = Transcript(
        seed=params.seed,
        trial_index=trial_index,
        groups=selection.groups,
        targets=selection.targets,
        n_pass_groups=tuple(n_pass_groups),
        outcomes=tuple(records) if record_raw else None,
    )
    verdict = make_verdict(params, n_pass_groups, trial_index)
    return transcript, verdict


def run_protocol_fast(
    params: ProtocolParams,
    assignment: RegisterAssignment,
    streams: TrialStreams,
    trial_index: int = 0,
) -> tuple[Transcript, Verdict]:
    """Execute one trial without sampling raw site outcomes.

    Qudit pass/fail is deterministic per (register state, test index) for
    graph-basis entries, so counts, verdicts and selections are identical to
    :func:`run_protocol` under the same seed; CV tests draw their residuals
    directly.  Tableau entries are not supported here.
    """
    if assignment.n_total != params.n_total:
        raise ProtocolError(
            f"assignment holds {assignment.n_total} registers, "
            f"params say {params.n_total}"
        )
    n = params.n
    selection = sample_groups(params, streams.select)
    n_pass_groups = [0] * n
    rng = streams.outcome
    if params.mode == "cv":
        specs = build_nullifiers(params.graph)
        meas_gain = []
        for spec in specs:
            for _, partners in spec.terms:
                if len(partners) != 1 and params.noise.meas_sigma > 0:
                    raise ProtocolError(
                        "fast CV mode needs a plain graph when meas_sigma > 0; "
                        "use run_protocol instead"
                    )
            meas_gain.append(
                math.sqrt(1.0 + sum(w * w for w, _ in spec.terms))
            )
    nonideal = assignment.nonideal
    for i in range(n):
        grp = selection.groups[i]
        if params.mode == "qudit":
            fails = 0
            for reg in grp:
                e = nonideal.get(reg)
                if e is None:
                    continue
                if isinstance(e, Deviated):
                    fails += e.a[i] % params.d != 0
                else:
                    raise ProtocolError(
                        f"fast mode cannot score entry {type(e).__name__}"
                    )
            n_pass_groups[i] = len(grp) - fails
        else:
            shifts = np.zeros(len(grp))
            for k, reg in enumerate(grp):
                e = nonideal.get(reg)
                if e is None:
                    continue
                if isinstance(e, Shifted):
                    shifts[k] = e.shifts[i]
                else:
                    raise ProtocolError(
                        f"fast mode cannot score entry {type(e).__name__}"
                    )
            res = shifts + params.noise.squeeze_sigma * rng.normal(size=len(grp))
            if params.noise.meas_sigma > 0:
                res = res + params.noise.meas_sigma * meas_gain[i] * rng.normal(
                    size=len(grp)
                )
            n_pass_groups[i] = int(np.sum(np.abs(res) <= params.tau))
    transcript = Transcript(
        seed=params.seed,
        trial_index=trial_index,
        groups=selection.groups,
        targets=selection.targets,
        n_pass_groups=tuple(n_pass_groups),
        outcomes=None,
    )
    verdict = make_verdict(params, n_pass_groups, trial_index)
    return transcript, verdict
