"""Experiment execution: reproducible Monte Carlo batches, sweep tables,
and the built-in selftest.

One experiment writes three files into the output directory:

    verdicts.jsonl   one verifier-view verdict record per trial
    truth.jsonl      one simulation ground-truth record per trial
    summary.json     aggregates plus the full configuration echo

Identical configurations (same seed included) produce byte-identical files;
wall-clock timing is reported on stdout only.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import bounds
from .config import ExperimentConfig, build_params, build_strategy
from .io import json_line, truth_record, verdict_line
from .rng import GENERATOR_NAME, TrialStreams
from .verifier import (
    ProtocolParams,
    certified_fidelity_bound,
    ensemble_fidelity,
    multi_copy_bound,
    run_protocol,
    run_protocol_fast,
    threshold_pass_count,
)


@dataclass
class ExperimentResult:
    verdicts_path: str
    truth_path: str
    summary_path: str
    summary: dict


def run_trials(params: ProtocolParams, strategy, trials: int, outcome_mode: str = "sampled",
               record_raw: bool = False):
    """Yield (assignment, transcript, verdict) for each trial index."""
    for t in range(trials):
        assignment = strategy.materialize(params, t)
        streams = TrialStreams.for_trial(params.seed, t)
        if outcome_mode == "residual":
            transcript, verdict = run_protocol_fast(params, assignment, streams, t)
        elif outcome_mode == "sampled":
            transcript, verdict = run_protocol(
                params, assignment, streams, t, record_raw=record_raw
            )
        else:
            raise ValueError(f"unknown outcome_mode {outcome_mode!r}")
        yield assignment, transcript, verdict


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the configured trials and write result files; trial count >= 1."""
    if cfg.trials < 1:
        raise ValueError(f"trials must be >= 1, got {cfg.trials}")
    params = build_params(cfg)
    strategy = build_strategy(cfg, params)
    os.makedirs(cfg.out, exist_ok=True)
    verdicts_path = os.path.join(cfg.out, "verdicts.jsonl")
    truth_path = os.path.join(cfg.out, "truth.jsonl")
    summary_path = os.path.join(cfg.out, "summary.json")

    accepted = 0
    bound_sum = 0.0
    violations = 0
    fidelity_known = 0
    fid_sum = 0.0
    started = time.perf_counter()
    with open(verdicts_path, "w", encoding="utf-8") as vfh, open(
        truth_path, "w", encoding="utf-8"
    ) as tfh:
        for assignment, transcript, verdict in run_trials(
            params, strategy, cfg.trials, cfg.outcome_mode, cfg.record_raw
        ):
            vfh.write(verdict_line(verdict) + "\n")
            fid = ensemble_fidelity(params, assignment, transcript)
            tfh.write(
                json_line(
                    truth_record(verdict.trial_index, fid, len(assignment.nonideal))
                )
                + "\n"
            )
            accepted += verdict.accepted
            bound_sum += verdict.fidelity_bound
            if fid is not None:
                fidelity_known += 1
                fid_sum += fid
                if fid < verdict.fidelity_bound:
                    violations += 1
    elapsed = time.perf_counter() - started

    summary = {
        "config": cfg.echo(),
        "rng": GENERATOR_NAME,
        "stream_rule": "philox key = [seed, 4*trial + role]",
        "trials": cfg.trials,
        "acceptance_rate": accepted / cfg.trials,
        "mean_fidelity_bound": bound_sum / cfg.trials,
        "bound_violation_rate": (violations / fidelity_known) if fidelity_known else None,
        "mean_ensemble_fidelity": (fid_sum / fidelity_known) if fidelity_known else None,
        "n": params.n,
        "n_test": params.n_test,
        "n_total": params.n_total,
        "regime_flags": list(params.regime_flags),
    }
    with open(summary_path, "w", encoding="utf-8") as sfh:
        sfh.write(json_line(summary) + "\n")
    print(
        f"ran {cfg.trials} trials in {elapsed:.2f}s "
        f"(accept rate {summary['acceptance_rate']:.4f})"
    )
    return ExperimentResult(verdicts_path, truth_path, summary_path, summary)


# -- sweep tables -----------------------------------------------------------------

SWEEP_COLUMNS = [
    "n",
    "c",
    "epsilon",
    "ntilde",
    "n_test",
    "n_total",
    "bound",
    "confidence",
    "M",
    "t",
    "p_acc",
    "p_acc_prior",
]


def sweep_rows(ns, cs, epsilons, ntildes):
    """Formula-level sweep: the certified bound at the acceptance threshold,
    the confidence level, the comparison copy count, and both acceptance
    probabilities, over the Cartesian grid."""
    for n in ns:
        n_test = bounds.compute_n_test(n)
        n_total = 2 * n * n_test
        for c in cs:
            m, t = bounds.comparison_copies(n, c)
            confidence = bounds.total_confidence(n, c)
            for ntilde in ntildes:
                thresh = threshold_pass_count(n, n_test)
                if ntilde == 1:
                    bound = certified_fidelity_bound(n, c, thresh, n_test)
                else:
                    bound = multi_copy_bound(n, c, ntilde, thresh, n_test)
                for eps in epsilons:
                    yield {
                        "n": n,
                        "c": c,
                        "epsilon": eps,
                        "ntilde": ntilde,
                        "n_test": n_test,
                        "n_total": n_total,
                        "bound": bound,
                        "confidence": confidence,
                        "M": m,
                        "t": t,
                        "p_acc": bounds.p_acc(n, n_test, eps),
                        "p_acc_prior": bounds.p_acc_prior(m, eps),
                    }


def emit_sweep(ns, cs, epsilons, ntildes, out_path: str) -> list[dict]:
    rows = list(sweep_rows(ns, cs, epsilons, ntildes))
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return rows


# -- selftest ---------------------------------------------------------------------


def selftest(verbose: bool = True) -> bool:
    """Fast end-to-end sanity checks; returns True when everything passes."""
    from .adversary import Deviated, HonestStrategy, SingleBadStrategy
    from .cv import NoiseModel, NullifierModel, cv_deviation_model, run_cv_stabilizer_test
    from .hypergraph import build_nullifiers, build_stabilizers, cluster2d, path_graph
    from .qudit import (
        dense_test_distribution,
        graph_state_tableau,
        tableau_test_distribution,
    )

    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # pragma: no cover - failure reporting
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    def honest_completeness():
        g = cluster2d(3, 3)
        params = ProtocolParams(graph=g, d=2, c=13.0, seed=5, n_test=12)
        strat = HonestStrategy()
        for _, _, verdict in run_trials(params, strat, 5):
            assert verdict.accepted and verdict.n_pass == 9 * 12

    def serfling_small():
        for t_size in range(2, 9):
            for k in range(1, t_size):
                for s in range(t_size + 1):
                    pop = [1] * s + [0] * (t_size - s)
                    for tenths in range(1, 10):
                        nu = Fraction(tenths, 10)
                        p = bounds.exact_sampling_tail(pop, k, nu)
                        q = bounds.SerflingQuery(t_size - k, k, tenths / 10)
                        assert p <= bounds.serfling_tail(q)

    def tableau_vs_dense():
        g = path_graph(3)
        for d in (2, 3):
            for a in ((0,) * 3, (1, 0, 1)):
                for spec in build_stabilizers(g, d):
                    tab = graph_state_tableau(g, d).apply_deviation(a)
                    assert tableau_test_distribution(
                        tab, spec
                    ) == dense_test_distribution(g, d, a, spec.vertex)

    def cv_symbolic():
        g = path_graph(3)
        noise = NoiseModel(0.0, 0.0, 10.0)
        model = NullifierModel(g, (0.0,) * 3, noise)
        rng = np.random.default_rng(0)
        for spec in build_nullifiers(g):
            out = run_cv_stabilizer_test(model, spec, noise, 0.0, rng)
            assert out.passed and out.residual == 0.0
        shifted = cv_deviation_model(g, (2.5, 0.0, 0.0), noise)
        out = run_cv_stabilizer_test(shifted, build_nullifiers(g)[0], noise, 1.0, rng)
        assert out.residual == 2.5 and not out.passed

    def determinism():
        g = cluster2d(3, 3)
        params = ProtocolParams(graph=g, d=2, c=13.0, seed=11, n_test=8)
        strat = SingleBadStrategy(bad_entry=Deviated((1,) * 9))
        lines = []
        for _ in range(2):
            batch = [
                verdict_line(v) for _, _, v in run_trials(params, strat, 3)
            ]
            lines.append(batch)
        assert lines[0] == lines[1]

    check("honest completeness (small run)", honest_completeness)
    check("sampling tail bound vs exhaustive enumeration (T <= 8)", serfling_small)
    check("tableau vs dense oracle distributions", tableau_vs_dense)
    check("CV symbolic mode exactness", cv_symbolic)
    check("seeded determinism", determinism)

    ok = all(passed for _, passed, _ in checks)
    if verbose:
        for name, passed, msg in checks:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}{': ' + msg if msg else ''}")
    return ok
