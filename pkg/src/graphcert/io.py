"""Deterministic serialization of verdicts, transcripts, and summaries.

All records are JSON with sorted keys and compact separators, so identical
runs produce byte-identical files; nothing time- or host-dependent is ever
written.  Floats rely on Python's shortest round-trip repr.
"""

from __future__ import annotations

import json

from .rng import GENERATOR_NAME
from .verifier import Transcript, Verdict


def json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def verdict_record(v: Verdict) -> dict:
    return {
        "record": "verdict",
        "trial": v.trial_index,
        "seed": v.seed,
        "rng": GENERATOR_NAME,
        "accepted": v.accepted,
        "n_pass": v.n_pass,
        "fidelity_bound": v.fidelity_bound,
        "confidence": v.confidence,
        "confidence_raw": v.confidence_raw,
        "regime_flags": list(v.regime_flags),
        "out_of_theorem_regime": bool(v.regime_flags),
        "n": v.n,
        "c": v.c,
        "n_test": v.n_test,
        "n_total": v.n_total,
        "ntilde": v.ntilde,
    }


def verdict_line(v: Verdict) -> str:
    return json_line(verdict_record(v))


def transcript_record(tr: Transcript, include_groups: bool = True) -> dict:
    rec = {
        "record": "transcript",
        "trial": tr.trial_index,
        "seed": tr.seed,
        "n_pass_groups": list(tr.n_pass_groups),
        "targets": list(tr.targets),
    }
    if include_groups:
        rec["groups"] = [list(g) for g in tr.groups]
    if tr.outcomes is not None:
        rec["outcomes"] = [
            {
                "register": o.register,
                "group": o.group,
                "residual": o.residual,
                "passed": o.passed,
                "sites": [[site, b, val] for site, (b, val) in sorted(o.raw.items())],
            }
            for o in tr.outcomes
        ]
    return rec


def truth_record(trial_index: int, ensemble_fid, n_nonideal: int) -> dict:
    """Simulation ground truth (known to the source, not the verifier)."""
    return {
        "record": "truth",
        "trial": trial_index,
        "ensemble_fidelity": ensemble_fid,
        "n_nonideal": n_nonideal,
    }
