"""Reproducible random-number streams.

Every random decision in the package is drawn from a counter-based Philox
generator keyed by (seed, stream tag), so runs are replayable and trials can
be executed concurrently without sharing generator state.

Stream derivation rule (recorded in every output file):

    key = [seed, 4 * trial_index + role]

with roles SELECT (verifier-side register selection), OUTCOME (measurement
outcome sampling) and ASSIGN (adversary assignment materialization).
Keeping selection and outcome streams separate lets a networked verifier and
prover reproduce exactly the same run as a single in-process simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENERATOR_NAME = "philox4x64"

ROLE_SELECT = 0
ROLE_OUTCOME = 1
ROLE_ASSIGN = 2

_MASK64 = (1 << 64) - 1


def stream(seed: int, trial_index: int, role: int) -> np.random.Generator:
    """Return the Philox stream for one (trial, role) pair."""
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    if role not in (ROLE_SELECT, ROLE_OUTCOME, ROLE_ASSIGN):
        raise ValueError(f"unknown stream role {role}")
    key = [int(seed) & _MASK64, (4 * trial_index + role) & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class TrialStreams:
    """The independent streams consumed by a single protocol trial."""

    select: np.random.Generator
    outcome: np.random.Generator

    @classmethod
    def for_trial(cls, seed: int, trial_index: int) -> "TrialStreams":
        return cls(
            select=stream(seed, trial_index, ROLE_SELECT),
            outcome=stream(seed, trial_index, ROLE_OUTCOME),
        )


def assignment_stream(seed: int, trial_index: int) -> np.random.Generator:
    """Stream used to materialize an adversary assignment for one trial."""
    return stream(seed, trial_index, ROLE_ASSIGN)
