"""Continuous-variable stabilizer tests on weighted hypergraph states.

Quadrature conventions: hbar = 1, [x, p] = i, vacuum variance 1/2 per
quadrature.  Gaussian states order their quadrature vector (x_1..x_n,
p_1..p_n).

The exact nullifier relation of the ideal state makes its test statistics
simulable without a wavefunction: each measured x is drawn uniformly from a
finite window (the ideal x marginal is improper), and the p outcome is the
weighted product combination of the true x values plus a squeeze residual.
With every noise parameter and the tolerance at zero this reproduces the
idealized test exactly (honest states pass with probability one); Gaussian
covariance simulation of plain weighted graphs at finite squeezing is also
provided and must match the sampling model in mean and variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hypergraph import NullifierSpec, WeightedHypergraph, build_nullifiers


class CVError(ValueError):
    """Invalid CV state, model, or test parameters."""


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian residual / detector noise and the x sampling window.

    squeeze_sigma: std dev of each nullifier residual (finite squeezing).
    meas_sigma: homodyne detector noise std dev, added per reported outcome.
    x_window: half-width of the uniform window for x outcomes in the
    nullifier-sampling model.
    """

    squeeze_sigma: float = 0.0
    meas_sigma: float = 0.0
    x_window: float = 10.0

    def __post_init__(self):
        if self.squeeze_sigma < 0 or self.meas_sigma < 0 or self.x_window < 0:
            raise CVError("noise parameters must be nonnegative")

    def is_symbolic(self) -> bool:
        return self.squeeze_sigma == 0.0 and self.meas_sigma == 0.0


@dataclass(frozen=True)
class CVTestOutcome:
    """One nullifier test: reported outcomes, residual, and the verdict."""

    residual: float
    passed: bool
    tau: float
    raw: dict[int, tuple[str, float]]  # site -> (basis, reported value)

    def __post_init__(self):
        if self.passed != (abs(self.residual) <= self.tau):
            raise CVError("passed flag inconsistent with residual and tau")


def nullifier_combination(spec: NullifierSpec, x_values: dict[int, float]) -> float:
    """sum_j Omega_j prod_{k in e_j - {i}} x_k with a fixed accumulation order.

    Shared by outcome generation and verification so the symbolic mode
    cancels bit-exactly.
    """
    total = 0.0
    for weight, partners in spec.terms:
        prod = 1.0
        for k in sorted(partners):
            prod *= x_values[k]
        total += weight * prod
    return total


# -- Gaussian states (plain weighted graphs, finite squeezing) -----------------


class GaussianState:
    """Mean vector and covariance of an n-mode Gaussian state.

    The uncertainty relation cov + (i/2) J >= 0 is checked on construction
    (eigenvalue test, tolerance 1e-9).
    """

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if mean.ndim != 1 or mean.size % 2:
            raise CVError("mean must have even length (x block then p block)")
        n = mean.size // 2
        if cov.shape != (2 * n, 2 * n):
            raise CVError(f"covariance must be {2*n}x{2*n}")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise CVError("covariance must be symmetric")
        j = np.zeros((2 * n, 2 * n))
        j[:n, n:] = np.eye(n)
        j[n:, :n] = -np.eye(n)
        eigs = np.linalg.eigvalsh(cov + 0.5j * j)
        if eigs.min() < -1e-9:
            raise CVError(f"uncertainty relation violated (min eig {eigs.min():.3e})")
        self.n = n
        self.mean = mean
        self.cov = cov

    def quadrature_index(self, site: int, basis: str) -> int:
        if not (1 <= site <= self.n):
            raise CVError(f"site {site} outside [1, {self.n}]")
        if basis == "x":
            return site - 1
        if basis == "p":
            return self.n + site - 1
        raise CVError(f"unknown CV basis {basis!r}")

    def with_weyl_shifts(self, shifts) -> "GaussianState":
        """Apply prod_i exp(i s_i x_i): shifts each p mean by s_i."""
        shifts = np.asarray(shifts, dtype=float)
        if shifts.size != self.n:
            raise CVError(f"shift length {shifts.size} != n = {self.n}")
        mean = self.mean.copy()
        mean[self.n :] += shifts
        return GaussianState(mean, self.cov)

    def session(self, noise: NoiseModel, rng) -> "GaussianSession":
        return GaussianSession(self, noise, rng)


def prepare_cv_graph_state(whg: WeightedHypergraph, squeeze_sigma: float) -> GaussianState:
    """Gaussian weighted-graph state: weighted CZ shears applied to n
    p-squeezed vacua with Var(p) = sigma^2 and Var(x) = 1/(4 sigma^2).

    Every nullifier of the result has variance sigma^2.
    """
    if squeeze_sigma <= 0:
        raise CVError("finite-squeezing Gaussian state needs squeeze_sigma > 0")
    for e in whg.edges:
        if len(e) != 2:
            raise CVError(f"Gaussian preparation needs |e| = 2; got {sorted(e)}")
    n = whg.n
    cov0 = np.zeros((2 * n, 2 * n))
    var_p = squeeze_sigma**2
    cov0[:n, :n] = np.eye(n) * (0.25 / var_p)
    cov0[n:, n:] = np.eye(n) * var_p
    t = np.eye(2 * n)
    for e, w in zip(whg.edges, whg.weights):
        i, j = sorted(e)
        t[n + i - 1, j - 1] += w
        t[n + j - 1, i - 1] += w
    return GaussianState(t @ np.zeros(2 * n), t @ cov0 @ t.T)


class GaussianSession:
    """Sequential homodyne measurement of one Gaussian register.

    Classical conditioning of the joint Gaussian is exact because each mode
    is measured in at most one quadrature (the operators commute).  Detector
    noise perturbs reported values only, never the conditioning.
    """

    def __init__(self, state: GaussianState, noise: NoiseModel, rng):
        self.n = state.n
        self.mean = state.mean.copy()
        self.cov = state.cov.copy()
        self.noise = noise
        self.rng = rng
        self.measured_modes: dict[int, str] = {}

    def measure(self, site: int, basis: str) -> float:
        if site in self.measured_modes:
            raise CVError(
                f"mode {site} already measured in {self.measured_modes[site]!r}"
            )
        q = self._index(site, basis)
        var = float(self.cov[q, q])
        draw = self.rng.normal()
        value = float(self.mean[q]) + math.sqrt(max(var, 0.0)) * draw
        if var > 1e-12:
            col = self.cov[:, q].copy()
            self.mean = self.mean + col * ((value - self.mean[q]) / var)
            self.cov = self.cov - np.outer(col, col) / var
        self.measured_modes[site] = basis
        reported = value + self.noise.meas_sigma * self.rng.normal()
        return reported

    def _index(self, site: int, basis: str) -> int:
        if not (1 <= site <= self.n):
            raise CVError(f"site {site} outside [1, {self.n}]")
        if basis == "x":
            return site - 1
        if basis == "p":
            return self.n + site - 1
        raise CVError(f"unknown CV basis {basis!r}")


# -- nullifier-sampling model (any weighted hypergraph) -------------------------


@dataclass(frozen=True)
class NullifierModel:
    """Honest CV hypergraph state, optionally Weyl-shifted, simulated through
    its nullifier relations rather than a wavefunction.

    Nullifier i's residual is distributed N(shift_i, squeeze_sigma^2) before
    detector noise; x outcomes are uniform on [-x_window, x_window].
    """

    whg: WeightedHypergraph
    shifts: tuple[float, ...]
    noise: NoiseModel

    def __post_init__(self):
        if len(self.shifts) != self.whg.n:
            raise CVError(
                f"shift length {len(self.shifts)} != n = {self.whg.n}"
            )
        object.__setattr__(self, "shifts", tuple(float(s) for s in self.shifts))

    @property
    def n(self) -> int:
        return self.whg.n

    def is_ideal(self) -> bool:
        return all(s == 0.0 for s in self.shifts)

    def session(self, rng) -> "NullifierSession":
        return NullifierSession(self, rng)


def cv_deviation_model(
    whg: WeightedHypergraph, shifts, noise: NoiseModel
) -> NullifierModel:
    """Model of prod_i Z_i(s_i) |G_CV>: nullifier i's residual mean is s_i."""
    return NullifierModel(whg=whg, shifts=tuple(shifts), noise=noise)


class NullifierSession:
    """Sequential homodyne measurement of one NullifierModel register.

    True x values are stashed on first use so that a p outcome and later x
    requests stay mutually consistent; when a p request arrives before some
    of its partners, those partners' true values are drawn immediately in
    ascending site order.
    """

    def __init__(self, model: NullifierModel, rng):
        self.model = model
        self.rng = rng
        self.specs = {s.vertex: s for s in build_nullifiers(model.whg)}
        self.x_true: dict[int, float] = {}
        self.measured_modes: dict[int, str] = {}

    def _true_x(self, site: int) -> float:
        if site not in self.x_true:
            w = self.model.noise.x_window
            self.x_true[site] = float(self.rng.uniform(-w, w))
        return self.x_true[site]

    def measure(self, site: int, basis: str) -> float:
        if not (1 <= site <= self.model.n):
            raise CVError(f"site {site} outside [1, {self.model.n}]")
        if site in self.measured_modes:
            raise CVError(
                f"mode {site} already measured in {self.measured_modes[site]!r}"
            )
        if basis == "x":
            value = self._true_x(site)
        elif basis == "p":
            spec = self.specs[site]
            xvals = {k: self._true_x(k) for k in spec.x_sites}
            value = (
                nullifier_combination(spec, xvals)
                + self.model.shifts[site - 1]
                + self.model.noise.squeeze_sigma * self.rng.normal()
            )
        else:
            raise CVError(f"unknown CV basis {basis!r}")
        self.measured_modes[site] = basis
        return value + self.model.noise.meas_sigma * self.rng.normal()


# -- the test -------------------------------------------------------------------


def run_cv_stabilizer_test(
    state_or_model, spec: NullifierSpec, noise: NoiseModel, tau: float, rng
) -> CVTestOutcome:
    """Measure p on spec.vertex and x on every partner site; pass when the
    nullifier residual of the reported outcomes is within tau.

    tau = 0 is allowed only in symbolic mode (all noise zero), where the
    ideal state's residual is exactly zero.
    """
    if tau < 0:
        raise CVError(f"tolerance tau must be >= 0, got {tau}")
    if tau == 0 and not noise.is_symbolic():
        raise CVError("tau = 0 requires symbolic mode (zero noise)")
    if isinstance(state_or_model, NullifierModel):
        n = state_or_model.n
        session = state_or_model.session(rng)
        measure = session.measure
    elif isinstance(state_or_model, GaussianState):
        n = state_or_model.n
        session = state_or_model.session(noise, rng)
        measure = session.measure
    else:
        raise TypeError(f"unsupported CV state type {type(state_or_model).__name__}")
    if spec.vertex > n or any(k > n for k in spec.x_sites):
        raise CVError("spec references sites outside the state")
    raw: dict[int, tuple[str, float]] = {}
    for site in spec.sites:
        basis = "p" if site == spec.vertex else "x"
        raw[site] = (basis, measure(site, basis))
    xvals = {site: val for site, (b, val) in raw.items() if b == "x"}
    residual = raw[spec.vertex][1] - nullifier_combination(spec, xvals)
    return CVTestOutcome(
        residual=residual, passed=(abs(residual) <= tau), tau=tau, raw=raw
    )


def sample_test_residuals(
    model: NullifierModel, vertex: int, size: int, rng
) -> np.ndarray:
    """Vectorized residual sampler for one nullifier (batch Monte Carlo)."""
    spec = {s.vertex: s for s in build_nullifiers(model.whg)}[vertex]
    noise = model.noise
    xs_true = {
        k: rng.uniform(-noise.x_window, noise.x_window, size) for k in spec.x_sites
    }
    combo_true = np.zeros(size)
    for weight, partners in spec.terms:
        prod = np.ones(size)
        for k in sorted(partners):
            prod = prod * xs_true[k]
        combo_true += weight * prod
    p_true = (
        combo_true
        + model.shifts[vertex - 1]
        + noise.squeeze_sigma * rng.normal(size=size)
    )
    p_rep = p_true + noise.meas_sigma * rng.normal(size=size)
    combo_rep = np.zeros(size)
    xs_rep = {
        k: v + noise.meas_sigma * rng.normal(size=size) for k, v in xs_true.items()
    }
    for weight, partners in spec.terms:
        prod = np.ones(size)
        for k in sorted(partners):
            prod = prod * xs_rep[k]
        combo_rep += weight * prod
    return p_rep - combo_rep


def pass_probability(sigma: float, tau: float) -> float:
    """P(|N(0, sigma^2)| <= tau) = erf(tau / (sigma sqrt(2)))."""
    if sigma == 0:
        return 1.0 if tau >= 0 else 0.0
    return math.erf(tau / (sigma * math.sqrt(2.0)))


def nullifier_residual_moments(
    model: NullifierModel, vertex: int
) -> tuple[float, float]:
    """Analytic (mean, variance) of the sampling-model residual for plain
    weighted graphs (detector noise enters each reported value linearly)."""
    spec = {s.vertex: s for s in build_nullifiers(model.whg)}[vertex]
    for _, partners in spec.terms:
        if len(partners) != 1:
            raise CVError("analytic moments cover plain graphs only")
    noise = model.noise
    mean = model.shifts[vertex - 1]
    var = noise.squeeze_sigma**2 + noise.meas_sigma**2 * (
        1.0 + sum(w * w for w, _ in spec.terms)
    )
    return mean, var


def gaussian_residual_moments(
    state: GaussianState, spec: NullifierSpec, noise: NoiseModel
) -> tuple[float, float]:
    """Analytic (mean, variance) of the residual when testing a Gaussian
    state: covariance algebra over the nullifier coefficient vector."""
    coeff = np.zeros(2 * state.n)
    coeff[state.n + spec.vertex - 1] = 1.0
    meas_noise_sq = 1.0
    for weight, partners in spec.terms:
        if len(partners) != 1:
            raise CVError("Gaussian states cover plain graphs only")
        (k,) = tuple(partners)
        coeff[k - 1] -= weight
        meas_noise_sq += weight * weight
    mean = float(coeff @ state.mean)
    var = float(coeff @ state.cov @ coeff) + noise.meas_sigma**2 * meas_noise_sq
    return mean, var
