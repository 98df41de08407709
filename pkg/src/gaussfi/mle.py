"""Monte-Carlo outcomes of Gaussian measurements, likelihoods and MLE.

Outcome convention: a Gaussian measurement with covariance ``sigma_M`` on
``(d, sigma)`` yields outcomes distributed as

    a ~ N(sqrt(2) P^T d, P^T (sigma + sigma_M) P)

where ``P`` spans the recorded quadratures (the identity unless some modes
are ideal homodyne). Heterodyne on vacuum therefore has outcome variance 2
per quadrature, and the Fisher information of this density is exactly
``2 d_dot^T G d_dot + 1/2 Tr[(G sigma_dot)^2]``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize

from .errors import DimensionError, GaussFIError, PreconditionError
from .fisher import fi_gaussian, lon_strategy_measurement, optimize_single_mode, qfi
from .gaussian import GaussianMeasurement, GaussianState, build_lon, homodyne, measurement_sum, n_copies
from .models import ModelConfig, ParametricModel

__all__ = [
    "OutcomeBatch",
    "MleEstimate",
    "MleRunResult",
    "Strategy",
    "outcome_moments",
    "sample_outcomes",
    "gaussian_loglike",
    "loglike_squeezing_global",
    "score_squeezing_global",
    "mle_estimate",
    "build_strategy",
    "monte_carlo_mse",
    "mse_sweep",
    "observed_information",
    "write_trials_csv",
    "write_summary_json",
    "default_workers",
]

STRATEGIES = ("local", "global")
THREADS_ENV = "GAUSSFI_THREADS"


@dataclass(frozen=True, eq=False)
class OutcomeBatch:
    """``nu`` repetitions of one measurement round.

    Attributes:
        x: ``nu x n`` outcomes; row ``k`` holds all recorded quadratures of round ``k``.
        strategy: ``"local"``, ``"global"`` or ``"single"``.
        seed: seed the batch was drawn with.
        theta_true: parameter value used to simulate.
    """

    x: np.ndarray
    strategy: str = "single"
    seed: int | None = None
    theta_true: float = float("nan")

    @property
    def nu(self) -> int:
        return self.x.shape[0]


class MleEstimate(NamedTuple):
    value: float
    at_boundary: bool


@dataclass(frozen=True, eq=False)
class MleRunResult:
    """Outcome of repeated simulate-and-estimate cycles."""

    estimates: np.ndarray
    mse: float
    crb: float
    qcrb: float
    trials: int
    nu: int
    m: int
    strategy: str
    seed: int
    theta_true: float
    fisher: float
    boundary_hits: int = 0

    @property
    def square_errors(self) -> np.ndarray:
        return (self.estimates - self.theta_true) ** 2

    @property
    def mse_stderr(self) -> float:
        """Standard error of the MSE from the spread of the squared errors."""
        if self.trials < 2:
            return float("nan")
        return float(np.std(self.square_errors, ddof=1) / math.sqrt(self.trials))

    def summary(self) -> dict:
        return {
            "nu": self.nu,
            "m": self.m,
            "strategy": self.strategy,
            "mse": self.mse,
            "crb": self.crb,
            "qcrb": self.qcrb,
            "trials": self.trials,
            "seed": self.seed,
            "theta_true": self.theta_true,
            "fisher": self.fisher,
            "mse_over_crb": self.mse / self.crb,
            "mse_stderr": self.mse_stderr,
            "boundary_hits": self.boundary_hits,
        }


def outcome_moments(state: GaussianState, meas: GaussianMeasurement) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the recorded outcomes."""
    if state.sigma.shape != meas.sigma_m.shape:
        raise DimensionError(f"state has {state.n_modes} modes but the measurement has {meas.n_modes}")
    P = meas.measured_basis()
    mean = math.sqrt(2.0) * (P.T @ state.d)
    cov = P.T @ (state.sigma + meas.sigma_m) @ P
    return mean, 0.5 * (cov + cov.T)


def _cov_root(cov: np.ndarray) -> np.ndarray:
    # spectral root handles rank-deficient covariances
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0.0, None))


def _draw(mean: np.ndarray, root: np.ndarray, nu: int, rng: np.random.Generator) -> np.ndarray:
    return mean + rng.standard_normal((nu, mean.size)) @ root.T


def sample_outcomes(
    state: GaussianState | ParametricModel, meas: GaussianMeasurement, nu: int, seed: int | None = None
) -> OutcomeBatch:
    """Draw ``nu`` outcome vectors of ``meas`` on ``state``.

    Args:
        state: the state, or a model evaluated at its working point.
        meas: measurement acting on all modes of the state.
        nu: number of repetitions.
        seed: integer seed; equal seeds give identical batches.

    Returns:
        OutcomeBatch with ``x`` of shape ``(nu, n_recorded)``.
    """
    theta = float("nan")
    if isinstance(state, ParametricModel):
        theta = state.theta0
        state = state.state
    if int(nu) != nu or nu < 1:
        raise DimensionError(f"nu must be a positive integer, got {nu!r}")
    mean, cov = outcome_moments(state, meas)
    x = _draw(mean, _cov_root(cov), int(nu), np.random.default_rng(seed))
    return OutcomeBatch(x, "single", seed, theta)


def _stats(x: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    return x.shape[0], x.sum(axis=0), x.T @ x


def gaussian_loglike(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log-likelihood of the rows of ``x`` under ``N(mean, cov)``, without the ``2 pi`` constant."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != mean.size:
        raise DimensionError(f"outcomes have {x.shape[1]} columns, expected {mean.size}")
    nu = x.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return -np.inf
    r = x - mean
    quad = np.einsum("ij,ij->", r, np.linalg.solve(cov, r.T).T)
    return float(-0.5 * quad - 0.5 * nu * logdet)


def _squeezing_stats(x, m: int):
    x = np.asarray(x.x if isinstance(x, OutcomeBatch) else x, dtype=float)
    if x.ndim != 2 or x.shape[1] != m:
        raise DimensionError(f"expected a nu x {m} outcome array, got shape {x.shape}")
    nu = x.shape[0]
    s_q = float(np.sum(x[:, :-1] ** 2))
    last = x[:, -1]
    return nu, s_q, float(last.sum()), float(last @ last)


def loglike_squeezing_global(x, r, alpha: float, m: int):
    """Log-likelihood of the squeezing parameter for the LON strategy on ``m`` copies.

    Columns ``0 .. m-2`` hold the ``q`` records of the dark outputs and the
    last column the ``(q - p)/sqrt(2)`` record of the bright output. Terms
    independent of ``r`` are dropped.

    Args:
        x: ``nu x m`` outcomes or an OutcomeBatch.
        r: squeezing value(s); arrays are evaluated elementwise.
        alpha: coherent amplitude of the probe.
        m: number of copies.

    Returns:
        Log-likelihood with the same shape as ``r``.
    """
    nu, s_q, s1, s2 = _squeezing_stats(x, m)
    r = np.asarray(r, dtype=float)
    c = math.sqrt(m) * alpha * (np.exp(r) - np.exp(-r))
    resid = nu * c**2 - 2.0 * c * s1 + s2
    out = (
        -s_q / (2.0 * np.exp(2.0 * r))
        - resid / (np.exp(2.0 * r) + np.exp(-2.0 * r))
        - nu * (m - 1) * r
        - 0.5 * nu * np.log(2.0 * np.cosh(2.0 * r))
    )
    return out if out.ndim else float(out)


def score_squeezing_global(x, r, alpha: float, m: int):
    """Derivative of :func:`loglike_squeezing_global` with respect to ``r``."""
    nu, s_q, s1, s2 = _squeezing_stats(x, m)
    r = np.asarray(r, dtype=float)
    c = math.sqrt(m) * alpha * (np.exp(r) - np.exp(-r))
    dc = math.sqrt(m) * alpha * (np.exp(r) + np.exp(-r))
    resid = nu * c**2 - 2.0 * c * s1 + s2
    dresid = (2.0 * nu * c - 2.0 * s1) * dc
    den = 2.0 * np.cosh(2.0 * r)
    dden = 4.0 * np.sinh(2.0 * r)
    out = (
        s_q * np.exp(-2.0 * r)
        - (dresid * den - resid * dden) / den**2
        - nu * (m - 1)
        - nu * np.tanh(2.0 * r)
    )
    return out if out.ndim else float(out)


def mle_estimate(
    loglike: Callable[[float], float],
    search_interval: tuple[float, float] = (-1.0, 1.0),
    n_scan: int = 200,
    xtol: float = 1e-8,
    vectorized: bool = False,
) -> MleEstimate:
    """Maximise a one-parameter log-likelihood.

    A uniform scan of ``n_scan`` points locates the best bracket, then
    Brent's bounded method (golden section with parabolic steps) refines
    it to ``xtol``.

    Args:
        loglike: map ``theta -> log-likelihood``.
        search_interval: ``(lo, hi)``.
        n_scan: number of scan points.
        xtol: absolute tolerance on the estimate.
        vectorized: ``loglike`` accepts an array of parameter values.

    Returns:
        MleEstimate; ``at_boundary`` flags a maximum at an interval end.
    """
    lo, hi = map(float, search_interval)
    if not lo < hi:
        raise PreconditionError(f"search interval must satisfy lo < hi, got {search_interval}")
    grid = np.linspace(lo, hi, n_scan)
    if vectorized:
        vals = np.asarray(loglike(grid), dtype=float)
    else:
        vals = np.array([loglike(t) for t in grid], dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)]
    res = optimize.minimize_scalar(
        lambda t: -float(loglike(t)), bounds=(a, b), method="bounded", options={"xatol": xtol}
    )
    value = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    at_boundary = min(value - lo, hi - value) <= 10 * xtol
    return MleEstimate(value, bool(at_boundary))


@dataclass(frozen=True, eq=False)
class Strategy:
    """Measurement strategy on ``m`` copies of a model.

    Attributes:
        kind: ``"local"`` or ``"global"``.
        m: number of copies per round.
        measurement: measurement on all ``m`` copies (after the network for ``global``).
        S: symplectic applied to the ``m`` copies before measuring.
        closed_form_alpha: set for the squeezing model with its standard
            measurements, enabling the closed-form likelihood.
    """

    kind: str
    m: int
    measurement: GaussianMeasurement
    S: np.ndarray
    closed_form_alpha: float | None = None

    def state(self, base: ParametricModel, theta: float) -> GaussianState:
        many = n_copies(base.state_at(theta), self.m)
        return GaussianState(self.S @ many.d, self.S @ many.sigma @ self.S.T)

    def fisher(self, base: ParametricModel, theta: float) -> float:
        model = base.at(theta).copies(self.m).transformed(self.S)
        return fi_gaussian(model, self.measurement).total


def build_strategy(design: ParametricModel, kind: str, m: int) -> Strategy:
    """Fix the measurements of a strategy at the design point ``design.theta0``.

    ``local`` measures every copy with the single-copy optimum; ``global``
    runs the displacement-concentrating network and measures the dark
    outputs with the covariance-optimal and the bright output with the
    displacement-optimal single-mode measurement. For the squeezing model
    the measurements are the ``q`` record on dark outputs and the
    ``(q - p)/sqrt(2)`` record on bright ones.
    """
    if kind not in STRATEGIES:
        raise PreconditionError(f"strategy must be one of {STRATEGIES}, got {kind!r}")
    if int(m) != m or m < 1:
        raise DimensionError(f"m must be a positive integer, got {m!r}")
    m = int(m)
    k = design.n_modes
    squeezing = design.name == "squeeze-coherent" and design.theta0 == 0.0
    alpha = design.params.get("alpha") if squeezing else None
    if squeezing:
        meas_d, meas_sigma = homodyne(np.pi / 4), homodyne(np.pi / 2)
        meas_opt = meas_d
    else:
        meas_opt = optimize_single_mode(design).measurement
        meas_d = optimize_single_mode(design, "d").measurement
        meas_sigma = optimize_single_mode(design, "sigma").measurement
    if kind == "local" or m == 1:
        return Strategy(kind, m, measurement_sum(*([meas_opt] * m)), np.eye(2 * k * m), alpha)
    lon = build_lon(m, k)
    return Strategy(kind, m, lon_strategy_measurement(m, meas_d, meas_sigma), lon.S_lon, alpha)


def default_workers() -> int:
    """Thread count from ``GAUSSFI_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _trial_rng(seed: int, nu: int, trial: int) -> np.random.Generator:
    # one independent stream per (seed, nu, trial), so results ignore scheduling
    return np.random.default_rng([int(seed), int(nu), int(trial)])


def monte_carlo_mse(
    config: ModelConfig | ParametricModel,
    strategy: str = "global",
    m: int = 2,
    nu: int = 10,
    trials: int = 1000,
    seed: int = 0,
    theta_true: float | None = None,
    search_interval: tuple[float, float] | None = None,
    workers: int | None = None,
) -> MleRunResult:
    """Mean squared error of the MLE over independent simulated experiments.

    Each trial draws ``nu`` rounds of the strategy on ``m`` copies at
    ``theta_true`` and maximises the likelihood. Measurements are fixed at
    the model's working point.

    Args:
        config: model configuration or an already built model (design point).
        strategy: ``"local"`` or ``"global"``.
        m: copies per round.
        nu: rounds per experiment.
        trials: number of simulated experiments.
        seed: master seed.
        theta_true: true parameter, defaults to the design point.
        search_interval: MLE search range, defaults to ``theta_true +/- 1``.
        workers: threads; defaults to ``GAUSSFI_THREADS``.

    Returns:
        MleRunResult with ``crb = 1/(nu F)`` for the strategy at ``theta_true``
        and ``qcrb = 1/(nu m F_Q)``.
    """
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    if int(nu) != nu or nu < 1:
        raise DimensionError(f"nu must be a positive integer, got {nu!r}")
    nu = int(nu)
    design = config.build() if isinstance(config, ModelConfig) else config
    theta_true = design.theta0 if theta_true is None else float(theta_true)
    if search_interval is None:
        search_interval = (theta_true - 1.0, theta_true + 1.0)
    strat = build_strategy(design, strategy, m)
    truth = strat.state(design, theta_true)
    mean, cov = outcome_moments(truth, strat.measurement)
    root = _cov_root(cov)

    if strat.closed_form_alpha is not None:
        alpha = strat.closed_form_alpha
        cols = m if strat.kind == "global" else 1

        def estimate(x):
            x = x.reshape(-1, cols)
            return mle_estimate(
                lambda r: loglike_squeezing_global(x, r, alpha, cols), search_interval, vectorized=True
            )

    else:
        P = strat.measurement.measured_basis()

        def loglike_at(x, theta):
            try:
                st = strat.state(design, theta)
            except GaussFIError:
                return -np.inf
            mu = math.sqrt(2.0) * (P.T @ st.d)
            return gaussian_loglike(x, mu, P.T @ (st.sigma + strat.measurement.sigma_m) @ P)

        def estimate(x):
            return mle_estimate(lambda t: loglike_at(x, t), search_interval)

    def run(trial: int) -> MleEstimate:
        return estimate(_draw(mean, root, nu, _trial_rng(seed, nu, trial)))

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        results = [run(t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(trials)))

    estimates = np.array([r.value for r in results])
    mse = math.fsum((estimates - theta_true) ** 2) / trials
    fisher = strat.fisher(design, theta_true)
    q = qfi(design.at(theta_true))
    return MleRunResult(
        estimates=estimates,
        mse=mse,
        crb=1.0 / (nu * fisher),
        qcrb=1.0 / (nu * m * q),
        trials=int(trials),
        nu=nu,
        m=int(m),
        strategy=strategy,
        seed=int(seed),
        theta_true=theta_true,
        fisher=fisher,
        boundary_hits=sum(r.at_boundary for r in results),
    )


def mse_sweep(config, strategy: str, m: int, nus, trials: int, seed: int = 0, **kwargs) -> list[MleRunResult]:
    """:func:`monte_carlo_mse` over a list of repetition counts."""
    return [monte_carlo_mse(config, strategy, m, nu, trials, seed, **kwargs) for nu in nus]


def observed_information(
    model: ParametricModel, meas: GaussianMeasurement, n_samples: int = 100_000, seed: int | None = 0
) -> tuple[float, float]:
    """Monte-Carlo mean of the squared score at the working point.

    Returns:
        ``(estimate, standard_error)`` of the Fisher information.
    """
    mean, cov = outcome_moments(model.state, meas)
    P = meas.measured_basis()
    mu_dot = math.sqrt(2.0) * (P.T @ model.d_dot)
    cov_dot = P.T @ model.sigma_dot @ P
    rng = np.random.default_rng(seed)
    r = _draw(mean, _cov_root(cov), int(n_samples), rng) - mean
    cinv = np.linalg.inv(cov)
    a = cinv @ cov_dot @ cinv
    score = r @ (cinv @ mu_dot) + 0.5 * np.einsum("ij,jk,ik->i", r, a, r) - 0.5 * np.trace(cinv @ cov_dot)
    sq = score**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size))


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_trials_csv(result: MleRunResult, path: str | Path) -> None:
    """Per-trial estimates: ``trial_index, estimate, square_error``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_index", "estimate", "square_error"])
        for i, (e, s) in enumerate(zip(result.estimates, result.square_errors)):
            w.writerow([i, _fmt(e), _fmt(s)])


def write_summary_json(results: MleRunResult | list[MleRunResult], path: str | Path) -> None:
    items = [results] if isinstance(results, MleRunResult) else list(results)
    payload = {"schema_version": 1, "runs": [r.summary() for r in items]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
