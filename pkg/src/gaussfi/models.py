"""Parametric Gaussian models, built-in model registry and model configuration files.

A model is a family ``theta -> GaussianState`` evaluated at a working point
``theta0`` together with the derivatives of the moments there.

Configuration files are JSON objects with exactly these keys::

    {"model": "squeeze-coherent", "params": {"alpha": 1.4142}, "theta0": 0.0, "copies": 2}

``params``, ``theta0`` and ``copies`` are optional. Unknown keys, unknown
parameters and wrongly typed values raise :class:`ConfigError`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, GaussFIError, PreconditionError
from .gaussian import (
    GaussianState,
    LonNetwork,
    apply_symplectic,
    loss_channel,
    n_copies,
    squeeze_channel,
)

__all__ = [
    "ParametricModel",
    "model_derivatives",
    "finite_difference_derivatives",
    "squeeze_coherent_model",
    "loss_thermal_model",
    "custom_model",
    "REGISTRY",
    "ModelConfig",
    "load_model_config",
    "parse_model_config",
]

StateFamily = Callable[[float], GaussianState]
DerivativeFn = Callable[[float], tuple[np.ndarray, np.ndarray]]

FD_STEP = 1e-5


def _central(f: StateFamily, theta0: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    plus, minus = f(theta0 + h), f(theta0 - h)
    return (plus.d - minus.d) / (2 * h), (plus.sigma - minus.sigma) / (2 * h)


def _one_sided(f: StateFamily, theta0: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    # second-order three-point stencil; h < 0 gives the backward variant
    s0, s1, s2 = f(theta0), f(theta0 + h), f(theta0 + 2 * h)
    d = (-3 * s0.d + 4 * s1.d - s2.d) / (2 * h)
    sig = (-3 * s0.sigma + 4 * s1.sigma - s2.sigma) / (2 * h)
    return d, sig


def finite_difference_derivatives(
    state_at: StateFamily, theta0: float, h: float = FD_STEP
) -> tuple[np.ndarray, np.ndarray]:
    """Moment derivatives by differences at ``h`` and ``h/2`` plus one Richardson step.

    Falls back to a one-sided stencil (with a warning) when the family cannot
    be evaluated on one side of ``theta0``.
    """
    try:
        d1, s1 = _central(state_at, theta0, h)
        d2, s2 = _central(state_at, theta0, h / 2)
    except GaussFIError:
        for sign in (+1.0, -1.0):
            try:
                d1, s1 = _one_sided(state_at, theta0, sign * h)
                d2, s2 = _one_sided(state_at, theta0, sign * h / 2)
            except GaussFIError:
                continue
            warnings.warn(
                f"theta0 = {theta0} is at the domain boundary; using one-sided differences",
                stacklevel=2,
            )
            break
        else:
            raise PreconditionError(f"model cannot be evaluated around theta0 = {theta0}")
    return (4 * d2 - d1) / 3, (4 * s2 - s1) / 3


@dataclass(frozen=True, eq=False)
class ParametricModel:
    """A one-parameter Gaussian family at a working point.

    Attributes:
        state_at: map ``theta -> GaussianState``.
        theta0: working point.
        derivative: optional analytic closure ``theta -> (d_dot, sigma_dot)``;
            without it the derivatives come from finite differences.
        name: registry name or ``"custom"``.
        params: parameters the model was built from (for reports).
    """

    state_at: StateFamily
    theta0: float = 0.0
    derivative: DerivativeFn | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        state = self.state_at(self.theta0)
        if self.derivative is not None:
            d_dot, sigma_dot = self.derivative(self.theta0)
        else:
            d_dot, sigma_dot = finite_difference_derivatives(self.state_at, self.theta0)
        d_dot = np.asarray(d_dot, dtype=float).reshape(-1)
        sigma_dot = np.asarray(sigma_dot, dtype=float)
        if d_dot.shape != state.d.shape or sigma_dot.shape != state.sigma.shape:
            raise DimensionError("derivative shapes do not match the state")
        object.__setattr__(self, "_state", state)
        object.__setattr__(self, "_d_dot", d_dot)
        object.__setattr__(self, "_sigma_dot", 0.5 * (sigma_dot + sigma_dot.T))

    @property
    def state(self) -> GaussianState:
        return self._state

    @property
    def d_dot(self) -> np.ndarray:
        return self._d_dot

    @property
    def sigma_dot(self) -> np.ndarray:
        return self._sigma_dot

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self.derivative is not None else "finite-difference"

    @property
    def n_modes(self) -> int:
        return self.state.n_modes

    def at(self, theta: float) -> "ParametricModel":
        """Same family, new working point."""
        return ParametricModel(self.state_at, theta, self.derivative, self.name, dict(self.params))

    def copies(self, m: int) -> "ParametricModel":
        """``m`` independent copies of the model."""
        m = int(m)
        f, g = self.state_at, self.derivative

        def state_at(theta):
            return n_copies(f(theta), m)

        deriv = None
        if g is not None:

            def deriv(theta):
                dd, sd = g(theta)
                return np.tile(dd, m), np.kron(np.eye(m), sd)

        return ParametricModel(state_at, self.theta0, deriv, f"{self.name}^{m}", dict(self.params))

    def transformed(self, S: np.ndarray | LonNetwork) -> "ParametricModel":
        """Model after a parameter-independent symplectic transformation."""
        S = S.S_lon if isinstance(S, LonNetwork) else np.asarray(S, dtype=float)
        f, g = self.state_at, self.derivative

        def state_at(theta):
            return apply_symplectic(f(theta), S)

        deriv = None
        if g is not None:

            def deriv(theta):
                dd, sd = g(theta)
                return S @ dd, S @ sd @ S.T

        return ParametricModel(state_at, self.theta0, deriv, self.name, dict(self.params))

    @classmethod
    def linear(cls, d, sigma, d_dot, sigma_dot, theta0: float = 0.0, name: str = "custom") -> "ParametricModel":
        """First-order family ``theta -> (d + t d_dot, sigma + t sigma_dot)``, ``t = theta - theta0``."""
        d, sigma = np.asarray(d, float), np.asarray(sigma, float)
        d_dot, sigma_dot = np.asarray(d_dot, float), np.asarray(sigma_dot, float)

        def state_at(theta):
            t = theta - theta0
            return GaussianState(d + t * d_dot, sigma + t * sigma_dot)

        return cls(state_at, theta0, lambda theta: (d_dot, sigma_dot), name)


def model_derivatives(model: ParametricModel) -> tuple[np.ndarray, np.ndarray]:
    """``(d_dot, sigma_dot)`` at the working point (analytic when registered)."""
    return model.d_dot, model.sigma_dot


def squeeze_coherent_model(alpha: float = math.sqrt(2.0), r0: float = 0.0) -> ParametricModel:
    """Squeezing ``r`` applied to the coherent probe ``d = (alpha, alpha)``."""
    probe = GaussianState(np.array([alpha, alpha]), np.eye(2))

    def state_at(r):
        return squeeze_channel(probe, r)

    def deriv(r):
        Z = np.diag([np.exp(r), np.exp(-r)])
        Zp = np.diag([np.exp(r), -np.exp(-r)])
        return Zp @ probe.d, Zp @ probe.sigma @ Z + Z @ probe.sigma @ Zp

    return ParametricModel(state_at, r0, deriv, "squeeze-coherent", {"alpha": alpha})


def loss_thermal_model(
    sigma_x: float = 2.0, d_p: float = 1.0, mu: float = 1.0, tau0: float = 1.0
) -> ParametricModel:
    """Transmissivity ``tau`` of a thermal loss channel.

    Probe ``d = (0, d_p)``, ``sigma = diag(sigma_x, mu)``; the environment is
    thermal with the same ``mu``.
    """
    probe = GaussianState(np.array([0.0, d_p]), np.diag([sigma_x, mu]))

    def state_at(tau):
        return loss_channel(probe, tau, mu)

    def deriv(tau):
        if tau <= 0:
            raise DomainError("displacement derivative diverges at tau = 0")
        return probe.d / (2 * np.sqrt(tau)), probe.sigma - mu * np.eye(2)

    return ParametricModel(
        state_at, tau0, deriv, "loss-thermal", {"sigma_x": sigma_x, "d_p": d_p, "mu": mu}
    )


def _grid_model(theta, d, sigma, theta0) -> ParametricModel:
    theta = np.asarray(theta, float)
    d = np.asarray(d, float)
    sigma = np.asarray(sigma, float)
    if not (theta.ndim == 1 and d.shape[0] == theta.size and sigma.shape[0] == theta.size):
        raise ConfigError("grid arrays must share their first dimension")
    if np.any(np.diff(theta) <= 0):
        raise ConfigError("grid theta values must be strictly increasing")
    hits = np.flatnonzero(np.isclose(theta, theta0, rtol=0, atol=1e-12))
    if hits.size != 1:
        raise ConfigError("theta0 must coincide with a grid node")
    i = int(hits[0])
    if 0 < i < theta.size - 1:
        h0, h1 = theta[i] - theta[i - 1], theta[i + 1] - theta[i]
        w = np.array([-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1))])
        idx = [i - 1, i, i + 1]
    elif theta.size >= 2:
        warnings.warn("theta0 is a grid end point; using a one-sided difference", stacklevel=3)
        j = i + 1 if i == 0 else i - 1
        w = np.array([-1.0, 1.0]) / (theta[j] - theta[i])
        idx = [i, j]
    else:
        raise ConfigError("a grid needs at least two nodes")
    d_dot = np.tensordot(w, d[idx], axes=1)
    sigma_dot = np.tensordot(w, sigma[idx], axes=1)
    return ParametricModel.linear(d[i], sigma[i], d_dot, sigma_dot, float(theta0))


def custom_model(params: dict, theta0: float = 0.0) -> ParametricModel:
    """Model given either explicitly at ``theta0`` or on a tabulated grid.

    Explicit form: ``d``, ``sigma``, ``d_dot``, ``sigma_dot``.
    Grid form: ``grid = {"theta": [...], "d": [[...]], "sigma": [[[...]]]}``;
    derivatives use the three-point stencil at the node ``theta0``.
    """
    if "grid" in params:
        extra = set(params) - {"grid"}
        if extra:
            raise ConfigError(f"unexpected custom-model parameters with grid: {sorted(extra)}")
        grid = params["grid"]
        if not isinstance(grid, dict) or set(grid) != {"theta", "d", "sigma"}:
            raise ConfigError("grid must have exactly the keys theta, d, sigma")
        model = _grid_model(grid["theta"], grid["d"], grid["sigma"], theta0)
    else:
        required = {"d", "sigma", "d_dot", "sigma_dot"}
        if set(params) != required:
            raise ConfigError(f"custom model needs exactly {sorted(required)} (or grid)")
        model = ParametricModel.linear(
            params["d"], params["sigma"], params["d_dot"], params["sigma_dot"], theta0
        )
    object.__setattr__(model, "params", dict(params))
    return model


@dataclass(frozen=True)
class RegistryEntry:
    factory: Callable[..., ParametricModel]
    defaults: dict[str, Any]
    theta_name: str
    theta0: float
    # closed-form values published for this configuration, kept for comparison
    reference_values: dict[str, Any] = field(default_factory=dict)
    # default true parameter for Monte-Carlo runs (measurements stay fixed at theta0)
    mc_theta_true: float | None = None


REGISTRY: dict[str, RegistryEntry] = {
    "squeeze-coherent": RegistryEntry(
        factory=lambda alpha, theta0: squeeze_coherent_model(alpha, theta0),
        defaults={"alpha": math.sqrt(2.0)},
        theta_name="r",
        theta0=0.0,
        mc_theta_true=0.1,
    ),
    "loss-thermal": RegistryEntry(
        factory=lambda sigma_x, d_p, mu, theta0: loss_thermal_model(sigma_x, d_p, mu, theta0),
        defaults={"sigma_x": 2.0, "d_p": 1.0, "mu": 1.0},
        theta_name="tau",
        theta0=1.0,
        reference_values={
            "fi_d_opt": 0.25,
            "fi_sigma_opt": 0.125,
            "qfi": 0.25 + 1.0 / 6.0,
            "global_fi": "m/4 + (m-1)/8",
        },
    ),
    "custom": RegistryEntry(factory=custom_model, defaults={}, theta_name="theta", theta0=0.0),
}


@dataclass(frozen=True)
class ModelConfig:
    model: str
    params: dict
    theta0: float
    copies: int

    def build(self) -> ParametricModel:
        entry = REGISTRY[self.model]
        if self.model == "custom":
            return custom_model(self.params, self.theta0)
        return entry.factory(theta0=self.theta0, **self.params)

    def to_dict(self) -> dict:
        return {"model": self.model, "params": self.params, "theta0": self.theta0, "copies": self.copies}


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{what} must be finite")
    return float(value)


def parse_model_config(raw: dict, overrides: dict[str, Any] | None = None) -> ModelConfig:
    """Validate a configuration mapping; ``overrides`` replace ``params`` / top-level values."""
    if not isinstance(raw, dict):
        raise ConfigError("model configuration must be a JSON object")
    unknown = set(raw) - {"model", "params", "theta0", "copies"}
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError("configuration needs a 'model' key")
    name = raw["model"]
    if name not in REGISTRY:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(REGISTRY)}")
    entry = REGISTRY[name]
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("'params' must be an object")
    params = dict(params)
    theta0 = raw.get("theta0", entry.theta0)
    copies = raw.get("copies", 1)

    for key, value in (overrides or {}).items():
        if key in ("theta0", entry.theta_name + "0"):
            theta0 = value
        elif key in ("copies", "m"):
            copies = value
        else:
            params[key] = value

    if name != "custom":
        unknown = set(params) - set(entry.defaults)
        if unknown:
            raise ConfigError(f"unknown parameters for {name}: {sorted(unknown)}")
        params = {k: _number(params.get(k, v), k) for k, v in entry.defaults.items()}
    theta0 = _number(theta0, "theta0")
    if isinstance(copies, bool) or not isinstance(copies, int) or copies < 1:
        if isinstance(copies, float) and copies.is_integer() and copies >= 1:
            copies = int(copies)
        else:
            raise ConfigError(f"copies must be a positive integer, got {copies!r}")
    return ModelConfig(name, params, theta0, copies)


def load_model_config(source: str | Path | dict, overrides: dict[str, Any] | None = None) -> ModelConfig:
    """Read a configuration from a mapping, a JSON file, or a bare registry name."""
    if isinstance(source, dict):
        return parse_model_config(source, overrides)
    source = str(source)
    if source in REGISTRY:
        return parse_model_config({"model": source}, overrides)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"{source!r} is neither a registered model nor a file")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_model_config(raw, overrides)
