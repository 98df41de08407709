"""Fisher information of Gaussian measurements and quantum Fisher information.

For a measurement with covariance ``sigma_M`` on a state ``(d, sigma)``::

    F_d     = 2 d_dot^T (sigma + sigma_M)^{-1} d_dot
    F_sigma = 1/2 Tr[((sigma + sigma_M)^{-1} sigma_dot)^2]

Ideal homodyne modes enter through the exact zero-noise limit of the
inverse, ``P (P^T (sigma + sigma_M) P)^{-1} P^T`` with ``P`` spanning the
recorded quadratures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .errors import DimensionError, ModelSingularityError, NumericalRankError, PreconditionError
from .gaussian import (
    GaussianMeasurement,
    build_lon,
    homodyne,
    measurement_from_squeeze_angle,
    measurement_sum,
)
from .models import ParametricModel
from .symplectic import symplectic_form, takagi_diagonalize, williamson

__all__ = [
    "FiBreakdown",
    "SearchGrid",
    "Optimum",
    "IsothermalOptimum",
    "StrategyReport",
    "AdditivityReport",
    "fi_gaussian",
    "fi_from_moments",
    "limit_inverse",
    "qfi",
    "qfi_terms",
    "optimize_single_mode",
    "best_homodyne",
    "optimal_displacement_measurement",
    "optimal_local_isothermal",
    "sum_of_maxima_bound",
    "global_strategy_fi",
    "additivity_check",
]

TERMS = ("total", "d", "sigma")


@dataclass(frozen=True)
class FiBreakdown:
    """Displacement and covariance contributions to the Fisher information."""

    f_d: float
    f_sigma: float

    @property
    def total(self) -> float:
        return self.f_d + self.f_sigma

    def term(self, which: str) -> float:
        return {"total": self.total, "d": self.f_d, "sigma": self.f_sigma}[which]

    def to_dict(self) -> dict:
        return {"f_d": self.f_d, "f_sigma": self.f_sigma, "total": self.total}


def limit_inverse(sigma: np.ndarray, meas: GaussianMeasurement, rcond: float = 1e-13) -> np.ndarray:
    """``(sigma + sigma_M)^{-1}``, or its zero-noise limit for ideal homodyne directions."""
    if sigma.shape != meas.sigma_m.shape:
        raise DimensionError(
            f"state has {sigma.shape[0] // 2} modes but the measurement has {meas.n_modes}"
        )
    P = meas.measured_basis()
    if P.shape[1] == 0:
        return np.zeros_like(sigma)
    C = P.T @ (sigma + meas.sigma_m) @ P
    if np.linalg.cond(C) > 1.0 / rcond:
        raise NumericalRankError("sigma + sigma_M is numerically singular on the measured quadratures")
    return P @ np.linalg.solve(C, P.T)


def fi_from_moments(d_dot, sigma, sigma_dot, meas: GaussianMeasurement) -> FiBreakdown:
    G = limit_inverse(np.asarray(sigma, float), meas)
    d_dot = np.asarray(d_dot, float)
    f_d = 2.0 * float(d_dot @ G @ d_dot)
    GS = G @ np.asarray(sigma_dot, float)
    f_sigma = 0.5 * float(np.trace(GS @ GS))
    return FiBreakdown(f_d, f_sigma)


def fi_gaussian(model: ParametricModel, meas: GaussianMeasurement) -> FiBreakdown:
    """Fisher information of the Gaussian measurement ``meas`` on ``model``."""
    return fi_from_moments(model.d_dot, model.state.sigma, model.sigma_dot, meas)


def qfi_terms(model: ParametricModel, rcond: float = 1e-10, range_tol: float = 1e-8) -> FiBreakdown:
    """Displacement and covariance parts of the quantum Fisher information.

    The covariance part is ``1/2 <<s|(sigma ⊗ sigma - Omega ⊗ Omega)^+|s>>``
    with column-stacked ``s = sigma_dot``. For pure states the operator is
    singular; its pseudoinverse is used after checking that ``s`` lies in
    its range.

    Raises:
        ModelSingularityError: ``sigma_dot`` leaves the range of the operator.
    """
    sigma, d_dot, sigma_dot = model.state.sigma, model.d_dot, model.sigma_dot
    omega = symplectic_form(model.n_modes)
    disp = 2.0 * float(d_dot @ np.linalg.solve(sigma, d_dot))
    M = np.kron(sigma, sigma) - np.kron(omega, omega)
    v = sigma_dot.reshape(-1, order="F")
    M_pinv = np.linalg.pinv(M, rcond=rcond, hermitian=True)
    residual = np.linalg.norm(v - M @ (M_pinv @ v))
    if residual > range_tol * max(1.0, np.linalg.norm(v)):
        raise ModelSingularityError(
            f"sigma_dot is outside the range of sigma⊗sigma - Omega⊗Omega (residual {residual:.3e}); "
            "the quantum Fisher information diverges"
        )
    cov = 0.5 * float(v @ M_pinv @ v)
    return FiBreakdown(disp, cov)


def qfi(model: ParametricModel) -> float:
    """Quantum Fisher information of a Gaussian model."""
    return qfi_terms(model).total


@dataclass(frozen=True)
class SearchGrid:
    """Grid densities for the single-mode measurement search."""

    n_s: int = 64
    s_max: float = 10.0
    s_min: float = 1e-3
    n_xi: int = 128
    n_homodyne: int = 256
    s_cap: float = 12.0


class Optimum(NamedTuple):
    measurement: GaussianMeasurement
    fi: FiBreakdown


def _single_mode_arrays(model: ParametricModel):
    if model.n_modes != 1:
        raise DimensionError("single-mode search needs a one-mode model")
    return model.d_dot, model.state.sigma, model.sigma_dot


def _finite_values(s, xi, d_dot, sigma, sigma_dot, term):
    # Work in the eigenframe of sigma_M = R diag(L, 1/L) R^T, R = rotation(xi/2),
    # where det(sigma + sigma_M) expands into positive terms for any L.
    s, xi = np.broadcast_arrays(np.asarray(s, float), np.asarray(xi, float))
    L = np.exp(2 * s)
    c, sn = np.cos(xi / 2), np.sin(xi / 2)

    def rot(mat):
        a = c * c * mat[0, 0] + 2 * c * sn * mat[0, 1] + sn * sn * mat[1, 1]
        e = sn * sn * mat[0, 0] - 2 * c * sn * mat[0, 1] + c * c * mat[1, 1]
        b = (c * c - sn * sn) * mat[0, 1] + c * sn * (mat[1, 1] - mat[0, 0])
        return a, b, e

    a, b, e = rot(sigma)
    sa, sb, se = rot(sigma_dot)
    d0 = c * d_dot[0] + sn * d_dot[1]
    d1 = -sn * d_dot[0] + c * d_dot[1]
    det = (a * e - b * b) + a / L + L * e + 1.0
    g00, g01, g11 = (e + 1.0 / L) / det, -b / det, (a + L) / det
    f_d = 2 * (g00 * d0 * d0 + 2 * g01 * d0 * d1 + g11 * d1 * d1)
    m00 = g00 * sa + g01 * sb
    m01 = g00 * sb + g01 * se
    m10 = g01 * sa + g11 * sb
    m11 = g01 * sb + g11 * se
    f_s = 0.5 * (m00 * m00 + 2 * m01 * m10 + m11 * m11)
    return {"total": f_d + f_s, "d": f_d, "sigma": f_s}[term]


def _homodyne_values(angle, d_dot, sigma, sigma_dot, term):
    angle = np.asarray(angle, float)
    # recorded quadrature u = Omega b with b = (cos a, sin a)
    u0, u1 = np.sin(angle), -np.cos(angle)
    var = sigma[0, 0] * u0 * u0 + 2 * sigma[0, 1] * u0 * u1 + sigma[1, 1] * u1 * u1
    proj_d = u0 * d_dot[0] + u1 * d_dot[1]
    proj_s = sigma_dot[0, 0] * u0 * u0 + 2 * sigma_dot[0, 1] * u0 * u1 + sigma_dot[1, 1] * u1 * u1
    f_d = 2 * proj_d**2 / var
    f_s = 0.5 * (proj_s / var) ** 2
    return {"total": f_d + f_s, "d": f_d, "sigma": f_s}[term]


def best_homodyne(model: ParametricModel, term: str = "total", n_angles: int = 256) -> Optimum:
    """Best ideal homodyne direction: angle grid followed by bounded Brent refinement."""
    d_dot, sigma, sigma_dot = _single_mode_arrays(model)
    angles = np.arange(n_angles) * (np.pi / n_angles)
    vals = _homodyne_values(angles, d_dot, sigma, sigma_dot, term)
    i = int(np.argmax(vals))
    step = np.pi / n_angles
    res = optimize.minimize_scalar(
        lambda a: -float(_homodyne_values(a, d_dot, sigma, sigma_dot, term)),
        bounds=(angles[i] - step, angles[i] + step),
        method="bounded",
        options={"xatol": 1e-13},
    )
    angle = float(res.x) if -res.fun > vals[i] else float(angles[i])
    meas = homodyne(angle)
    return Optimum(meas, fi_gaussian(model, meas))


def optimize_single_mode(model: ParametricModel, term: str = "total", grid: SearchGrid = SearchGrid()) -> Optimum:
    """Maximise the Fisher information over all pure single-mode Gaussian measurements.

    The search covers ``sigma_M(s, xi)`` on a coarse grid, refined by
    Nelder-Mead, together with the ``s -> inf`` closure (ideal homodyne). When
    the homodyne limit is at least as good as the best finite measurement it
    is returned as a homodyne measurement.

    Args:
        model: single-mode model.
        term: ``"total"``, ``"d"`` (displacement term only) or ``"sigma"``.
        grid: search densities.
    """
    if term not in TERMS:
        raise ValueError(f"term must be one of {TERMS}")
    d_dot, sigma, sigma_dot = _single_mode_arrays(model)

    s_grid = np.concatenate([[0.0], np.logspace(math.log10(grid.s_min), math.log10(grid.s_max), grid.n_s - 1)])
    xi_grid = np.arange(grid.n_xi) * (2 * np.pi / grid.n_xi)
    S, X = np.meshgrid(s_grid, xi_grid, indexing="ij")
    vals = _finite_values(S, X, d_dot, sigma, sigma_dot, term)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)

    def objective(x):
        s = min(abs(x[0]), grid.s_cap)
        return -float(_finite_values(s, x[1], d_dot, sigma, sigma_dot, term))

    res = optimize.minimize(
        objective,
        x0=[S[i, j], X[i, j]],
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000},
    )
    if -res.fun >= vals[i, j]:
        s_best, xi_best, finite_best = min(abs(res.x[0]), grid.s_cap), float(np.mod(res.x[1], 2 * np.pi)), -res.fun
    else:
        s_best, xi_best, finite_best = float(S[i, j]), float(X[i, j]), float(vals[i, j])

    hom = best_homodyne(model, term, grid.n_homodyne)
    hom_val = hom.fi.term(term)
    if hom_val >= finite_best - 1e-12 * max(1.0, abs(finite_best)):
        return hom
    meas = measurement_from_squeeze_angle(s_best, xi_best)
    return Optimum(meas, fi_gaussian(model, meas))


def optimal_displacement_measurement(model: ParametricModel) -> Optimum:
    """Homodyne-type measurement reaching the QFI of a displacement-only model (any mode count).

    In the Williamson frame each mode is measured along the rotated
    displacement derivative, in the zero-noise limit.
    """
    dec = williamson(model.state.sigma)
    k = model.n_modes
    d_prime = np.linalg.solve(dec.S, model.d_dot)
    noisy = []
    for j in range(k):
        v = d_prime[2 * j : 2 * j + 2]
        norm = np.linalg.norm(v)
        u = v / norm if norm > 1e-300 else np.array([1.0, 0.0])
        b = np.zeros(2 * k)
        b[2 * j : 2 * j + 2] = [-u[1], u[0]]
        noisy.append(dec.S @ b)
    meas = GaussianMeasurement(np.zeros((2 * k, 2 * k)), np.column_stack(noisy), label="williamson-frame homodyne")
    return Optimum(meas, fi_gaussian(model, meas))


@dataclass(frozen=True)
class IsothermalOptimum:
    """Best local measurement for a covariance-only isothermal model.

    ``z_star[j] == 0.0`` denotes the homodyne limit on Williamson mode ``j``;
    ``z_star[j] == 1.0`` is heterodyne. ``swapped[j]`` records the quadrature
    permutation of that mode.
    """

    z_star: tuple[float, ...]
    swapped: tuple[bool, ...]
    fi: float
    measurement: GaussianMeasurement
    mu: float
    w: np.ndarray = field(repr=False)

    @property
    def is_homodyne(self) -> bool:
        return all(z == 0.0 for z in self.z_star)

    @property
    def is_heterodyne(self) -> bool:
        return all(z == 1.0 for z in self.z_star)


def _pair_value(z, a, b, mu):
    return a * a / (mu + z) ** 2 + b * b * z * z / (z * mu + 1) ** 2


def _best_z(a: float, b: float, mu: float) -> tuple[float, float]:
    """Maximise ``a^2/(mu+z)^2 + b^2 z^2/(z mu+1)^2`` over ``z`` in ``[0, 1]``.

    An interior maximum exists when ``|a| != |b|``, so ``log z`` is scanned
    before a bounded Brent refinement; ``z = 0`` stands for the homodyne limit.
    """
    at0 = a * a / (mu * mu)
    at1 = _pair_value(1.0, a, b, mu)
    t = np.linspace(-30.0, 0.0, 601)
    vals = _pair_value(np.exp(t), a, b, mu)
    i = int(np.argmax(vals))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    res = optimize.minimize_scalar(
        lambda x: -_pair_value(math.exp(x), a, b, mu), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12},
    )
    z_int, v_int = math.exp(res.x), -res.fun
    scale = max(at0, at1, v_int, 1e-300)
    best_z, best_v = 0.0, at0
    if at1 > best_v + 1e-13 * scale:
        best_z, best_v = 1.0, at1
    if v_int > best_v + 1e-12 * scale:
        best_z, best_v = z_int, v_int
    return best_z, best_v


def optimal_local_isothermal(model: ParametricModel, tol: float = 1e-8) -> IsothermalOptimum:
    """Optimal measurement for isothermal models with no displacement information.

    With ``sigma = mu S S^T`` and ``W = S^{-1} sigma_dot S^{-T}`` brought to
    ``diag(w1, w2, ...)`` orthosymplectically, each mode contributes
    ``max_z [w1^2/(mu+z)^2 + w2^2 z^2/(z mu+1)^2] / 2`` (or the swapped
    pair); the measurement is ``S O (⊕ diag(z, 1/z)) O^T S^T``.
    """
    d_scale = max(1.0, np.abs(model.d_dot).max())
    if np.abs(model.d_dot).max() > 1e-12 * d_scale:
        raise PreconditionError("model carries displacement information; use optimize_single_mode")
    dec = williamson(model.state.sigma)
    mu = float(dec.nu[0])
    if np.abs(dec.nu - mu).max() > tol * mu:
        raise PreconditionError("state is not isothermal (unequal symplectic eigenvalues); use optimize_single_mode")
    k = model.n_modes
    S_inv = np.linalg.inv(dec.S)
    W = S_inv @ model.sigma_dot @ S_inv.T
    diag = takagi_diagonalize(0.5 * (W + W.T))
    O_G = diag.O.T
    w = diag.d_vals

    z_star, swapped, values = [], [], []
    swap1 = symplectic_form(1)
    blocks_perm = []
    for j in range(k):
        w1, w2 = w[2 * j], w[2 * j + 1]
        z_a, v_a = _best_z(w1, w2, mu)
        z_b, v_b = _best_z(w2, w1, mu)
        if v_b > v_a * (1 + 1e-12) + 1e-300:
            z_star.append(z_b), swapped.append(True), values.append(v_b)
            blocks_perm.append(swap1)
        else:
            z_star.append(z_a), swapped.append(False), values.append(v_a)
            blocks_perm.append(np.eye(2))

    finite = np.zeros((2 * k, 2 * k))
    noisy = []
    for j in range(k):
        cols = np.zeros((2 * k, 2))
        cols[2 * j : 2 * j + 2] = blocks_perm[j]
        frame = dec.S @ O_G @ cols  # columns: precise and noisy axes in phase space
        z = z_star[j]
        if z == 0.0:
            b = frame[:, 1]
            noisy.append(b / np.linalg.norm(b))
        else:
            finite += frame @ np.diag([z, 1.0 / z]) @ frame.T
    meas = GaussianMeasurement(finite, np.column_stack(noisy) if noisy else None, label="isothermal-optimal")
    if meas.n_modes == 1 and meas.is_ideal:
        meas = homodyne(meas.homodyne_angles[0])
    elif all(z == 1.0 for z in z_star) and np.allclose(finite, finite.T) and np.allclose(
        finite, finite[0, 0] * np.eye(2 * k)
    ):
        meas = GaussianMeasurement(finite, label="heterodyne")
    return IsothermalOptimum(tuple(z_star), tuple(swapped), 0.5 * sum(values), meas, mu, w)


def sum_of_maxima_bound(model: ParametricModel, grid: SearchGrid = SearchGrid()) -> float:
    """Upper bound on the single-copy optimum: max F_d plus max F_sigma, each maximised separately."""
    f_d = optimize_single_mode(model, "d", grid).fi.f_d
    f_s = optimize_single_mode(model, "sigma", grid).fi.f_sigma
    return f_d + f_s


@dataclass(frozen=True)
class StrategyReport:
    """Local versus LON-based global strategy for ``m`` copies."""

    m: int
    single_copy_opt: float
    local_opt_fi: float
    global_lon_fi: float
    global_breakdown: FiBreakdown
    lon_lower_bound: float
    f_d_star: float
    f_sigma_star: float
    sum_of_maxima_bound: float
    qfi_single: float
    qfi_total: float
    measurement_opt: str
    measurement_d: str
    measurement_sigma: str

    @property
    def per_copy(self) -> dict:
        return {
            "local": self.local_opt_fi / self.m,
            "global_lon": self.global_lon_fi / self.m,
            "bound": self.sum_of_maxima_bound / self.m,
            "qfi": self.qfi_total / self.m,
        }

    def to_dict(self) -> dict:
        out = {
            "m": self.m,
            "single_copy_opt": self.single_copy_opt,
            "local": self.local_opt_fi,
            "global_lon": self.global_lon_fi,
            "global_f_d": self.global_breakdown.f_d,
            "global_f_sigma": self.global_breakdown.f_sigma,
            "lon_lower_bound": self.lon_lower_bound,
            "f_d_star": self.f_d_star,
            "f_sigma_star": self.f_sigma_star,
            "bound": self.sum_of_maxima_bound,
            "qfi_single": self.qfi_single,
            "qfi": self.qfi_total,
            "measurement_opt": self.measurement_opt,
            "measurement_d": self.measurement_d,
            "measurement_sigma": self.measurement_sigma,
        }
        out["per_copy"] = self.per_copy
        return out


def lon_strategy_measurement(m: int, meas_d: GaussianMeasurement, meas_sigma: GaussianMeasurement) -> GaussianMeasurement:
    """``meas_sigma`` on the first ``m - 1`` outputs and ``meas_d`` on the last."""
    return measurement_sum(*([meas_sigma] * (m - 1) + [meas_d]))


def global_strategy_fi(
    model: ParametricModel,
    m: int,
    meas_d: GaussianMeasurement | None = None,
    meas_sigma: GaussianMeasurement | None = None,
    grid: SearchGrid = SearchGrid(),
) -> StrategyReport:
    """Fisher information of the LON strategy on ``m`` copies, with local and QFI references.

    The network concentrates the displacement of all copies in the last one
    without touching the covariance; the last output is measured with the
    displacement-optimal measurement and the rest with the covariance-optimal
    one. For ``m = 1`` no network acts and the global value equals the
    single-copy optimum.
    """
    if int(m) != m or m < 1:
        raise DimensionError(f"m must be a positive integer, got {m!r}")
    m = int(m)
    opt = optimize_single_mode(model, "total", grid) if model.n_modes == 1 else None
    if meas_d is None:
        meas_d = optimize_single_mode(model, "d", grid).measurement
    if meas_sigma is None:
        meas_sigma = optimize_single_mode(model, "sigma", grid).measurement
    f_d_star = fi_gaussian(model, meas_d).f_d
    f_sigma_star = fi_gaussian(model, meas_sigma).f_sigma
    single_opt = opt.fi.total if opt is not None else max(
        fi_gaussian(model, meas_d).total, fi_gaussian(model, meas_sigma).total
    )

    if m == 1:
        best = opt.measurement if opt is not None else meas_d
        global_fi = fi_gaussian(model, best)
    else:
        lon = build_lon(m, model.n_modes)
        global_fi = fi_gaussian(model.copies(m).transformed(lon), lon_strategy_measurement(m, meas_d, meas_sigma))
    q1 = qfi(model)
    return StrategyReport(
        m=m,
        single_copy_opt=single_opt,
        local_opt_fi=m * single_opt,
        global_lon_fi=global_fi.total,
        global_breakdown=global_fi,
        lon_lower_bound=(m - 1) * f_sigma_star + m * f_d_star,
        f_d_star=f_d_star,
        f_sigma_star=f_sigma_star,
        sum_of_maxima_bound=m * (f_d_star + f_sigma_star),
        qfi_single=q1,
        qfi_total=m * q1,
        measurement_opt=opt.measurement.describe() if opt is not None else "n/a",
        measurement_d=meas_d.describe(),
        measurement_sigma=meas_sigma.describe(),
    )


@dataclass(frozen=True)
class AdditivityReport:
    m: int
    qfi_single: float
    qfi_copies: float
    fi_single: float
    fi_copies: float
    rtol: float

    @property
    def qfi_ratio(self) -> float:
        return self.qfi_copies / self.qfi_single

    @property
    def fi_ratio(self) -> float:
        return self.fi_copies / self.fi_single

    @property
    def qfi_additive(self) -> bool:
        return abs(self.qfi_copies - self.m * self.qfi_single) <= self.rtol * abs(self.m * self.qfi_single)

    @property
    def fi_additive(self) -> bool:
        return abs(self.fi_copies - self.m * self.fi_single) <= self.rtol * abs(self.m * self.fi_single)

    @property
    def ok(self) -> bool:
        return self.qfi_additive and self.fi_additive


def additivity_check(
    model: ParametricModel, m: int, meas: GaussianMeasurement | None = None, rtol: float = 1e-8
) -> AdditivityReport:
    """Compare QFI and replicated-measurement FI on ``m`` copies against ``m`` times one copy."""
    if m < 2:
        raise PreconditionError("additivity needs m >= 2")
    if meas is None:
        meas = optimize_single_mode(model).measurement if model.n_modes == 1 else GaussianMeasurement(
            np.eye(2 * model.n_modes), label="heterodyne"
        )
    many = model.copies(m)
    return AdditivityReport(
        m=m,
        qfi_single=qfi(model),
        qfi_copies=qfi(many),
        fi_single=fi_gaussian(model, meas).total,
        fi_copies=fi_gaussian(many, measurement_sum(*([meas] * m))).total,
        rtol=rtol,
    )
