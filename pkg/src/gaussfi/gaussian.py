"""Gaussian states, Gaussian measurements and Gaussian channels.

Units: hbar = 1 and the vacuum covariance matrix is the identity.

An ideal homodyne detection has no finite covariance matrix. It is stored as
the zero-noise limit: ``sigma_m`` holds the finite part and ``noisy`` lists
the phase-space directions whose variance diverges. Fisher information and
sampling then work on the complementary (measured) subspace.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DimensionError, DomainError, NotAStateError, PreconditionError
from .symplectic import (
    is_symplectic,
    is_valid_covariance,
    mode_count,
    symplectic_eigenvalues,
    symplectic_form,
)

__all__ = [
    "GaussianState",
    "GaussianMeasurement",
    "LonNetwork",
    "vacuum",
    "coherent",
    "thermal",
    "measurement_from_squeeze_angle",
    "homodyne",
    "heterodyne",
    "measurement_sum",
    "squeeze_channel",
    "loss_channel",
    "gaussian_channel",
    "apply_symplectic",
    "n_copies",
    "build_lon",
    "rotation",
]

MAX_SQUEEZE = 350.0


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First and second moments of a Gaussian state.

    Attributes:
        d: displacement vector of length ``2k``.
        sigma: ``2k x 2k`` covariance matrix.
    """

    d: np.ndarray
    sigma: np.ndarray
    tol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float)
        k = mode_count(sigma)
        if d.shape != (2 * k,):
            raise DimensionError(f"displacement has length {d.size}, expected {2 * k}")
        sigma = 0.5 * (sigma + sigma.T)
        valid, min_eig = is_valid_covariance(sigma, self.tol)
        if not valid:
            raise NotAStateError(f"covariance violates the uncertainty relation (min eig {min_eig:.3e})")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_modes(self) -> int:
        return self.d.size // 2


def vacuum(k: int = 1) -> GaussianState:
    return GaussianState(np.zeros(2 * k), np.eye(2 * k))


def coherent(d) -> GaussianState:
    d = np.asarray(d, dtype=float)
    return GaussianState(d, np.eye(d.size))


def thermal(mu: float, k: int = 1) -> GaussianState:
    return GaussianState(np.zeros(2 * k), mu * np.eye(2 * k))


@dataclass(frozen=True, eq=False)
class GaussianMeasurement:
    """Covariance description of a Gaussian POVM.

    Attributes:
        sigma_m: finite part of the measurement covariance matrix.
        noisy: ``2k x r`` matrix of orthonormal directions with infinite
            variance (ideal homodyne limit); ``r = 0`` for ordinary measurements.
        label: human readable description used in reports.
    """

    sigma_m: np.ndarray
    noisy: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        sigma_m = np.asarray(self.sigma_m, dtype=float)
        k = mode_count(sigma_m)
        noisy = np.zeros((2 * k, 0)) if self.noisy is None else np.asarray(self.noisy, dtype=float)
        if noisy.ndim == 1:
            noisy = noisy[:, None]
        if noisy.shape[0] != 2 * k:
            raise DimensionError("noisy directions do not match the measurement dimension")
        if noisy.shape[1]:
            q, _ = np.linalg.qr(noisy)
            # keep user directions when they are already orthonormal
            if np.allclose(noisy.T @ noisy, np.eye(noisy.shape[1]), atol=1e-12):
                q = noisy
            noisy = q
        else:
            valid, min_eig = is_valid_covariance(sigma_m, 1e-9 * max(1.0, np.abs(sigma_m).max()))
            if not valid:
                raise NotAStateError(f"measurement covariance is unphysical (min eig {min_eig:.3e})")
        object.__setattr__(self, "sigma_m", 0.5 * (sigma_m + sigma_m.T))
        object.__setattr__(self, "noisy", noisy)

    @property
    def n_modes(self) -> int:
        return self.sigma_m.shape[0] // 2

    @property
    def is_ideal(self) -> bool:
        """True when some quadratures are measured in the zero-noise limit."""
        return self.noisy.shape[1] > 0

    def _mode_local_noisy(self) -> list[list[np.ndarray]] | None:
        per_mode: list[list[np.ndarray]] = [[] for _ in range(self.n_modes)]
        for col in self.noisy.T:
            support = np.flatnonzero(np.abs(col) > 1e-14)
            modes = set(support // 2)
            if len(modes) != 1:
                return None
            j = modes.pop()
            per_mode[j].append(col[2 * j : 2 * j + 2])
        return per_mode

    @property
    def homodyne_angles(self) -> tuple[float | None, ...]:
        """Per-mode angle of the infinitely noisy quadrature, ``None`` if not homodyne.

        The measured quadrature is orthogonal to that direction. Angles are
        reduced to ``[0, pi)``. Raises when the noisy directions are not
        mode-local.
        """
        per_mode = self._mode_local_noisy()
        if per_mode is None:
            raise PreconditionError("noisy directions are not local to single modes")
        out = []
        for dirs in per_mode:
            if len(dirs) == 1:
                out.append(float(np.mod(np.arctan2(dirs[0][1], dirs[0][0]), np.pi)))
            else:
                out.append(None)
        return tuple(out)

    @property
    def xi(self) -> float:
        """Squeezing angle of the equivalent ``s -> inf`` rotated squeezed measurement (single mode)."""
        if self.n_modes != 1 or not self.is_ideal:
            raise PreconditionError("xi is defined for single-mode homodyne measurements only")
        return float(np.mod(2.0 * self.homodyne_angles[0], 2.0 * np.pi))

    def measured_basis(self) -> np.ndarray:
        """Orthonormal basis (columns) of the quadratures that are actually recorded.

        For mode-local homodyne directions ``b`` the recorded quadrature is
        ``Omega b``; untouched modes contribute ``(q, p)``.
        """
        if not self.is_ideal:
            return np.eye(2 * self.n_modes)
        per_mode = self._mode_local_noisy()
        if per_mode is None:
            return la.null_space(self.noisy.T)
        omega1 = symplectic_form(1)
        cols = []
        for j, dirs in enumerate(per_mode):
            e = np.zeros((2 * self.n_modes, 2))
            e[2 * j : 2 * j + 2] = np.eye(2)
            if not dirs:
                cols.extend(e.T)
            elif len(dirs) == 1:
                cols.append(e @ (omega1 @ dirs[0]))
        if not cols:
            return np.zeros((2 * self.n_modes, 0))
        return np.column_stack(cols)

    def surrogate(self, z: float) -> np.ndarray:
        """Finite pure covariance approaching this measurement as ``z -> 0``."""
        if not self.is_ideal:
            return self.sigma_m.copy()
        omega = symplectic_form(self.n_modes)
        nn = self.noisy @ self.noisy.T
        return self.sigma_m + nn / z + z * (omega @ nn @ omega.T)

    def is_pure(self, tol: float = 1e-6) -> bool:
        if self.is_ideal:
            return True
        return bool(np.all(np.abs(symplectic_eigenvalues(self.sigma_m) - 1.0) <= tol))

    def describe(self) -> str:
        if self.label:
            return self.label
        if self.is_ideal and self._mode_local_noisy() is not None:
            return " ⊕ ".join(
                "general" if a is None else f"homodyne(angle={a:.12g})" for a in self.homodyne_angles
            )
        return "general"


def measurement_from_squeeze_angle(s: float, xi: float) -> GaussianMeasurement:
    """Single-mode rotated squeezed-vacuum measurement ``sigma_M(s, xi)``.

    The large-variance axis lies at angle ``xi / 2``; ``s = 0`` is heterodyne.
    """
    if not np.isfinite(s) or s < 0:
        raise DomainError(f"squeezing must be finite and non-negative, got {s}")
    if s > MAX_SQUEEZE:
        raise DomainError(f"s = {s} overflows; use homodyne() for the s -> inf limit")
    # rotated form avoids the cancellation in cosh(2s) - sinh(2s) cos(xi)
    R = rotation(xi / 2)
    sigma_m = R @ np.diag([np.exp(2 * s), np.exp(-2 * s)]) @ R.T
    label = "heterodyne" if s == 0 else f"squeezed(s={s:.12g}, xi={xi:.12g})"
    return GaussianMeasurement(sigma_m, label=label)


def homodyne(direction_angle: float) -> GaussianMeasurement:
    """Ideal single-mode homodyne detection.

    ``direction_angle`` is the angle of the infinitely noisy quadrature; the
    recorded quadrature is orthogonal to it. Angle 0 records ``p``, angle
    ``pi/2`` records ``q``. Equals ``sigma_M(s -> inf, xi = 2 * direction_angle)``.
    """
    b = np.array([np.cos(direction_angle), np.sin(direction_angle)])
    angle = float(np.mod(direction_angle, np.pi))
    return GaussianMeasurement(np.zeros((2, 2)), b[:, None], label=f"homodyne(angle={angle:.12g})")


def heterodyne(k: int = 1) -> GaussianMeasurement:
    return GaussianMeasurement(np.eye(2 * k), label="heterodyne")


def measurement_sum(*measurements: GaussianMeasurement) -> GaussianMeasurement:
    """Product measurement acting on consecutive blocks of modes."""
    sigma_m = la.block_diag(*(m.sigma_m for m in measurements))
    dim = sigma_m.shape[0]
    cols = []
    offset = 0
    for m in measurements:
        for col in m.noisy.T:
            full = np.zeros(dim)
            full[offset : offset + col.size] = col
            cols.append(full)
        offset += m.sigma_m.shape[0]
    noisy = np.column_stack(cols) if cols else None
    labels = [m.describe() for m in measurements]
    return GaussianMeasurement(sigma_m, noisy, label=" ⊕ ".join(labels))


def _single_mode(state: GaussianState, what: str) -> None:
    if state.n_modes != 1:
        raise DimensionError(f"{what} acts on a single mode, got {state.n_modes} modes")


def squeeze_channel(state: GaussianState, r: float) -> GaussianState:
    _single_mode(state, "squeezing")
    Z = np.diag([np.exp(r), np.exp(-r)])
    return GaussianState(Z @ state.d, Z @ state.sigma @ Z)


def loss_channel(state: GaussianState, tau: float, mu_env: float = 1.0) -> GaussianState:
    """Pure-loss / thermal-loss channel with transmissivity ``tau``."""
    _single_mode(state, "the loss channel")
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"transmissivity must lie in [0, 1], got {tau}")
    if mu_env < 1.0:
        raise DomainError(f"environment symplectic eigenvalue must be >= 1, got {mu_env}")
    return GaussianState(np.sqrt(tau) * state.d, tau * state.sigma + (1.0 - tau) * mu_env * np.eye(2))


def gaussian_channel(state: GaussianState, X: np.ndarray, Y: np.ndarray) -> GaussianState:
    """General Gaussian channel ``d -> X d``, ``sigma -> X sigma X^T + Y``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return GaussianState(X @ state.d, X @ state.sigma @ X.T + Y)


def apply_symplectic(state: GaussianState, S: np.ndarray) -> GaussianState:
    S = np.asarray(S, dtype=float)
    if S.shape != state.sigma.shape:
        raise DimensionError("symplectic matrix does not match the state dimension")
    if not is_symplectic(S, 1e-8):
        raise PreconditionError("matrix is not symplectic")
    return GaussianState(S @ state.d, S @ state.sigma @ S.T)


def n_copies(state: GaussianState, m: int) -> GaussianState:
    """``m`` independent copies, ordered copy by copy."""
    if int(m) != m or m < 1:
        raise DimensionError(f"copy count must be a positive integer, got {m!r}")
    m = int(m)
    return GaussianState(np.tile(state.d, m), np.kron(np.eye(m), state.sigma))


@dataclass(frozen=True, eq=False)
class LonNetwork:
    """Passive network mixing ``m`` copies of a ``k``-mode system.

    ``O_mix`` is orthogonal with last row ``(1, ..., 1) / sqrt(m)``; ``S_lon``
    applies it to every quadrature of every mode.
    """

    m: int
    k: int
    O_mix: np.ndarray
    S_lon: np.ndarray

    def apply(self, state: GaussianState) -> GaussianState:
        return apply_symplectic(state, self.S_lon)


def build_lon(m: int, k: int = 1) -> LonNetwork:
    """Network that moves the displacement of ``m`` identical copies into the last copy.

    ``O_mix`` is the Householder reflection exchanging ``(1, ..., 1)/sqrt(m)``
    and ``e_m``; for ``m = 2`` it is a balanced beam splitter.
    """
    if int(m) != m or m < 1:
        raise DimensionError(f"copy count must be a positive integer, got {m!r}")
    m = int(m)
    if m == 1:
        warnings.warn("a single copy needs no network; returning the identity", stacklevel=2)
        O_mix = np.eye(1)
    else:
        u = np.full(m, 1.0 / np.sqrt(m))
        v = u.copy()
        v[-1] -= 1.0
        O_mix = np.eye(m) - 2.0 * np.outer(v, v) / (v @ v)
    S_lon = np.kron(O_mix, np.eye(2 * k))
    return LonNetwork(m=m, k=k, O_mix=O_mix, S_lon=S_lon)
