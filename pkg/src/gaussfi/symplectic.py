"""Real symplectic linear algebra in the qpqp quadrature ordering.

Conventions: quadratures are ordered ``(q1, p1, q2, p2, ...)``, the vacuum
covariance matrix is the identity and the symplectic form is
``Omega = ⊕ [[0, 1], [-1, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DimensionError, NotAStateError, PreconditionError, StructureError

__all__ = [
    "SymplecticDecomposition",
    "OrthosymplecticDiag",
    "symplectic_form",
    "mode_count",
    "is_symplectic",
    "is_valid_covariance",
    "williamson",
    "symplectic_eigenvalues",
    "takagi",
    "takagi_diagonalize",
    "majorizes",
    "random_symplectic",
    "random_orthosymplectic",
]

_OMEGA1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class SymplecticDecomposition:
    """Williamson normal form ``sigma = S (⊕ nu_i I_2) S^T``."""

    nu: np.ndarray
    S: np.ndarray

    def diagonal(self) -> np.ndarray:
        return np.diag(np.repeat(self.nu, 2))

    def reconstruct(self) -> np.ndarray:
        return self.S @ self.diagonal() @ self.S.T


@dataclass(frozen=True)
class OrthosymplecticDiag:
    """Orthosymplectic ``O`` with ``O W O^T = diag(d_vals)``.

    ``d_vals`` follows the per-mode pattern ``(alpha ± s_j, alpha ∓ s_j)``
    with the larger magnitude first inside each mode.
    """

    O: np.ndarray
    d_vals: np.ndarray
    alpha: float
    takagi_values: np.ndarray


def symplectic_form(k: int) -> np.ndarray:
    """Return the ``2k x 2k`` symplectic form in qpqp ordering."""
    if int(k) != k or k < 1:
        raise DimensionError(f"mode count must be a positive integer, got {k!r}")
    return np.kron(np.eye(int(k)), _OMEGA1)


def mode_count(matrix: np.ndarray) -> int:
    """Number of modes for a ``2k x 2k`` phase-space matrix."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
        raise DimensionError(f"expected a square matrix of even size, got shape {matrix.shape}")
    return matrix.shape[0] // 2


def is_symplectic(S: np.ndarray, tol: float = 1e-8) -> bool:
    S = np.asarray(S, dtype=float)
    omega = symplectic_form(mode_count(S))
    return bool(np.linalg.norm(S @ omega @ S.T - omega) <= tol)


def _check_symmetric(sigma: np.ndarray, tol: float) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    mode_count(sigma)
    scale = max(1.0, np.abs(sigma).max())
    if np.abs(sigma - sigma.T).max() > tol * scale:
        raise DimensionError("matrix is not symmetric")
    return 0.5 * (sigma + sigma.T)


def is_valid_covariance(sigma: np.ndarray, tol: float = 1e-9) -> tuple[bool, float]:
    """Check the uncertainty relation ``sigma + i Omega >= 0``.

    Returns:
        ``(valid, min_eig)`` where ``min_eig`` is the smallest eigenvalue of
        the Hermitian matrix ``sigma + i Omega``.
    """
    sigma = _check_symmetric(sigma, tol)
    omega = symplectic_form(mode_count(sigma))
    min_eig = float(np.linalg.eigvalsh(sigma + 1j * omega)[0])
    return min_eig >= -tol, min_eig


def _canonical_phase(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate ``v`` so that its first non-negligible component is real positive."""
    idx = int(np.argmax(np.abs(v) > tol * np.abs(v).max()))
    return v * (np.conj(v[idx]) / np.abs(v[idx]))


def _orthonormalize_cluster(vecs: np.ndarray) -> np.ndarray:
    # Basis of span(vecs) built from projected unit vectors, picking the
    # largest residual each round (lowest index on ties).
    n, c = vecs.shape
    proj = vecs @ vecs.conj().T
    basis: list[np.ndarray] = []
    for _ in range(c):
        cand = proj.copy()
        for b in basis:
            cand -= np.outer(b, b.conj() @ cand)
        norms = np.linalg.norm(cand, axis=0)
        j = int(np.argmax(norms))
        basis.append(cand[:, j] / norms[j])
    return np.column_stack(basis)


def williamson(sigma: np.ndarray, tol: float = 1e-9) -> SymplecticDecomposition:
    """Williamson decomposition of a valid covariance matrix.

    The symplectic eigenvalues are obtained from the Hermitian matrix
    ``i sigma^{1/2} Omega sigma^{1/2}``, which is similar to ``i Omega sigma``.
    Eigenvectors are phase-fixed and degenerate clusters re-orthonormalised
    deterministically, so ``S`` is reproducible.

    Args:
        sigma: ``2k x 2k`` covariance matrix.
        tol: tolerance of the uncertainty-relation check.

    Returns:
        ``SymplecticDecomposition`` with ``nu`` sorted descending.
    """
    sigma = _check_symmetric(sigma, tol)
    valid, min_eig = is_valid_covariance(sigma, tol)
    if not valid:
        raise NotAStateError(f"sigma + i Omega has eigenvalue {min_eig:.3e} < 0")
    k = mode_count(sigma)
    omega = symplectic_form(k)

    evals, evecs = np.linalg.eigh(sigma)
    root = (evecs * np.sqrt(evals)) @ evecs.T
    herm = 1j * (root @ omega @ root)
    lam, vec = np.linalg.eigh(0.5 * (herm + herm.conj().T))
    # Negative eigenvalues -nu come first in ascending order; take the k most
    # negative so that nu is descending.
    nu = -lam[:k]
    u = vec[:, :k]

    clusters: list[list[int]] = []
    for i in range(k):
        if clusters and abs(nu[i] - nu[clusters[-1][0]]) <= 1e-9 * max(1.0, nu[i]):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    for cl in clusters:
        if len(cl) > 1:
            u[:, cl] = _orthonormalize_cluster(u[:, cl])
    for i in range(k):
        u[:, i] = _canonical_phase(u[:, i])

    K = np.empty((2 * k, 2 * k))
    K[:, 0::2] = np.sqrt(2.0) * u.real
    K[:, 1::2] = np.sqrt(2.0) * u.imag
    S = root @ K @ np.diag(np.repeat(nu, 2) ** -0.5)
    return SymplecticDecomposition(nu=nu, S=S)


def symplectic_eigenvalues(sigma: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues (descending) as moduli of the eigenvalues of ``i Omega sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    omega = symplectic_form(mode_count(sigma))
    lam = np.abs(np.linalg.eigvals(1j * omega @ sigma))
    return np.sort(lam)[::-1][::2]


def takagi(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Autonne-Takagi factorisation ``H = U diag(s) U^T`` of a complex symmetric matrix.

    Built from the SVD ``H = u diag(s) vh``: for symmetric ``H`` the unitary
    ``vh @ conj(u)`` is block diagonal on degenerate singular values and its
    principal square root supplies the phase correction.
    """
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    if H.shape != (n, n):
        raise DimensionError("Takagi factorisation needs a square matrix")
    if np.abs(H - H.T).max() > 1e-10 * max(1.0, np.abs(H).max()):
        raise StructureError("matrix is not complex symmetric")
    if np.allclose(H, 0.0, atol=1e-14):
        return np.zeros(n), np.eye(n, dtype=complex)
    u, s, vh = np.linalg.svd(H)
    phase = la.sqrtm(vh @ u.conj())
    U = u @ phase
    return s, U


def _qpqp_to_xxpp(k: int) -> np.ndarray:
    # Permutation matrix P with (P x)_xxpp = x_qpqp reordered.
    perm = np.concatenate([np.arange(0, 2 * k, 2), np.arange(1, 2 * k, 2)])
    return np.eye(2 * k)[perm]


def takagi_diagonalize(W: np.ndarray, tol: float = 1e-8) -> OrthosymplecticDiag:
    """Diagonalise ``W = A + alpha I`` (``A`` symmetric Hamiltonian) orthosymplectically.

    In the ``(q1..qk, p1..pk)`` ordering ``A = [[P, Q], [Q, -P]]``; the Takagi
    factorisation of ``H = P + iQ`` yields a unitary whose real representation
    is orthogonal and symplectic and brings ``A`` to ``diag(s, -s)``.

    Args:
        W: real symmetric ``2k x 2k`` matrix.
        tol: tolerance of the Hamiltonian-part check.

    Raises:
        StructureError: ``W - alpha I`` is not Hamiltonian.
    """
    W = _check_symmetric(W, 1e-10)
    k = mode_count(W)
    omega = symplectic_form(k)
    alpha = float(np.trace(W)) / (2 * k)
    scale = max(1.0, np.abs(W).max())
    residual = np.abs(W @ omega + omega @ W - 2.0 * alpha * omega).max()
    if residual > tol * scale:
        raise StructureError(
            f"W - alpha I is not Hamiltonian (residual {residual:.3e}); isothermal path unavailable"
        )

    perm = _qpqp_to_xxpp(k)
    A = perm @ (W - alpha * np.eye(2 * k)) @ perm.T
    P, Q = A[:k, :k], A[:k, k:]
    s, U = takagi(P + 1j * Q)
    # O^T is the real form [[Re U, -Im U], [Im U, Re U]] of U; with
    # U^H H conj(U) = diag(s) it sends A to diag(s, -s).
    UR, UI = U.real, U.imag
    O_xxpp = np.block([[UR, -UI], [UI, UR]]).T
    O = perm.T @ O_xxpp @ perm

    d_vals = np.empty(2 * k)
    d_vals[0::2] = alpha + s
    d_vals[1::2] = alpha - s
    if alpha < 0:
        # Quarter-turn inside each mode swaps the pair so the larger
        # magnitude stays first.
        rot = np.kron(np.eye(k), _OMEGA1)
        O = rot @ O
        d_vals[0::2], d_vals[1::2] = alpha - s, alpha + s
    return OrthosymplecticDiag(O=O, d_vals=d_vals, alpha=alpha, takagi_values=s)


def majorizes(x, y, tol: float = 1e-10) -> bool:
    """Return True when ``x`` is majorised by ``y``.

    Both sequences must be sorted in descending order. ``x ≺ y`` holds when
    every partial sum of ``y`` dominates that of ``x`` and the totals agree.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise PreconditionError("sequences must be one-dimensional and of equal length")
    for name, seq in (("x", x), ("y", y)):
        if np.any(np.diff(seq) > tol * max(1.0, np.abs(seq).max(initial=0.0))):
            raise PreconditionError(f"{name} is not sorted in descending order")
    cx, cy = np.cumsum(x), np.cumsum(y)
    scale = max(1.0, np.abs(cx).max(initial=0.0), np.abs(cy).max(initial=0.0))
    if abs(cx[-1] - cy[-1]) > tol * scale:
        return False
    return bool(np.all(cy - cx >= -tol * scale))


def random_orthosymplectic(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random passive transformation: the real form of a random ``U(k)``."""
    z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    U = q * (np.diag(r) / np.abs(np.diag(r)))
    O_xxpp = np.block([[U.real, -U.imag], [U.imag, U.real]])
    perm = _qpqp_to_xxpp(k)
    return perm.T @ O_xxpp @ perm


def random_symplectic(k: int, rng: np.random.Generator, max_squeeze: float = 1.0) -> np.ndarray:
    """Random symplectic matrix ``O1 Z O2`` with squeezings in ``[-max_squeeze, max_squeeze]``."""
    r = rng.uniform(-max_squeeze, max_squeeze, size=k)
    Z = np.diag(np.exp(np.column_stack([r, -r]).ravel()))
    return random_orthosymplectic(k, rng) @ Z @ random_orthosymplectic(k, rng)
