"""
Complex linear-algebra kernel.

Vectors and matrices are numpy ``complex128`` arrays (dense, row-major). The
sizes handled here never exceed the antenna count, so the Hermitian
eigensolver is a plain cyclic Jacobi iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import lu_factor, lu_solve

from .errors import (
    NoConvergenceError,
    NonPositiveNoiseError,
    NotHermitianError,
    SingularMatrixError,
)

CVec = npt.NDArray[np.complex128]
CMat = npt.NDArray[np.complex128]
RVec = npt.NDArray[np.float64]

HERMITIAN_TOL = 1e-10
PIVOT_TOL = 1e-14
JACOBI_TOL = 1e-13
MAX_SWEEPS = 50


@dataclass(frozen=True)
class EvdResult:
    """
    Eigendecomposition A = Q diag(eigenvalues) Q^H.

    Attributes:
        eigenvalues: Real eigenvalues, sorted descending.
        eigenvectors: Unitary matrix whose columns pair with ``eigenvalues``.
        sweeps: Number of Jacobi sweeps performed.
    """

    eigenvalues: RVec
    eigenvectors: CMat
    sweeps: int

    def reconstruct(self) -> CMat:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.conj().T


def frobenius(a: npt.ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(a)))


def hermitian_part(a: CMat) -> CMat:
    return 0.5 * (a + a.conj().T)


def is_hermitian(a: CMat, tol: float = HERMITIAN_TOL) -> bool:
    """True if ``a`` is square and max|A - A^H| <= tol * ||A||_F."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = frobenius(a)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * max(scale, 1e-300))


def hermitian_evd(a: CMat) -> EvdResult:
    """
    Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.

    Each rotation first removes the phase of the pivot a_pq, then applies the
    real Jacobi rotation that annihilates it. Sweeps stop once the
    off-diagonal Frobenius norm is below ``JACOBI_TOL * ||A||_F``.

    Raises:
        NotHermitianError: if ``a`` is not square or not Hermitian within
            ``HERMITIAN_TOL`` relative to its Frobenius norm.
        NoConvergenceError: if ``MAX_SWEEPS`` sweeps do not converge.
    """
    a = np.array(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitianError(f"Expected a square matrix, got shape {a.shape}")
    if not is_hermitian(a):
        raise NotHermitianError(
            "Matrix asymmetry exceeds "
            f"{HERMITIAN_TOL:g} * ||A||_F (max |A - A^H| = "
            f"{np.max(np.abs(a - a.conj().T)):.3e})"
        )

    n = a.shape[0]
    a = hermitian_part(a)
    q = np.eye(n, dtype=np.complex128)
    scale = frobenius(a)

    sweeps = 0
    while _off_diagonal(a) > JACOBI_TOL * scale:
        if sweeps >= MAX_SWEEPS:
            raise NoConvergenceError(
                f"Jacobi did not converge in {MAX_SWEEPS} sweeps "
                f"(off-diagonal norm {_off_diagonal(a):.3e})"
            )
        for p in range(n - 1):
            for r in range(p + 1, n):
                _rotate(a, q, p, r)
        sweeps += 1

    eigenvalues = np.real(np.diag(a)).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return EvdResult(
        eigenvalues=eigenvalues[order], eigenvectors=q[:, order], sweeps=sweeps
    )


def _off_diagonal(a: CMat) -> float:
    return frobenius(a - np.diag(np.diag(a)))


def _rotate(a: CMat, q: CMat, p: int, r: int) -> None:
    apr = a[p, r]
    magnitude = abs(apr)
    if magnitude == 0.0:
        return

    phase = apr / magnitude
    theta = (a[r, r].real - a[p, p].real) / (2.0 * magnitude)
    t = (1.0 if theta >= 0.0 else -1.0) / (abs(theta) + np.hypot(1.0, theta))
    c = 1.0 / np.hypot(1.0, t)
    s = t * c

    # G = diag(1, conj(phase)) @ [[c, s], [-s, c]] acting on (p, r)
    g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
    idx = [p, r]

    a[:, idx] = a[:, idx] @ g
    a[idx, :] = g.conj().T @ a[idx, :]
    a[p, r] = a[r, p] = 0.0
    a[p, p] = a[p, p].real
    a[r, r] = a[r, r].real
    q[:, idx] = q[:, idx] @ g


def solve(a: CMat, b: npt.ArrayLike) -> npt.NDArray[np.complex128]:
    """
    Solve ``a @ x = b`` by LU with partial pivoting.

    ``b`` may be a vector or a block of right-hand-side columns.

    Raises:
        SingularMatrixError: if a pivot of U falls below ``PIVOT_TOL * ||a||_F``.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"solve expects a square matrix, got shape {a.shape}")

    lu, piv = lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    threshold = PIVOT_TOL * frobenius(a)
    if pivots.size == 0 or np.min(pivots) <= threshold:
        raise SingularMatrixError(
            f"Smallest pivot {np.min(pivots, initial=0.0):.3e} is below "
            f"{PIVOT_TOL:g} * ||A||_F"
        )
    return lu_solve((lu, piv), np.asarray(b, dtype=np.complex128))


def inv_by_lemma(sigma2: float, v_int: CMat, p_int: npt.ArrayLike) -> CMat:
    """
    Inverse of sigma2*I + sum_l p_l v_l v_l^H via the Woodbury identity.

        (s I + V P V^H)^-1 = (1/s) [I - V (s P^-1 + V^H V)^-1 V^H]

    Only the L x L core is inverted; with no interference columns the result
    is I / sigma2.

    Raises:
        NonPositiveNoiseError: if ``sigma2 <= 0``.
        ValueError: if the number of powers does not match the columns.
    """
    if not sigma2 > 0.0:
        raise NonPositiveNoiseError(f"Noise power must be positive, got {sigma2!r}")

    v = np.asarray(v_int, dtype=np.complex128)
    powers = np.asarray(p_int, dtype=np.float64).reshape(-1)
    n = v.shape[0]
    if v.ndim != 2 or v.shape[1] != powers.size:
        raise ValueError(
            f"Interference block has shape {v.shape} but {powers.size} powers were given"
        )

    eye = np.eye(n, dtype=np.complex128)
    if powers.size == 0:
        return eye / sigma2

    core = np.diag(sigma2 / powers).astype(np.complex128) + v.conj().T @ v
    return (eye - v @ solve(core, v.conj().T)) / sigma2
