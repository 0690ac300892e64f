"""
Narrowband receive beamformers: conventional, MVDR and LCMV.

All weight vectors w are applied as y = w^H x and satisfy the distortionless
constraint w^H a(theta_d) = 1.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from .errors import (
    NoSharpDropError,
    RankDeficientConstraintsError,
    SingularCovarianceError,
    SingularMatrixError,
    TooFewSnapshotsError,
    TooManyConstraintsError,
)
from .numerics import CMat, CVec, hermitian_evd, hermitian_part, solve
from .sigmodel import ArrayGeometry, Scenario, SnapshotMatrix, steering_matrix, steering_vector

logger = logging.getLogger(__name__)

DEFAULT_DROP_RATIO = 0.01
LOADING_FACTOR = 1e-10
GAIN_FLOOR = 1e-300


class Method(str, Enum):
    CONVENTIONAL = "conventional"
    MVDR = "mvdr"
    LCMV_ORACLE = "lcmv_oracle"
    LCMV_EVD = "lcmv_evd"


@dataclass(frozen=True, eq=False)
class BeamWeights:
    """Tap vector W (length N) and the method that produced it."""

    taps: CVec
    method: Method

    def response(self, steering: CVec) -> complex:
        return complex(np.vdot(self.taps, steering))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """LCMV constraints W^H C = g^H; column 0 is the desired direction."""

    c: CMat
    g: CVec

    @property
    def n_constraints(self) -> int:
        return int(self.c.shape[1])


@dataclass(frozen=True)
class SubspaceSelection:
    """
    Outcome of the eigenvalue-drop source count.

    ``n_m`` counts constraint columns (desired + interference). ``eigenvalues``
    holds the non-structural spectrum of the desired-projected covariance;
    its first ``n_m - 1`` entries are at or above ``drop_ratio`` times the
    largest, the next one is below.
    """

    n_m: int
    drop_ratio: float
    eigenvalues: tuple[float, ...]

    @property
    def n_interferers(self) -> int:
        return self.n_m - 1


def _desired_constraints(c: CMat) -> ConstraintSet:
    g = np.zeros(c.shape[1], dtype=np.complex128)
    g[0] = 1.0
    return ConstraintSet(c=c, g=g)


def _loaded(s_nu: CMat) -> CMat:
    s = np.asarray(s_nu, dtype=np.complex128)
    n = s.shape[0]
    eps = LOADING_FACTOR * float(np.real(np.trace(s))) / n
    return s + eps * np.eye(n, dtype=np.complex128)


def _solve_covariance(s_nu: CMat, rhs: npt.ArrayLike) -> npt.NDArray[np.complex128]:
    try:
        return solve(_loaded(s_nu), rhs)
    except SingularMatrixError as exc:
        raise SingularCovarianceError(str(exc)) from exc


def conventional_weights(geometry: ArrayGeometry, desired_angle_deg: float) -> BeamWeights:
    """Delay-and-sum: W = a(theta_d) / N."""
    a = steering_vector(geometry, desired_angle_deg)
    return BeamWeights(taps=a / geometry.n_antennas, method=Method.CONVENTIONAL)


def mvdr_weights(s_nu: CMat, steering_d: CVec) -> BeamWeights:
    """
    W = S^-1 a / (a^H S^-1 a).

    Raises:
        SingularCovarianceError: if S cannot be inverted after loading.
    """
    a = np.asarray(steering_d, dtype=np.complex128)
    s_inv_a = _solve_covariance(s_nu, a)
    return BeamWeights(taps=s_inv_a / np.vdot(a, s_inv_a), method=Method.MVDR)


def lcmv_weights(
    s_nu: CMat,
    constraints: ConstraintSet,
    *,
    method: Method = Method.LCMV_ORACLE,
) -> BeamWeights:
    """
    W^H = g^H (C^H S^-1 C)^-1 C^H S^-1.

    Raises:
        RankDeficientConstraintsError: if the columns of C are dependent.
        SingularCovarianceError: if S cannot be inverted after loading.
    """
    c = constraints.c
    if np.linalg.matrix_rank(c) < c.shape[1]:
        raise RankDeficientConstraintsError(
            f"{c.shape[1]} constraint columns span rank {np.linalg.matrix_rank(c)}"
        )
    s_inv_c = _solve_covariance(s_nu, c)
    gram = hermitian_part(c.conj().T @ s_inv_c)
    try:
        y = solve(gram, constraints.g)
    except SingularMatrixError as exc:
        raise RankDeficientConstraintsError(str(exc)) from exc
    return BeamWeights(taps=s_inv_c @ y, method=method)


def build_constraints_oracle(geometry: ArrayGeometry, scenario: Scenario) -> ConstraintSet:
    """C = [a(theta_d), a(theta_1), ..., a(theta_L)], g = [1, 0, ..., 0]."""
    if scenario.n_paths + 1 > geometry.n_antennas:
        raise TooManyConstraintsError(
            f"{scenario.n_paths + 1} constraints exceed {geometry.n_antennas} antennas"
        )
    angles = [scenario.desired_angle_deg, *scenario.int_angles_deg]
    return _desired_constraints(steering_matrix(geometry, angles))


def sample_covariance(snapshots: SnapshotMatrix) -> CMat:
    r = snapshots.data
    return hermitian_part(r @ r.conj().T / snapshots.n_symbols)


def build_constraints_evd(
    snapshots: SnapshotMatrix,
    steering_d: CVec,
    drop_ratio: float = DEFAULT_DROP_RATIO,
) -> tuple[ConstraintSet, SubspaceSelection]:
    """
    Constraint set from the eigenstructure of the received covariance.

    The desired direction is projected out (A' = P A P, P = I - a a^H / N) so
    that the dominant eigenvectors of A' belong to interference only. The
    structural zero along a(theta_d) is discarded; of the remaining N - 1
    eigenvalues, those at or above ``drop_ratio * lambda_max`` count as
    interferers. Each selected eigenvector q is orthogonal to a(theta_d), so
    (A - sigma^2 I) q has no desired component and lies in the interference
    subspace; those vectors become the null constraints.

    Raises:
        TooFewSnapshotsError: if T < N.
        NoSharpDropError: if no eigenvalue drops below the threshold.
    """
    n = snapshots.n_antennas
    if snapshots.n_symbols < n:
        raise TooFewSnapshotsError(
            f"{snapshots.n_symbols} snapshots for {n} antennas"
        )

    a = np.asarray(steering_d, dtype=np.complex128)
    cov = sample_covariance(snapshots)
    proj = np.eye(n, dtype=np.complex128) - np.outer(a, a.conj()) / np.vdot(a, a).real
    evd = hermitian_evd(hermitian_part(proj @ cov @ proj))

    # the smallest eigenvalue is the projected-out desired direction
    spectrum = evd.eigenvalues[: n - 1]
    vectors = evd.eigenvectors[:, : n - 1]
    lam_max = float(spectrum[0])
    k = int(np.count_nonzero(spectrum >= drop_ratio * lam_max)) if lam_max > 0 else 0

    if lam_max > 0 and k == n - 1:
        raise NoSharpDropError(
            f"All {n - 1} eigenvalues exceed {drop_ratio:g} * lambda_max; "
            "interference fills the array aperture"
        )
    if k == n - 2:
        logger.warning("EVD selected %d interferers, the aperture limit", k)

    selection = SubspaceSelection(
        n_m=k + 1,
        drop_ratio=drop_ratio,
        eigenvalues=tuple(float(v) for v in spectrum),
    )
    if k == 0:
        return _desired_constraints(a[:, None].copy()), selection

    noise_floor = float(np.mean(spectrum[k:]))
    nulls = (cov - noise_floor * np.eye(n)) @ vectors[:, :k]
    nulls /= np.linalg.norm(nulls, axis=0, keepdims=True)
    logger.debug(
        "EVD constraints: %d interferers, noise floor %.3e, lambda %s",
        k,
        noise_floor,
        np.array2string(spectrum, precision=3),
    )
    return _desired_constraints(np.column_stack([a, nulls])), selection


def beam_pattern(
    weights: BeamWeights,
    geometry: ArrayGeometry,
    angle_grid_deg: Sequence[float],
) -> npt.NDArray[np.float64]:
    """Gain 20 log10 |W^H a(theta)| in dB over the grid."""
    if len(angle_grid_deg) == 0:
        raise ValueError("beam_pattern needs a non-empty angle grid")
    response = weights.taps.conj() @ steering_matrix(geometry, angle_grid_deg)
    return 20.0 * np.log10(np.maximum(np.abs(response), GAIN_FLOOR))


def apply_weights(weights: BeamWeights, snapshots: SnapshotMatrix) -> CVec:
    """Beamformer output y[t] = W^H x[t]."""
    return weights.taps.conj() @ snapshots.data


def output_power(weights: BeamWeights, s_nu: CMat) -> float:
    w = weights.taps
    return float(np.real(np.vdot(w, s_nu @ w)))


def output_sinr(weights: BeamWeights, steering_d: CVec, s_nu: CMat) -> float:
    """Unit-power desired gain over interference-plus-noise output power."""
    return abs(weights.response(steering_d)) ** 2 / output_power(weights, s_nu)


def optimum_sinr(steering_d: CVec, s_nu: CMat) -> float:
    """a^H S^-1 a, the largest SINR any linear combiner reaches."""
    a = np.asarray(steering_d, dtype=np.complex128)
    return float(np.real(np.vdot(a, _solve_covariance(s_nu, a))))
