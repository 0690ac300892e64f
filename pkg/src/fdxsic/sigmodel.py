"""
Received-signal model for a uniform linear array.

One column of a snapshot matrix is

    x[t] = a(theta_d) s_d[t] + sum_l sqrt(p_l) a(theta_l) s_si[t - tau_l] + nu[t]

with a unit-power QPSK desired user, L backscattered copies of the known
self-interference stream and circular white Gaussian noise of per-antenna
variance sigma^2.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from .errors import OddBitCountError, SignalModelError, StreamTooShortError
from .numerics import CMat, CVec

Bits = npt.NDArray[np.uint8]
Seed = int | np.random.SeedSequence

QPSK_SCALE = 1.0 / math.sqrt(2.0)

# Stream identifiers for derive_rng
NOISE_STREAM = 1
PILOT_STREAM = 2
PAYLOAD_STREAM = 3
SI_STREAM = 4


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count and spacing in wavelengths."""

    n_antennas: int = 10
    spacing_wavelengths: float = 0.5

    def __post_init__(self) -> None:
        if self.n_antennas < 2:
            raise ValueError(f"n_antennas must be >= 2, got {self.n_antennas}")
        if not self.spacing_wavelengths > 0.0:
            raise ValueError(
                f"spacing_wavelengths must be positive, got {self.spacing_wavelengths}"
            )


@dataclass(frozen=True)
class Scenario:
    """
    Desired user and backscattered self-interference paths.

    Interference powers are in dB relative to the unit-power desired user;
    noise_power_db is the per-antenna noise variance in dB.
    """

    label: str
    desired_angle_deg: float
    int_angles_deg: tuple[float, ...]
    int_powers_db: tuple[float, ...]
    path_delays_symbols: tuple[int, ...]
    noise_power_db: float

    def __post_init__(self) -> None:
        n_paths = len(self.int_angles_deg)
        if len(self.int_powers_db) != n_paths or len(self.path_delays_symbols) != n_paths:
            raise ValueError(
                f"Scenario '{self.label}': {n_paths} angles, "
                f"{len(self.int_powers_db)} powers and "
                f"{len(self.path_delays_symbols)} delays must have equal length"
            )
        for angle in (self.desired_angle_deg, *self.int_angles_deg):
            if not -180.0 < angle <= 180.0:
                raise ValueError(
                    f"Scenario '{self.label}': angle {angle} outside (-180, 180]"
                )
        if any(d < 0 for d in self.path_delays_symbols):
            raise ValueError(f"Scenario '{self.label}': delays must be >= 0")

    @property
    def n_paths(self) -> int:
        return len(self.int_angles_deg)

    @property
    def noise_power(self) -> float:
        return float(10.0 ** (self.noise_power_db / 10.0))

    @property
    def int_powers(self) -> npt.NDArray[np.float64]:
        return 10.0 ** (np.asarray(self.int_powers_db, dtype=np.float64) / 10.0)

    @property
    def max_delay(self) -> int:
        return max(self.path_delays_symbols, default=0)

    def with_noise(self, noise_power_db: float) -> Scenario:
        return replace(self, noise_power_db=float(noise_power_db))


@dataclass(frozen=True)
class FrameSpec:
    """Block of ``block_len`` symbols whose first ``n_pilots`` are pilots."""

    block_len: int = 1000
    pilot_fraction: float = 0.10

    def __post_init__(self) -> None:
        if not 0.0 < self.pilot_fraction < 1.0:
            raise ValueError(
                f"pilot_fraction must lie in (0, 1), got {self.pilot_fraction}"
            )
        if self.n_pilots < 1 or self.n_pilots >= self.block_len:
            raise ValueError(
                f"block_len {self.block_len} with pilot_fraction "
                f"{self.pilot_fraction} gives {self.n_pilots} pilots"
            )

    @property
    def n_pilots(self) -> int:
        return round(self.pilot_fraction * self.block_len)

    @property
    def n_payload(self) -> int:
        return self.block_len - self.n_pilots


@dataclass(frozen=True, eq=False)
class SymbolStream:
    """Gray-mapped QPSK symbols and the bits they carry (two per symbol)."""

    symbols: CVec
    bits: Bits

    def __len__(self) -> int:
        return int(self.symbols.shape[0])

    def slice(self, start: int, stop: int) -> SymbolStream:
        return SymbolStream(
            symbols=self.symbols[start:stop], bits=self.bits[2 * start : 2 * stop]
        )


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """N x T complex observations, one column per symbol time."""

    data: CMat = field(repr=False)

    @property
    def n_antennas(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_symbols(self) -> int:
        return int(self.data.shape[1])

    def columns(self, start: int, stop: int) -> SnapshotMatrix:
        return SnapshotMatrix(self.data[:, start:stop])


def derive_rng(seed: Seed, *stream_ids: int) -> np.random.Generator:
    """
    Independent generator for (master seed, stream ids).

    Parallel work units each derive their own generator, so no generator
    state is ever shared between them.
    """
    if isinstance(seed, np.random.SeedSequence):
        seq = np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=(*seed.spawn_key, *stream_ids)
        )
    else:
        seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream_ids))
    return np.random.default_rng(seq)


def _sin_deg(angle_deg: npt.ArrayLike) -> npt.NDArray[np.float64]:
    # Fold into [-90, 90] first so that theta and 180 - theta share one sine.
    theta = np.asarray(angle_deg, dtype=np.float64)
    theta = np.where(theta > 180.0, theta - 360.0, theta)
    theta = np.where(theta <= -180.0, theta + 360.0, theta)
    theta = np.where(theta > 90.0, 180.0 - theta, theta)
    theta = np.where(theta < -90.0, -180.0 - theta, theta)
    return np.sin(np.deg2rad(theta))


def steering_vector(geometry: ArrayGeometry, angle_deg: float) -> CVec:
    """Element n is exp(j 2 pi d n sin(theta)), n = 0 .. N-1."""
    n = np.arange(geometry.n_antennas)
    phase = 2.0 * np.pi * geometry.spacing_wavelengths * n * _sin_deg(angle_deg)
    return np.exp(1j * phase)


def steering_matrix(geometry: ArrayGeometry, angles_deg: Sequence[float]) -> CMat:
    """Steering vectors stacked as columns (N x len(angles))."""
    n = np.arange(geometry.n_antennas)[:, None]
    sines = _sin_deg(np.asarray(angles_deg, dtype=np.float64))[None, :]
    return np.exp(1j * 2.0 * np.pi * geometry.spacing_wavelengths * n * sines)


def qpsk_modulate(bits: npt.ArrayLike) -> SymbolStream:
    """
    Gray QPSK: 00 -> (+1+j), 01 -> (-1+j), 11 -> (-1-j), 10 -> (+1-j), all / sqrt 2.

    The first bit of a pair selects the quadrature sign, the second the
    in-phase sign.

    Raises:
        OddBitCountError: for an odd number of bits.
    """
    b = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if b.size % 2:
        raise OddBitCountError(f"QPSK needs an even bit count, got {b.size}")
    pairs = b.reshape(-1, 2)
    in_phase = 1.0 - 2.0 * pairs[:, 1]
    quadrature = 1.0 - 2.0 * pairs[:, 0]
    return SymbolStream(symbols=QPSK_SCALE * (in_phase + 1j * quadrature), bits=b)


def qpsk_demodulate(symbols: npt.ArrayLike) -> Bits:
    """Nearest-quadrant decision; points on an axis resolve towards bits 0."""
    s = np.asarray(symbols, dtype=np.complex128).reshape(-1)
    bits = np.empty((s.size, 2), dtype=np.uint8)
    bits[:, 0] = s.imag < 0.0
    bits[:, 1] = s.real < 0.0
    return bits.reshape(-1)


def qpsk_decide(symbols: npt.ArrayLike) -> SymbolStream:
    """Map soft estimates to the nearest constellation points."""
    return qpsk_modulate(qpsk_demodulate(symbols))


def random_bits(rng: np.random.Generator, n_bits: int) -> Bits:
    return rng.integers(0, 2, size=n_bits, dtype=np.uint8)


def random_symbols(rng: np.random.Generator, n_symbols: int) -> SymbolStream:
    return qpsk_modulate(random_bits(rng, 2 * n_symbols))


def pilot_symbols(frame: FrameSpec, seed: Seed) -> SymbolStream:
    """Seeded pilot prefix known to both receiver and trainer."""
    return random_symbols(derive_rng(seed, PILOT_STREAM), frame.n_pilots)


def synthesize(
    scenario: Scenario,
    geometry: ArrayGeometry,
    frame: FrameSpec | None,
    desired: SymbolStream | None,
    si: SymbolStream | None,
    seed: Seed,
    *,
    n_symbols: int | None = None,
) -> SnapshotMatrix:
    """
    Array observations for ``desired`` plus backscattered ``si`` plus noise.

    The SI stream carries ``max_delay`` symbols of history before the block,
    so column t reads ``si[max_delay + t - tau_l]`` for path l. Passing
    ``desired=None`` mutes the user (``n_symbols`` then sets the length).
    When ``frame`` is given the length must be a whole number of blocks.

    Raises:
        StreamTooShortError: if ``si`` does not cover the block plus history.
        SignalModelError: for inconsistent lengths.
    """
    if desired is not None:
        n_symbols = len(desired)
    if n_symbols is None or n_symbols < 1:
        raise SignalModelError("synthesize needs a desired stream or n_symbols >= 1")
    if frame is not None and n_symbols % frame.block_len:
        raise SignalModelError(
            f"{n_symbols} symbols is not a whole number of {frame.block_len}-symbol blocks"
        )

    n_ant = geometry.n_antennas
    y = np.zeros((n_ant, n_symbols), dtype=np.complex128)

    if desired is not None:
        y += np.outer(steering_vector(geometry, scenario.desired_angle_deg), desired.symbols)

    if scenario.n_paths:
        history = scenario.max_delay
        needed = n_symbols + history
        if si is None or len(si) < needed:
            have = 0 if si is None else len(si)
            raise StreamTooShortError(
                f"SI stream has {have} symbols; {needed} needed "
                f"({n_symbols} + {history} delay history)"
            )
        a_int = steering_matrix(geometry, scenario.int_angles_deg)
        amplitudes = np.sqrt(scenario.int_powers)
        for path, delay in enumerate(scenario.path_delays_symbols):
            start = history - delay
            y += np.outer(
                amplitudes[path] * a_int[:, path],
                si.symbols[start : start + n_symbols],
            )

    rng = derive_rng(seed, NOISE_STREAM)
    sigma = math.sqrt(scenario.noise_power / 2.0)
    noise = rng.standard_normal((n_ant, n_symbols)) + 1j * rng.standard_normal(
        (n_ant, n_symbols)
    )
    y += sigma * noise
    return SnapshotMatrix(y)


def interference_snapshots(
    scenario: Scenario,
    geometry: ArrayGeometry,
    si: SymbolStream | None,
    seed: Seed,
    n_symbols: int,
) -> SnapshotMatrix:
    """Interference-plus-noise observations with the desired user muted."""
    return synthesize(scenario, geometry, None, None, si, seed, n_symbols=n_symbols)


def analytic_covariance(scenario: Scenario, geometry: ArrayGeometry) -> CMat:
    """Interference-plus-noise covariance sigma^2 I + sum_l p_l a_l a_l^H."""
    cov = scenario.noise_power * np.eye(geometry.n_antennas, dtype=np.complex128)
    if scenario.n_paths:
        a_int = steering_matrix(geometry, scenario.int_angles_deg)
        cov += (a_int * scenario.int_powers) @ a_int.conj().T
    return cov
