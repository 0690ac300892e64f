"""Exception hierarchy shared by every fdxsic module."""

from __future__ import annotations


class FdxsicError(Exception):
    """Base class for all errors raised by fdxsic."""

    pass


# ---------------------------------------------------------------------------
# numerics
# ---------------------------------------------------------------------------


class NumericsError(FdxsicError):
    """Raised by the complex linear-algebra kernel."""

    pass


class NotHermitianError(NumericsError):
    """Matrix asymmetry exceeds the Hermitian tolerance."""

    pass


class NoConvergenceError(NumericsError):
    """Jacobi sweeps hit the iteration cap (ill-conditioned input)."""

    pass


class SingularMatrixError(NumericsError):
    """A pivot fell below 1e-14 times the matrix norm."""

    pass


class NonPositiveNoiseError(NumericsError):
    """Noise power must be strictly positive."""

    pass


# ---------------------------------------------------------------------------
# sigmodel
# ---------------------------------------------------------------------------


class SignalModelError(FdxsicError):
    """Raised while building scenarios, symbol streams or snapshots."""

    pass


class OddBitCountError(SignalModelError):
    """QPSK needs two bits per symbol."""

    pass


class StreamTooShortError(SignalModelError):
    """The self-interference stream does not cover the largest path delay."""

    pass


# ---------------------------------------------------------------------------
# beamform
# ---------------------------------------------------------------------------


class BeamformError(FdxsicError):
    """Raised while computing beamformer taps or constraint sets."""

    pass


class SingularCovarianceError(BeamformError):
    """The interference-plus-noise covariance cannot be inverted."""

    pass


class RankDeficientConstraintsError(BeamformError):
    """Constraint columns are linearly dependent."""

    pass


class TooManyConstraintsError(BeamformError):
    """More constraints than antennas."""

    pass


class TooFewSnapshotsError(BeamformError):
    """Fewer snapshots than antennas; the sample covariance is rank deficient."""

    pass


class NoSharpDropError(BeamformError):
    """No eigenvalue falls below drop_ratio * lambda_max.

    The interference fills the array aperture and no null-space is left.
    """

    pass


# ---------------------------------------------------------------------------
# neuralnet
# ---------------------------------------------------------------------------


class TrainingError(FdxsicError):
    """Raised by the neural equalizer."""

    pass


class SizeMismatchError(TrainingError):
    """Input width does not match the network's first layer."""

    pass


class DivergentTrainingError(TrainingError):
    """The training objective became non-finite."""

    pass


class EmptySplitError(TrainingError):
    """A train/validation/test split ended up without samples."""

    pass


# ---------------------------------------------------------------------------
# configuration and command line
# ---------------------------------------------------------------------------


class ConfigError(FdxsicError):
    """Raised for invalid scenario files, overrides, plans or manifests."""

    pass


class UsageError(FdxsicError):
    """Raised for invalid command-line usage (exit code 2)."""

    pass


class UnwritableOutputError(FdxsicError):
    """The output directory cannot be created or written."""

    pass
