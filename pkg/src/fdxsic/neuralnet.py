"""
Pilot-trained neural equalizer.

A small fully connected network maps the interleaved I/Q of every antenna
(20 real inputs for 10 antennas) to the I/Q of the desired symbol. Hidden
layers use the symmetric sigmoid 2/(1+exp(-2x)) - 1 (numerically tanh), the
output layer is linear unless another output activation is chosen.

Training is Levenberg-Marquardt on the Bayesian-regularized objective

    F = beta * E_D + alpha * E_W,   E_D = sum e^2,   E_W = sum w^2

with alpha and beta re-estimated every epoch from the effective number of
parameters gamma. Steps are taken on F / beta = E_D + (alpha / beta) E_W, which
has the same minimizer and stays well scaled when E_D becomes small. The
parameters of the epoch with the lowest validation MSE are returned.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import (
    ConfigError,
    DivergentTrainingError,
    EmptySplitError,
    SizeMismatchError,
)
from .sigmodel import SnapshotMatrix, SymbolStream, derive_rng, qpsk_decide
from .toon import ToonCodec

logger = logging.getLogger(__name__)

RVec = npt.NDArray[np.float64]
RMat = npt.NDArray[np.float64]

DEFAULT_LAYER_SIZES = (20, 2, 2)
MODEL_FORMAT = "fdxsic-mlp"
MODEL_VERSION = 1
INIT_STREAM = 11
SPLIT_STREAM = 12


class Activation(str, Enum):
    SIGMOID_SYM = "sigmoid_sym"
    RELU = "relu"
    LINEAR = "linear"


class StoppingReason(str, Enum):
    MIN_GRADIENT = "min_gradient"
    MAX_EPOCHS = "max_epochs"
    MU_OVERFLOW = "mu_overflow"


def sigmoid_sym(x: npt.ArrayLike) -> RVec:
    """2 / (1 + exp(-2x)) - 1, evaluated as tanh(x)."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x: npt.ArrayLike) -> RVec:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def _activate(kind: Activation, v: RMat) -> RMat:
    if kind is Activation.SIGMOID_SYM:
        return sigmoid_sym(v)
    if kind is Activation.RELU:
        return relu(v)
    return v


def _derivative(kind: Activation, v: RMat, y: RMat) -> RMat:
    if kind is Activation.SIGMOID_SYM:
        return 1.0 - y * y
    if kind is Activation.RELU:
        return (v > 0.0).astype(np.float64)
    return np.ones_like(v)


def count_params(layer_sizes: Sequence[int]) -> int:
    """Sum over layers of (fan_in + 1) * fan_out."""
    return sum(
        (fan_in + 1) * fan_out
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:], strict=True)
    )


def _check_layer_sizes(layer_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"layer_sizes must be >= 2 positive widths, got {list(sizes)}")
    return sizes


@dataclass(frozen=True, eq=False)
class MlpParams:
    """
    Layer sizes plus per-layer weights (fan_out x fan_in) and biases.

    The flat parameter order (used by the Jacobian and the model file) is
    layer-major; inside a layer the weight matrix row by row, then the biases.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[RMat, ...]
    biases: tuple[RVec, ...]
    hidden_activation: Activation = Activation.SIGMOID_SYM
    output_activation: Activation = Activation.LINEAR

    @property
    def n_params(self) -> int:
        return count_params(self.layer_sizes)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def to_vector(self) -> RVec:
        parts: list[RVec] = []
        for w, b in zip(self.weights, self.biases, strict=True):
            parts.extend((w.reshape(-1), b))
        return np.concatenate(parts)

    @classmethod
    def from_vector(
        cls,
        layer_sizes: Sequence[int],
        vector: npt.ArrayLike,
        hidden_activation: Activation = Activation.SIGMOID_SYM,
        output_activation: Activation = Activation.LINEAR,
    ) -> MlpParams:
        sizes = _check_layer_sizes(layer_sizes)
        flat = np.asarray(vector, dtype=np.float64).reshape(-1)
        if flat.size != count_params(sizes):
            raise SizeMismatchError(
                f"{flat.size} parameters given, {count_params(sizes)} expected "
                f"for layers {list(sizes)}"
            )
        weights: list[RMat] = []
        biases: list[RVec] = []
        offset = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:], strict=True):
            weights.append(flat[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            offset += fan_in * fan_out
            biases.append(flat[offset : offset + fan_out].copy())
            offset += fan_out
        return cls(
            sizes,
            tuple(weights),
            tuple(biases),
            Activation(hidden_activation),
            Activation(output_activation),
        )

    @classmethod
    def zeros(
        cls,
        layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES,
        hidden_activation: Activation = Activation.SIGMOID_SYM,
        output_activation: Activation = Activation.LINEAR,
    ) -> MlpParams:
        return cls.from_vector(
            layer_sizes,
            np.zeros(count_params(layer_sizes)),
            hidden_activation,
            output_activation,
        )


def init_params(
    layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES,
    seed: int = 1,
    hidden_activation: Activation = Activation.SIGMOID_SYM,
    output_activation: Activation = Activation.LINEAR,
) -> MlpParams:
    """Uniform in [-0.5, 0.5] scaled by 1/sqrt(fan_in), seeded."""
    sizes = _check_layer_sizes(layer_sizes)
    rng = derive_rng(seed, INIT_STREAM)
    parts: list[RVec] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:], strict=True):
        scale = 1.0 / math.sqrt(fan_in)
        parts.append(rng.uniform(-0.5, 0.5, size=(fan_in + 1) * fan_out) * scale)
    return MlpParams.from_vector(
        sizes, np.concatenate(parts), hidden_activation, output_activation
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of network inputs (interleaved re/im per antenna) and I/Q targets."""

    inputs: RMat
    targets: RMat

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("Dataset inputs and targets must be 2-D")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise SizeMismatchError(
                f"{self.inputs.shape[0]} input rows vs {self.targets.shape[0]} target rows"
            )

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def subset(self, rows: npt.ArrayLike) -> Dataset:
        idx = np.asarray(rows, dtype=np.intp)
        return Dataset(self.inputs[idx], self.targets[idx])

    @classmethod
    def from_snapshots(cls, snapshots: SnapshotMatrix, symbols: SymbolStream) -> Dataset:
        if snapshots.n_symbols != len(symbols):
            raise SizeMismatchError(
                f"{snapshots.n_symbols} snapshots vs {len(symbols)} labels"
            )
        return cls(interleave_iq(snapshots), complex_to_iq(symbols.symbols))

    @classmethod
    def concatenate(cls, parts: Sequence[Dataset]) -> Dataset:
        return cls(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
        )


def interleave_iq(snapshots: SnapshotMatrix) -> RMat:
    """T x 2N matrix [re x_0, im x_0, re x_1, im x_1, ...] per column."""
    cols = snapshots.data.T
    out = np.empty((cols.shape[0], 2 * cols.shape[1]), dtype=np.float64)
    out[:, 0::2] = cols.real
    out[:, 1::2] = cols.imag
    return out


def complex_to_iq(values: npt.ArrayLike) -> RMat:
    z = np.asarray(values, dtype=np.complex128).reshape(-1)
    return np.column_stack([z.real, z.imag])


def _forward_layers(params: MlpParams, x: RMat) -> tuple[list[RMat], list[RMat]]:
    """Pre-activations and activations of every layer (activations[0] = x)."""
    pre: list[RMat] = []
    post: list[RMat] = [x]
    last = len(params.weights) - 1
    for idx, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
        v = post[-1] @ w.T + b
        kind = params.output_activation if idx == last else params.hidden_activation
        pre.append(v)
        post.append(_activate(kind, v))
    return pre, post


def forward_batch(params: MlpParams, inputs: npt.ArrayLike) -> RMat:
    """Network outputs for every row of ``inputs``."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise SizeMismatchError(
            f"Input rows of width {x.shape[-1]} for a network expecting {params.n_inputs}"
        )
    return _forward_layers(params, x)[1][-1]


def forward(params: MlpParams, inputs: npt.ArrayLike) -> RVec:
    """Network output for a single input vector."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 1:
        raise SizeMismatchError(f"forward expects a vector, got shape {x.shape}")
    return forward_batch(params, x[None, :])[0]


def residuals(params: MlpParams, dataset: Dataset) -> RVec:
    """Errors y - t, flattened sample-major (row i*n_out + k)."""
    return (forward_batch(params, dataset.inputs) - dataset.targets).reshape(-1)


def mse(params: MlpParams, dataset: Dataset) -> float:
    return float(np.mean(residuals(params, dataset) ** 2))


def jacobian(params: MlpParams, dataset: Dataset) -> RMat:
    """
    Derivatives of every error e_ik = y_ik - t_ik w.r.t. every parameter.

    Rows follow :func:`residuals` (sample-major), columns follow
    :meth:`MlpParams.to_vector`.
    """
    if len(dataset) == 0:
        raise EmptySplitError("jacobian needs at least one sample")
    x = np.asarray(dataset.inputs, dtype=np.float64)
    if x.shape[1] != params.n_inputs:
        raise SizeMismatchError(
            f"Input rows of width {x.shape[1]} for a network expecting {params.n_inputs}"
        )
    pre, post = _forward_layers(params, x)
    n_samples, n_out = x.shape[0], params.n_outputs
    n_layers = len(params.weights)

    jac = np.empty((n_samples, n_out, params.n_params), dtype=np.float64)
    for k in range(n_out):
        delta = np.zeros((n_samples, n_out))
        delta[:, k] = _derivative(
            params.output_activation, pre[-1][:, k], post[-1][:, k]
        )
        blocks: list[RMat] = []
        for layer in range(n_layers - 1, -1, -1):
            grad_w = delta[:, :, None] * post[layer][:, None, :]
            blocks.append(delta)
            blocks.append(grad_w.reshape(n_samples, -1))
            if layer > 0:
                kind = params.hidden_activation
                delta = (delta @ params.weights[layer]) * _derivative(
                    kind, pre[layer - 1], post[layer]
                )
        jac[:, k, :] = np.concatenate(blocks[::-1], axis=1)
    return jac.reshape(n_samples * n_out, params.n_params)


@dataclass(frozen=True)
class TrainConfig:
    """Levenberg-Marquardt / Bayesian regularization settings."""

    max_epochs: int = 1000
    min_gradient: float = 1e-7
    mu_init: float = 0.005
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 1

    def __post_init__(self) -> None:
        if abs(sum(self.split) - 1.0) > 1e-9 or any(f < 0 for f in self.split):
            raise ValueError(f"split fractions must be >= 0 and sum to 1, got {self.split}")
        if not self.split[0] > 0.5:
            raise ValueError(
                f"train fraction must exceed one half, got {self.split[0]}"
            )
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass(frozen=True)
class EpochRecord:
    """
    One epoch of training. ``objective`` is E_D + (alpha / beta) E_W at the
    re-estimated hyperparameters; ``step_objective`` is the same quantity right
    after the accepted step, still at the previous epoch's alpha and beta.
    """

    epoch: int
    objective: float
    step_objective: float
    train_mse: float
    val_mse: float
    alpha: float
    beta: float
    gamma: float
    mu: float
    gradient: float
    weight_norm: float


@dataclass(frozen=True)
class TrainReport:
    """Summary of one training run: one scenario-table row plus the epoch history."""

    epochs_run: int
    best_epoch: int
    gamma: float
    n_params: int
    stopping: StoppingReason
    final_train_mse: float
    final_val_mse: float
    final_test_mse: float
    wall_time_s: float
    mu_final: float
    history: tuple[EpochRecord, ...] = field(default=(), repr=False)


def split_dataset(
    dataset: Dataset,
    split: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 1,
) -> tuple[Dataset, Dataset, Dataset]:
    """Random train/validation/test partition for ``seed``."""
    n = len(dataset)
    order = derive_rng(seed, SPLIT_STREAM).permutation(n)
    n_train = round(split[0] * n)
    n_val = round(split[1] * n)
    parts = (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )
    for name, rows in zip(("train", "validation", "test"), parts, strict=True):
        if rows.size == 0:
            raise EmptySplitError(
                f"The {name} split of {n} samples with fractions {split} is empty"
            )
    train, val, test = (dataset.subset(rows) for rows in parts)
    return train, val, test


def _evidence_update(
    n_params: int, n_errors: int, e_d: float, e_w: float, gamma: float
) -> tuple[float, float]:
    # an exact fit leaves no noise to estimate; beta = inf drops the weight prior
    alpha = gamma / (2.0 * e_w) if e_w > 0.0 else 1.0
    beta = (n_errors - gamma) / (2.0 * e_d) if e_d > 0.0 else math.inf
    return alpha, (beta if beta > 0.0 else 1.0)


def _effective_params(jac: RMat, ratio: float) -> float:
    """
    gamma = N_params - ratio * trace((J^T J + ratio I)^-1), clipped to [0, N].

    ``ratio`` is alpha / beta; this equals alpha * trace((beta J^T J + alpha I)^-1).
    """
    n_params = jac.shape[1]
    curvature = np.clip(np.linalg.eigvalsh(jac.T @ jac), 0.0, None)
    gamma = n_params - ratio * float(np.sum(1.0 / (curvature + ratio)))
    return min(max(gamma, 0.0), float(n_params))


def _lm_step(lhs: RMat, rhs: RVec) -> RVec | None:
    # None when the damped system is numerically indefinite; the caller raises mu
    try:
        return scipy.linalg.solve(lhs, rhs, assume_a="pos")
    except np.linalg.LinAlgError:
        return None


def train_bayesian_lm(
    params: MlpParams,
    dataset: Dataset,
    config: TrainConfig | None = None,
) -> tuple[MlpParams, TrainReport]:
    """
    Train with Levenberg-Marquardt plus Bayesian regularization.

    With ratio = alpha / beta every epoch solves

        (J^T J + (ratio + mu) I) dw = -(J^T e + ratio w)

    and accepts the step once E_D + ratio E_W does not increase, raising mu by
    ``mu_inc`` on every rejection and lowering it by ``mu_dec`` after
    acceptance. Then

        gamma = N_params - alpha * trace((beta J^T J + alpha I)^-1)
        alpha = gamma / (2 E_W),  beta = (N_errors - gamma) / (2 E_D)

    Training stops when the largest entry of 2 (J^T e + ratio w), the gradient
    of F / beta, falls below ``min_gradient``, after ``max_epochs`` epochs, or
    when mu exceeds ``mu_max``.

    Raises:
        EmptySplitError: if a split has no samples.
        DivergentTrainingError: if the objective becomes non-finite.
    """
    config = config or TrainConfig()
    started = time.perf_counter()
    train, val, test = split_dataset(dataset, config.split, config.seed)

    sizes = params.layer_sizes
    n_params = params.n_params
    if len(train) * params.n_outputs < n_params:
        logger.warning(
            "Training on %d samples (%d errors) for %d parameters",
            len(train),
            len(train) * params.n_outputs,
            n_params,
        )

    def unpack(vector: RVec) -> MlpParams:
        return MlpParams.from_vector(
            sizes, vector, params.hidden_activation, params.output_activation
        )

    w = params.to_vector()
    e = residuals(params, train)
    jac = jacobian(params, train)
    n_errors = e.size
    eye = np.eye(n_params)

    e_d, e_w = float(e @ e), float(w @ w)
    gamma = float(n_params)
    alpha, beta = _evidence_update(n_params, n_errors, e_d, e_w, gamma)
    ratio = alpha / beta
    objective = e_d + ratio * e_w
    if not math.isfinite(objective):
        raise DivergentTrainingError(f"Initial objective is {objective}")
    mu = config.mu_init

    best_w, best_epoch = w, 0
    best_val = mse(params, val)
    history = [
        EpochRecord(0, objective, objective, e_d / n_errors, best_val, alpha, beta,
                    gamma, mu, float(np.max(np.abs(2.0 * (jac.T @ e + ratio * w)))),
                    math.sqrt(e_w))
    ]

    stopping = StoppingReason.MAX_EPOCHS
    epoch = 0
    while epoch < config.max_epochs:
        jj = jac.T @ jac
        je = jac.T @ e
        gradient = 2.0 * (je + ratio * w)
        if float(np.max(np.abs(gradient))) < config.min_gradient:
            stopping = StoppingReason.MIN_GRADIENT
            break

        accepted = False
        while mu <= config.mu_max:
            step = _lm_step(jj + (ratio + mu) * eye, -(je + ratio * w))
            if step is not None:
                w_new = w + step
                e_new = residuals(unpack(w_new), train)
                e_d_new, e_w_new = float(e_new @ e_new), float(w_new @ w_new)
                step_objective = e_d_new + ratio * e_w_new
                if not math.isfinite(step_objective):
                    raise DivergentTrainingError(
                        f"Objective became {step_objective} at epoch {epoch + 1}"
                    )
                if step_objective <= objective:
                    accepted = True
                    break
            mu *= config.mu_inc
        if not accepted:
            stopping = StoppingReason.MU_OVERFLOW
            break

        epoch += 1
        mu *= config.mu_dec
        w, e, e_d, e_w = w_new, e_new, e_d_new, e_w_new
        current = unpack(w)
        jac = jacobian(current, train)

        gamma = _effective_params(jac, ratio)
        alpha, beta = _evidence_update(n_params, n_errors, e_d, e_w, gamma)
        ratio = alpha / beta
        objective = e_d + ratio * e_w
        if not math.isfinite(objective):
            raise DivergentTrainingError(f"Objective became {objective} at epoch {epoch}")

        val_mse = mse(current, val)
        if val_mse < best_val:
            best_val, best_w, best_epoch = val_mse, w, epoch

        grad_norm = float(np.max(np.abs(2.0 * (jac.T @ e + ratio * w))))
        history.append(
            EpochRecord(epoch, objective, step_objective, e_d / n_errors, val_mse, alpha,
                        beta, gamma, mu, grad_norm, math.sqrt(e_w))
        )
        logger.debug(
            "epoch %d: F/beta=%.6g mse=%.4g val=%.4g alpha=%.3g beta=%.3g gamma=%.2f "
            "mu=%.1e grad=%.2e",
            epoch, objective, e_d / n_errors, val_mse, alpha, beta, gamma, mu, grad_norm,
        )

    best = unpack(best_w)
    report = TrainReport(
        epochs_run=epoch,
        best_epoch=best_epoch,
        gamma=history[best_epoch].gamma,
        n_params=n_params,
        stopping=stopping,
        final_train_mse=mse(best, train),
        final_val_mse=mse(best, val),
        final_test_mse=mse(best, test),
        wall_time_s=time.perf_counter() - started,
        mu_final=mu,
        history=tuple(history),
    )
    logger.info(
        "Trained %s in %d epochs (best %d, gamma %.1f/%d, %s)",
        list(sizes), epoch, best_epoch, report.gamma, n_params, stopping.value,
    )
    return best, report


def soft_outputs(params: MlpParams, snapshots: SnapshotMatrix) -> npt.NDArray[np.complex128]:
    """Network output pairs as complex symbol estimates."""
    if 2 * snapshots.n_antennas != params.n_inputs:
        raise SizeMismatchError(
            f"{snapshots.n_antennas} antennas give {2 * snapshots.n_antennas} inputs; "
            f"the network expects {params.n_inputs}"
        )
    out = forward_batch(params, interleave_iq(snapshots))
    return out[:, 0] + 1j * out[:, 1]


def equalize(params: MlpParams, snapshots: SnapshotMatrix) -> SymbolStream:
    """Nearest-QPSK decisions on the network output for every snapshot."""
    return qpsk_decide(soft_outputs(params, snapshots))


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def dumps_model(params: MlpParams) -> str:
    document = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hidden_activation": params.hidden_activation.value,
        "output_activation": params.output_activation.value,
        "layer_sizes": list(params.layer_sizes),
        "parameters": [{"value": float(v)} for v in params.to_vector()],
    }
    return ToonCodec().encode(document, header="fdxsic trained equalizer")


def loads_model(text: str) -> MlpParams:
    doc = ToonCodec().decode(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigError(f"Not an fdxsic model file (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise ConfigError(f"Unsupported model version {doc.get('version')!r}")
    try:
        sizes = [int(s) for s in doc["layer_sizes"]]
        values = [float(row["value"]) for row in doc["parameters"]]
        hidden = Activation(doc.get("hidden_activation", Activation.SIGMOID_SYM.value))
        output = Activation(doc.get("output_activation", Activation.LINEAR.value))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Malformed model file: {exc}") from exc
    return MlpParams.from_vector(sizes, values, hidden, output)


def save_model(params: MlpParams, path: Path) -> None:
    Path(path).write_text(dumps_model(params), encoding="utf-8")


def load_model(path: Path) -> MlpParams:
    return loads_model(Path(path).read_text(encoding="utf-8"))
