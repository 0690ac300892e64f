"""
Monte-Carlo experiments: BER curves, neuron sweeps, per-scenario training
reports, beam patterns and the activation collapse comparison.

Every experiment is a pure function of its plan and seed. Independent work
units (SNR points, widths, scenarios) derive their own random streams and run
on a thread pool; results are collected in submission order, so serial and
parallel runs produce identical numbers.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import numpy.typing as npt
from scipy.special import erfc

from .beamform import (
    DEFAULT_DROP_RATIO,
    BeamWeights,
    Method,
    apply_weights,
    beam_pattern,
    build_constraints_evd,
    build_constraints_oracle,
    conventional_weights,
    lcmv_weights,
    mvdr_weights,
    optimum_sinr,
    sample_covariance,
)
from .config import ScenarioConfig
from .errors import ConfigError, NoSharpDropError, UnwritableOutputError, UsageError
from .neuralnet import (
    Activation,
    Dataset,
    MlpParams,
    StoppingReason,
    TrainConfig,
    TrainReport,
    equalize,
    init_params,
    train_bayesian_lm,
)
from .sigmodel import (
    PAYLOAD_STREAM,
    SI_STREAM,
    Scenario,
    SnapshotMatrix,
    SymbolStream,
    analytic_covariance,
    derive_rng,
    pilot_symbols,
    qpsk_demodulate,
    random_symbols,
    steering_vector,
    synthesize,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

ANN = "ann"
MATCHED_BOUND = "matched_bound"
BER_METHODS = (
    Method.CONVENTIONAL.value,
    Method.MVDR.value,
    Method.LCMV_ORACLE.value,
    Method.LCMV_EVD.value,
    ANN,
    MATCHED_BOUND,
)
PATTERN_ALIASES = {"lcmv": Method.LCMV_ORACLE.value}
QUADRANTS = ("00", "01", "11", "10")
_QUADRANT_INDEX = np.array([0, 1, 3, 2], dtype=np.intp)
# (hidden, output) activations compared by run_relu_collapse
COLLAPSE_VARIANTS = (
    (Activation.SIGMOID_SYM, Activation.LINEAR),
    (Activation.RELU, Activation.RELU),
)
THREADS_ENV = "FDXSIC_THREADS"

BER_STREAM = 21
SWEEP_STREAM = 22
PATTERN_STREAM = 23


# ---------------------------------------------------------------------------
# Plan and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPlan:
    """
    Everything an experiment needs besides the output location.

    ``snr_db`` is the per-antenna input SNR; the scenario's noise power is
    set to ``-snr_db`` for each point (the desired user has unit power).
    """

    config: ScenarioConfig
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    blocks: int = 20
    methods: tuple[str, ...] = BER_METHODS
    seed: int = 1
    hidden_layers: tuple[int, ...] = (2,)
    hidden_activation: Activation = Activation.SIGMOID_SYM
    train: TrainConfig = field(default_factory=TrainConfig)
    train_blocks: int = 10
    per_block_training: bool = False
    drop_ratio: float = DEFAULT_DROP_RATIO
    threads: int | None = None

    def __post_init__(self) -> None:
        if not self.snr_db:
            raise ValueError("snr_db must not be empty")
        if self.blocks < 1 or self.train_blocks < 1:
            raise ValueError(
                f"blocks and train_blocks must be >= 1, got {self.blocks}, {self.train_blocks}"
            )
        unknown = [m for m in self.methods if m not in BER_METHODS]
        if unknown:
            raise ValueError(
                f"Unknown methods {unknown}; choose from {', '.join(BER_METHODS)}"
            )

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (2 * self.config.geometry.n_antennas, *self.hidden_layers, 2)

    @property
    def eval_blocks(self) -> range:
        """Payload blocks scored; all blocks when none remain after training."""
        if self.blocks > self.train_blocks:
            return range(self.train_blocks, self.blocks)
        return range(self.blocks)


@dataclass(frozen=True)
class BerPoint:
    """
    Bit errors of one method at one SNR.

    For ``matched_bound`` rows ``ber`` is the analytic value and
    ``bit_errors`` its expected count over ``bits_total`` bits.
    """

    snr_db: float
    method: str
    bit_errors: int
    bits_total: int
    ber: float
    stderr: float


@dataclass(frozen=True)
class SweepResult:
    n_neurons: int
    val_mse: float
    best_epoch: int


@dataclass(frozen=True)
class ScenarioReport:
    label: str
    report: TrainReport


@dataclass(frozen=True, eq=False)
class PatternCurve:
    method: str
    angles_deg: npt.NDArray[np.float64]
    gains_db: npt.NDArray[np.float64]


@dataclass(frozen=True)
class CollapseRow:
    """Per-quadrant decisions of one equalizer on the payload symbols."""

    activation: str
    quadrant: str
    sent: int
    decided: int
    symbol_errors: int


@dataclass(frozen=True, eq=False)
class _Block:
    snapshots: SnapshotMatrix
    desired: SymbolStream


# ---------------------------------------------------------------------------
# Plan documents
# ---------------------------------------------------------------------------


def plan_document(plan: ExperimentPlan) -> dict[str, Any]:
    """Flat ``plan.*`` keys of everything that affects results."""
    t = plan.train
    return {
        "plan.blocks": plan.blocks,
        "plan.train_blocks": plan.train_blocks,
        "plan.per_block_training": plan.per_block_training,
        "plan.hidden_activation": plan.hidden_activation.value,
        "plan.drop_ratio": float(plan.drop_ratio),
        "plan.max_epochs": t.max_epochs,
        "plan.min_gradient": float(t.min_gradient),
        "plan.mu_init": float(t.mu_init),
        "plan.mu_inc": float(t.mu_inc),
        "plan.mu_dec": float(t.mu_dec),
        "plan.mu_max": float(t.mu_max),
        "plan.snr_db": [float(v) for v in plan.snr_db],
        "plan.methods": list(plan.methods),
        "plan.hidden_layers": list(plan.hidden_layers),
        "plan.split": [float(v) for v in t.split],
    }


def plan_from_document(
    config: ScenarioConfig,
    doc: dict[str, Any],
    *,
    seed: int,
    threads: int | None = None,
) -> ExperimentPlan:
    """
    Inverse of :func:`plan_document`; missing keys take the defaults.

    Raises:
        ConfigError: for values of the wrong type or out of range.
    """
    base = ExperimentPlan(config=config, seed=seed, threads=threads)
    d = {**plan_document(base), **doc}
    try:
        split = tuple(float(v) for v in d["plan.split"])
        if len(split) != 3:
            raise ValueError(f"plan.split needs three fractions, got {list(split)}")
        train = TrainConfig(
            max_epochs=int(d["plan.max_epochs"]),
            min_gradient=float(d["plan.min_gradient"]),
            mu_init=float(d["plan.mu_init"]),
            mu_inc=float(d["plan.mu_inc"]),
            mu_dec=float(d["plan.mu_dec"]),
            mu_max=float(d["plan.mu_max"]),
            split=(split[0], split[1], split[2]),
            seed=seed,
        )
        return replace(
            base,
            snr_db=tuple(float(v) for v in d["plan.snr_db"]),
            blocks=int(d["plan.blocks"]),
            methods=tuple(PATTERN_ALIASES.get(str(m), str(m)) for m in d["plan.methods"]),
            hidden_layers=tuple(int(v) for v in d["plan.hidden_layers"]),
            hidden_activation=Activation(d["plan.hidden_activation"]),
            train=train,
            train_blocks=int(d["plan.train_blocks"]),
            per_block_training=bool(d["plan.per_block_training"]),
            drop_ratio=float(d["plan.drop_ratio"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid plan: {exc}") from exc


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def qfunc(x: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Gaussian tail probability Q(x) = erfc(x / sqrt 2) / 2."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def qpsk_ber_bound(sinr: float) -> float:
    """Gray QPSK bit error rate Q(sqrt(SINR)) for a unit-energy symbol."""
    return float(qfunc(math.sqrt(max(sinr, 0.0))))


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def _map_ordered(fn: Callable[[T], Any], items: Sequence[T], threads: int | None) -> list[Any]:
    n = min(worker_count(threads), len(items))
    if n <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _join(first: SymbolStream, second: SymbolStream) -> SymbolStream:
    return SymbolStream(
        symbols=np.concatenate([first.symbols, second.symbols]),
        bits=np.concatenate([first.bits, second.bits]),
    )


def _make_block(
    config: ScenarioConfig, scenario: Scenario, seed: int, *ids: int
) -> _Block:
    """One frame: shared pilot prefix, random payload, fresh SI and noise."""
    frame = config.frame
    block_seed = np.random.SeedSequence(entropy=seed, spawn_key=ids)
    payload = random_symbols(derive_rng(block_seed, PAYLOAD_STREAM), frame.n_payload)
    desired = _join(pilot_symbols(frame, seed), payload)
    si = random_symbols(
        derive_rng(block_seed, SI_STREAM), frame.block_len + scenario.max_delay
    )
    snapshots = synthesize(scenario, config.geometry, frame, desired, si, block_seed)
    return _Block(snapshots=snapshots, desired=desired)


def _pilot_dataset(config: ScenarioConfig, blocks: Iterable[_Block]) -> Dataset:
    n_pilots = config.frame.n_pilots
    return Dataset.concatenate(
        [
            Dataset.from_snapshots(
                b.snapshots.columns(0, n_pilots), b.desired.slice(0, n_pilots)
            )
            for b in blocks
        ]
    )


def _train(
    plan: ExperimentPlan, dataset: Dataset, layer_sizes: Sequence[int] | None = None,
    activations: tuple[Activation, Activation] | None = None,
) -> tuple[MlpParams, TrainReport]:
    hidden, output = activations or (plan.hidden_activation, Activation.LINEAR)
    params = init_params(
        layer_sizes or plan.layer_sizes,
        seed=plan.seed,
        hidden_activation=hidden,
        output_activation=output,
    )
    return train_bayesian_lm(params, dataset, replace(plan.train, seed=plan.seed))


def _evd_weights(
    snapshots: SnapshotMatrix, steering_d: npt.NDArray[np.complex128], drop_ratio: float
) -> BeamWeights:
    try:
        constraints, selection = build_constraints_evd(snapshots, steering_d, drop_ratio)
    except NoSharpDropError as exc:
        # sample-matrix MVDR: only the distortionless constraint
        logger.info("lcmv_evd falls back to the desired constraint only: %s", exc)
        return replace(
            mvdr_weights(sample_covariance(snapshots), steering_d), method=Method.LCMV_EVD
        )
    logger.debug("lcmv_evd: %d interferers selected", selection.n_interferers)
    return lcmv_weights(sample_covariance(snapshots), constraints, method=Method.LCMV_EVD)


def _fixed_weights(
    config: ScenarioConfig, scenario: Scenario, methods: Iterable[str]
) -> dict[str, BeamWeights]:
    geometry = config.geometry
    a_d = steering_vector(geometry, scenario.desired_angle_deg)
    out: dict[str, BeamWeights] = {}
    for method in methods:
        if method == Method.CONVENTIONAL.value:
            out[method] = conventional_weights(geometry, scenario.desired_angle_deg)
        elif method == Method.MVDR.value:
            out[method] = mvdr_weights(analytic_covariance(scenario, geometry), a_d)
        elif method == Method.LCMV_ORACLE.value:
            out[method] = lcmv_weights(
                analytic_covariance(scenario, geometry),
                build_constraints_oracle(geometry, scenario),
            )
    return out


def _stderr(errors: int, total: int) -> float:
    p = errors / total
    return math.sqrt(p * (1.0 - p) / total)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_ber(plan: ExperimentPlan) -> list[BerPoint]:
    """
    Bit error rate of every method at every SNR of the plan.

    Fixed beamformers use the analytic interference-plus-noise covariance;
    ``lcmv_evd`` builds its constraints per block from the block's sample
    covariance; ``ann`` is trained on the pilots of the first
    ``train_blocks`` blocks (or per block with ``per_block_training``).
    Rows are ordered by SNR, then by method as listed in the plan.
    """
    points = _map_ordered(
        lambda idx: _run_ber_point(plan, idx), range(len(plan.snr_db)), plan.threads
    )
    return [p for group in points for p in group]


def _run_ber_point(plan: ExperimentPlan, snr_index: int) -> list[BerPoint]:
    config = plan.config
    snr = plan.snr_db[snr_index]
    scenario = config.scenario.with_noise(-snr)
    frame = config.frame
    n_pilots = frame.n_pilots
    a_d = steering_vector(config.geometry, scenario.desired_angle_deg)

    blocks = [
        _make_block(config, scenario, plan.seed, BER_STREAM, snr_index, b)
        for b in range(plan.blocks)
    ]
    fixed = _fixed_weights(config, scenario, plan.methods)

    shared_net: MlpParams | None = None
    if ANN in plan.methods and not plan.per_block_training:
        shared_net, _ = _train(plan, _pilot_dataset(config, blocks[: plan.train_blocks]))

    errors = dict.fromkeys(plan.methods, 0)
    total = 0
    for b in plan.eval_blocks:
        block = blocks[b]
        payload = block.snapshots.columns(n_pilots, frame.block_len)
        truth = block.desired.slice(n_pilots, frame.block_len).bits
        total += truth.size
        for method in plan.methods:
            if method == MATCHED_BOUND:
                continue
            if method == ANN:
                net = shared_net
                if net is None:
                    net, _ = _train(plan, _pilot_dataset(config, [block]))
                decided = equalize(net, payload).bits
            else:
                weights = fixed.get(method) or _evd_weights(
                    block.snapshots, a_d, plan.drop_ratio
                )
                decided = qpsk_demodulate(apply_weights(weights, payload))
            errors[method] += int(np.count_nonzero(decided != truth))

    points = []
    for method in plan.methods:
        if method == MATCHED_BOUND:
            sinr = optimum_sinr(a_d, analytic_covariance(scenario, config.geometry))
            ber = qpsk_ber_bound(sinr)
            points.append(BerPoint(snr, method, round(ber * total), total, ber, 0.0))
        else:
            n_err = errors[method]
            points.append(
                BerPoint(snr, method, n_err, total, n_err / total, _stderr(n_err, total))
            )
    logger.info(
        "SNR %g dB: %s",
        snr,
        ", ".join(f"{p.method}={p.ber:.3e}" for p in points),
    )
    return points


def run_neuron_sweep(plan: ExperimentPlan, widths: Sequence[int]) -> list[SweepResult]:
    """
    Train one single-hidden-layer network per width on identical pilot data
    (the first SNR of the plan) and report its validation MSE.
    """
    if not widths:
        raise UsageError("run_neuron_sweep needs at least one width")
    bad = [w for w in widths if w < 1]
    if bad:
        raise UsageError(f"Hidden widths must be >= 1, got {bad}")

    config = plan.config
    scenario = config.scenario.with_noise(-plan.snr_db[0])
    blocks = [
        _make_block(config, scenario, plan.seed, SWEEP_STREAM, b)
        for b in range(plan.train_blocks)
    ]
    dataset = _pilot_dataset(config, blocks)
    n_inputs = 2 * config.geometry.n_antennas

    def one(width: int) -> SweepResult:
        _, report = _train(plan, dataset, layer_sizes=(n_inputs, width, 2))
        logger.info(
            "width %d: val mse %.4e, best epoch %d", width, report.final_val_mse,
            report.best_epoch,
        )
        return SweepResult(width, report.final_val_mse, report.best_epoch)

    return _map_ordered(one, list(widths), plan.threads)


def run_scenarios(
    configs: Sequence[ScenarioConfig], plan: ExperimentPlan
) -> list[ScenarioReport]:
    """Training report per scenario, each at its own configured noise power."""

    def one(config: ScenarioConfig) -> ScenarioReport:
        local = replace(plan, config=config)
        blocks = [
            _make_block(config, config.scenario, plan.seed, SWEEP_STREAM, b)
            for b in range(plan.train_blocks)
        ]
        _, report = _train(local, _pilot_dataset(config, blocks))
        if report.stopping is not StoppingReason.MIN_GRADIENT:
            logger.warning(
                "Scenario %s stopped by %s", config.label, report.stopping.value
            )
        logger.info(
            "Scenario %s: %d epochs (best %d), gamma %.1f", config.label,
            report.epochs_run, report.best_epoch, report.gamma,
        )
        return ScenarioReport(config.label, report)

    return _map_ordered(one, list(configs), plan.threads)


def run_training(plan: ExperimentPlan) -> tuple[MlpParams, TrainReport]:
    """Train the plan's equalizer on the pilots of ``train_blocks`` blocks at the first SNR."""
    config = plan.config
    scenario = config.scenario.with_noise(-plan.snr_db[0])
    blocks = [
        _make_block(config, scenario, plan.seed, BER_STREAM, 0, b)
        for b in range(plan.train_blocks)
    ]
    return _train(plan, _pilot_dataset(config, blocks))


def default_pattern_grid() -> npt.NDArray[np.float64]:
    """1-degree grid over (-180, 180]."""
    return np.arange(-179.0, 181.0, 1.0)


def run_beampatterns(
    config: ScenarioConfig,
    methods: Sequence[str],
    *,
    seed: int = 1,
    grid: npt.ArrayLike | None = None,
    drop_ratio: float = DEFAULT_DROP_RATIO,
) -> list[PatternCurve]:
    """
    Gain in dB of each beamformer over the angle grid.

    ``lcmv`` is accepted for ``lcmv_oracle``. ``lcmv_evd`` uses one synthesized
    block at the scenario's noise power.
    """
    angles = default_pattern_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    names = [PATTERN_ALIASES.get(m, m) for m in methods]
    allowed = {m.value for m in Method}
    unknown = [m for m in names if m not in allowed]
    if unknown:
        raise UsageError(
            f"No beam pattern for {unknown}; choose from {', '.join(sorted(allowed))}"
        )

    scenario = config.scenario
    fixed = _fixed_weights(config, scenario, names)
    curves = []
    for name in names:
        weights = fixed.get(name)
        if weights is None:
            block = _make_block(config, scenario, seed, PATTERN_STREAM)
            a_d = steering_vector(config.geometry, scenario.desired_angle_deg)
            weights = _evd_weights(block.snapshots, a_d, drop_ratio)
        curves.append(PatternCurve(name, angles, beam_pattern(weights, config.geometry, angles)))
    return curves


def run_relu_collapse(plan: ExperimentPlan) -> list[CollapseRow]:
    """
    Train a symmetric-sigmoid equalizer with a linear output and a ReLU
    equalizer whose output I/Q pass through ReLU, then count payload decisions
    per QPSK quadrant. The ReLU outputs are never negative, so every symbol is
    decided as 00 and the other three quadrants carry all the errors.
    """
    config = plan.config
    scenario = config.scenario.with_noise(-plan.snr_db[0])
    frame = config.frame
    blocks = [
        _make_block(config, scenario, plan.seed, BER_STREAM, 0, b)
        for b in range(plan.blocks)
    ]
    dataset = _pilot_dataset(config, blocks[: plan.train_blocks])

    rows: list[CollapseRow] = []
    for hidden, output in COLLAPSE_VARIANTS:
        net, _ = _train(plan, dataset, activations=(hidden, output))
        sent_codes: list[npt.NDArray[np.intp]] = []
        got_codes: list[npt.NDArray[np.intp]] = []
        for b in plan.eval_blocks:
            block = blocks[b]
            payload = block.snapshots.columns(frame.n_pilots, frame.block_len)
            truth = block.desired.slice(frame.n_pilots, frame.block_len).bits
            sent_codes.append(_quadrant_codes(truth))
            got_codes.append(_quadrant_codes(equalize(net, payload).bits))
        sent = np.concatenate(sent_codes)
        got = np.concatenate(got_codes)
        for code, label in enumerate(QUADRANTS):
            mask = sent == code
            rows.append(
                CollapseRow(
                    activation=hidden.value,
                    quadrant=label,
                    sent=int(np.count_nonzero(mask)),
                    decided=int(np.count_nonzero(got == code)),
                    symbol_errors=int(np.count_nonzero(got[mask] != code)),
                )
            )
    return rows


def _quadrant_codes(bits: npt.NDArray[np.uint8]) -> npt.NDArray[np.intp]:
    pairs = bits.reshape(-1, 2).astype(np.intp)
    return _QUADRANT_INDEX[2 * pairs[:, 0] + pairs[:, 1]]


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise UnwritableOutputError(f"Cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_ber_csv(points: Iterable[BerPoint], path: Path) -> Path:
    return _write_rows(
        path,
        ("snr_db", "method", "bits", "errors", "ber", "stderr"),
        ((p.snr_db, p.method, p.bits_total, p.bit_errors, p.ber, p.stderr) for p in points),
    )


def write_sweep_csv(results: Iterable[SweepResult], path: Path) -> Path:
    return _write_rows(
        path,
        ("n_neurons", "val_mse", "best_epoch"),
        ((r.n_neurons, r.val_mse, r.best_epoch) for r in results),
    )


def write_pattern_csv(curves: Iterable[PatternCurve], path: Path) -> Path:
    return _write_rows(
        path,
        ("angle_deg", "method", "gain_db"),
        (
            (float(angle), curve.method, float(gain))
            for curve in curves
            for angle, gain in zip(curve.angles_deg, curve.gains_db, strict=True)
        ),
    )


def write_table1_csv(reports: Iterable[ScenarioReport], path: Path) -> Path:
    """Per-scenario training summary; ``time_s`` is the only non-reproducible column."""
    return _write_rows(
        path,
        ("label", "epochs", "best_epoch", "n_params", "gamma", "stopping", "time_s"),
        (
            (
                r.label,
                r.report.epochs_run,
                r.report.best_epoch,
                r.report.n_params,
                r.report.gamma,
                r.report.stopping.value,
                round(r.report.wall_time_s, 3),
            )
            for r in reports
        ),
    )


def write_collapse_csv(rows: Iterable[CollapseRow], path: Path) -> Path:
    return _write_rows(
        path,
        ("activation", "quadrant", "sent", "decided", "symbol_errors"),
        ((r.activation, r.quadrant, r.sent, r.decided, r.symbol_errors) for r in rows),
    )


def write_history_csv(report: TrainReport, path: Path) -> Path:
    return _write_rows(
        path,
        ("epoch", "objective", "train_mse", "val_mse", "alpha", "beta", "gamma", "mu",
         "gradient", "weight_norm", "step_objective"),
        (
            (r.epoch, r.objective, r.train_mse, r.val_mse, r.alpha, r.beta, r.gamma, r.mu,
             r.gradient, r.weight_norm, r.step_objective)
            for r in report.history
        ),
    )
