"""
Tests for the Monte-Carlo experiments and their CSV output.
"""

import csv
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from fdxsic.beamform import (
    build_constraints_oracle,
    conventional_weights,
    lcmv_weights,
    mvdr_weights,
    output_sinr,
)
from fdxsic.config import PRESET_NAMES, ScenarioConfig, load_presets, load_scenario
from fdxsic.errors import ConfigError, UnwritableOutputError, UsageError
from fdxsic.harness import (
    MATCHED_BOUND,
    ExperimentPlan,
    _quadrant_codes,
    plan_document,
    plan_from_document,
    qfunc,
    qpsk_ber_bound,
    run_ber,
    run_beampatterns,
    run_neuron_sweep,
    run_relu_collapse,
    run_scenarios,
    run_training,
    worker_count,
    write_ber_csv,
    write_pattern_csv,
    write_table1_csv,
)
from fdxsic.neuralnet import StoppingReason, TrainConfig
from fdxsic.sigmodel import (
    ArrayGeometry,
    FrameSpec,
    Scenario,
    analytic_covariance,
    steering_vector,
)

QUICK_TRAIN = TrainConfig(max_epochs=5)


@pytest.fixture(scope="module")
def epa() -> ScenarioConfig:
    return load_scenario("epa")


@pytest.fixture(scope="module")
def clean() -> ScenarioConfig:
    return ScenarioConfig(
        scenario=Scenario("clean", 30.0, (), (), (), -20.0),
        geometry=ArrayGeometry(),
        frame=FrameSpec(),
    )


def _by_method(points, snr: float) -> dict:
    return {p.method: p for p in points if p.snr_db == snr}


# ---------------------------------------------------------------------------
# Helpers and plans
# ---------------------------------------------------------------------------


@pytest.mark.unit
def test_qfunc_values() -> None:
    assert float(qfunc(0.0)) == pytest.approx(0.5)
    assert float(qfunc(1.0)) == pytest.approx(0.158655253931457, rel=1e-12)
    assert qpsk_ber_bound(0.0) == pytest.approx(0.5)
    assert qpsk_ber_bound(1e6) == 0.0


@pytest.mark.unit
def test_worker_count_from_argument_and_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("FDXSIC_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(0) == 1
    assert worker_count(5) == 5

    monkeypatch.setenv("FDXSIC_THREADS", "many")
    with pytest.raises(ConfigError, match="FDXSIC_THREADS"):
        worker_count()


@pytest.mark.unit
def test_plan_validation(epa: ScenarioConfig) -> None:
    with pytest.raises(ValueError, match="snr_db"):
        ExperimentPlan(config=epa, snr_db=())
    with pytest.raises(ValueError, match="Unknown methods"):
        ExperimentPlan(config=epa, methods=("mvdr", "zf"))
    with pytest.raises(ValueError, match="blocks"):
        ExperimentPlan(config=epa, blocks=0)


@pytest.mark.unit
def test_plan_layer_sizes_and_eval_blocks(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(config=epa, blocks=20, train_blocks=10)

    assert plan.layer_sizes == (20, 2, 2)
    assert plan.eval_blocks == range(10, 20)
    assert ExperimentPlan(config=epa, blocks=3, train_blocks=5).eval_blocks == range(3)


@pytest.mark.unit
def test_plan_document_round_trip(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=epa,
        snr_db=(3.0, 9.0),
        blocks=7,
        methods=("mvdr", "ann"),
        seed=4,
        hidden_layers=(5, 3),
        train=TrainConfig(max_epochs=12, seed=4),
        train_blocks=2,
    )

    rebuilt = plan_from_document(epa, plan_document(plan), seed=4)

    assert rebuilt == plan


@pytest.mark.unit
def test_plan_from_document_accepts_lcmv_alias(epa: ScenarioConfig) -> None:
    plan = plan_from_document(epa, {"plan.methods": ["lcmv", "mvdr"]}, seed=1)

    assert plan.methods == ("lcmv_oracle", "mvdr")


@pytest.mark.unit
@pytest.mark.parametrize(
    "doc",
    [
        {"plan.blocks": "many"},
        {"plan.blocks": 0},
        {"plan.split": [0.5, 0.5]},
        {"plan.hidden_activation": "softmax"},
    ],
)
def test_plan_from_document_rejects_bad_values(epa: ScenarioConfig, doc: dict) -> None:
    with pytest.raises(ConfigError, match="Invalid plan"):
        plan_from_document(epa, doc, seed=1)


@pytest.mark.unit
def test_quadrant_codes_follow_gray_order() -> None:
    bits = np.array([0, 0, 0, 1, 1, 1, 1, 0], dtype=np.uint8)

    np.testing.assert_array_equal(_quadrant_codes(bits), [0, 1, 2, 3])


# ---------------------------------------------------------------------------
# BER
# ---------------------------------------------------------------------------


@pytest.mark.integration
def test_high_snr_without_interference_is_error_free(clean: ScenarioConfig) -> None:
    plan = ExperimentPlan(config=clean, snr_db=(60.0,), blocks=2, train_blocks=1)

    points = run_ber(plan)

    assert [p.method for p in points] == list(plan.methods)
    for p in points:
        assert p.bit_errors == 0, p.method
        assert p.bits_total == 1800
        assert p.ber == 0.0


@pytest.mark.integration
def test_epa_beamformer_ordering(epa: ScenarioConfig) -> None:
    """Adaptive nulling beats the conventional beam under strong self-interference."""
    plan = ExperimentPlan(
        config=epa,
        snr_db=(0.0,),
        blocks=6,
        train_blocks=2,
        methods=("conventional", "mvdr", "lcmv_oracle", "lcmv_evd", MATCHED_BOUND),
    )

    got = _by_method(run_ber(plan), 0.0)

    assert got["conventional"].bits_total == 4 * 1800
    assert got["mvdr"].ber < got["conventional"].ber
    assert got["lcmv_oracle"].ber < got["conventional"].ber
    assert got["lcmv_evd"].ber <= got["conventional"].ber
    assert got[MATCHED_BOUND].ber < got["conventional"].ber
    assert got[MATCHED_BOUND].stderr == 0.0
    assert got[MATCHED_BOUND].bit_errors == round(got[MATCHED_BOUND].ber * 4 * 1800)


@pytest.mark.integration
@pytest.mark.parametrize("name", PRESET_NAMES)
def test_mvdr_never_loses_to_conventional_on_presets(name: str) -> None:
    config = load_scenario(name)
    plan = ExperimentPlan(
        config=config,
        snr_db=(-3.0,),
        blocks=11,
        train_blocks=1,
        methods=("conventional", "mvdr", "lcmv_oracle"),
    )
    scenario = config.scenario.with_noise(3.0)
    cov = analytic_covariance(scenario, config.geometry)
    a_d = steering_vector(config.geometry, scenario.desired_angle_deg)
    conventional_sinr = output_sinr(
        conventional_weights(config.geometry, scenario.desired_angle_deg), a_d, cov
    )
    lcmv_sinr = output_sinr(
        lcmv_weights(cov, build_constraints_oracle(config.geometry, scenario)), a_d, cov
    )

    got = _by_method(run_ber(plan), -3.0)

    conv = got["conventional"]
    for method in ("mvdr", "lcmv_oracle"):
        if method == "lcmv_oracle" and lcmv_sinr < conventional_sinr:
            continue
        mine = got[method]
        assert mine.ber <= conv.ber + 3.0 * math.hypot(mine.stderr, conv.stderr), method


@pytest.mark.unit
def test_oracle_nulls_next_to_the_desired_user_cost_more_than_they_remove() -> None:
    """S1 returns paths at 149 and 146 degrees, which fold onto 31 and 34."""
    config = load_scenario("s1")
    scenario = config.scenario.with_noise(3.0)
    cov = analytic_covariance(scenario, config.geometry)
    a_d = steering_vector(config.geometry, scenario.desired_angle_deg)

    lcmv = lcmv_weights(cov, build_constraints_oracle(config.geometry, scenario))
    conventional = conventional_weights(config.geometry, scenario.desired_angle_deg)

    assert output_sinr(lcmv, a_d, cov) < output_sinr(conventional, a_d, cov)
    assert output_sinr(mvdr_weights(cov, a_d), a_d, cov) >= output_sinr(conventional, a_d, cov)


@pytest.mark.unit
def test_ber_rows_are_ordered_by_snr_then_method(clean: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=clean,
        snr_db=(0.0, 5.0),
        blocks=2,
        train_blocks=1,
        methods=("mvdr", "conventional"),
    )

    points = run_ber(plan)

    assert [(p.snr_db, p.method) for p in points] == [
        (0.0, "mvdr"),
        (0.0, "conventional"),
        (5.0, "mvdr"),
        (5.0, "conventional"),
    ]


@pytest.mark.integration
def test_serial_and_parallel_runs_agree(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=epa,
        snr_db=(0.0, 5.0, 10.0),
        blocks=2,
        train_blocks=1,
        methods=("conventional", "lcmv_evd", "ann", MATCHED_BOUND),
        train=QUICK_TRAIN,
    )

    serial = run_ber(replace(plan, threads=1))
    parallel = run_ber(replace(plan, threads=3))

    assert serial == parallel


@pytest.mark.unit
def test_ber_depends_on_seed(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=epa,
        snr_db=(-10.0,),
        blocks=2,
        train_blocks=1,
        methods=("conventional", "mvdr", "lcmv_oracle"),
    )

    a = run_ber(plan)
    b = run_ber(plan)
    c = run_ber(replace(plan, seed=2))

    assert a == b
    assert [p.bit_errors for p in a] != [p.bit_errors for p in c]


@pytest.mark.integration
def test_per_block_training_scores_every_eval_block(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=epa,
        snr_db=(20.0,),
        blocks=3,
        train_blocks=1,
        methods=("ann",),
        per_block_training=True,
        train=QUICK_TRAIN,
    )

    (point,) = run_ber(plan)

    assert point.bits_total == 2 * 1800
    assert 0.0 <= point.ber <= 1.0


# ---------------------------------------------------------------------------
# Sweeps, scenarios, training
# ---------------------------------------------------------------------------


@pytest.mark.unit
@pytest.mark.parametrize("widths", [[], [2, 0]])
def test_neuron_sweep_rejects_bad_widths(epa: ScenarioConfig, widths: list[int]) -> None:
    with pytest.raises(UsageError):
        run_neuron_sweep(ExperimentPlan(config=epa), widths)


@pytest.mark.integration
def test_neuron_sweep_is_deterministic_across_thread_counts(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(config=epa, snr_db=(10.0,), train_blocks=2, train=QUICK_TRAIN)

    serial = run_neuron_sweep(replace(plan, threads=1), [1, 2, 3])
    parallel = run_neuron_sweep(replace(plan, threads=3), [1, 2, 3])

    assert [r.n_neurons for r in serial] == [1, 2, 3]
    assert serial == parallel
    assert all(r.val_mse >= 0.0 for r in serial)


@pytest.mark.integration
def test_run_scenarios_reports_each_preset(caplog: pytest.LogCaptureFixture) -> None:
    configs = load_presets(["epa", "s1"])
    plan = ExperimentPlan(config=configs[0], train_blocks=1, train=TrainConfig(max_epochs=3))

    reports = run_scenarios(configs, plan)

    assert [r.label for r in reports] == ["EPA", "S1"]
    for r in reports:
        assert r.report.n_params == 48
        assert r.report.epochs_run <= 3
        if r.report.stopping is not StoppingReason.MIN_GRADIENT:
            assert f"Scenario {r.label} stopped by" in caplog.text


@pytest.mark.unit
def test_run_training_returns_default_network(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(config=epa, train_blocks=1, train=QUICK_TRAIN)

    params, report = run_training(plan)

    assert params.layer_sizes == (20, 2, 2)
    assert report.n_params == 48
    assert len(report.history) == report.epochs_run + 1


# ---------------------------------------------------------------------------
# Beam patterns and collapse
# ---------------------------------------------------------------------------


@pytest.mark.unit
def test_beampatterns_default_grid(epa: ScenarioConfig) -> None:
    curves = run_beampatterns(epa, ["conventional", "mvdr", "lcmv"])

    assert [c.method for c in curves] == ["conventional", "mvdr", "lcmv_oracle"]
    for curve in curves:
        assert curve.angles_deg.size == 360
        assert curve.angles_deg[0] == -179.0 and curve.angles_deg[-1] == 180.0
        assert curve.gains_db[curve.angles_deg == 30.0][0] == pytest.approx(0.0, abs=1e-6)


@pytest.mark.unit
def test_beampattern_of_evd_beamformer(epa: ScenarioConfig) -> None:
    (curve,) = run_beampatterns(epa, ["lcmv_evd"], seed=3)

    assert np.all(np.isfinite(curve.gains_db))
    assert curve.gains_db[curve.angles_deg == 30.0][0] == pytest.approx(0.0, abs=1e-6)


@pytest.mark.unit
def test_beampatterns_reject_unknown_method(epa: ScenarioConfig) -> None:
    with pytest.raises(UsageError, match="No beam pattern"):
        run_beampatterns(epa, ["ann"])


@pytest.mark.integration
def test_relu_collapse_counts_every_payload_symbol(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=epa, snr_db=(10.0,), blocks=2, train_blocks=1, train=QUICK_TRAIN
    )

    rows = run_relu_collapse(plan)

    assert [(r.activation, r.quadrant) for r in rows] == [
        (a, q) for a in ("sigmoid_sym", "relu") for q in ("00", "01", "11", "10")
    ]
    for activation in ("sigmoid_sym", "relu"):
        mine = [r for r in rows if r.activation == activation]
        assert sum(r.sent for r in mine) == 900
        assert sum(r.decided for r in mine) == 900
        assert all(0 <= r.symbol_errors <= r.sent for r in mine)

    relu = {r.quadrant: r for r in rows if r.activation == "relu"}
    assert relu["00"].symbol_errors == 0
    assert relu["00"].decided == 900
    for quadrant in ("01", "11", "10"):
        assert relu[quadrant].sent > 0
        assert relu[quadrant].decided == 0
        assert relu[quadrant].symbol_errors == relu[quadrant].sent


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


@pytest.mark.unit
def test_ber_csv_layout(tmp_path: Path, clean: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=clean, snr_db=(0.0,), blocks=1, train_blocks=1, methods=("conventional",)
    )
    path = write_ber_csv(run_ber(plan), tmp_path / "ber.csv")

    with path.open(newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))

    assert rows[0] == ["snr_db", "method", "bits", "errors", "ber", "stderr"]
    assert rows[1][:3] == ["0.0", "conventional", "1800"]
    assert float(rows[1][4]) == int(rows[1][3]) / 1800
    assert "\r" not in path.read_text(encoding="utf-8")


@pytest.mark.unit
def test_pattern_csv_has_one_row_per_angle(tmp_path: Path, epa: ScenarioConfig) -> None:
    path = write_pattern_csv(run_beampatterns(epa, ["mvdr"]), tmp_path / "pattern.csv")

    lines = path.read_text(encoding="utf-8").splitlines()

    assert lines[0] == "angle_deg,method,gain_db"
    assert len(lines) == 361
    assert lines[1].startswith("-179.0,mvdr,")


@pytest.mark.unit
def test_unwritable_csv_path_raises(tmp_path: Path) -> None:
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")

    with pytest.raises(UnwritableOutputError, match="Cannot write"):
        write_table1_csv([], blocker / "table1.csv")


# ---------------------------------------------------------------------------
# Long runs
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_conventional_ber_matches_analytic_bound_without_interference(
    clean: ScenarioConfig,
) -> None:
    """About a million bits at -3 dB land within three standard errors of Q(sqrt(N snr))."""
    plan = ExperimentPlan(
        config=clean,
        snr_db=(-3.0,),
        blocks=570,
        methods=("conventional", MATCHED_BOUND),
    )

    got = _by_method(run_ber(plan), -3.0)

    expected = qpsk_ber_bound(10.0 * 10.0 ** (-0.3))
    assert got[MATCHED_BOUND].ber == pytest.approx(expected, rel=1e-12)
    assert abs(got["conventional"].ber - expected) <= 3.0 * got["conventional"].stderr


@pytest.mark.slow
def test_trained_equalizer_on_epa_approaches_beamformers(epa: ScenarioConfig) -> None:
    plan = ExperimentPlan(
        config=epa, snr_db=(15.0,), blocks=12, train_blocks=10, methods=("ann", "mvdr")
    )

    got = _by_method(run_ber(plan), 15.0)

    assert got["ann"].ber <= 0.01


@pytest.mark.slow
def test_all_presets_train_to_completion(tmp_path: Path) -> None:
    configs = load_presets()
    plan = ExperimentPlan(config=configs[0], train_blocks=10)

    reports = run_scenarios(configs, plan)
    path = write_table1_csv(reports, tmp_path / "table1.csv")

    assert len(path.read_text(encoding="utf-8").splitlines()) == 8
    for r in reports:
        assert r.report.n_params == 48
        assert 0.0 <= r.report.gamma <= 48.0
        assert math.isfinite(r.report.final_test_mse)
        assert r.report.stopping is StoppingReason.MIN_GRADIENT, r.label
        assert 5 <= r.report.epochs_run <= 100, r.label


def _crossing_db(points, method: str, target: float = 1e-2) -> float:
    """SNR where the BER curve first drops to ``target``, interpolated in log BER."""
    curve = sorted((p.snr_db, p.ber) for p in points if p.method == method)
    for (snr_lo, ber_lo), (snr_hi, ber_hi) in zip(curve, curve[1:]):
        if ber_lo > target >= ber_hi:
            if ber_hi == 0.0:
                return snr_hi
            frac = math.log10(ber_lo / target) / math.log10(ber_lo / ber_hi)
            return snr_lo + frac * (snr_hi - snr_lo)
    raise AssertionError(f"{method} never crosses BER {target} on {[s for s, _ in curve]}")


@pytest.mark.slow
def test_trained_equalizer_crosses_one_percent_ber_near_lcmv(epa: ScenarioConfig) -> None:
    """60 evaluation blocks (108000 bits) per SNR point."""
    plan = ExperimentPlan(
        config=epa,
        snr_db=(-6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0),
        blocks=70,
        train_blocks=10,
        methods=("lcmv_oracle", "ann"),
    )

    points = run_ber(plan)

    assert all(p.bits_total == 108000 for p in points)
    lcmv = _crossing_db(points, "lcmv_oracle")
    ann = _crossing_db(points, "ann")
    assert abs(ann - lcmv) <= 1.0


@pytest.mark.slow
def test_hidden_width_three_to_six_is_a_plateau(epa: ScenarioConfig) -> None:
    widths = [1, 3, 4, 5, 6]
    val = np.zeros(len(widths))
    for seed in range(1, 6):
        plan = ExperimentPlan(config=epa, snr_db=(0.0,), train_blocks=10, seed=seed)
        val += [r.val_mse for r in run_neuron_sweep(plan, widths)]
    val /= 5.0

    plateau = val[1:]
    assert plateau.max() <= 1.2 * plateau.min()
    assert val[0] > val[1]
