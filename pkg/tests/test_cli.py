"""
End-to-end tests of the ``fdxsic`` command line.
"""

from pathlib import Path

import pytest

from fdxsic.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, parse_and_dispatch, parse_widths
from fdxsic.config import load_scenario, read_manifest, save_scenario
from fdxsic.errors import UsageError
from fdxsic.neuralnet import load_model

QUICK = ["--set", "plan.train_blocks=1", "--set", "plan.max_epochs=5"]


def _lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------


@pytest.mark.unit
def test_parse_widths_range_and_list() -> None:
    assert parse_widths("1:10") == list(range(1, 11))
    assert parse_widths("2,4,8") == [2, 4, 8]


@pytest.mark.unit
@pytest.mark.parametrize("text", ["0:3", "a:b", "5:1", ""])
def test_parse_widths_rejects_bad_input(text: str) -> None:
    with pytest.raises(UsageError, match="--widths"):
        parse_widths(text)


@pytest.mark.unit
def test_version_flag(capsys: pytest.CaptureFixture[str]) -> None:
    assert parse_and_dispatch(["--version"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("fdxsic ")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


@pytest.mark.integration
def test_beampattern_writes_three_curves(tmp_path: Path) -> None:
    rc = parse_and_dispatch(["beampattern", "--out", str(tmp_path)])

    assert rc == EXIT_OK
    lines = _lines(tmp_path / "pattern.csv")
    assert lines[0] == "angle_deg,method,gain_db"
    assert len(lines) == 1 + 3 * 360
    assert {line.split(",")[1] for line in lines[1:]} == {"conventional", "mvdr", "lcmv_oracle"}
    manifest = read_manifest(tmp_path / "manifest.toon")
    assert manifest.subcommand == "beampattern"
    assert manifest.seed == 1
    assert manifest.document["scenario.label"] == "EPA"


@pytest.mark.integration
def test_ber_output_is_byte_identical_across_runs(tmp_path: Path) -> None:
    argv = ["ber", "--snr", "0,10", "--blocks", "2", "--methods", "conventional,mvdr,matched_bound"]

    assert parse_and_dispatch([*argv, "--out", str(tmp_path / "a"), *QUICK]) == EXIT_OK
    assert parse_and_dispatch([*argv, "--out", str(tmp_path / "b"), *QUICK]) == EXIT_OK

    first = (tmp_path / "a" / "ber.csv").read_bytes()
    assert first == (tmp_path / "b" / "ber.csv").read_bytes()
    assert len(first.decode("utf-8").splitlines()) == 1 + 2 * 3


@pytest.mark.integration
def test_manifest_rerun_reproduces_results(tmp_path: Path) -> None:
    first = tmp_path / "first"
    rc = parse_and_dispatch(
        ["ber", "--scenario", "s3", "--snr", "5", "--blocks", "2", "--seed", "42",
         "--methods", "conventional,lcmv_evd,ann", "--out", str(first), *QUICK]
    )
    assert rc == EXIT_OK

    second = tmp_path / "second"
    rc = parse_and_dispatch(
        ["ber", "--manifest", str(first / "manifest.toon"), "--out", str(second)]
    )

    assert rc == EXIT_OK
    assert (first / "ber.csv").read_bytes() == (second / "ber.csv").read_bytes()
    assert read_manifest(second / "manifest.toon").seed == 42


@pytest.mark.integration
def test_sweep_neurons_writes_one_row_per_width(tmp_path: Path) -> None:
    rc = parse_and_dispatch(
        ["sweep-neurons", "--widths", "1:3", "--snr", "10", "--out", str(tmp_path), *QUICK]
    )

    assert rc == EXIT_OK
    lines = _lines(tmp_path / "sweep.csv")
    assert lines[0] == "n_neurons,val_mse,best_epoch"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "2", "3"]


@pytest.mark.integration
def test_train_writes_model_and_history(tmp_path: Path) -> None:
    rc = parse_and_dispatch(["train", "--snr", "15", "--out", str(tmp_path), *QUICK])

    assert rc == EXIT_OK
    params = load_model(tmp_path / "model.toon")
    assert params.n_params == 48
    history = _lines(tmp_path / "train.csv")
    assert history[0].startswith("epoch,objective,train_mse,val_mse")
    assert 2 <= len(history) <= 1 + 6


@pytest.mark.integration
def test_scenarios_reports_every_preset(tmp_path: Path) -> None:
    rc = parse_and_dispatch(
        ["scenarios", "--out", str(tmp_path), "--set", "plan.train_blocks=1",
         "--set", "plan.max_epochs=3"]
    )

    assert rc == EXIT_OK
    lines = _lines(tmp_path / "table1.csv")
    assert len(lines) == 8
    assert [line.split(",")[0] for line in lines[1:]] == ["EPA", "S1", "S2", "S3", "S4", "S5", "S6"]


@pytest.mark.integration
def test_relu_collapse_writes_eight_rows(tmp_path: Path) -> None:
    rc = parse_and_dispatch(
        ["relu-collapse", "--snr", "10", "--blocks", "2", "--out", str(tmp_path), *QUICK]
    )

    assert rc == EXIT_OK
    assert len(_lines(tmp_path / "collapse.csv")) == 9


@pytest.mark.integration
def test_scenario_file_and_overrides(tmp_path: Path) -> None:
    path = tmp_path / "custom.toon"
    save_scenario(load_scenario("s5"), path)

    rc = parse_and_dispatch(
        ["beampattern", "--scenario", str(path), "--methods", "mvdr",
         "--set", "scenario.label=custom", "--set", "scenario.int_angles_deg=145,160,50,20",
         "--out", str(tmp_path / "out")]
    )

    assert rc == EXIT_OK
    manifest = read_manifest(tmp_path / "out" / "manifest.toon")
    assert manifest.document["scenario.label"] == "custom"
    assert manifest.document["scenario.int_angles_deg"] == [145, 160, 50, 20]
    assert manifest.document["array.spacing_wavelengths"] == 0.25


# ---------------------------------------------------------------------------
# Failures
# ---------------------------------------------------------------------------


@pytest.mark.unit
@pytest.mark.parametrize(
    "argv",
    [
        ["ber", "--bogus"],
        ["frobnicate"],
        ["ber", "--blocks", "0"],
        ["beampattern", "--set", "plan.nonexistent=3"],
        ["beampattern", "--set", "missing-equals"],
        ["beampattern", "--scenario", "s9"],
        ["beampattern", "--methods", "ann"],
        ["sweep-neurons", "--widths", "0:2"],
        ["ber", "--set", "plan.blocks=zero"],
    ],
)
def test_usage_errors_exit_two(argv: list[str], tmp_path: Path) -> None:
    assert parse_and_dispatch([*argv, "--out", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.unit
def test_manifest_cannot_be_combined_with_result_flags(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    assert parse_and_dispatch(["beampattern", "--out", str(tmp_path)]) == EXIT_OK

    rc = parse_and_dispatch(
        ["beampattern", "--manifest", str(tmp_path / "manifest.toon"), "--seed", "3",
         "--out", str(tmp_path / "again")]
    )

    assert rc == EXIT_USAGE
    assert "--seed" in capsys.readouterr().err


@pytest.mark.unit
def test_manifest_from_another_subcommand_is_rejected(tmp_path: Path) -> None:
    assert parse_and_dispatch(["beampattern", "--out", str(tmp_path)]) == EXIT_OK

    rc = parse_and_dispatch(
        ["ber", "--manifest", str(tmp_path / "manifest.toon"), "--out", str(tmp_path / "x")]
    )

    assert rc == EXIT_USAGE


@pytest.mark.unit
def test_unwritable_output_directory_exits_one(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")

    rc = parse_and_dispatch(["beampattern", "--out", str(blocker / "sub")])

    assert rc == EXIT_RUNTIME
    assert "Cannot create" in capsys.readouterr().err
