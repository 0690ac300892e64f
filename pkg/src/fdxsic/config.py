"""
Scenario files, named presets, ``--set`` overrides and run manifests.

Every configuration document is a flat mapping of dotted keys read and
written with :class:`fdxsic.toon.ToonCodec`:

    scenario.label, scenario.desired_angle_deg, scenario.int_angles_deg,
    scenario.int_powers_db, scenario.path_delays_symbols,
    scenario.noise_power_db, array.n_antennas, array.spacing_wavelengths,
    frame.block_len, frame.pilot_fraction

Run manifests add ``run.*`` keys and the resolved ``plan.*`` keys of the
experiment, so the same override machinery applies to both.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigError, UsageError
from .sigmodel import ArrayGeometry, FrameSpec, Scenario
from .toon import ToonCodec, parse_value, split_cells

logger = logging.getLogger(__name__)

PRESET_NAMES = ("epa", "s1", "s2", "s3", "s4", "s5", "s6")
MANIFEST_NAME = "manifest.toon"

_SCENARIO_KEYS = (
    "scenario.label",
    "scenario.desired_angle_deg",
    "scenario.int_angles_deg",
    "scenario.int_powers_db",
    "scenario.noise_power_db",
    "array.n_antennas",
    "array.spacing_wavelengths",
    "frame.block_len",
    "frame.pilot_fraction",
)
_OPTIONAL_KEYS = ("scenario.path_delays_symbols",)


@dataclass(frozen=True)
class ScenarioConfig:
    """A scenario together with the array and framing it is simulated on."""

    scenario: Scenario
    geometry: ArrayGeometry
    frame: FrameSpec

    @property
    def label(self) -> str:
        return self.scenario.label

    def to_document(self) -> dict[str, Any]:
        s, g, f = self.scenario, self.geometry, self.frame
        return {
            "scenario.label": s.label,
            "scenario.desired_angle_deg": float(s.desired_angle_deg),
            "scenario.int_angles_deg": [float(v) for v in s.int_angles_deg],
            "scenario.int_powers_db": [float(v) for v in s.int_powers_db],
            "scenario.path_delays_symbols": [int(v) for v in s.path_delays_symbols],
            "scenario.noise_power_db": float(s.noise_power_db),
            "array.n_antennas": int(g.n_antennas),
            "array.spacing_wavelengths": float(g.spacing_wavelengths),
            "frame.block_len": int(f.block_len),
            "frame.pilot_fraction": float(f.pilot_fraction),
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> ScenarioConfig:
        """
        Build a configuration from flat dotted keys.

        ``scenario.path_delays_symbols`` defaults to ``0, 1, ..., L-1``.

        Raises:
            ConfigError: for missing keys or values of the wrong shape.
        """
        missing = [k for k in _SCENARIO_KEYS if k not in doc]
        if missing:
            raise ConfigError(f"Scenario document is missing keys: {', '.join(missing)}")
        try:
            angles = tuple(float(v) for v in _as_list(doc, "scenario.int_angles_deg"))
            powers = tuple(float(v) for v in _as_list(doc, "scenario.int_powers_db"))
            if "scenario.path_delays_symbols" in doc:
                delays = tuple(
                    _as_int(v, "scenario.path_delays_symbols")
                    for v in _as_list(doc, "scenario.path_delays_symbols")
                )
            else:
                delays = tuple(range(len(angles)))
            scenario = Scenario(
                label=str(doc["scenario.label"]),
                desired_angle_deg=float(doc["scenario.desired_angle_deg"]),
                int_angles_deg=angles,
                int_powers_db=powers,
                path_delays_symbols=delays,
                noise_power_db=float(doc["scenario.noise_power_db"]),
            )
            geometry = ArrayGeometry(
                n_antennas=_as_int(doc["array.n_antennas"], "array.n_antennas"),
                spacing_wavelengths=float(doc["array.spacing_wavelengths"]),
            )
            frame = FrameSpec(
                block_len=_as_int(doc["frame.block_len"], "frame.block_len"),
                pilot_fraction=float(doc["frame.pilot_fraction"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Invalid scenario document: {exc}") from exc
        return cls(scenario=scenario, geometry=geometry, frame=frame)


def _as_list(doc: Mapping[str, Any], key: str) -> list[Any]:
    value = doc[key]
    if not isinstance(value, list):
        raise ConfigError(f"'{key}' must be an array, got {value!r}")
    return value


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    return value


def split_document(doc: Mapping[str, Any]) -> tuple[dict[str, Any], dict[str, Any]]:
    """Separate scenario/array/frame keys from everything else."""
    known = (*_SCENARIO_KEYS, *_OPTIONAL_KEYS)
    scenario = {k: v for k, v in doc.items() if k in known}
    rest = {k: v for k, v in doc.items() if k not in known}
    return scenario, rest


# ---------------------------------------------------------------------------
# Files and presets
# ---------------------------------------------------------------------------


def read_document(path: Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read {path}: {exc.strerror or exc}") from exc
    return ToonCodec().decode(text)


def preset_document(name: str) -> dict[str, Any]:
    """Flat document of a named preset (``epa``, ``s1`` ... ``s6``)."""
    key = name.lower()
    if key not in PRESET_NAMES:
        raise UsageError(
            f"Unknown scenario preset '{name}'; choose one of {', '.join(PRESET_NAMES)} "
            "or give a file path"
        )
    text = resources.files("fdxsic").joinpath("presets").joinpath(f"{key}.toon").read_text(
        encoding="utf-8"
    )
    return ToonCodec().decode(text)


def scenario_document(name_or_path: str | Path) -> dict[str, Any]:
    """Preset document when ``name_or_path`` names a preset, else the file."""
    if isinstance(name_or_path, str) and name_or_path.lower() in PRESET_NAMES:
        return preset_document(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise UsageError(
            f"Scenario '{name_or_path}' is neither a preset "
            f"({', '.join(PRESET_NAMES)}) nor an existing file"
        )
    return read_document(path)


def load_scenario(name_or_path: str | Path) -> ScenarioConfig:
    return ScenarioConfig.from_document(scenario_document(name_or_path))


def load_presets(names: Iterable[str] = PRESET_NAMES) -> list[ScenarioConfig]:
    return [ScenarioConfig.from_document(preset_document(n)) for n in names]


def save_scenario(config: ScenarioConfig, path: Path) -> None:
    text = ToonCodec().encode(
        config.to_document(), header=f"fdxsic scenario: {config.label}"
    )
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# Overrides
# ---------------------------------------------------------------------------


def parse_override(item: str) -> tuple[str, str]:
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise UsageError(f"--set expects key=value, got {item!r}")
    return key, raw


def apply_overrides(doc: Mapping[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """
    Return a copy of ``doc`` with ``key=value`` overrides applied.

    Values are typed with the codec's cell rules; keys whose current value is
    an array take a comma-separated list. Only existing keys may be set,
    except the optional ``scenario.path_delays_symbols``.

    Raises:
        UsageError: for malformed items or unknown keys.
    """
    out = dict(doc)
    for item in overrides:
        key, raw = parse_override(item)
        if key not in out and key not in _OPTIONAL_KEYS:
            raise UsageError(
                f"Unknown override key '{key}'; known keys: {', '.join(sorted(out))}"
            )
        current = out.get(key, [])
        if isinstance(current, list):
            out[key] = [parse_value(c) for c in split_cells(raw)] if raw.strip() else []
        else:
            out[key] = parse_value(raw)
        logger.debug("override %s = %r", key, out[key])
    return out


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Manifest:
    """Resolved inputs of one CLI run."""

    subcommand: str
    seed: int
    version: str
    document: dict[str, Any]


def write_manifest(
    out_dir: Path,
    subcommand: str,
    seed: int,
    version: str,
    document: Mapping[str, Any],
) -> Path:
    data: dict[str, Any] = {
        "run.subcommand": subcommand,
        "run.seed": int(seed),
        "run.version": version,
    }
    data.update(document)
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(ToonCodec().encode(data, header="fdxsic run manifest"), encoding="utf-8")
    return path


def read_manifest(path: Path) -> Manifest:
    doc = read_document(path)
    try:
        subcommand = str(doc.pop("run.subcommand"))
        seed = _as_int(doc.pop("run.seed"), "run.seed")
        version = str(doc.pop("run.version"))
    except KeyError as exc:
        raise ConfigError(f"Manifest {path} lacks {exc.args[0]}") from exc
    return Manifest(subcommand=subcommand, seed=seed, version=version, document=doc)
