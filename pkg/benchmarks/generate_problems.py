"""Seeded inputs for the kernel benchmarks."""

from __future__ import annotations

import numpy as np

from fdxsic.config import ScenarioConfig, load_scenario
from fdxsic.neuralnet import Dataset
from fdxsic.sigmodel import SnapshotMatrix, random_symbols, synthesize

__all__ = ["epa_snapshots", "pilot_dataset", "random_covariances"]


def random_covariances(count: int, n: int = 10, *, seed: int = 0) -> list[np.ndarray]:
    """Hermitian positive-definite N x N matrices with a unit noise floor."""
    if count <= 0:
        raise ValueError("count must be positive")

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        out.append(x @ x.conj().T / n + np.eye(n))
    return out


def epa_snapshots(n_symbols: int, *, seed: int = 0) -> tuple[ScenarioConfig, SnapshotMatrix]:
    """EPA preset observations with random desired and SI streams."""
    if n_symbols <= 0:
        raise ValueError("n_symbols must be positive")

    config = load_scenario("epa")
    scenario = config.scenario
    desired = random_symbols(np.random.default_rng(seed), n_symbols)
    si = random_symbols(np.random.default_rng(seed + 1), n_symbols + scenario.max_delay)
    snapshots = synthesize(scenario, config.geometry, None, desired, si, seed)
    return config, snapshots


def pilot_dataset(n_symbols: int, *, seed: int = 0) -> Dataset:
    """Network inputs/targets for ``n_symbols`` EPA pilots."""
    rng = np.random.default_rng(seed)
    config = load_scenario("epa")
    scenario = config.scenario
    desired = random_symbols(rng, n_symbols)
    si = random_symbols(rng, n_symbols + scenario.max_delay)
    snapshots = synthesize(scenario, config.geometry, None, desired, si, seed)
    return Dataset.from_snapshots(snapshots, desired)
