"""perf_counter timings of the EVD, beamformer and training kernels."""

from __future__ import annotations

import argparse
import json
from collections.abc import Callable
from time import perf_counter
from typing import Any

from benchmarks.generate_problems import epa_snapshots, pilot_dataset, random_covariances
from fdxsic.beamform import build_constraints_evd, lcmv_weights, sample_covariance
from fdxsic.neuralnet import TrainConfig, init_params, train_bayesian_lm
from fdxsic.numerics import hermitian_evd
from fdxsic.sigmodel import steering_vector


def _time(fn: Callable[[], Any], repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = perf_counter()
        fn()
        times.append(perf_counter() - start)
    return sum(times) / repeats


def _evd_suite(sizes: list[int], repeats: int) -> dict[str, Any]:
    results = []
    for count in sizes:
        mats = random_covariances(count)
        seconds = _time(lambda: [hermitian_evd(m) for m in mats], repeats)
        results.append({"size": count, "seconds": seconds, "per_item": seconds / count})
    return {"name": "Jacobi EVD (10 x 10)", "results": results}


def _lcmv_suite(sizes: list[int], repeats: int) -> dict[str, Any]:
    results = []
    for n_symbols in sizes:
        config, snapshots = epa_snapshots(n_symbols)
        a_d = steering_vector(config.geometry, config.scenario.desired_angle_deg)

        def run() -> None:
            constraints, _ = build_constraints_evd(snapshots, a_d)
            lcmv_weights(sample_covariance(snapshots), constraints)

        seconds = _time(run, repeats)
        results.append({"size": n_symbols, "seconds": seconds, "per_item": seconds / n_symbols})
    return {"name": "EVD-constrained LCMV", "results": results}


def _training_suite(sizes: list[int], repeats: int) -> dict[str, Any]:
    results = []
    for n_symbols in sizes:
        dataset = pilot_dataset(n_symbols)
        config = TrainConfig(max_epochs=50)
        seconds = _time(lambda: train_bayesian_lm(init_params(), dataset, config), repeats)
        results.append({"size": n_symbols, "seconds": seconds, "per_item": seconds / n_symbols})
    return {"name": "LM training, 50 epochs", "results": results}


def _print_table(summary: dict[str, Any]) -> None:
    print(f"== {summary['name']} ==")
    print(f"{'size':>8} | {'total (s)':>10} | {'per item (s)':>12}")
    print("-" * 38)
    for row in summary["results"]:
        print(f"{row['size']:8d} | {row['seconds']:10.4f} | {row['per_item']:12.3e}")
    print()


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Benchmark fdxsic numerical kernels")
    parser.add_argument(
        "--sizes",
        type=int,
        nargs="+",
        default=[100, 1_000, 5_000],
        help="matrix counts / snapshot counts to benchmark (default: 100 1000 5000)",
    )
    parser.add_argument(
        "--repeat",
        type=int,
        default=1,
        help="number of times to repeat each measurement (default: 1)",
    )
    parser.add_argument(
        "--json",
        action="store_true",
        help="emit JSON summary instead of tables (useful for CI ingestion)",
    )
    return parser.parse_args()


def main() -> None:
    args = parse_args()
    if args.repeat <= 0:
        raise ValueError("--repeat must be positive")

    suites = [
        _evd_suite(args.sizes, args.repeat),
        _lcmv_suite(args.sizes, args.repeat),
        _training_suite(args.sizes, args.repeat),
    ]

    if args.json:
        print(json.dumps(suites, indent=2))
    else:
        for summary in suites:
            _print_table(summary)


if __name__ == "__main__":
    main()
