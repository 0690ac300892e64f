"""
fdxsic: digital self-interference cancellation for full-duplex receive arrays.

A uniform linear array receives a desired QPSK user together with copies of
the node's own transmission reflected back from the environment. fdxsic
simulates that signal and compares three ways of recovering the user:

- MVDR and LCMV beamformers (with oracle or eigenstructure-derived nulls)
- a small neural equalizer trained on pilot symbols with Levenberg-Marquardt
  and Bayesian regularization
- the analytic QPSK bound at the optimum output SINR

Example
-------
>>> from fdxsic import load_scenario, steering_vector, analytic_covariance, mvdr_weights
>>> cfg = load_scenario("epa")
>>> a_d = steering_vector(cfg.geometry, cfg.scenario.desired_angle_deg)
>>> w = mvdr_weights(analytic_covariance(cfg.scenario, cfg.geometry), a_d)
>>> round(abs(w.response(a_d)), 9)
1.0

Public API
----------
- Signal model: ArrayGeometry, Scenario, FrameSpec, synthesize, steering_vector
- Beamformers: mvdr_weights, lcmv_weights, build_constraints_evd, beam_pattern
- Equalizer: init_params, train_bayesian_lm, equalize, save_model, load_model
- Experiments: ExperimentPlan, run_ber, run_beampatterns, run_neuron_sweep
- Configuration: load_scenario, ToonCodec
"""

from __future__ import annotations

from .beamform import (
    BeamWeights,
    ConstraintSet,
    Method,
    SubspaceSelection,
    beam_pattern,
    build_constraints_evd,
    build_constraints_oracle,
    conventional_weights,
    lcmv_weights,
    mvdr_weights,
)
from .config import ScenarioConfig, load_presets, load_scenario
from .errors import FdxsicError
from .harness import (
    BerPoint,
    ExperimentPlan,
    run_ber,
    run_beampatterns,
    run_neuron_sweep,
    run_relu_collapse,
    run_scenarios,
)
from .neuralnet import (
    MlpParams,
    TrainConfig,
    TrainReport,
    equalize,
    init_params,
    load_model,
    save_model,
    train_bayesian_lm,
)
from .numerics import hermitian_evd, inv_by_lemma, solve
from .sigmodel import (
    ArrayGeometry,
    FrameSpec,
    Scenario,
    analytic_covariance,
    steering_vector,
    synthesize,
)
from .toon import ToonCodec, ToonDecodingError, ToonEncodingError

__all__ = [
    "ArrayGeometry",
    "BeamWeights",
    "BerPoint",
    "ConstraintSet",
    "ExperimentPlan",
    "FdxsicError",
    "FrameSpec",
    "Method",
    "MlpParams",
    "Scenario",
    "ScenarioConfig",
    "SubspaceSelection",
    "ToonCodec",
    "ToonDecodingError",
    "ToonEncodingError",
    "TrainConfig",
    "TrainReport",
    "analytic_covariance",
    "beam_pattern",
    "build_constraints_evd",
    "build_constraints_oracle",
    "conventional_weights",
    "equalize",
    "hermitian_evd",
    "init_params",
    "inv_by_lemma",
    "lcmv_weights",
    "load_model",
    "load_presets",
    "load_scenario",
    "mvdr_weights",
    "run_ber",
    "run_beampatterns",
    "run_neuron_sweep",
    "run_relu_collapse",
    "run_scenarios",
    "save_model",
    "solve",
    "steering_vector",
    "synthesize",
    "train_bayesian_lm",
]

# Version information
try:
    from importlib.metadata import version

    __version__ = version("fdxsic")
except Exception:
    # Fallback if package is not installed or importlib.metadata unavailable
    __version__ = "0.1.0"
