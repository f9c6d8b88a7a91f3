"""Homodyne tomography and no-cloning benchmarks for optical quantum memories."""

__version__ = "0.1.0"

from .fockspace import (
    FockDensityMatrix,
    coherent_state,
    fidelity,
    loss_channel,
    photon_distribution,
    quadrature_pdf,
    thermal_state,
    wigner,
)
from .gaussian_sim import (
    ChannelModel,
    DetectionChain,
    GaussianState,
    QuadratureDataset,
    SimulationConfig,
    apply_channel,
    simulate_experiment,
    simulate_pulse_train,
)
from .tomography import ReconstructionConfig, reconstruct
from .benchmark import full_report, nocloning_verdict, tv_metrics

__all__ = [
    "ChannelModel",
    "DetectionChain",
    "FockDensityMatrix",
    "GaussianState",
    "QuadratureDataset",
    "ReconstructionConfig",
    "SimulationConfig",
    "apply_channel",
    "coherent_state",
    "fidelity",
    "full_report",
    "loss_channel",
    "nocloning_verdict",
    "photon_distribution",
    "quadrature_pdf",
    "reconstruct",
    "simulate_experiment",
    "simulate_pulse_train",
    "thermal_state",
    "tv_metrics",
    "wigner",
]
