"""Change point detection in dynamic graphs via latent evolution and Laplacian spectra.

Modules
-------
graphseq   snapshot / sequence containers and edge-list I/O
lemcore    latent evolution model: objective, multiplicative updates, fit, predict
spectral   Laplacians (undirected and directed), signatures, cosine scores
detector   sliding-window detection producing an :class:`AnomalyReport`
synth      stochastic block model scenarios with labelled changes and events
bench      hit ratio, MAE, baselines and parameter sweeps
cli        ``latentcpd`` command-line entry point
"""

from .detector import AnomalyRecord, AnomalyReport, DetectorConfig, detect_sequence, detect_step, rank_topk
from .graphseq import GraphDataError, GraphSequence, GraphSnapshot, LabelSet, load_sequence, save_sequence
from .lemcore import HyperParams, LatentState, LongTermGuide, NumericalError, fit, predict_next
from .synth import SBMConfig, ScenarioSpec, default_scenario, generate

__version__ = "0.1.0"

__all__ = [
    "AnomalyRecord", "AnomalyReport", "DetectorConfig", "detect_sequence", "detect_step", "rank_topk",
    "GraphDataError", "GraphSequence", "GraphSnapshot", "LabelSet", "load_sequence", "save_sequence",
    "HyperParams", "LatentState", "LongTermGuide", "NumericalError", "fit", "predict_next",
    "SBMConfig", "ScenarioSpec", "default_scenario", "generate",
]
