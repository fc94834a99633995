"""Mask-based multichannel beamforming with fixed and learned filterbanks."""

from .beamformer import BeamformerWeights, SingularCovarianceError, mvdr_weights, mwf_weights
from .filterbank import (
    Filterbank,
    analyze,
    frequency_response,
    macs,
    make_analytic_filterbank,
    make_free_filterbank,
    make_stft_filterbank,
    synthesize,
)
from .masking import oracle_wlm
from .metrics import si_sdr, si_sdr_improvement
from .optimizer import OptimizerConfig, TrainingTrace, finite_difference_gradient, train
from .pipeline import enhance, evaluate, oracle_mask, pipeline_loss
from .scene import ReverbSpec, SceneRender, SceneSpec, hearing_aid_geometry, render_scene
from .signal import Mask, MultichannelSignal, SpectrogramTensor

__version__ = "0.1.0"

__all__ = [
    "BeamformerWeights",
    "SingularCovarianceError",
    "mvdr_weights",
    "mwf_weights",
    "Filterbank",
    "analyze",
    "synthesize",
    "frequency_response",
    "macs",
    "make_stft_filterbank",
    "make_free_filterbank",
    "make_analytic_filterbank",
    "oracle_wlm",
    "si_sdr",
    "si_sdr_improvement",
    "OptimizerConfig",
    "TrainingTrace",
    "finite_difference_gradient",
    "train",
    "enhance",
    "evaluate",
    "oracle_mask",
    "pipeline_loss",
    "ReverbSpec",
    "SceneRender",
    "SceneSpec",
    "hearing_aid_geometry",
    "render_scene",
    "Mask",
    "MultichannelSignal",
    "SpectrogramTensor",
]
