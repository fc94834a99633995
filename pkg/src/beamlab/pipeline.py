"""Mask-based beamforming chain: analysis, SCMs, weights, synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamformer import BEAMFORMERS, BeamformerWeights, apply_beamformer, mvdr_weights, mwf_weights
from .filterbank import Filterbank, analyze, synthesize
from .masking import complement, oracle_wlm
from .metrics import si_sdr, si_sdr_loss_values
from .scm import DEFAULT_DIAG_LOAD, diagonal_load, masked_scm
from .signal import Mask, MultichannelSignal

__all__ = [
    "EnhanceResult",
    "enhance",
    "oracle_mask",
    "valid_span",
    "evaluate",
    "pipeline_loss",
]


@dataclass(frozen=True, eq=False)
class EnhanceResult:
    estimate: np.ndarray
    weights: BeamformerWeights
    mask: Mask


def oracle_mask(fb: Filterbank, target_image: MultichannelSignal,
                interferer_image: MultichannelSignal, ref: int = 0) -> Mask:
    """Wiener-like mask computed in the filterbank's own domain at mic ``ref``."""
    x = analyze(fb, target_image.samples[ref])
    v = analyze(fb, interferer_image.samples[ref])
    return oracle_wlm(x, v)


def enhance(fb: Filterbank, mixture: MultichannelSignal, mask: Mask, beamformer: str = "mvdr",
            ref: int = 0, diag_load: float = DEFAULT_DIAG_LOAD) -> EnhanceResult:
    """Beamform ``mixture`` towards the masked source and resynthesise mic ``ref``.

    Diagonal loading is applied to the interferer SCM only.
    """
    if beamformer not in BEAMFORMERS:
        raise ValueError(f"unknown beamformer {beamformer!r}; expected one of {BEAMFORMERS}")
    spec = analyze(fb, mixture)
    if mask.shape != spec.values.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match spectrogram "
                         f"{spec.values.shape[1:]} (bins x frames)")
    rx = masked_scm(spec, mask)
    rv = diagonal_load(masked_scm(spec, complement(mask)), diag_load)
    solve = mvdr_weights if beamformer == "mvdr" else mwf_weights
    weights = solve(rx, rv, ref)
    estimate = synthesize(fb, apply_beamformer(weights, spec))
    return EnhanceResult(estimate, weights, mask)


def valid_span(length: int, kernel_size: int) -> slice:
    """Samples kept for scoring: ``kernel_size`` samples are dropped at each edge."""
    if length <= 2 * kernel_size + 1:
        raise ValueError(f"signal of {length} samples too short to drop {kernel_size} "
                         "edge samples on each side")
    return slice(kernel_size, length - kernel_size)


def evaluate(target_ref, mixture_ref, estimate, kernel_size: int) -> dict:
    """SI-SDR of the mixture and estimate against the target on the valid span."""
    n = len(estimate)
    span = valid_span(n, kernel_size)
    target = np.asarray(target_ref)[:n][span]
    si_in = si_sdr(target, np.asarray(mixture_ref)[:n][span])
    si_out = si_sdr(target, np.asarray(estimate)[span])
    return {"si_sdr_in": si_in, "si_sdr_out": si_out, "si_sdri": si_out - si_in}


def pipeline_loss(fb: Filterbank, scene, beamformer: str = "mwf", ref: int = 0,
                  diag_load: float = DEFAULT_DIAG_LOAD) -> float:
    """Negated SI-SDR of the oracle-mask beamforming chain on one rendered scene."""
    mask = oracle_mask(fb, scene.target_image, scene.interferer_image, ref)
    result = enhance(fb, scene.mixture, mask, beamformer, ref, diag_load)
    n = len(result.estimate)
    span = valid_span(n, fb.kernel_size)
    target = scene.target_image.samples[ref][:n]
    return float(si_sdr_loss_values(target[span], result.estimate[span]))
