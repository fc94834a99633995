"""Scale-invariant SDR for evaluation and as a training loss."""

from __future__ import annotations

import numpy as np

__all__ = ["si_sdr", "si_sdr_improvement", "si_sdr_loss_values", "negated_si_sdr_loss", "SI_SDR_CAP"]

SI_SDR_CAP = 140.0
_CAP_RATIO = 1e-14


def _pair(reference, estimate) -> tuple[np.ndarray, np.ndarray]:
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape[-1] != estimate.shape[-1]:
        raise ValueError(
            f"length mismatch: reference {reference.shape[-1]} vs estimate {estimate.shape[-1]}")
    if reference.shape[-1] < 2:
        raise ValueError("signals need at least 2 samples")
    if np.any(np.sum(reference ** 2, axis=-1) == 0):
        raise ValueError("reference signal is all zeros")
    return reference, estimate


def _projection_energies(reference, estimate):
    ref_energy = np.sum(reference ** 2, axis=-1)
    scale = np.sum(estimate * reference, axis=-1) / ref_energy
    target = scale[..., None] * reference
    return np.sum(target ** 2, axis=-1), np.sum((estimate - target) ** 2, axis=-1)


def si_sdr(reference, estimate) -> float:
    """SI-SDR in dB, capped at +140 dB for (numerically) perfect estimates."""
    reference, estimate = _pair(reference, estimate)
    if reference.ndim != 1 or estimate.ndim != 1:
        raise ValueError("si_sdr expects 1-D signals")
    s2, e2 = _projection_energies(reference, estimate)
    if e2 < _CAP_RATIO * s2:
        return SI_SDR_CAP
    if s2 == 0:
        return -np.inf
    return float(10 * np.log10(s2 / e2))


def si_sdr_improvement(target, mixture_ref, estimate) -> float:
    return si_sdr(target, estimate) - si_sdr(target, mixture_ref)


def si_sdr_loss_values(reference, estimate) -> np.ndarray:
    """Smooth negated SI-SDR, vectorised over leading axes.

    The error energy is guarded by ``1e-14 * ||s||^2`` instead of capping,
    which bounds the loss at -140 dB without a kink.
    """
    reference, estimate = _pair(reference, estimate)
    s2, e2 = _projection_energies(reference, estimate)
    s2 = np.maximum(s2, np.finfo(np.float64).tiny)
    return -10 * np.log10(s2 / (e2 + _CAP_RATIO * s2))


def negated_si_sdr_loss(pairs) -> float:
    """Mean of the smooth negated SI-SDR over ``(target, estimate)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty batch")
    return float(np.mean([si_sdr_loss_values(t, e) for t, e in pairs]))
