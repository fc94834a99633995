"""Oracle Wiener-like masks and mask plumbing."""

from __future__ import annotations

import numpy as np

from .signal import Mask, SpectrogramTensor

__all__ = ["oracle_wlm", "wlm_values", "complement", "clamp_mask"]


def wlm_values(target, interferer) -> np.ndarray:
    """|X|^2 / (|X|^2 + |V|^2) on raw complex arrays; 0/0 entries give 0.5."""
    px = np.abs(target) ** 2
    pv = np.abs(interferer) ** 2
    total = px + pv
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, px / safe, 0.5)


def _single_channel(spec) -> np.ndarray:
    values = spec.values if isinstance(spec, SpectrogramTensor) else np.asarray(spec)
    if values.ndim == 3:
        if values.shape[0] != 1:
            raise ValueError("oracle mask expects single-channel spectrograms")
        values = values[0]
    return values


def oracle_wlm(target_ref, interferer_ref) -> Mask:
    """Wiener-like mask from the target and interferer images at the reference mic."""
    x = _single_channel(target_ref)
    v = _single_channel(interferer_ref)
    if x.shape != v.shape:
        raise ValueError(f"shape mismatch: target {x.shape} vs interferer {v.shape}")
    return Mask(np.clip(wlm_values(x, v), 0.0, 1.0))


def complement(mask: Mask) -> Mask:
    return Mask(1.0 - mask.values)


def clamp_mask(values) -> Mask:
    """Clip a real tensor into [0, 1]; used for masks read from files."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("mask contains non-finite values")
    return Mask(np.clip(values, 0.0, 1.0))
