"""Souden MVDR and multichannel Wiener filter weights, and their application.

All solvers work on stacks of M x M matrices with arbitrary leading axes so
the same code serves per-bin weights and batched perturbation probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scm import SpatialCovariance
from .signal import SpectrogramTensor

__all__ = [
    "BeamformerWeights",
    "SingularCovarianceError",
    "hermitian_solve",
    "mvdr_solution",
    "mwf_solution",
    "mvdr_weights",
    "mwf_weights",
    "apply_beamformer",
    "apply_weights",
    "BEAMFORMERS",
]

BEAMFORMERS = ("mvdr", "mwf")
TRACE_FLOOR = 1e-12


class SingularCovarianceError(np.linalg.LinAlgError):
    def __init__(self, bin_index, what="covariance"):
        self.bin_index = bin_index
        super().__init__(f"{what} is singular or not positive definite at bin {bin_index}")


@dataclass(frozen=True, eq=False)
class BeamformerWeights:
    """N x M complex weights, the (0-based) reference mic and pass-through flags."""

    weights: np.ndarray
    reference: int
    flagged: np.ndarray | None = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.complex128)
        if weights.ndim != 2:
            raise ValueError("weights must be N x M")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        if not 0 <= self.reference < weights.shape[1]:
            raise ValueError(f"reference {self.reference} outside [0, {weights.shape[1]})")
        flagged = (np.zeros(weights.shape[0], dtype=bool) if self.flagged is None
                   else np.asarray(self.flagged, dtype=bool))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "flagged", flagged)

    @property
    def flagged_bins(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.flagged)]


def hermitian_solve(a, b, what="covariance") -> np.ndarray:
    """Solve ``a x = b`` for Hermitian positive definite stacks via Cholesky."""
    a = np.asarray(a, dtype=np.complex128)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        flat = a.reshape(-1, *a.shape[-2:])
        for i, mat in enumerate(flat):
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                raise SingularCovarianceError(np.unravel_index(i, a.shape[:-2])[-1]
                                              if a.ndim > 2 else 0, what) from None
        raise
    z = np.linalg.solve(chol, b)
    return np.linalg.solve(np.conj(np.swapaxes(chol, -1, -2)), z)


def _check_ref(ref: int, n_ch: int) -> None:
    if not 0 <= ref < n_ch:
        raise ValueError(f"reference channel {ref} outside [0, {n_ch})")


def mvdr_solution(rx, rv, ref: int) -> tuple[np.ndarray, np.ndarray]:
    """``R_v^-1 R_x u_ref / tr(R_v^-1 R_x)`` on stacked matrices.

    Returns ``(weights [..., M], flagged [...])``; entries whose trace falls
    below ``1e-12 * M`` in magnitude pass the reference channel through.
    """
    n_ch = rx.shape[-1]
    _check_ref(ref, n_ch)
    ratio = hermitian_solve(rv, rx, "interferer covariance")
    trace = np.trace(ratio, axis1=-2, axis2=-1)
    flagged = np.abs(trace) < TRACE_FLOOR * n_ch
    safe = np.where(flagged, 1.0, trace)
    weights = ratio[..., :, ref] / safe[..., None]
    weights[flagged] = np.eye(n_ch)[ref]
    return weights, flagged


def mwf_solution(rx, rv, ref: int) -> np.ndarray:
    """``(R_x + R_v)^-1 R_x u_ref`` on stacked matrices."""
    n_ch = rx.shape[-1]
    _check_ref(ref, n_ch)
    return hermitian_solve(rx + rv, rx[..., :, ref:ref + 1], "mixture covariance")[..., 0]


def _pair(rx: SpatialCovariance, rv: SpatialCovariance) -> tuple[np.ndarray, np.ndarray]:
    if rx.matrices.shape != rv.matrices.shape:
        raise ValueError(f"SCM shapes differ: {rx.matrices.shape} vs {rv.matrices.shape}")
    return rx.matrices, rv.matrices


def mvdr_weights(rx: SpatialCovariance, rv: SpatialCovariance, ref: int = 0) -> BeamformerWeights:
    weights, flagged = mvdr_solution(*_pair(rx, rv), ref)
    return BeamformerWeights(weights, ref, flagged)


def mwf_weights(rx: SpatialCovariance, rv: SpatialCovariance, ref: int = 0) -> BeamformerWeights:
    return BeamformerWeights(mwf_solution(*_pair(rx, rv), ref), ref)


def apply_weights(weights, y) -> np.ndarray:
    """``w(n)^H Y(:, n, k)`` for weights ``[..., N, M]`` and ``y [..., M, N, K]``."""
    return np.einsum("...nm,...mnk->...nk", np.conj(weights), y, optimize=True)


def apply_beamformer(w: BeamformerWeights, spec: SpectrogramTensor) -> SpectrogramTensor:
    """Beamformed single-channel spectrogram (1 x N x K)."""
    if w.weights.shape != spec.values.shape[:2][::-1]:
        raise ValueError(
            f"weights {w.weights.shape} do not match spectrogram {spec.values.shape}")
    return SpectrogramTensor(apply_weights(w.weights, spec.values), spec.frame_hop)
