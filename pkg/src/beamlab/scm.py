"""Masked spatial covariance matrices (per bin, no inter-frequency terms)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import Mask, SpectrogramTensor

__all__ = [
    "SpatialCovariance",
    "framewise_scm",
    "average_scm",
    "masked_scm",
    "diagonal_load",
    "hermitian_error",
    "DEFAULT_DIAG_LOAD",
    "LOAD_FLOOR",
]

DEFAULT_DIAG_LOAD = 1e-6
LOAD_FLOOR = 1e-12


def hermitian_error(matrices) -> float:
    matrices = np.asarray(matrices)
    return float(np.max(np.abs(matrices - np.conj(np.swapaxes(matrices, -1, -2)))))


@dataclass(frozen=True, eq=False)
class SpatialCovariance:
    """N x M x M stack of Hermitian PSD matrices, one per frequency bin."""

    matrices: np.ndarray

    def __post_init__(self):
        matrices = np.asarray(self.matrices, dtype=np.complex128)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise ValueError("SCM must be N x M x M")
        if not np.all(np.isfinite(matrices)):
            raise ValueError("SCM entries must be finite")
        matrices = np.array(matrices, copy=True)
        matrices.setflags(write=False)
        object.__setattr__(self, "matrices", matrices)

    @property
    def num_bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_channels(self) -> int:
        return self.matrices.shape[1]

    def trace(self) -> np.ndarray:
        return np.trace(self.matrices, axis1=1, axis2=2).real

    def check(self, herm_tol: float = 1e-12, psd_tol: float = 1e-10) -> None:
        """Raise if any slice is not Hermitian or not PSD within tolerance."""
        if hermitian_error(self.matrices) > herm_tol:
            raise ValueError("SCM is not Hermitian")
        herm = 0.5 * (self.matrices + np.conj(np.swapaxes(self.matrices, 1, 2)))
        eig_min = np.linalg.eigvalsh(herm)[:, 0]
        if np.any(eig_min < -psd_tol * np.maximum(self.trace(), 0.0)):
            raise ValueError("SCM is not positive semi-definite")

    def __add__(self, other: "SpatialCovariance") -> "SpatialCovariance":
        return SpatialCovariance(self.matrices + other.matrices)


def _spectrogram_values(spec) -> np.ndarray:
    return spec.values if isinstance(spec, SpectrogramTensor) else np.asarray(spec)


def _mask_values(mask, n_bins: int, n_frames: int) -> np.ndarray:
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    if values.shape != (n_bins, n_frames):
        raise ValueError(
            f"mask shape {values.shape} does not match spectrogram ({n_bins}, {n_frames})")
    return values


def framewise_scm(spec, mask) -> np.ndarray:
    """Per-frame masked outer products ``m(n,k) Y(n,k) Y(n,k)^H``, shape N x K x M x M."""
    y = _spectrogram_values(spec)
    _, n_bins, n_frames = y.shape
    m = _mask_values(mask, n_bins, n_frames)
    yt = np.transpose(y, (1, 2, 0))  # N x K x M
    return m[..., None, None] * yt[..., :, None] * yt.conj()[..., None, :]


def _symmetrize(matrices: np.ndarray) -> np.ndarray:
    return 0.5 * (matrices + np.conj(np.swapaxes(matrices, -1, -2)))


def average_scm(framewise) -> SpatialCovariance:
    """Plain 1/K time average of frame-wise SCMs, Hermitian-symmetrised."""
    framewise = np.asarray(framewise)
    if framewise.ndim != 4 or framewise.shape[1] < 1:
        raise ValueError("frame-wise SCMs must be N x K x M x M with K >= 1")
    return SpatialCovariance(_symmetrize(framewise.mean(axis=1)))


def masked_scm(spec, mask) -> SpatialCovariance:
    """``average_scm(framewise_scm(spec, mask))`` without the N x K x M x M intermediate."""
    y = _spectrogram_values(spec)
    _, n_bins, n_frames = y.shape
    m = _mask_values(mask, n_bins, n_frames)
    acc = np.einsum("ank,nk,bnk->nab", y, m, y.conj(), optimize=True) / n_frames
    return SpatialCovariance(_symmetrize(acc))


def diagonal_load(scm: SpatialCovariance, eps_rel: float = DEFAULT_DIAG_LOAD) -> SpatialCovariance:
    """Add ``eps_rel * (trace/M + 1e-12) * I`` to every bin."""
    if eps_rel < 0:
        raise ValueError("eps_rel must be >= 0")
    n_ch = scm.num_channels
    level = eps_rel * (scm.trace() / n_ch + LOAD_FLOOR)
    return SpatialCovariance(scm.matrices + level[:, None, None] * np.eye(n_ch))
