"""Sample-domain and time-frequency containers plus framing helpers.

Shapes used throughout the package (M: mics, T: samples, N: bins/filters,
K: frames, L: kernel size, H: hop):

    MultichannelSignal.samples   M x T      float64
    SpectrogramTensor.values     M x N x K  complex128
    Mask.values                  N x K      float64 in [0, 1]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MultichannelSignal",
    "SpectrogramTensor",
    "Mask",
    "frame_signal",
    "overlap_add",
    "num_frames",
]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class MultichannelSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError("samples must be a M x T matrix")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError("need at least one channel and one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]

    def __add__(self, other: "MultichannelSignal") -> "MultichannelSignal":
        if self.sample_rate != other.sample_rate:
            raise ValueError("sample rates differ")
        return MultichannelSignal(self.samples + other.samples, self.sample_rate)


@dataclass(frozen=True)
class SpectrogramTensor:
    values: np.ndarray
    frame_hop: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise ValueError("spectrogram must be M x N x K")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrogram entries must be finite")
        if self.frame_hop < 1:
            raise ValueError("frame_hop must be >= 1")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def bin_count(self) -> int:
        return self.values.shape[1]

    @property
    def num_frames(self) -> int:
        return self.values.shape[2]

    def channel(self, index: int) -> "SpectrogramTensor":
        return SpectrogramTensor(self.values[index:index + 1], self.frame_hop)


@dataclass(frozen=True)
class Mask:
    """Real N x K time-frequency mask for the target; the interferer mask is ``1 - values``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("mask must be N x K")
        if not np.all(np.isfinite(values)):
            raise ValueError("mask entries must be finite")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("mask entries must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def num_frames(num_samples: int, kernel_size: int, hop: int) -> int:
    return (num_samples - kernel_size) // hop + 1


def frame_signal(x, kernel_size: int, hop: int) -> np.ndarray:
    """Slice ``x`` (shape ``(..., T)``) into frames ``(..., K, L)``.

    Frame ``k`` covers samples ``[k*hop, k*hop + kernel_size)``. Trailing
    samples that do not fill a whole frame are dropped.
    """
    x = np.asarray(x)
    if kernel_size < 1:
        raise ValueError("kernel_size must be >= 1")
    if not 1 <= hop <= kernel_size:
        raise ValueError("hop must satisfy 1 <= hop <= kernel_size")
    if x.shape[-1] < kernel_size:
        raise ValueError("signal shorter than one frame")
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel_size, axis=-1)
    return windows[..., ::hop, :]


def overlap_add(frames, hop: int) -> np.ndarray:
    """Sum frames ``(..., K, L)`` shifted by ``hop``; output length ``(K-1)*hop + L``."""
    try:
        frames = np.asarray(frames)
    except ValueError as exc:
        raise ValueError("inconsistent frame lengths") from exc
    if frames.dtype == object or frames.ndim < 2:
        raise ValueError("inconsistent frame lengths")
    n_frames, kernel_size = frames.shape[-2:]
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if not 1 <= hop <= kernel_size:
        raise ValueError("hop must satisfy 1 <= hop <= kernel_size")
    length = (n_frames - 1) * hop + kernel_size
    out = np.zeros(frames.shape[:-2] + (length,), dtype=frames.dtype)
    if kernel_size % hop == 0:
        # vectorised over the L/H sub-blocks of each frame
        blocks = frames.reshape(frames.shape[:-1] + (kernel_size // hop, hop))
        for j in range(kernel_size // hop):
            out[..., j * hop:j * hop + n_frames * hop] += blocks[..., j, :].reshape(
                frames.shape[:-2] + (n_frames * hop,))
    else:
        for k in range(n_frames):
            out[..., k * hop:k * hop + kernel_size] += frames[..., k, :]
    return out
