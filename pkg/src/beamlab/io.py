"""File formats: WAV audio, filterbank JSON, mask CSV, scene JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .filterbank import KINDS, Filterbank
from .masking import clamp_mask
from .scene import ReverbSpec, SceneSpec, hearing_aid_geometry
from .signal import Mask, MultichannelSignal

__all__ = [
    "read_wav",
    "write_wav",
    "filterbank_to_dict",
    "filterbank_from_dict",
    "save_filterbank",
    "load_filterbank",
    "read_mask_csv",
    "write_mask_csv",
    "load_scene_config",
    "dump_json",
]


def read_wav(path) -> MultichannelSignal:
    """Read PCM16/PCM32 or float WAV into a float64 M x T signal."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        data = data / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    data = np.asarray(data, dtype=np.float64)
    samples = data[None, :] if data.ndim == 1 else data.T
    return MultichannelSignal(samples, rate)


def write_wav(path, signal, sample_rate: int | None = None) -> None:
    """Write 32-bit float WAV (T x M layout on disk)."""
    if isinstance(signal, MultichannelSignal):
        sample_rate = signal.sample_rate
        samples = signal.samples
    else:
        samples = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    if sample_rate is None:
        raise ValueError("sample_rate required for raw arrays")
    out = samples.T.astype(np.float32)
    wavfile.write(str(path), int(sample_rate), out[:, 0] if out.shape[1] == 1 else out)


def dump_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def filterbank_to_dict(fb: Filterbank) -> dict:
    data = {
        "kind": fb.kind,
        "N": fb.num_filters,
        "L": fb.kernel_size,
        "H": fb.hop,
        "analysis_real": fb.analysis_real.tolist(),
        "synthesis_real": fb.synthesis_real.tolist(),
    }
    if fb.kind == "stft":
        data["window"] = fb.window
    if fb.kind != "analytic":
        data["analysis_imag"] = fb.analysis_imag.tolist()
        data["synthesis_imag"] = fb.synthesis_imag.tolist()
    return data


def _taps(data: dict, key: str, shape) -> np.ndarray:
    if key not in data:
        raise ValueError(f"filterbank file missing field {key!r}")
    taps = np.asarray(data[key], dtype=np.float64)
    if taps.shape != shape:
        raise ValueError(f"{key} has shape {taps.shape}, expected {shape}")
    return taps


def filterbank_from_dict(data: dict) -> Filterbank:
    for key in ("kind", "N", "L", "H"):
        if key not in data:
            raise ValueError(f"filterbank file missing field {key!r}")
    kind = data["kind"]
    if kind not in KINDS:
        raise ValueError(f"unknown filterbank kind {kind!r}")
    shape = (int(data["N"]), int(data["L"]))
    a_re = _taps(data, "analysis_real", shape)
    s_re = _taps(data, "synthesis_real", shape)
    if kind == "analytic":
        a_im = s_im = None
    else:
        a_im = _taps(data, "analysis_imag", shape)
        s_im = _taps(data, "synthesis_imag", shape)
    return Filterbank(kind, a_re, a_im, s_re, s_im, int(data["H"]), data.get("window"))


def save_filterbank(path, fb: Filterbank) -> None:
    Path(path).write_text(json.dumps(filterbank_to_dict(fb)) + "\n")


def load_filterbank(path) -> Filterbank:
    return filterbank_from_dict(json.loads(Path(path).read_text()))


def read_mask_csv(path, n_bins: int | None = None, n_frames: int | None = None) -> Mask:
    """Read a K-row x N-column CSV mask (values clipped to [0, 1]) as an N x K mask."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("mask CSV must be a non-empty rectangular table")
    mask = clamp_mask(np.asarray(rows).T)
    expected = (n_bins, n_frames)
    if n_bins is not None and mask.shape != expected:
        raise ValueError(f"mask file has {mask.shape[1]} rows x {mask.shape[0]} columns, "
                         f"expected {n_frames} frames x {n_bins} bins")
    return mask


def write_mask_csv(path, mask: Mask) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in mask.values.T:
            writer.writerow([repr(float(v)) for v in row])


_REQUIRED_SCENE_FIELDS = ("mic_positions", "source_positions", "sample_rate", "duration_s")


def load_scene_config(path_or_dict) -> tuple[SceneSpec, dict, dict, float]:
    """Parse a scene JSON into ``(SceneSpec, target_source, interferer_source, duration_s)``.

    ``mic_positions`` may be the string ``"hearing_aid"``. Source entries
    are generator descriptions for :func:`beamlab.scene.make_source`, or
    ``{"wav": path}``.
    """
    if isinstance(path_or_dict, dict):
        data = path_or_dict
    else:
        try:
            data = json.loads(Path(path_or_dict).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid scene JSON: {exc}") from None
    for key in _REQUIRED_SCENE_FIELDS:
        if key not in data:
            raise ValueError(f"scene spec missing field {key!r}")
    interferer_free = bool(data.get("interferer_free", False))
    if not interferer_free and "input_si_sdr_db" not in data:
        raise ValueError("scene spec missing field 'input_si_sdr_db'")
    mics = data["mic_positions"]
    if mics == "hearing_aid":
        mics = hearing_aid_geometry()
    reverb = data.get("reverb")
    spec = SceneSpec(
        mic_positions=np.asarray(mics, dtype=np.float64),
        source_positions=np.asarray(data["source_positions"], dtype=np.float64),
        sample_rate=int(data["sample_rate"]),
        input_si_sdr_db=float(data.get("input_si_sdr_db", 0.0)),
        speed_of_sound=float(data.get("speed_of_sound", 343.0)),
        reverb=ReverbSpec(**reverb) if reverb else None,
        preroll_s=float(data.get("preroll_s", 0.0)),
        reference=int(data.get("reference", 0)),
        interferer_free=interferer_free,
    )
    seed = int(data.get("seed", 0))
    target = data.get("target", {"kind": "speech_shaped", "seed": seed, "modulation_hz": 4.0})
    interferer = data.get("interferer",
                          {"kind": "speech_shaped", "seed": seed + 1, "modulation_hz": 4.0})
    return spec, target, interferer, float(data["duration_s"])
