"""Synthetic spatial scenes: array geometry, fractional-delay propagation,
sparse exponentially decaying echoes and SI-SDR-controlled mixing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .metrics import si_sdr
from .signal import MultichannelSignal

__all__ = [
    "ReverbSpec",
    "SceneSpec",
    "SceneRender",
    "fractional_delay",
    "sinc_kernel",
    "impulse_responses",
    "render_scene",
    "hearing_aid_geometry",
    "white_noise",
    "speech_shaped_noise",
    "multitone",
    "make_source",
    "SINC_TAPS",
]

SINC_TAPS = 64
_HALF = SINC_TAPS // 2  # kernel covers lags -31 .. +32 around the integer delay
MIN_DISTANCE = 0.1
HA_MIC_SPACING = 0.0076
HA_EAR_DISTANCE = 0.16


def sinc_kernel(frac: float) -> np.ndarray:
    """64-tap Hann-windowed sinc for a delay of ``frac`` in [0, 1) samples.

    Tap ``i`` corresponds to lag ``i - 31``.
    """
    lags = np.arange(-_HALF + 1, _HALF + 1) - frac
    window = 0.5 * (1 + np.cos(np.pi * lags / _HALF))
    return np.sinc(lags) * window


def _place(rir: np.ndarray, delay: float, gain: float, offset: int) -> None:
    whole = int(np.floor(delay))
    start = whole - _HALF + 1 + offset
    rir[start:start + SINC_TAPS] += gain * sinc_kernel(delay - whole)


def _apply_rir(x: np.ndarray, rir: np.ndarray, offset: int) -> np.ndarray:
    y = fftconvolve(x, rir) if len(rir) > 256 else np.convolve(x, rir)
    return y[offset:offset + len(x)]


def fractional_delay(x, delay: float) -> np.ndarray:
    """Delay ``x`` by a real number of samples with windowed-sinc interpolation.

    The output has the same length as ``x``; samples shifted past the end
    are dropped and the start is zero-filled.
    """
    x = np.asarray(x, dtype=np.float64)
    if delay < 0:
        raise ValueError("delay must be non-negative")
    if delay > len(x):
        raise ValueError(f"delay {delay} exceeds signal length {len(x)}")
    rir = np.zeros(int(np.floor(delay)) + SINC_TAPS + 1)
    _place(rir, delay, 1.0, _HALF)
    return _apply_rir(x, rir, _HALF)


@dataclass(frozen=True)
class ReverbSpec:
    decay_time_s: float = 0.3
    reflection_count: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.decay_time_s <= 0:
            raise ValueError("decay_time_s must be positive")
        if self.reflection_count < 0:
            raise ValueError("reflection_count must be >= 0")


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Geometry and mixing parameters of a two-source scene.

    ``source_positions`` holds the target first, then the interferer. The
    interferer starts ``preroll_s`` seconds before the target.
    """

    mic_positions: np.ndarray
    source_positions: np.ndarray
    sample_rate: int
    input_si_sdr_db: float = 0.0
    speed_of_sound: float = 343.0
    reverb: ReverbSpec | None = None
    preroll_s: float = 0.0
    reference: int = 0
    interferer_free: bool = False

    def __post_init__(self):
        mics = np.asarray(self.mic_positions, dtype=np.float64)
        sources = np.asarray(self.source_positions, dtype=np.float64)
        if mics.ndim != 2 or mics.shape[1] != 3 or mics.shape[0] < 2:
            raise ValueError("mic_positions must be M >= 2 points in 3-D")
        if sources.shape != (2, 3):
            raise ValueError("source_positions must be two 3-D points (target, interferer)")
        points = np.vstack([mics, sources])
        gaps = np.linalg.norm(points[:, None] - points[None], axis=-1)
        if np.any(gaps[np.triu_indices(len(points), 1)] < 1e-9):
            raise ValueError("mic and source positions must be pairwise distinct")
        if not np.isfinite(self.input_si_sdr_db):
            raise ValueError("input_si_sdr_db must be finite; use interferer_free instead")
        if self.preroll_s < 0:
            raise ValueError("preroll_s must be >= 0")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise ValueError("speed_of_sound and sample_rate must be positive")
        if not 0 <= self.reference < len(mics):
            raise ValueError("reference mic out of range")
        object.__setattr__(self, "mic_positions", mics)
        object.__setattr__(self, "source_positions", sources)

    @property
    def num_mics(self) -> int:
        return len(self.mic_positions)

    def to_dict(self) -> dict:
        out = {
            "mic_positions": self.mic_positions.tolist(),
            "source_positions": self.source_positions.tolist(),
            "sample_rate": self.sample_rate,
            "input_si_sdr_db": self.input_si_sdr_db,
            "speed_of_sound": self.speed_of_sound,
            "preroll_s": self.preroll_s,
            "reference": self.reference,
            "interferer_free": self.interferer_free,
        }
        if self.reverb is not None:
            out["reverb"] = {"decay_time_s": self.reverb.decay_time_s,
                             "reflection_count": self.reverb.reflection_count,
                             "seed": self.reverb.seed}
        return out


@dataclass(frozen=True, eq=False)
class SceneRender:
    mixture: MultichannelSignal
    target_image: MultichannelSignal
    interferer_image: MultichannelSignal
    reference: int = 0
    impulse_responses: dict = field(default_factory=dict, repr=False)

    @property
    def input_si_sdr(self) -> float:
        r = self.reference
        return si_sdr(self.target_image.samples[r], self.mixture.samples[r])


def hearing_aid_geometry() -> np.ndarray:
    """Six behind-the-ear mics: (front, mid, rear) on the left ear, then the right.

    Triplets are collinear along the front-back (y) axis with 7.6 mm spacing;
    ear centres sit at x = -/+ 0.08 m.
    """
    offsets = np.array([HA_MIC_SPACING, 0.0, -HA_MIC_SPACING])
    mics = []
    for x in (-HA_EAR_DISTANCE / 2, HA_EAR_DISTANCE / 2):
        for dy in offsets:
            mics.append((x, dy, 0.0))
    return np.array(mics)


def impulse_responses(spec: SceneSpec, source: np.ndarray,
                      rng: np.random.Generator | None) -> tuple[np.ndarray, int]:
    """Per-mic impulse responses (M x len) for one source, plus the lag offset.

    Direct path: delay distance/c, gain 1/max(distance, 0.1). Echoes share
    arrival time, direction, sign and gain across mics; each mic sees the
    echo shifted by its plane-wave offset from the array centre.
    """
    fs = spec.sample_rate
    c = spec.speed_of_sound
    dists = np.linalg.norm(spec.mic_positions - source, axis=1)
    delays = [dists * fs / c]
    gains = [1.0 / np.maximum(dists, MIN_DISTANCE)]
    if spec.reverb is not None and spec.reverb.reflection_count > 0 and rng is not None:
        rv = spec.reverb
        center = spec.mic_positions.mean(axis=0)
        d_center = np.linalg.norm(center - source)
        g_direct = 1.0 / max(d_center, MIN_DISTANCE)
        excess = rng.uniform(0.0, rv.decay_time_s, rv.reflection_count)
        directions = rng.standard_normal((rv.reflection_count, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        signs = rng.choice([-1.0, 1.0], rv.reflection_count)
        decay = np.exp(-3.0 * excess * np.log(10) / rv.decay_time_s)
        rel = spec.mic_positions - center
        for e, u, s, g in zip(excess, directions, signs, decay):
            arrival = (d_center / c + e - rel @ u / c) * fs
            delays.append(np.maximum(arrival, 0.0))
            gains.append(np.full(spec.num_mics, s * g * g_direct))
    delays = np.array(delays)
    gains = np.array(gains)
    length = int(np.ceil(delays.max())) + SINC_TAPS + 1
    rirs = np.zeros((spec.num_mics, length + _HALF))
    for d_row, g_row in zip(delays, gains):
        for m in range(spec.num_mics):
            _place(rirs[m], d_row[m], g_row[m], _HALF)
    return rirs, _HALF


def _interferer_gain(target_ref: np.ndarray, interferer_ref: np.ndarray, si_sdr_db: float) -> float:
    # closed form for g such that si_sdr(x, x + g v) equals the requested value
    p = np.dot(target_ref, target_ref)
    if p == 0:
        raise ValueError("target image is silent at the reference mic")
    a = np.dot(interferer_ref, target_ref) / p
    resid = interferer_ref - a * target_ref
    e = np.dot(resid, resid)
    if e == 0:
        raise ValueError("interferer image is collinear with the target at the reference mic")
    rho = 10.0 ** (si_sdr_db / 10.0)
    denom = np.sqrt(rho * e) - a * np.sqrt(p)
    if denom <= 0:
        raise ValueError("requested input SI-SDR unreachable for this scene")
    return float(np.sqrt(p) / denom)


def render_scene(spec: SceneSpec, dry_target, dry_interferer) -> SceneRender:
    """Spatialise two dry sources and mix them at the configured input SI-SDR.

    The output length equals ``len(dry_interferer)``; the target enters
    ``preroll_s`` seconds after the interferer.
    """
    dry_interferer = np.asarray(dry_interferer, dtype=np.float64)
    dry_target = np.asarray(dry_target, dtype=np.float64)
    n = len(dry_interferer)
    preroll = int(round(spec.preroll_s * spec.sample_rate))
    if n <= preroll:
        raise ValueError("dry signals shorter than the preroll")
    target = np.zeros(n)
    take = min(n - preroll, len(dry_target))
    target[preroll:preroll + take] = dry_target[:take]

    rng = np.random.default_rng(spec.reverb.seed) if spec.reverb is not None else None
    rir_t, off = impulse_responses(spec, spec.source_positions[0], rng)
    rir_v, _ = impulse_responses(spec, spec.source_positions[1], rng)
    max_direct = np.linalg.norm(spec.mic_positions[:, None] - spec.source_positions[None],
                                axis=-1).max() * spec.sample_rate / spec.speed_of_sound
    if max_direct > n:
        raise ValueError("dry signals shorter than the propagation delay")

    target_img = np.stack([_apply_rir(target, rir_t[m], off) for m in range(spec.num_mics)])
    if spec.interferer_free:
        interferer_img = np.zeros_like(target_img)
    else:
        interferer_img = np.stack(
            [_apply_rir(dry_interferer, rir_v[m], off) for m in range(spec.num_mics)])
        r = spec.reference
        interferer_img = interferer_img * _interferer_gain(
            target_img[r], interferer_img[r], spec.input_si_sdr_db)
    mixture = target_img + interferer_img
    fs = spec.sample_rate
    return SceneRender(MultichannelSignal(mixture, fs), MultichannelSignal(target_img, fs),
                       MultichannelSignal(interferer_img, fs), spec.reference,
                       {"target": rir_t, "interferer": rir_v})


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _gate(x: np.ndarray, rng: np.random.Generator, sample_rate: int,
          modulation_hz: float) -> np.ndarray:
    """On/off gating at roughly ``modulation_hz`` segments per second with smooth ramps."""
    n = len(x)
    seg = max(1, int(sample_rate / modulation_hz))
    n_seg = -(-n // seg)
    levels = (rng.uniform(size=n_seg) < 0.6).astype(float)
    if not levels.any():
        levels[rng.integers(n_seg)] = 1.0
    env = np.repeat(levels, seg)[:n]
    ramp = max(1, seg // 4)
    smooth = np.hanning(2 * ramp + 1)
    return x * np.convolve(env, smooth / smooth.sum(), mode="same")


def white_noise(n: int, rng: np.random.Generator, sample_rate: int = 16000,
                modulation_hz: float = 0.0) -> np.ndarray:
    x = rng.standard_normal(n)
    if modulation_hz > 0:
        x = _gate(x, rng, sample_rate, modulation_hz)
    return _unit_rms(x)


def speech_shaped_noise(n: int, rng: np.random.Generator, sample_rate: int = 16000,
                        modulation_hz: float = 0.0) -> np.ndarray:
    """White noise through a one-pole -6 dB/octave filter.

    With ``modulation_hz > 0`` the noise is gated on/off at roughly that
    syllable rate, giving speech-like sparsity in time.
    """
    x = lfilter([1.0], [1.0, -0.95], rng.standard_normal(n))
    if modulation_hz > 0:
        x = _gate(x, rng, sample_rate, modulation_hz)
    return _unit_rms(x)


def multitone(n: int, rng: np.random.Generator, sample_rate: int = 16000,
              freqs=(220.0, 440.0, 880.0, 1760.0)) -> np.ndarray:
    t = np.arange(n) / sample_rate
    phases = rng.uniform(0, 2 * np.pi, len(freqs))
    x = sum(np.cos(2 * np.pi * f * t + p) for f, p in zip(freqs, phases))
    return _unit_rms(np.asarray(x, dtype=np.float64))


def make_source(desc: dict, n: int, sample_rate: int) -> np.ndarray:
    """Build a dry source from a small description dict.

    ``{"kind": "white" | "speech_shaped" | "multitone", "seed": int, ...}``;
    the noise kinds accept ``modulation_hz``, ``multitone`` accepts ``freqs``.
    """
    kind = desc.get("kind", "speech_shaped")
    rng = np.random.default_rng(desc.get("seed", 0))
    if kind == "white":
        return white_noise(n, rng, sample_rate, desc.get("modulation_hz", 0.0))
    if kind == "speech_shaped":
        return speech_shaped_noise(n, rng, sample_rate, desc.get("modulation_hz", 0.0))
    if kind == "multitone":
        return multitone(n, rng, sample_rate, desc.get("freqs", (220.0, 440.0, 880.0, 1760.0)))
    raise ValueError(f"unknown source kind {kind!r}")
