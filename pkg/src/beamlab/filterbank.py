"""Complex analysis/synthesis filterbanks (STFT, free, analytic).

Analysis is the literal correlation

    Y_m(n, k) = sum_t y_m(t + kH) phi_n(t)

with no conjugation of ``phi_n``; STFT filters are therefore built with
``exp(-j 2 pi n t / N)`` so that the output matches the usual STFT.
Synthesis returns the real part of the complex overlap-add

    x(t) = Re sum_k sum_n X(n, k) psi_n(t - kH).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal import MultichannelSignal, SpectrogramTensor, frame_signal, overlap_add

__all__ = [
    "Filterbank",
    "KINDS",
    "WINDOWS",
    "make_stft_filterbank",
    "make_free_filterbank",
    "make_analytic_filterbank",
    "hilbert_transform",
    "analytic_filters",
    "analyze",
    "synthesize",
    "macs",
    "frequency_response",
    "cola_constant",
]

KINDS = ("stft", "free", "analytic")
WINDOWS = ("rectangular", "sqrt_hann")

ANALYTIC_TOL = 1e-10
COLA_RIPPLE_TOL = 1e-8


def _window(name: str, length: int) -> np.ndarray:
    if name == "rectangular":
        return np.ones(length)
    if name == "sqrt_hann":
        # periodic Hann, so that its square is COLA at H = L/2, L/4, ...
        t = np.arange(length)
        return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * t / length))
    raise ValueError(f"unknown window {name!r}; expected one of {WINDOWS}")


def cola_constant(window: np.ndarray, hop: int) -> float:
    """Constant overlap-add value of ``window`` at ``hop``.

    Raises if the overlap-added window ripples by more than 1e-8 relative.
    """
    window = np.asarray(window, dtype=np.float64)
    length = len(window)
    padded = np.zeros(-(-length // hop) * hop)
    padded[:length] = window
    total = padded.reshape(-1, hop).sum(axis=0)
    mean = total.mean()
    if mean <= 0 or (total.max() - total.min()) > COLA_RIPPLE_TOL * mean:
        raise ValueError("window not COLA at this hop")
    return float(mean)


def hilbert_transform(h) -> np.ndarray:
    """Discrete Hilbert transform of a real vector via a length-L DFT.

    Positive-frequency bins are multiplied by -j, negative ones by +j; DC
    and (for even L) Nyquist are zeroed. ``h + 1j * hilbert_transform(h)``
    is then analytic.
    """
    h = np.asarray(h, dtype=np.float64)
    length = h.shape[-1]
    if length < 2:
        raise ValueError("Hilbert transform needs at least 2 taps")
    spectrum = np.fft.fft(h, axis=-1)
    gain = np.zeros(length, dtype=np.complex128)
    half = (length - 1) // 2
    gain[1:half + 1] = -1j
    gain[length - half:] = 1j
    return np.fft.ifft(spectrum * gain, axis=-1).real


def analytic_filters(real_taps) -> np.ndarray:
    """Complex filters whose imaginary part is the Hilbert transform of the real part."""
    real_taps = np.asarray(real_taps, dtype=np.float64)
    return real_taps + 1j * hilbert_transform(real_taps)


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Filterbank:
    """Paired analysis/synthesis filterbank with N filters of L taps and hop H.

    Tap matrices are N x L. For ``kind="analytic"`` the imaginary parts are
    always recomputed from the real parts, so the Hilbert coupling cannot
    drift.
    """

    kind: str
    analysis_real: np.ndarray
    analysis_imag: np.ndarray
    synthesis_real: np.ndarray
    synthesis_imag: np.ndarray
    hop: int
    window: str | None = None
    _analysis: np.ndarray = field(init=False, repr=False, compare=False)
    _synthesis: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown filterbank kind {self.kind!r}")
        a_re = np.asarray(self.analysis_real, dtype=np.float64)
        s_re = np.asarray(self.synthesis_real, dtype=np.float64)
        if a_re.ndim != 2 or a_re.shape != s_re.shape:
            raise ValueError("tap matrices must all be N x L with equal shapes")
        n_filters, kernel_size = a_re.shape
        if n_filters < 1 or kernel_size < 1:
            raise ValueError("need N >= 1 filters of L >= 1 taps")
        if not 1 <= self.hop <= kernel_size:
            raise ValueError("hop must satisfy 1 <= H <= L")
        if self.kind == "analytic":
            a_im = hilbert_transform(a_re)
            s_im = hilbert_transform(s_re)
        else:
            a_im = np.asarray(self.analysis_imag, dtype=np.float64)
            s_im = np.asarray(self.synthesis_imag, dtype=np.float64)
            if a_im.shape != a_re.shape or s_im.shape != a_re.shape:
                raise ValueError("tap matrices must all be N x L with equal shapes")
        for taps in (a_re, a_im, s_re, s_im):
            if not np.all(np.isfinite(taps)):
                raise ValueError("filter taps must be finite")
        if self.kind == "stft" and n_filters != kernel_size:
            raise ValueError("STFT filterbank requires L == N")
        object.__setattr__(self, "hop", int(self.hop))
        object.__setattr__(self, "analysis_real", _readonly(a_re))
        object.__setattr__(self, "analysis_imag", _readonly(a_im))
        object.__setattr__(self, "synthesis_real", _readonly(s_re))
        object.__setattr__(self, "synthesis_imag", _readonly(s_im))
        object.__setattr__(self, "_analysis", a_re + 1j * a_im)
        object.__setattr__(self, "_synthesis", s_re + 1j * s_im)

    @property
    def num_filters(self) -> int:
        return self.analysis_real.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.analysis_real.shape[1]

    @property
    def analysis(self) -> np.ndarray:
        """Complex analysis filters, N x L."""
        return self._analysis

    @property
    def synthesis(self) -> np.ndarray:
        """Complex synthesis filters, N x L."""
        return self._synthesis

    @property
    def num_parameters(self) -> int:
        n_real = 2 if self.kind == "analytic" else 4
        return n_real * self.num_filters * self.kernel_size

    def parameters(self) -> np.ndarray:
        """Flat vector of the free (learnable) taps.

        Layout: analysis real, analysis imag, synthesis real, synthesis imag
        (row-major each); the imaginary blocks are absent for analytic banks.
        """
        if self.kind == "analytic":
            blocks = (self.analysis_real, self.synthesis_real)
        else:
            blocks = (self.analysis_real, self.analysis_imag,
                      self.synthesis_real, self.synthesis_imag)
        return np.concatenate([b.ravel() for b in blocks])

    def with_parameters(self, params) -> "Filterbank":
        """New filterbank of the same shape with taps taken from ``params``.

        STFT banks become ``free`` since their taps are no longer the DFT
        construction.
        """
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.num_parameters,):
            raise ValueError(
                f"expected {self.num_parameters} parameters, got {params.shape}")
        shape = (self.num_filters, self.kernel_size)
        blocks = params.reshape(-1, *shape)
        if self.kind == "analytic":
            return Filterbank("analytic", blocks[0], None, blocks[1], None, self.hop)
        return Filterbank("free", blocks[0], blocks[1], blocks[2], blocks[3], self.hop)


def make_stft_filterbank(n_bins: int, kernel_size: int, hop: int,
                         window: str = "sqrt_hann") -> Filterbank:
    """DFT-modulated filterbank with a COLA-normalised synthesis side.

    Analysis filter ``n`` is ``w(t) exp(-j 2 pi n t / N)``, synthesis filter
    ``n`` is ``w(t) exp(+j 2 pi n t / N) / C`` with ``C = N * S`` and ``S`` the
    overlap-add constant of ``w**2`` at ``hop``, which makes analysis followed
    by synthesis an identity away from the signal edges.
    """
    if kernel_size != n_bins:
        raise ValueError("STFT filterbank requires L == N")
    if not 1 <= hop <= kernel_size:
        raise ValueError("hop must satisfy 1 <= H <= L")
    win = _window(window, kernel_size)
    norm = n_bins * cola_constant(win ** 2, hop)
    t = np.arange(kernel_size)
    phase = 2 * np.pi * np.outer(np.arange(n_bins), t) / n_bins
    analysis = win * np.exp(-1j * phase)
    synthesis = win * np.exp(1j * phase) / norm
    return Filterbank("stft", analysis.real, analysis.imag, synthesis.real,
                      synthesis.imag, hop, window=window)


def _uniform_taps(rng: np.random.Generator, n_filters: int, kernel_size: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(kernel_size)
    return rng.uniform(-bound, bound, size=(n_filters, kernel_size))


def make_free_filterbank(n_filters: int, kernel_size: int, hop: int, seed: int = 0) -> Filterbank:
    rng = np.random.default_rng(seed)
    taps = [_uniform_taps(rng, n_filters, kernel_size) for _ in range(4)]
    return Filterbank("free", *taps, hop)


def make_analytic_filterbank(n_filters: int, kernel_size: int, hop: int, seed: int = 0) -> Filterbank:
    if kernel_size < 2:
        raise ValueError("analytic filterbank needs L >= 2")
    rng = np.random.default_rng(seed)
    analysis = _uniform_taps(rng, n_filters, kernel_size)
    synthesis = _uniform_taps(rng, n_filters, kernel_size)
    return Filterbank("analytic", analysis, None, synthesis, None, hop)


def analyze(fb: Filterbank, x: MultichannelSignal | np.ndarray) -> SpectrogramTensor:
    """Project every channel onto the analysis filters (M x N x K output)."""
    samples = x.samples if isinstance(x, MultichannelSignal) else np.atleast_2d(x)
    frames = frame_signal(samples, fb.kernel_size, fb.hop)  # M x K x L
    values = np.einsum("mkl,nl->mnk", frames, fb.analysis, optimize=True)
    return SpectrogramTensor(values, fb.hop)


def synthesize(fb: Filterbank, spec: SpectrogramTensor | np.ndarray) -> np.ndarray:
    """Overlap-add synthesis of a single-channel N x K spectrogram to a real signal."""
    values = spec.values if isinstance(spec, SpectrogramTensor) else np.asarray(spec)
    if values.ndim == 3:
        if values.shape[0] != 1:
            raise ValueError("synthesize expects a single-channel spectrogram")
        values = values[0]
    if values.shape[0] != fb.num_filters:
        raise ValueError(
            f"spectrogram has {values.shape[0]} bins, filterbank has {fb.num_filters}")
    frames = (values.T @ fb.synthesis).real  # K x L
    return overlap_add(frames, fb.hop)


def _filters(fb: Filterbank, which: str) -> np.ndarray:
    if which == "analysis":
        return fb.analysis
    if which == "synthesis":
        return fb.synthesis
    raise ValueError("which must be 'analysis' or 'synthesis'")


def macs(fb: Filterbank | np.ndarray, which: str = "analysis") -> float:
    """Mean absolute cosine similarity over all unique filter pairs.

    Filters are complex vectors compared with the Hermitian inner product;
    0 means an orthogonal set.
    """
    filters = fb if isinstance(fb, np.ndarray) else _filters(fb, which)
    n_filters = filters.shape[0]
    if n_filters < 2:
        raise ValueError("MACS needs at least two filters")
    norms = np.linalg.norm(filters, axis=1)
    if np.any(norms == 0):
        raise ValueError("degenerate filter")
    unit = filters / norms[:, None]
    gram = np.abs(unit.conj() @ unit.T)
    iu = np.triu_indices(n_filters, k=1)
    return float(np.clip(gram[iu].mean(), 0.0, 1.0))


def frequency_response(fb: Filterbank, which: str = "analysis", fft_size: int = 4096,
                       sort: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude response of each filter on ``fft_size // 2 + 1`` bins.

    ``R(b) = sum_t phi(t) exp(+j 2 pi b t / fft_size)`` is the filter's
    response to a complex exponential under the analysis correlation; the
    one-sided magnitude at bin ``b`` is ``max(|R(b)|, |R(-b)|)`` so that
    complex filters tuned to either sign of frequency are represented. DFT
    filter ``n`` (``n <= N/2``) thus peaks at ``n * fft_size / N``.

    Returns ``(magnitudes [N x fft_size//2+1], center_bins [N])``; with
    ``sort=True`` rows are stably sorted by center bin.
    """
    filters = _filters(fb, which)
    if fft_size < fb.kernel_size:
        raise ValueError("fft_size must be >= kernel size")
    response = np.abs(np.fft.fft(filters.conj(), n=fft_size, axis=1))
    half = fft_size // 2
    mags = np.maximum(response[:, :half + 1], response[:, (-np.arange(half + 1)) % fft_size])
    centers = np.argmax(mags, axis=1)
    if sort:
        order = np.argsort(centers, kind="stable")
        mags, centers = mags[order], centers[order]
    return mags, centers
