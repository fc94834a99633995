import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from beamlab.filterbank import (
    Filterbank,
    analyze,
    frequency_response,
    hilbert_transform,
    macs,
    make_analytic_filterbank,
    make_free_filterbank,
    make_stft_filterbank,
    synthesize,
)
from beamlab.metrics import si_sdr
from beamlab.signal import MultichannelSignal


def negative_energy_fraction(filters):
    """Share of spectral energy in strictly negative DFT bins (Nyquist excluded)."""
    spec = np.abs(np.fft.fft(filters, axis=-1)) ** 2
    length = filters.shape[-1]
    neg = spec[..., length // 2 + 1:].sum(-1)
    return neg / spec.sum(-1)


class TestStft:
    def test_rectangular_dft_is_orthogonal(self):
        fb = make_stft_filterbank(4, 4, 4, "rectangular")
        gram = fb.analysis.conj() @ fb.analysis.T
        np.testing.assert_allclose(gram, 4 * np.eye(4), atol=1e-12)
        assert macs(fb) <= 1e-12

    def test_small_roundtrip(self):
        fb = make_stft_filterbank(4, 4, 2, "sqrt_hann")
        x = np.random.default_rng(0).standard_normal(64)
        y = synthesize(fb, analyze(fb, x))
        assert si_sdr(x[4:len(y) - 4], y[4:-4]) >= 60

    def test_kernel_must_equal_bins(self):
        with pytest.raises(ValueError, match="L == N"):
            make_stft_filterbank(4, 8, 2)

    @pytest.mark.parametrize("window,hop", [("rectangular", 3), ("sqrt_hann", 3), ("sqrt_hann", 8)])
    def test_non_cola_rejected(self, window, hop):
        with pytest.raises(ValueError, match="not COLA"):
            make_stft_filterbank(8, 8, hop, window)

    def test_matches_numpy_fft(self):
        fb = make_stft_filterbank(16, 16, 8)
        x = np.random.default_rng(3).standard_normal(80)
        spec = analyze(fb, x).values[0]
        win = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(16) / 16))
        frames = np.stack([x[k * 8:k * 8 + 16] for k in range(spec.shape[1])])
        np.testing.assert_allclose(spec, np.fft.fft(frames * win, axis=1).T, atol=1e-12)

    @pytest.mark.parametrize("n,hop", [(16, 8), (16, 4), (32, 16)])
    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_perfect_reconstruction_property(self, n, hop, seed):
        fb = make_stft_filterbank(n, n, hop)
        x = np.random.default_rng(seed).standard_normal(20 * n)
        y = synthesize(fb, analyze(fb, x))
        assert si_sdr(x[n:len(y) - n], y[n:-n]) >= 60


class TestFreeAndAnalytic:
    def test_free_deterministic(self):
        a, b = make_free_filterbank(8, 6, 3, seed=5), make_free_filterbank(8, 6, 3, seed=5)
        np.testing.assert_array_equal(a.parameters(), b.parameters())

    def test_free_seed_changes_taps(self):
        a, b = make_free_filterbank(8, 6, 3, seed=5), make_free_filterbank(8, 6, 3, seed=6)
        assert np.any(a.parameters() != b.parameters())

    def test_free_allows_more_filters_than_taps(self):
        fb = make_free_filterbank(2048, 256, 128, seed=0)
        assert (fb.num_filters, fb.kernel_size, fb.hop) == (2048, 256, 128)
        assert np.abs(fb.analysis_real).max() <= 1 / np.sqrt(256)

    def test_parameter_counts(self):
        free = make_free_filterbank(8, 12, 6)
        analytic = make_analytic_filterbank(8, 12, 6)
        assert free.num_parameters == 4 * 8 * 12 == len(free.parameters())
        assert analytic.num_parameters == 2 * 8 * 12 == free.num_parameters // 2

    def test_analytic_coupling(self):
        fb = make_analytic_filterbank(8, 32, 16, seed=2)
        np.testing.assert_allclose(fb.analysis_imag, hilbert_transform(fb.analysis_real), atol=1e-10)
        np.testing.assert_allclose(fb.synthesis_imag, hilbert_transform(fb.synthesis_real), atol=1e-10)
        assert negative_energy_fraction(fb.analysis).max() <= 1e-10
        assert negative_energy_fraction(fb.synthesis).max() <= 1e-10

    def test_analytic_coupling_survives_parameter_update(self):
        fb = make_analytic_filterbank(4, 16, 8, seed=2)
        new = fb.with_parameters(fb.parameters() + 0.3)
        assert new.kind == "analytic"
        np.testing.assert_allclose(new.analysis_imag, hilbert_transform(new.analysis_real), atol=1e-10)

    def test_with_parameters_roundtrip(self):
        fb = make_free_filterbank(3, 5, 2, seed=1)
        np.testing.assert_array_equal(fb.with_parameters(fb.parameters()).parameters(), fb.parameters())
        with pytest.raises(ValueError):
            fb.with_parameters(np.zeros(3))

    def test_invalid_hop(self):
        with pytest.raises(ValueError):
            make_free_filterbank(4, 4, 5)


class TestHilbert:
    def test_cosine_to_sine(self):
        t = np.arange(16)
        np.testing.assert_allclose(hilbert_transform(np.cos(2 * np.pi * t / 16)),
                                   np.sin(2 * np.pi * t / 16), atol=1e-10)

    def test_constant_to_zero(self):
        np.testing.assert_allclose(hilbert_transform(np.full(9, 3.0)), 0.0, atol=1e-12)

    def test_too_short(self):
        with pytest.raises(ValueError):
            hilbert_transform([1.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 64), st.integers(0, 10_000))
    def test_random_vector_is_analytic(self, length, seed):
        h = np.random.default_rng(seed).standard_normal(length)
        assert negative_energy_fraction(h + 1j * hilbert_transform(h)) <= 1e-10

    @pytest.mark.parametrize("length", [7, 8, 33])
    def test_matches_scipy_analytic_signal(self, length):
        h = np.random.default_rng(length).standard_normal(length)
        np.testing.assert_allclose(hilbert_transform(h), scipy.signal.hilbert(h).imag, atol=1e-12)


def shift_modulus_change(fb, n, rng, oversample=1):
    """Relative change of |Y(n, k)| when an in-band sinusoid is shifted by one sample.

    The sinusoid sits at the filter's strongest bin of an ``oversample * L``
    point DFT.
    """
    fft_size = oversample * fb.kernel_size
    _, centers = frequency_response(fb, fft_size=fft_size)
    freq = 2 * np.pi * centers[n] / fft_size
    t = np.arange(40 * fb.kernel_size + 1)
    x = np.cos(freq * t + rng.uniform(0, 2 * np.pi))
    y0 = np.abs(analyze(fb, x[1:]).values[0, n])
    y1 = np.abs(analyze(fb, x[:-1]).values[0, n])
    return np.linalg.norm(y1 - y0) / np.linalg.norm(y0)


class TestShiftInvariance:
    def test_analytic_modulus_is_shift_tolerant(self):
        fb = make_analytic_filterbank(16, 64, 32, seed=4)
        rng = np.random.default_rng(0)
        changes = [shift_modulus_change(fb, n, rng) for n in range(fb.num_filters)]
        assert max(changes) <= 0.05

    def test_off_grid_frequencies_mostly_tolerant(self):
        fb = make_analytic_filterbank(16, 64, 32, seed=4)
        rng = np.random.default_rng(1)
        changes = [shift_modulus_change(fb, n, rng, oversample=8) for n in range(16)]
        assert np.median(changes) <= 0.05

    def test_real_filters_are_not(self):
        # same real taps without the Hilbert partner: modulus oscillates with the shift
        base = make_analytic_filterbank(16, 64, 32, seed=4)
        fb = Filterbank("free", base.analysis_real, np.zeros_like(base.analysis_real),
                        base.synthesis_real, np.zeros_like(base.synthesis_real), 32)
        rng = np.random.default_rng(0)
        changes = [shift_modulus_change(fb, n, rng) for n in range(fb.num_filters)]
        assert np.median(changes) > 0.05


class TestAnalyzeSynthesize:
    def test_impulse_gives_ones(self):
        fb = make_stft_filterbank(8, 8, 8, "rectangular")
        x = np.zeros(8)
        x[0] = 1.0
        np.testing.assert_allclose(analyze(fb, x).values[0, :, 0], 1.0)

    def test_zero_signal(self):
        fb = make_free_filterbank(4, 8, 4)
        assert not np.any(analyze(fb, np.zeros((2, 32))).values)
        assert not np.any(synthesize(fb, np.zeros((4, 5))))

    def test_analyze_matches_loop(self):
        fb = make_free_filterbank(3, 5, 2, seed=9)
        x = np.random.default_rng(2).standard_normal((2, 17))
        values = analyze(fb, MultichannelSignal(x, 8000)).values
        for m in range(2):
            for n in range(3):
                for k in range(values.shape[2]):
                    expected = sum(x[m, t + 2 * k] * fb.analysis[n, t] for t in range(5))
                    assert values[m, n, k] == pytest.approx(expected, abs=1e-12)

    def test_synthesize_matches_loop(self):
        fb = make_free_filterbank(3, 5, 2, seed=9)
        rng = np.random.default_rng(3)
        spec = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        y = synthesize(fb, spec)
        expected = np.zeros(3 * 2 + 5, dtype=complex)
        for k in range(4):
            for n in range(3):
                expected[2 * k:2 * k + 5] += spec[n, k] * fb.synthesis[n]
        np.testing.assert_allclose(y, expected.real, atol=1e-12)

    def test_linearity(self):
        fb = make_free_filterbank(6, 8, 4, seed=1)
        rng = np.random.default_rng(4)
        x, z = rng.standard_normal((2, 2, 64))
        a, b = 0.7, -1.9
        np.testing.assert_allclose(analyze(fb, a * x + b * z).values,
                                   a * analyze(fb, x).values + b * analyze(fb, z).values, atol=1e-12)
        s1, s2 = rng.standard_normal((2, 6, 10)) + 1j * rng.standard_normal((2, 6, 10))
        np.testing.assert_allclose(synthesize(fb, a * s1 + b * s2),
                                   a * synthesize(fb, s1) + b * synthesize(fb, s2), atol=1e-12)

    def test_bin_mismatch(self):
        fb = make_free_filterbank(6, 8, 4)
        with pytest.raises(ValueError, match="bins"):
            synthesize(fb, np.zeros((5, 3)))

    def test_signal_shorter_than_kernel(self):
        with pytest.raises(ValueError, match="shorter"):
            analyze(make_free_filterbank(2, 8, 4), np.zeros(5))


class TestMacs:
    def test_matches_pairwise_loop(self):
        fb = make_free_filterbank(5, 7, 3, seed=8)
        f = fb.analysis
        sims = [abs(np.vdot(f[i], f[j])) / (np.linalg.norm(f[i]) * np.linalg.norm(f[j]))
                for i in range(5) for j in range(i + 1, 5)]
        assert macs(fb) == pytest.approx(np.mean(sims), abs=1e-14)

    def test_identical_pair(self):
        filt = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        fb = Filterbank("free", filt, filt * 0, filt, filt * 0, 1)
        assert macs(fb) == pytest.approx(1.0)

    def test_sqrt_hann_stft_value(self):
        # |<phi_i, phi_j>| / ||phi||^2 is 1/2 for circularly adjacent bins and 0
        # otherwise, so MACS = (N / 2) / (N (N - 1) / 2) = 1 / (N - 1)
        value = macs(make_stft_filterbank(1024, 1024, 512))
        assert value == pytest.approx(1 / 1023, rel=1e-9)
        assert 0.0003 <= value <= 0.01

    def test_degenerate_filter(self):
        filt = np.array([[1.0, 0.0], [0.0, 0.0]])
        fb = Filterbank("free", filt, filt * 0, filt, filt * 0, 1)
        with pytest.raises(ValueError, match="degenerate"):
            macs(fb)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 12), st.integers(1, 12), st.integers(0, 1000))
    def test_range(self, n, length, seed):
        value = macs(make_free_filterbank(n, length, 1, seed=seed), "synthesis")
        assert 0.0 <= value <= 1.0


class TestFrequencyResponse:
    def test_dft_peak(self):
        fb = make_stft_filterbank(16, 16, 16, "rectangular")
        mags, centers = frequency_response(fb, fft_size=64)
        assert mags.shape == (16, 33)
        for n in range(9):
            assert centers[n] == n * 64 // 16
            assert mags[n, centers[n]] == pytest.approx(16.0)

    def test_constant_filter_peaks_at_dc(self):
        filt = np.ones((1, 8))
        fb = Filterbank("free", filt, filt * 0, filt, filt * 0, 4)
        _, centers = frequency_response(fb, fft_size=32)
        assert centers[0] == 0

    def test_sorted_stft_centers_monotone(self):
        _, centers = frequency_response(make_stft_filterbank(32, 32, 16), fft_size=128, sort=True)
        assert np.all(np.diff(centers) >= 0)

    def test_random_rows_finite_and_stable_sort(self):
        fb = make_free_filterbank(12, 16, 8, seed=3)
        mags, centers = frequency_response(fb, fft_size=16)
        assert np.all(np.isfinite(mags)) and np.all(mags.sum(1) > 0)
        smags, scenters = frequency_response(fb, fft_size=16, sort=True)
        order = np.argsort(centers, kind="stable")
        np.testing.assert_array_equal(smags, mags[order])
        assert np.all(np.diff(scenters) >= 0)

    def test_fft_size_too_small(self):
        with pytest.raises(ValueError):
            frequency_response(make_free_filterbank(2, 16, 8), fft_size=8)
