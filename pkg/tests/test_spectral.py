# tests/test_spectral.py
"""Tests for radioforge.spectral: centred STFT framing and visible band measurement."""

import math

import numpy as np
import pytest
from scipy.signal import get_window

from radioforge.spectral import centred_stft, stft_column_count, visible_band

FS = 1e6
FFT = 256
HOP = 64
TAPS = get_window("hamming", FFT, fftbins=True)
DF = FS / FFT


def _tone(freq, n):
    return np.exp(2j * np.pi * freq * np.arange(n) / FS)


class TestCentredStft:
    def test_column_count(self, rng):
        x = rng.normal(size=5000) + 1j * rng.normal(size=5000)
        assert centred_stft(x, FFT, HOP, TAPS).shape == (FFT, math.ceil(5000 / HOP))
        assert stft_column_count(5000, HOP) == 79

    def test_slice_matches_whole_recording(self, rng):
        """Test a burst transformed at its offset gives the cells of the full frame."""
        burst = rng.normal(size=1000) + 1j * rng.normal(size=1000)
        frame = np.zeros(5000, dtype=complex)
        frame[1000:2000] = burst
        whole = centred_stft(frame, FFT, HOP, TAPS)
        part = centred_stft(burst, FFT, HOP, TAPS, first_column=10, n_columns=30, offset=1000)
        assert np.allclose(part, whole[:, 10:40])

    def test_dc_sits_in_the_middle_row(self):
        x = np.ones(2048, dtype=complex)
        spectrum = np.abs(centred_stft(x, FFT, HOP, TAPS))
        assert int(np.argmax(spectrum[:, 16])) == FFT // 2

    def test_needs_one_column(self):
        with pytest.raises(ValueError):
            centred_stft(np.ones(10), FFT, HOP, TAPS, n_columns=0)


class TestVisibleBand:
    def test_tone_gives_a_narrow_band_around_it(self):
        """Test a tone burst measures a band of a few bins holding its frequency."""
        f = 125e3
        low, high = visible_band(_tone(f, 3000), 1000, 8000, FS, FFT, HOP, TAPS)
        assert low < f < high
        assert high - low <= 5 * DF
        assert (high - low) / DF == pytest.approx(round((high - low) / DF))

    def test_edges_sit_half_a_bin_beyond_row_centres(self):
        f = 125e3
        low, high = visible_band(_tone(f, 3000), 0, 3000, FS, FFT, HOP, TAPS)
        assert (f - low) / DF % 1 == pytest.approx(0.5)
        assert (high - f) / DF % 1 == pytest.approx(0.5)

    def test_wideband_burst_spans_its_occupied_band(self, rng):
        """Test band-limited noise between -100 and 100 kHz measures close to that band."""
        n = 20_000
        spectrum = np.zeros(n, dtype=complex)
        freqs = np.fft.fftfreq(n, 1.0 / FS)
        occupied = np.abs(freqs) < 100e3
        spectrum[occupied] = rng.normal(size=occupied.sum()) + 1j * rng.normal(
            size=occupied.sum()
        )
        burst = np.fft.ifft(spectrum)
        low, high = visible_band(burst, 0, n, FS, FFT, HOP, TAPS)
        assert low == pytest.approx(-100e3, abs=3 * DF)
        assert high == pytest.approx(100e3, abs=3 * DF)

    def test_band_clips_edges(self):
        f = 125e3
        low, high = visible_band(
            _tone(f, 3000), 0, 3000, FS, FFT, HOP, TAPS, band=(-500e3, 126e3)
        )
        assert high == pytest.approx(126e3)
        assert low < f

    @pytest.mark.parametrize("burst", [np.zeros(2000), np.zeros(0)])
    def test_silent_burst_has_no_band(self, burst):
        assert visible_band(burst, 0, 4000, FS, FFT, HOP, TAPS) is None
