# tests/test_impair.py
"""Tests for radioforge.impair: front-end impairments, thermal noise and SNR truth."""

import math

import numpy as np
import pytest
from scipy.signal import welch

from radioforge.errors import ImpairmentError
from radioforge.impair import (
    BOLTZMANN,
    NONLINEARITY_MODELS,
    DcOffsetSpec,
    IqImbalanceSpec,
    NonlinearitySpec,
    PhaseNoiseSpec,
    ThermalNoiseSpec,
    am_am,
    am_pm,
    apply_dc_offset,
    apply_iq_imbalance,
    apply_nonlinearity,
    apply_nonlinearity_at_drive,
    apply_phase_noise,
    apply_thermal_noise,
    dbm_to_watts,
    estimate_snr_db,
    format_snrs,
    image_rejection_ratio_db,
    measure_truth_snr,
    noise_temperature_from_nf,
    watts_to_dbm,
)
from radioforge.modulate import ModulationSpec, modulate_linear


def _tone(n, bin_index, amplitude=1.0):
    return amplitude * np.exp(2j * np.pi * bin_index * np.arange(n) / n)


def test_power_conversions():
    """Test dBm and watt conversions."""
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert watts_to_dbm(1e-3) == pytest.approx(0.0)
    assert watts_to_dbm(0.0) == -math.inf


class TestIqImbalance:
    def test_disabled_is_identity(self):
        """Test a disabled spec has unit alpha and zero beta."""
        spec = IqImbalanceSpec(amplitude_db=2.0, phase_deg=10.0, enabled=False)
        assert spec.coefficients() == (1 + 0j, 0j)
        assert image_rejection_ratio_db(spec) == math.inf
        x = _tone(64, 3)
        assert np.array_equal(apply_iq_imbalance(x, spec), x)
        assert spec.to_dict() == {"A": 0.0, "P": 0.0}

    def test_image_matches_rejection_ratio(self):
        """Test the measured image tone level equals the closed-form IRR."""
        spec = IqImbalanceSpec(amplitude_db=1.0, phase_deg=5.0)
        n = 1024
        y = apply_iq_imbalance(_tone(n, 50), spec)
        spectrum = np.abs(np.fft.fft(y)) ** 2
        measured = 10 * np.log10(spectrum[50] / spectrum[n - 50])
        assert measured == pytest.approx(image_rejection_ratio_db(spec), abs=1e-6)


class TestDcOffset:
    def test_level_relative_to_signal(self, rng):
        """Test a -40 dB offset on a unit-power signal adds |c|^2 = 1e-4."""
        x = _tone(1000, 7)
        y = apply_dc_offset(x, DcOffsetSpec(level_db=-40.0), rng)
        offset = y - x
        assert np.allclose(offset, offset[0])
        assert abs(offset[0]) ** 2 == pytest.approx(1e-4, abs=1e-9)

    def test_disabled_and_empty(self, rng):
        """Test a disabled offset is a copy and empty input raises."""
        x = _tone(16, 1)
        assert np.array_equal(apply_dc_offset(x, DcOffsetSpec(), rng), x)
        assert DcOffsetSpec().to_dict() == {"Level": None}
        with pytest.raises(ImpairmentError):
            apply_dc_offset(np.zeros(0), DcOffsetSpec(level_db=-30.0), rng)


class TestPhaseNoise:
    @pytest.mark.slow
    def test_level_at_anchor_offset(self, rng):
        """Test the Welch PSD of e^{j phi} is -100 dBc/Hz at 10 kHz within 3 dB."""
        fs = 1e6
        spec = PhaseNoiseSpec(level_dbc_hz=-100.0, offset_hz=1e4)
        y = apply_phase_noise(np.ones(int(fs), dtype=np.complex128), spec, rng, fs)
        freqs, psd = welch(y, fs=fs, nperseg=65536, return_onesided=False)
        near = (np.abs(freqs) > 9e3) & (np.abs(freqs) < 11e3)
        # scale each bin back to the anchor through the 1/f^2 slope
        at_anchor = np.mean(psd[near] * (freqs[near] / 1e4) ** 2)
        assert 10 * np.log10(at_anchor) == pytest.approx(-100.0, abs=3.0)

    def test_constant_envelope_and_disabled(self, rng):
        """Test phase noise only rotates samples and a disabled spec is a copy."""
        x = _tone(4096, 5)
        y = apply_phase_noise(x, PhaseNoiseSpec(level_dbc_hz=-80.0), rng, 1e6)
        assert np.allclose(np.abs(y), 1.0)
        assert np.array_equal(apply_phase_noise(x, PhaseNoiseSpec(), rng, 1e6), x)

    def test_anchor_must_be_below_nyquist(self, rng):
        """Test an anchor offset at or above fs/2 raises."""
        spec = PhaseNoiseSpec(level_dbc_hz=-90.0, offset_hz=1e4)
        with pytest.raises(ImpairmentError):
            apply_phase_noise(np.ones(100), spec, rng, 2e4)


class TestNonlinearity:
    def test_saleh_closed_form(self):
        """Test the Saleh AM/AM and AM/PM curves at a few envelopes."""
        spec = NonlinearitySpec(model="saleh")
        r = np.array([0.1, 0.5, 1.0])
        a_a, b_a, a_p, b_p = spec.saleh
        assert np.allclose(am_am(r, spec), a_a * r / (1 + b_a * r**2))
        assert np.allclose(am_pm(r, spec), a_p * r**2 / (1 + b_p * r**2))
        assert am_am(np.array([1.0]), spec)[0] == pytest.approx(2.1587 / 2.1517)

    def test_ghorbani_closed_form(self):
        """Test the Ghorbani curves include the linear correction terms."""
        spec = NonlinearitySpec(model="ghorbani")
        x1, x2, x3, x4 = spec.ghorbani_am
        y1, y2, y3, y4 = spec.ghorbani_pm
        r = 0.5
        assert am_am(np.array([r]), spec)[0] == pytest.approx(
            x1 * r**x2 / (1 + x3 * r**x2) + x4 * r
        )
        assert am_pm(np.array([r]), spec)[0] == pytest.approx(
            y1 * r**y2 / (1 + y3 * r**y2) + y4 * r
        )

    def test_rapp_approaches_ideal_clipper(self):
        """Test Rapp with p = 100 is linear below saturation and flat above it."""
        spec = NonlinearitySpec(model="rapp", gain_db=10.0, saturation_dbm=30.0, smoothness=100)
        g = 10 ** 0.5
        a_sat = 1.0
        below = np.linspace(0.01, 0.99, 50) * a_sat / g
        assert np.allclose(am_am(below, spec), g * below, rtol=1e-2)
        above = np.linspace(1.5, 5.0, 20) * a_sat / g
        assert np.allclose(am_am(above, spec), a_sat, rtol=1e-2)
        assert np.all(am_pm(above, spec) == 0)

    def test_tanh_saturates(self):
        """Test the hyperbolic tangent model saturates at the output limit."""
        spec = NonlinearitySpec(model="hyperbolic-tangent", saturation_dbm=20.0)
        assert am_am(np.array([10.0]), spec)[0] == pytest.approx(math.sqrt(0.1))

    def test_cubic_intercept_point(self):
        """Test a two-tone measurement recovers the configured IIP3 within 0.5 dB."""
        spec = NonlinearitySpec(model="cubic-polynomial", gain_db=3.0, iip3_dbm=20.0)
        n = 4096
        amplitude = math.sqrt(dbm_to_watts(-10.0))
        x = _tone(n, 100, amplitude) + _tone(n, 110, amplitude)
        y = apply_nonlinearity(x, spec)
        inp = np.abs(np.fft.fft(x) / n) ** 2
        out = np.abs(np.fft.fft(y) / n) ** 2
        p_in = watts_to_dbm(inp[100])
        p_fund = watts_to_dbm(out[100])
        p_im3 = watts_to_dbm(out[90])
        assert p_in + (p_fund - p_im3) / 2 == pytest.approx(20.0, abs=0.5)

    def test_drive_level_preserves_small_signal_gain(self, rng):
        """Test a linear-region amplifier at drive level only applies its gain."""
        spec = NonlinearitySpec(model="cubic-polynomial", gain_db=0.0, iip3_dbm=60.0)
        x = rng.normal(size=1000) + 1j * rng.normal(size=1000)
        assert np.allclose(apply_nonlinearity_at_drive(x, spec), x, rtol=1e-3, atol=1e-3)

    def test_phase_is_preserved_without_am_pm(self):
        """Test AM/AM-only models keep the input phase."""
        spec = NonlinearitySpec(model="rapp", gain_db=0.0)
        x = _tone(256, 9, 0.5)
        y = apply_nonlinearity(x, spec)
        assert np.allclose(np.angle(y), np.angle(x))

    def test_validation_and_records(self):
        """Test unknown models and low smoothness raise; records name the method."""
        with pytest.raises(ImpairmentError):
            NonlinearitySpec(model="tube")
        with pytest.raises(ImpairmentError):
            NonlinearitySpec(model="rapp", smoothness=0.1)
        assert NonlinearitySpec().to_dict() == {"Method": None}
        record = NonlinearitySpec(model="saleh").to_dict()
        assert record["Method"] == "Saleh model"
        assert record["AmAmParameters"] == [2.1587, 1.1517]

    @pytest.mark.parametrize("model", NONLINEARITY_MODELS)
    def test_every_model_compresses_a_strong_tone(self, model):
        """Test each of the five amplifier models limits output power at heavy drive."""
        assert len(NONLINEARITY_MODELS) == 5
        spec = NonlinearitySpec(model=model, gain_db=0.0)
        weak = apply_nonlinearity(_tone(256, 9, 1e-3), spec)
        strong = apply_nonlinearity(_tone(256, 9, 1e3), spec)
        weak_gain = np.mean(np.abs(weak) ** 2) / 1e-6
        strong_gain = np.mean(np.abs(strong) ** 2) / 1e6
        assert strong_gain < weak_gain


class TestThermalNoise:
    def test_variance(self, rng):
        """Test empirical noise variance over 10^6 samples is k T fs within 1%."""
        spec = ThermalNoiseSpec(temperature_k=290.0)
        fs = 1e6
        noise = apply_thermal_noise(np.zeros(1_000_000), spec, fs, rng)
        assert np.mean(np.abs(noise) ** 2) == pytest.approx(BOLTZMANN * 290.0 * fs, rel=0.01)

    def test_independent_per_antenna(self, rng):
        """Test each antenna row receives its own noise."""
        spec = ThermalNoiseSpec(temperature_k=1000.0)
        noise = apply_thermal_noise(np.zeros((2, 10000)), spec, 1e6, rng)
        correlation = np.abs(np.vdot(noise[0], noise[1])) / np.vdot(noise[0], noise[0]).real
        assert correlation < 0.05

    def test_zero_temperature_and_bad_rate(self, rng):
        """Test T = 0 adds nothing and a non-positive rate raises."""
        x = _tone(32, 1)
        assert np.array_equal(apply_thermal_noise(x, ThermalNoiseSpec(), 1e6, rng), x)
        with pytest.raises(ImpairmentError):
            apply_thermal_noise(x, ThermalNoiseSpec(temperature_k=290.0), 0.0, rng)
        with pytest.raises(ImpairmentError):
            ThermalNoiseSpec(temperature_k=-1.0)

    def test_noise_figure_conversion(self):
        """Test a 3.0103 dB noise figure is a 290 K noise temperature."""
        assert noise_temperature_from_nf(10 * math.log10(2)) == pytest.approx(290.0)
        spec = ThermalNoiseSpec.from_noise_figure(10.0)
        assert spec.temperature_k == pytest.approx(2610.0)
        assert spec.to_dict()["NoiseFigure"] == 10.0


class TestSnrTruth:
    def test_measure_truth_snr(self):
        """Test SNR is signal power over k T B, with infinite and undefined edges."""
        spec = ThermalNoiseSpec(temperature_k=290.0)
        power = 100 * BOLTZMANN * 290.0 * 1e5
        assert measure_truth_snr(power, spec, 1e5) == pytest.approx(20.0)
        assert measure_truth_snr(0.0, spec, 1e5) == -math.inf
        assert measure_truth_snr(1.0, ThermalNoiseSpec(), 1e5) == math.inf
        with pytest.raises(ImpairmentError):
            measure_truth_snr(1.0, spec, 0.0)

    def test_format_snrs(self):
        """Test scalar and per-antenna SNR formatting with non-finite values nulled."""
        assert format_snrs([[20.0], [1.0, math.inf], [-math.inf]]) == [20.0, [1.0, None], None]

    def test_periodogram_estimate_matches_truth(self, rng):
        """Test an AWGN-only QPSK frame at 20 dB is re-estimated within 0.5 dB."""
        spec = ModulationSpec(family="PSK", order=4, symbol_rate=40e3, roll_off=0.35)
        bits = rng.integers(0, 2, 50_000).astype(np.uint8)
        signal = modulate_linear(bits, spec).samples[0] * 1e-6
        bandwidth = 1.35 * 40e3
        temperature = np.mean(np.abs(signal) ** 2) / (BOLTZMANN * bandwidth * 100)
        noise_spec = ThermalNoiseSpec(temperature_k=temperature)
        truth = measure_truth_snr(np.mean(np.abs(signal) ** 2), noise_spec, bandwidth)
        received = apply_thermal_noise(signal, noise_spec, spec.sample_rate, rng)
        estimate = estimate_snr_db(received, spec.sample_rate, (-27e3, 27e3))
        assert truth == pytest.approx(20.0)
        assert estimate == pytest.approx(truth, abs=0.5)

    def test_estimate_needs_out_of_band_bins(self, rng):
        """Test a band covering the whole spectrum raises."""
        with pytest.raises(ImpairmentError):
            estimate_snr_db(rng.normal(size=4096), 1e6, (-1e6, 1e6))
