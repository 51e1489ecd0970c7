# tests/test_core.py
"""Tests for frame synthesis and batch generation."""

import copy
import math

import numpy as np
import pytest

from radioforge.annotate import (
    SpectrogramSpec,
    energy_mask_iou,
    events_to_bboxes,
    stft_spectrogram,
)
from radioforge.config import build_config, sample_scenario
from radioforge.core import SignalTruth, run_batch, synthesize_frame
from radioforge.errors import ConfigError, FrameGenerationError, ModulationError
from radioforge.impair import dbm_to_watts
from radioforge.otel import PIPELINE_STAGES, setup_inmemory_otel, summarize_stage_timings
from radioforge.utils import DatasetManifest

CLEAN_IMPAIRMENTS = {
    "tx": {
        "iq_imbalance": {"enabled": False},
        "dc_offset": {"enabled": False},
        "phase_noise": {"enabled": False},
        "nonlinearity": {"enabled": False},
    },
    "rx": {
        "iq_imbalance": {"enabled": False},
        "dc_offset": {"enabled": False},
        "nonlinearity": {"enabled": False},
        "thermal_noise": {"enabled": False},
    },
}


@pytest.fixture
def clean_config(small_settings):
    """Single identity link with every impairment and the receiver noise switched off."""
    small_settings["impairments"] = CLEAN_IMPAIRMENTS
    return build_config(small_settings)


def _file_bytes(root):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.suffix != ".tmp"
    }


class TestSynthesizeFrame:
    def test_one_frame_per_receiver(self, small_settings):
        """Test every receiver gets a frame with one truth per emitted segment."""
        small_settings["scenario"].update({"tx_count": 2, "rx_count": 2, "rx_antennas": 2})
        cfg = build_config(small_settings)
        plan = sample_scenario(cfg, 0)
        frames = synthesize_frame(plan, cfg)
        assert [f.rx_id for f in frames] == [0, 1]
        for frame in frames:
            assert frame.samples.shape == (2, plan.n_samples)
            assert len(frame.truths) == plan.instance_count == 2
            assert all(len(t.snr_db) == 2 for t in frame.truths)
            assert frame.name == f"Frame_000000_Rx_{frame.rx_id:04d}"
            assert frame.annotation["filePrefix"] == frame.name
            assert frame.annotation["annotation"]["rx"]["NumSamples"] == plan.n_samples

    def test_is_deterministic(self, small_config):
        """Test the same plan synthesizes bit-identical samples."""
        plan = sample_scenario(small_config, 1)
        first = synthesize_frame(plan, small_config)[0]
        second = synthesize_frame(sample_scenario(small_config, 1), small_config)[0]
        assert np.array_equal(first.samples, second.samples)
        assert first.annotation == second.annotation

    def test_radiated_power_matches_plan(self, clean_config):
        """Test a clean identity link delivers the planned transmit power within 5%."""
        plan = sample_scenario(clean_config, 0)
        frame = synthesize_frame(plan, clean_config)[0]
        tx = plan.transmitters[0]
        fs = plan.master_clock_rate
        seg = tx.segments[0]
        start = int(round(seg.start * fs))
        stop = start + int(round(seg.duration * fs))
        power = np.mean(np.abs(frame.samples[0, start:stop]) ** 2)
        assert power == pytest.approx(dbm_to_watts(tx.power_dbm), rel=0.05)
        assert np.all(frame.samples[0, :start] == 0)

    def test_signal_is_centred_on_its_carrier(self, clean_config):
        """Test the spectral centroid of the emission sits on the planned carrier."""
        plan = sample_scenario(clean_config, 2)
        frame = synthesize_frame(plan, clean_config)[0]
        fs = plan.master_clock_rate
        spectrum = np.abs(np.fft.fft(frame.samples[0])) ** 2
        freqs = np.fft.fftfreq(frame.n_samples, 1.0 / fs)
        centroid = np.sum(freqs * spectrum) / np.sum(spectrum)
        truth = frame.truths[0]
        assert centroid == pytest.approx(truth.carrier, abs=0.1 * truth.bandwidth)
        assert plan.band[0] <= truth.freq_low < truth.freq_high <= plan.band[1]

    def test_noiseless_truth_snr_is_infinite(self, clean_config):
        """Test a receiver without noise reports an undefined SNR."""
        frame = synthesize_frame(sample_scenario(clean_config, 0), clean_config)[0]
        assert frame.truths[0].snr_db == [math.inf]
        assert frame.annotation["signals"][0]["SNR"] is None

    def test_statistical_links_attenuate(self, small_settings):
        """Test fading links record their channel and lose power to path loss."""
        small_settings["channel"]["family_weights"] = {
            "statistical": 1.0,
            "raytrace": 0.0,
            "identity": 0.0,
        }
        small_settings["impairments"] = CLEAN_IMPAIRMENTS
        cfg = build_config(small_settings)
        plan = sample_scenario(cfg, 0)
        frame = synthesize_frame(plan, cfg)[0]
        record = frame.annotation["annotation"]["tx"][0]
        assert record["ChannelFamily"] == "statistical"
        assert record["PathLoss"] > 0
        received = np.mean(np.abs(frame.samples[0]) ** 2)
        assert received < dbm_to_watts(plan.transmitters[0].power_dbm)

    def test_raytrace_links_carry_sites(self, small_settings):
        """Test ray-traced frames place both ends inside the scene."""
        small_settings["channel"]["family_weights"] = {
            "statistical": 0.0,
            "raytrace": 1.0,
            "identity": 0.0,
        }
        cfg = build_config(small_settings)
        plan = sample_scenario(cfg, 0)
        frame = synthesize_frame(plan, cfg)[0]
        tx_record = frame.annotation["annotation"]["tx"][0]
        rx_record = frame.annotation["annotation"]["rx"]
        assert len(tx_record["SiteConfig"]["Position"]) == 3
        assert len(rx_record["SiteConfig"]["Position"]) == 3
        assert frame.annotation["frame"]["Scene"].startswith("builtin:")

    def test_stage_failure_is_attributed(self, small_config, mocker):
        """Test a modulator failure surfaces as FrameGenerationError naming the stage."""
        mocker.patch(
            "radioforge.core.modulate_segment", side_effect=ModulationError("bad symbols")
        )
        with pytest.raises(FrameGenerationError) as exc_info:
            synthesize_frame(sample_scenario(small_config, 0), small_config)
        assert exc_info.value.stage == "modulate"
        assert exc_info.value.frame_index == 0
        assert "bad symbols" in str(exc_info.value)


def test_signal_truth_record_reloads():
    """Test annotation records rebuild the same truth, with null SNRs as infinite."""
    truth = SignalTruth(
        tx_id=1,
        segment=2,
        class_id=7,
        modulation="QPSK",
        carrier=-1e5,
        band_edges=(-2e4, 2e4),
        start=1e-3,
        duration=4e-3,
        symbol_count=160,
        snr_db=[12.5, math.inf],
    )
    record = truth.to_dict()
    assert record["SNR"] == [12.5, None]
    assert SignalTruth.from_dict(record) == truth
    assert truth.freq_low == -1.2e5
    assert truth.end == pytest.approx(5e-3)


class TestTruthBands:
    SINGLE_CARRIER = ["BPSK", "QPSK", "8-PSK", "16-QAM", "64-QAM", "4-ASK"]
    OTHERS = ["OFDM-QPSK", "SCFDMA-QPSK", "GMSK", "FM", "SSB-AM", "DSB-AM"]

    @staticmethod
    def _box_scores(settings, name, seeds):
        settings["modulation"]["classes"] = [name]
        settings["annotation"] = {"fft_size": 1024, "hop": 256}
        settings["impairments"] = copy.deepcopy(CLEAN_IMPAIRMENTS)
        settings["impairments"]["rx"]["thermal_noise"] = {"enabled": True}
        cfg = build_config(settings)
        spec = SpectrogramSpec.from_config(cfg)
        scores = []
        for seed in seeds:
            plan = sample_scenario(cfg, seed)
            frame = synthesize_frame(plan, cfg)[0]
            spectrogram = stft_spectrogram(
                frame.samples[0], plan.master_clock_rate, spec, band=plan.band
            )
            boxes = events_to_bboxes(frame.truths, spectrogram, plan.frame_duration)
            for box, truth in zip(boxes, frame.truths):
                assert truth.snr_db[0] >= 10.0
                scores.append(energy_mask_iou(box, spectrogram.values, spec.energy_threshold_db))
        return scores

    def test_band_lies_inside_the_nominal_occupancy(self, clean_config):
        """Test the measured band sits within the observable band around the carrier."""
        plan = sample_scenario(clean_config, 3)
        frame = synthesize_frame(plan, clean_config)[0]
        (truth,) = frame.truths
        nominal = plan.transmitters[0].symbol_rate
        assert truth.freq_low < truth.carrier < truth.freq_high
        assert 0.5 * nominal < truth.bandwidth < 2.0 * nominal
        assert plan.band[0] <= truth.freq_low < truth.freq_high <= plan.band[1]

    def test_silent_burst_keeps_the_planned_edges(self, small_config, mocker):
        """Test truths fall back to the planned band when nothing is measured."""
        mocker.patch("radioforge.core.visible_band", return_value=None)
        plan = sample_scenario(small_config, 0)
        (truth,) = synthesize_frame(plan, small_config)[0].truths
        planned = plan.transmitters[0].segments[0]
        assert truth.band_edges == tuple(planned.band_edges)

    @pytest.mark.slow
    @pytest.mark.parametrize("name", SINGLE_CARRIER)
    def test_single_carrier_boxes_match_the_energy_mask(self, small_settings, name):
        """Test every single-carrier box overlaps its -20 dB energy mask with IoU >= 0.7."""
        scores = self._box_scores(small_settings, name, range(3))
        assert min(scores) >= 0.7

    @pytest.mark.slow
    def test_median_box_matches_the_energy_mask_across_families(self, small_settings):
        """Test the median IoU over linear, multicarrier and analog families is >= 0.7."""
        scores = []
        for name in self.SINGLE_CARRIER + self.OTHERS:
            scores += self._box_scores(copy.deepcopy(small_settings), name, range(2))
        assert len(scores) == 24
        assert float(np.median(scores)) >= 0.7


class TestRunBatch:
    def test_writes_files_and_manifest(self, generated_dataset, small_config):
        """Test every frame is archived and indexed."""
        manifest = DatasetManifest.load(generated_dataset)
        assert manifest.frame_indices == [0, 1, 2, 3]
        assert manifest.failures == []
        assert manifest.counters()["instances"] == 4
        for name in manifest.file_names:
            assert (generated_dataset / "anno" / f"{name}.json").is_file()
            assert (generated_dataset / "sequence_data" / "iq" / f"{name}.sigmf-data").is_file()
        assert (generated_dataset / "config.json").is_file()

    def test_output_does_not_depend_on_workers(self, tmp_path, small_config):
        """Test one and two workers write byte-identical datasets."""
        run_batch(small_config, range(4), tmp_path / "one", workers=1, quiet=True)
        run_batch(small_config, range(4), tmp_path / "two", workers=2, quiet=True)
        one, two = _file_bytes(tmp_path / "one"), _file_bytes(tmp_path / "two")
        assert one.keys() == two.keys()
        assert one == two

    def test_failed_frames_are_listed(self, tmp_path, small_config, mocker, capsys):
        """Test frames failing twice are recorded with their stage."""
        mocker.patch("radioforge.core.modulate_segment", side_effect=ModulationError("boom"))
        manifest = run_batch(small_config, [0, 1], tmp_path / "out", quiet=True)
        assert [f["FrameIndex"] for f in manifest.failures] == [0, 1]
        assert {f["Stage"] for f in manifest.failures} == {"modulate"}
        assert manifest.frames == []
        assert "[ERROR] Frame 0 failed" in capsys.readouterr().out

    def test_resume_skips_archived_frames(self, generated_dataset, small_config, mocker):
        """Test frames already on disk are re-indexed without being synthesized."""
        synth = mocker.patch("radioforge.core.synthesize_frame")
        manifest = run_batch(small_config, range(4), generated_dataset, quiet=True)
        synth.assert_not_called()
        assert manifest.total_frames == 4
        assert manifest.failures == []

    def test_regenerating_a_range_keeps_other_frames(self, generated_dataset, small_config):
        """Test a partial run merges into the existing manifest."""
        manifest = run_batch(small_config, [2], generated_dataset, resume=False, quiet=True)
        assert manifest.frame_indices == [0, 1, 2, 3]

    @pytest.mark.parametrize("indices", [[], [4], [-1, 0]])
    def test_invalid_ranges(self, indices, tmp_path, small_config):
        """Test empty or out-of-range index lists raise ConfigError."""
        with pytest.raises(ConfigError):
            run_batch(small_config, indices, tmp_path / "out", quiet=True)

    def test_traces_every_stage(self, tmp_path, small_config):
        """Test traced runs record a span per frame and per pipeline stage."""
        tracer, exporter = setup_inmemory_otel(enable_otel=True)
        run_batch(small_config, range(2), tmp_path / "out", tracer=tracer, quiet=True)
        summary = summarize_stage_timings(exporter.get_finished_spans())
        assert summary["frame"]["count"] == 2
        assert set(PIPELINE_STAGES) <= set(summary)
        assert all(entry["errors"] == 0 for entry in summary.values())

    def test_progress_lines(self, tmp_path, small_config, capsys):
        """Test non-quiet runs report progress and the manifest location."""
        run_batch(small_config, range(2), tmp_path / "out")
        out = capsys.readouterr().out
        assert "[PROGRESS] 2/2 frames" in out
        assert "[OK] Frames generated: 2/2 (100.0%)" in out
