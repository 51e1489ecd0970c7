"""Tests for the SigMF exporter."""

import math

import numpy as np
import pytest
from sigmf import SigMFFile

from radioforge.config import build_config, sample_scenario
from radioforge.core import synthesize_frame
from radioforge.errors import ArchiveError
from radioforge.exporters.sigmf import (
    NAMESPACE,
    SigMFExporter,
    antenna_stem,
    frame_name_from_stem,
    load_recording,
)


@pytest.fixture
def frame(small_config):
    """Receiver frame 0 of the small configuration."""
    return synthesize_frame(sample_scenario(small_config, 0), small_config)[0]


@pytest.fixture
def two_antenna_frame(small_settings):
    small_settings["scenario"]["rx_antennas"] = 2
    cfg = build_config(small_settings)
    return synthesize_frame(sample_scenario(cfg, 0), cfg)[0]


def test_antenna_stems():
    """Test the antenna suffix appears only for multi-antenna receivers."""
    assert antenna_stem("Frame_000001_Rx_0000", 0, 1) == "Frame_000001_Rx_0000"
    assert antenna_stem("Frame_000001_Rx_0000", 1, 2) == "Frame_000001_Rx_0000_ant1"
    assert frame_name_from_stem("Frame_000001_Rx_0000_ant3") == "Frame_000001_Rx_0000"
    assert frame_name_from_stem("Frame_000001_Rx_0000") == "Frame_000001_Rx_0000"


class TestSigMFExporter:
    def test_single_antenna_recording(self, tmp_path, frame):
        """Test samples, global fields and per-signal annotations are written."""
        exporter = SigMFExporter(tmp_path)
        assert not exporter.exists(frame.name)
        written = exporter.export(frame)
        assert [p.name for p in written] == [
            f"{frame.name}.sigmf-data",
            f"{frame.name}.sigmf-meta",
            f"{frame.name}.json",
        ]
        assert exporter.exists(frame.name)

        samples, metadata = load_recording(exporter.meta_path(frame.name))
        assert samples.dtype == np.complex64
        assert np.allclose(samples, frame.samples[0].astype(np.complex64))
        info = metadata["global"]
        assert info[SigMFFile.DATATYPE_KEY] == "cf32_le"
        assert info[SigMFFile.SAMPLE_RATE_KEY] == frame.master_clock_rate
        assert info[f"{NAMESPACE}:frame_index"] == 0
        assert metadata["captures"][0][SigMFFile.FREQUENCY_KEY] == frame.rf_center_frequency

        (annotation,) = metadata["annotations"]
        truth = frame.truths[0]
        assert annotation[SigMFFile.LABEL_KEY] == "QPSK"
        assert annotation[SigMFFile.START_INDEX_KEY] == int(
            round(truth.start * frame.master_clock_rate)
        )
        assert annotation[SigMFFile.FLO_KEY] == pytest.approx(
            frame.rf_center_frequency + truth.freq_low
        )
        assert annotation[f"{NAMESPACE}:tx_id"] == 0
        if math.isfinite(truth.snr_db[0]):
            assert annotation[f"{NAMESPACE}:snr_db"] == pytest.approx(truth.snr_db[0])

    def test_multi_antenna_recordings(self, tmp_path, two_antenna_frame):
        """Test every antenna gets its own recording and loads back stacked."""
        exporter = SigMFExporter(tmp_path, iq_dir="iq", anno_dir="labels")
        exporter.export(two_antenna_frame)
        name = two_antenna_frame.name
        assert (tmp_path / "iq" / f"{name}_ant0.sigmf-meta").is_file()
        assert (tmp_path / "iq" / f"{name}_ant1.sigmf-data").is_file()
        samples, annotation = exporter.load(name)
        assert samples.shape == two_antenna_frame.samples.shape
        assert np.allclose(samples, two_antenna_frame.samples.astype(np.complex64))
        assert annotation["filePrefix"] == name
        assert exporter.list_frames() == [name]

    def test_annotation_is_the_frame_document(self, tmp_path, frame):
        exporter = SigMFExporter(tmp_path)
        exporter.export(frame)
        loaded = exporter.load_annotation(frame.name)
        assert loaded["frame"]["FrameIndex"] == 0
        assert len(loaded["signals"]) == len(frame.truths)

    def test_list_frames_without_directory(self, tmp_path):
        assert SigMFExporter(tmp_path / "none").list_frames() == []

    def test_unwritable_root_raises(self, tmp_path, frame):
        """Test write failures raise ArchiveError carrying the frame index."""
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        with pytest.raises(ArchiveError) as exc_info:
            SigMFExporter(blocker).export(frame)
        assert exc_info.value.frame_index == 0

    def test_missing_recording_raises(self, tmp_path):
        with pytest.raises(ArchiveError):
            load_recording(tmp_path / "none.sigmf-meta")
