"""Tests for configuration and dataset audits."""

import argparse
import json
import shutil

import pytest

from radioforge.errors import ConfigError
from radioforge.main import cmd_coco_export
from radioforge.utils import DatasetManifest, load_json, save_json
from radioforge.validate import validate_config_file, validate_dataset


def _codes(report):
    return [v.code for v in report.violations]


class TestValidateConfig:
    def test_reference_plans_are_valid(self):
        """Test the first reference plans pass every schedule check."""
        report = validate_config_file(None, plan_sample=3)
        assert report.ok
        assert report.checked == 3
        assert report.to_dict()["path"] == "reference"

    def test_file_config(self, tmp_path, small_settings):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(small_settings))
        report = validate_config_file(path)
        assert report.ok
        assert report.checked == 4

    def test_invalid_file_raises(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"frames": 0}')
        with pytest.raises(ConfigError):
            validate_config_file(path)


class TestValidateDataset:
    def test_generated_dataset_is_valid(self, generated_dataset):
        """Test a freshly generated dataset has no violations."""
        report = validate_dataset(generated_dataset)
        assert report.ok, report.to_dict()
        assert report.checked == 4

    def test_coco_export_is_valid(self, generated_dataset):
        """Test COCO files written by the exporter pass the box checks."""
        cmd_coco_export(argparse.Namespace(dataset=str(generated_dataset), quiet=True))
        report = validate_dataset(generated_dataset)
        assert report.ok, report.to_dict()

    def test_corrupted_box_is_flagged(self, generated_dataset):
        """Test a COCO box pushed outside its image is reported against its frame."""
        cmd_coco_export(argparse.Namespace(dataset=str(generated_dataset), quiet=True))
        path = generated_dataset / "coco" / "train.json"
        document = load_json(path)
        image = document["images"][0]
        annotation = next(a for a in document["annotations"] if a["image_id"] == image["id"])
        annotation["bbox"][0] = image["width"]
        save_json(path, document)

        report = validate_dataset(generated_dataset)
        assert _codes(report) == ["box-out-of-bounds"]
        assert report.violations[0].target == image["frame"]

    def test_missing_files(self, generated_dataset):
        """Test deleted annotations and recordings are reported."""
        (generated_dataset / "anno" / "Frame_000001_Rx_0000.json").unlink()
        (generated_dataset / "sequence_data" / "iq" / "Frame_000002_Rx_0000.sigmf-meta").unlink()
        report = validate_dataset(generated_dataset)
        assert sorted(_codes(report)) == ["missing-annotation", "missing-recording"]
        assert report.checked == 3

    def test_orphans_and_failures(self, generated_dataset):
        """Test unindexed frames and recorded generation failures are reported."""
        anno = generated_dataset / "anno"
        shutil.copy(anno / "Frame_000000_Rx_0000.json", anno / "Frame_000099_Rx_0000.json")
        manifest = DatasetManifest.load(generated_dataset)
        manifest.failures = [{"FrameIndex": 3, "Stage": "channel", "Error": "boom"}]
        manifest.save(generated_dataset)
        report = validate_dataset(generated_dataset)
        assert _codes(report) == ["orphan-frame", "generation-failed"]
        assert report.violations[0].target == "Frame_000099_Rx_0000"

    def test_tampered_annotation(self, generated_dataset):
        """Test inconsistent annotation fields are reported."""
        path = generated_dataset / "anno" / "Frame_000000_Rx_0000.json"
        document = load_json(path)
        document["annotation"]["rx"]["SNRs"] = []
        document["signals"][0]["CarrierFrequency"] = 10e6
        save_json(path, document)
        report = validate_dataset(generated_dataset)
        assert _codes(report) == ["snr-count", "band-spill"]
