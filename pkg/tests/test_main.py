"""Tests for the command flows in radioforge.main."""

import argparse
import json

import pytest
from PIL import Image

from radioforge.errors import ArchiveError, ConfigError, ModulationError
from radioforge.main import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    CommandResult,
    cmd_coco_export,
    cmd_coverage,
    cmd_generate,
    cmd_registry,
    cmd_spectrogram,
    cmd_stats,
    cmd_validate,
    parse_frame_range,
    resolve_workers,
    run_command,
)
from radioforge.utils import DatasetManifest, frame_file_name, load_json


def _args(**kwargs):
    kwargs.setdefault("quiet", True)
    return argparse.Namespace(**kwargs)


@pytest.fixture
def config_file(tmp_path, small_settings):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_settings))
    return path


class TestHelpers:
    @pytest.mark.parametrize("text,expected", [("3..7", (3, 7)), ("5", (5, 5)), ("0..0", (0, 0))])
    def test_parse_frame_range(self, text, expected):
        """Test inclusive ranges and single indices."""
        assert parse_frame_range(text) == expected

    @pytest.mark.parametrize("text", ["7..3", "a..b", "-1..2", "1..", ""])
    def test_parse_frame_range_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_frame_range(text)

    def test_resolve_workers_honours_cap(self, monkeypatch):
        """Test RADIOFORGE_THREADS caps the requested worker count."""
        monkeypatch.delenv("RADIOFORGE_THREADS", raising=False)
        assert resolve_workers(8) == 8
        assert resolve_workers(0) == 1
        monkeypatch.setenv("RADIOFORGE_THREADS", "2")
        assert resolve_workers(8) == 2
        assert resolve_workers(1) == 1
        monkeypatch.setenv("RADIOFORGE_THREADS", "many")
        with pytest.raises(ConfigError):
            resolve_workers(4)


class TestRunCommand:
    def test_config_error_exits_three(self, capsys):
        def flow(args):
            raise ConfigError("bad key", key="x")

        result = run_command("generate", flow, _args())
        assert result.exit_code == EXIT_CONFIG
        assert "[ERROR] Configuration error: bad key" in capsys.readouterr().out

    def test_archive_error_exits_two(self):
        def flow(args):
            raise ArchiveError("disk full")

        assert run_command("stats", flow, _args()).exit_code == EXIT_IO

    def test_json_report(self, tmp_path):
        """Test the outcome is written to --json-report."""
        report_path = tmp_path / "report.json"

        def flow(args):
            return CommandResult(EXIT_OK, "done", report={"count": 3})

        result = run_command("registry", flow, _args(json_report=str(report_path)))
        assert result.ok
        assert result.report_path == report_path
        assert load_json(report_path) == {
            "command": "registry",
            "exit_code": 0,
            "summary": "done",
            "count": 3,
        }


class TestGenerate:
    def test_generates_range_with_trace_report(self, tmp_path, config_file):
        """Test a frame range is generated and stage timings are written."""
        out = tmp_path / "dataset"
        trace_path = tmp_path / "trace.json"
        args = _args(
            config=str(config_file),
            out=str(out),
            frames="1..2",
            workers=2,
            seed=None,
            trace_report=str(trace_path),
        )
        result = cmd_generate(args)
        assert result.exit_code == EXIT_OK
        assert result.summary == "Frames generated: 2/2"
        assert DatasetManifest.load(out).frame_indices == [1, 2]
        stages = load_json(trace_path)["stages"]
        assert stages["frame"]["count"] == 2

    def test_seed_override(self, tmp_path, config_file):
        out = tmp_path / "dataset"
        cmd_generate(_args(config=str(config_file), out=str(out), frames="0", seed=99))
        assert DatasetManifest.load(out).seed == 99

    def test_failed_frames_exit_one(self, tmp_path, config_file, mocker):
        """Test frames failing twice give exit code 1."""
        mocker.patch("radioforge.core.modulate_segment", side_effect=ModulationError("boom"))
        args = _args(config=str(config_file), out=str(tmp_path / "d"), frames="0..1")
        result = cmd_generate(args)
        assert result.exit_code == EXIT_VALIDATION
        assert result.report["counters"]["failures"] == 2

    def test_frame_range_outside_config(self, tmp_path, config_file):
        args = _args(config=str(config_file), out=str(tmp_path / "d"), frames="2..9")
        assert run_command("generate", cmd_generate, args).exit_code == EXIT_CONFIG


class TestStats:
    def _write_manifest(self, out_dir):
        """Scenarios recorded by 2, 3 and 1 receivers."""
        frames = []
        for frame_index, n_rx in enumerate((2, 3, 1)):
            for rx in range(n_rx):
                frames.append(
                    {
                        "filePrefix": frame_file_name(frame_index, rx),
                        "FrameIndex": frame_index,
                        "RxId": rx,
                        "NumReceiveAntennas": 1,
                        "NumSamples": 24000,
                        "TimeDuration": 0.01,
                        "Signals": [
                            {
                                "ClassId": 12,
                                "ModulatorType": "QPSK",
                                "TimeDuration": 0.004,
                                "BandWidth": 50000.0,
                                "SNR": 12.0 + rx,
                            }
                        ],
                    }
                )
        manifest = DatasetManifest(seed=3, config_digest="d1")
        manifest.merge([0, 1, 2], frames, [])
        manifest.save(out_dir)

    def test_total_frames_sum_receivers(self, tmp_path):
        """Test six receiver frames are counted from receiver counts 2, 3 and 1."""
        self._write_manifest(tmp_path)
        result = cmd_stats(_args(dataset=str(tmp_path), plots=False))
        assert result.exit_code == EXIT_OK
        stats = result.report["stats"]
        assert stats["total_frames"] == 6
        assert stats["receivers_per_scenario"] == {"1": 1, "2": 1, "3": 1}

    def test_plots_and_card(self, tmp_path):
        """Test --plots writes the histogram PNGs and the dataset card."""
        self._write_manifest(tmp_path)
        cmd_stats(_args(dataset=str(tmp_path), plots=True))
        card = (tmp_path / "README.md").read_text()
        assert "**Recorded frames**: 6" in card
        assert (tmp_path / "stats" / "classes.png").is_file()
        assert (tmp_path / "stats" / "snr.png").is_file()

    def test_empty_manifest_exits_two(self, tmp_path):
        DatasetManifest(seed=0).save(tmp_path)
        result = run_command("stats", cmd_stats, _args(dataset=str(tmp_path), plots=False))
        assert result.exit_code == EXIT_IO

    def test_missing_manifest_exits_two(self, tmp_path):
        result = run_command("stats", cmd_stats, _args(dataset=str(tmp_path), plots=False))
        assert result.exit_code == EXIT_IO


def test_coco_export(generated_dataset):
    """Test images, COCO files and split lists are written and recorded."""
    result = cmd_coco_export(_args(dataset=str(generated_dataset)))
    assert result.exit_code == EXIT_OK
    assert result.report["images"] == 4
    assert result.report["annotations"] == 4
    coco = generated_dataset / "coco"
    train = load_json(coco / "train.json")
    assert [image["id"] for image in train["images"]] == [0, 1, 2, 3]
    assert (coco / train["images"][0]["file_name"]).is_file()
    assert (coco / "train.txt").read_text() == "0\n1\n2\n3\n"
    assert DatasetManifest.load(generated_dataset).splits["train"] == [0, 1, 2, 3]


class TestSpectrogram:
    def _meta(self, dataset):
        return dataset / "sequence_data" / "iq" / "Frame_000000_Rx_0000.sigmf-meta"

    def test_plain_png(self, generated_dataset, tmp_path):
        """Test the plain rendering has the spectrogram's shape."""
        out = tmp_path / "spec.png"
        result = cmd_spectrogram(_args(frame=str(self._meta(generated_dataset)), out=str(out)))
        height, width = result.report["shape"]
        with Image.open(out) as image:
            assert image.size == (width, height)

    def test_overlay_from_sigmf_annotations(self, generated_dataset, tmp_path):
        """Test truth boxes are rebuilt from the recording's SigMF annotations."""
        out = tmp_path / "overlay.png"
        args = _args(frame=str(self._meta(generated_dataset)), out=str(out), overlay=True)
        assert cmd_spectrogram(args).exit_code == EXIT_OK
        assert out.stat().st_size > 0

    def test_antenna_zero_of_single_antenna_frame(self, generated_dataset, tmp_path):
        out = tmp_path / "ant.png"
        args = _args(frame=str(self._meta(generated_dataset)), out=str(out), antenna=0)
        assert cmd_spectrogram(args).exit_code == EXIT_OK

    def test_missing_recording_exits_two(self, tmp_path):
        args = _args(frame=str(tmp_path / "none.sigmf-meta"))
        assert run_command("spectrogram", cmd_spectrogram, args).exit_code == EXIT_IO


class TestValidate:
    def test_dataset(self, generated_dataset):
        result = cmd_validate(_args(dataset=str(generated_dataset), config=None))
        assert result.exit_code == EXIT_OK
        assert result.report["checked"] == 4

    def test_config(self, config_file):
        result = cmd_validate(_args(dataset=None, config=str(config_file)))
        assert result.exit_code == EXIT_OK

    def test_violations_exit_one(self, generated_dataset, capsys):
        (generated_dataset / "anno" / "Frame_000000_Rx_0000.json").unlink()
        result = cmd_validate(_args(dataset=str(generated_dataset), config=None))
        assert result.exit_code == EXIT_VALIDATION
        assert "missing-annotation" in capsys.readouterr().out


def test_coverage(tmp_path):
    """Test a coarse campus coverage map writes its PNG and CSV."""
    args = _args(
        osm="builtin:campus",
        tx="0,0,30",
        spacing=50.0,
        rx_height=1.5,
        frequency=1e9,
        max_reflections=1,
        out=str(tmp_path / "coverage.png"),
        csv=str(tmp_path / "coverage.csv"),
    )
    result = cmd_coverage(args)
    assert result.exit_code == EXIT_OK
    assert result.report["covered"] > 0
    assert (tmp_path / "coverage.png").is_file()
    assert (tmp_path / "coverage.csv").is_file()


def test_coverage_bad_position():
    args = _args(osm="builtin:campus", tx="0,0", out="x.png")
    assert run_command("coverage", cmd_coverage, args).exit_code == EXIT_CONFIG


class TestRegistry:
    def test_export(self, tmp_path):
        out = tmp_path / "registry.json"
        result = cmd_registry(_args(out=str(out)))
        assert result.report == {"count": 100}
        assert len(load_json(out)) == 100

    def test_table(self, capsys):
        cmd_registry(_args(quiet=False))
        out = capsys.readouterr().out
        assert "100 modulation classes:" in out
        assert "DSB-AM" in out
