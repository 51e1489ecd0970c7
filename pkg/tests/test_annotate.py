# tests/test_annotate.py
"""Tests for radioforge.annotate: STFT, boxes, images, COCO files and splits."""

import json
import math

import numpy as np
import pytest
from PIL import Image

from radioforge.annotate import (
    CocoBox,
    CocoImage,
    SpectrogramSpec,
    coco_categories,
    energy_mask_iou,
    events_to_bboxes,
    export_coco,
    make_splits,
    plot_spectrogram,
    render_png,
    stft_energy,
    stft_spectrogram,
    to_grayscale,
    write_split_files,
)
from radioforge.core import SignalTruth
from radioforge.errors import AnnotationError

FS = 1e6


def _truth(start=1e-3, duration=2e-3, carrier=100e3, half_width=20e3, class_id=9):
    return SignalTruth(
        tx_id=0,
        segment=0,
        class_id=class_id,
        modulation="QPSK",
        carrier=carrier,
        band_edges=(-half_width, half_width),
        start=start,
        duration=duration,
        snr_db=[10.0],
    )


class TestSpectrogramSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"window": "kaiser"},
            {"fft_size": 1000},
            {"hop": 0},
            {"fft_size": 256, "hop": 512},
            {"scale": "log"},
            {"dynamic_range_db": 0.0},
        ],
    )
    def test_invalid(self, kwargs):
        """Test malformed STFT settings raise AnnotationError."""
        with pytest.raises(AnnotationError):
            SpectrogramSpec(**kwargs)

    def test_from_config(self, small_config):
        """Test STFT settings come from the annotation section."""
        spec = SpectrogramSpec.from_config(small_config)
        assert (spec.fft_size, spec.hop, spec.window) == (256, 64, "hamming")


class TestStft:
    def test_shape_and_orientation(self, rng):
        """Test ceil(N / hop) columns and rows running from high to low frequency."""
        x = rng.normal(size=10_000) + 1j * rng.normal(size=10_000)
        spec = SpectrogramSpec(fft_size=256, hop=64)
        spectrogram = stft_spectrogram(x, FS, spec)
        assert spectrogram.shape == (256, math.ceil(10_000 / 64))
        assert np.all(np.diff(spectrogram.freqs) < 0)
        assert spectrogram.bin_width == pytest.approx(FS / 256)
        assert spectrogram.times[1] == pytest.approx(64 / FS)

    def test_band_crop(self, rng):
        """Test only bins inside the observable band are kept."""
        x = rng.normal(size=4096) + 0j
        spec = SpectrogramSpec(fft_size=256, hop=64)
        fs = 2.4e6
        spectrogram = stft_spectrogram(x, fs, spec, band=(-500e3, 500e3))
        freqs = np.fft.fftfreq(256, 1.0 / fs)
        assert spectrogram.shape[0] == int(np.sum(np.abs(freqs) <= 500e3))
        assert spectrogram.freqs[0] <= 500e3 and spectrogram.freqs[-1] >= -500e3

    def test_tone_lands_in_its_row(self):
        """Test a tone peaks in the row holding its frequency."""
        f = 125e3
        x = np.exp(2j * np.pi * f * np.arange(8192) / FS)
        spectrogram = stft_spectrogram(x, FS, SpectrogramSpec(fft_size=256, hop=64))
        row = int(np.argmax(spectrogram.values[:, 50]))
        assert spectrogram.freqs[row] == pytest.approx(f)

    def test_energy_matches_parseval(self, rng):
        """Test the linear-scale STFT energy equals the sample energy within 1%."""
        x = rng.normal(size=100_000) + 1j * rng.normal(size=100_000)
        spec = SpectrogramSpec(fft_size=256, hop=64, scale="linear")
        energy = stft_energy(stft_spectrogram(x, FS, spec))
        assert energy == pytest.approx(np.sum(np.abs(x) ** 2), rel=0.01)

    def test_energy_needs_linear_scale(self, rng):
        x = rng.normal(size=1024) + 0j
        with pytest.raises(AnnotationError):
            stft_energy(stft_spectrogram(x, FS, SpectrogramSpec(fft_size=256, hop=64)))

    def test_short_frame_raises(self):
        """Test a frame shorter than one window raises."""
        with pytest.raises(AnnotationError, match="shorter"):
            stft_spectrogram(np.ones(100), FS, SpectrogramSpec(fft_size=256, hop=64))

    def test_empty_band_raises(self, rng):
        x = rng.normal(size=1024) + 0j
        with pytest.raises(AnnotationError):
            stft_spectrogram(x, FS, SpectrogramSpec(fft_size=256, hop=64), band=(1e3, 2e3))


class TestBoxes:
    @pytest.fixture
    def spectrogram(self, rng):
        x = rng.normal(size=5000) + 1j * rng.normal(size=5000)
        return stft_spectrogram(x, FS, SpectrogramSpec(fft_size=256, hop=64))

    def test_box_geometry(self, spectrogram):
        """Test columns follow floor/ceil of the hop grid and rows hold centres inside the band."""
        (box,) = events_to_bboxes([_truth()], spectrogram, 5e-3, image_id=3)
        assert (box.x, box.width) == (15, 32)
        assert (box.y, box.height) == (97, 10)
        assert box.image_id == 3 and box.category_id == 9
        assert box.snr_db == pytest.approx(10.0)
        f_top, df = spectrogram.freqs[0], spectrogram.bin_width
        assert 120e3 - df < f_top - box.y * df <= 120e3
        assert 80e3 <= f_top - (box.y + box.height - 1) * df < 80e3 + df

    def test_boxes_are_clipped_to_the_image(self, spectrogram):
        """Test a signal at the frame end and band edge stays inside the image."""
        truth = _truth(start=4e-3, duration=1e-3, carrier=490e3, half_width=15e3)
        (box,) = events_to_bboxes([truth], spectrogram, 5e-3)
        height, width = spectrogram.shape
        assert box.y == 0
        assert box.x + box.width <= width
        assert box.y + box.height <= height

    def test_signal_outside_frame_raises(self, spectrogram):
        with pytest.raises(AnnotationError, match="outside"):
            events_to_bboxes([_truth(start=4e-3, duration=2e-3)], spectrogram, 5e-3)

    def test_signal_outside_band_raises(self, spectrogram):
        with pytest.raises(AnnotationError, match="band"):
            events_to_bboxes([_truth(carrier=900e3)], spectrogram, 5e-3)

    def test_undefined_snr_stays_null(self, spectrogram):
        truth = _truth()
        truth.snr_db = [math.inf]
        (box,) = events_to_bboxes([truth], spectrogram, 5e-3)
        assert box.snr_db is None
        assert box.to_coco(1)["snr_db"] is None


class TestEnergyMaskIou:
    def test_exact_box_scores_one(self):
        """Test a box covering exactly the energetic cells has IoU 1."""
        values = np.full((40, 60), -100.0)
        values[10:20, 15:45] = 0.0
        box = CocoBox(image_id=0, category_id=1, x=15, y=10, width=30, height=10)
        assert energy_mask_iou(box, values) == pytest.approx(1.0)

    def test_loose_box_scores_its_coverage(self):
        """Test a box twice the energetic area scores 0.5."""
        values = np.full((40, 60), -100.0)
        values[10:20, 15:45] = 0.0
        box = CocoBox(image_id=0, category_id=1, x=15, y=5, width=30, height=20)
        assert energy_mask_iou(box, values) == pytest.approx(0.5)


class TestImages:
    def test_grayscale_mapping(self):
        """Test the peak maps to 255 and everything below the range to 0."""
        values = np.array([[0.0, -40.0], [-80.0, -120.0]])
        gray = to_grayscale(values, dynamic_range_db=80.0)
        assert gray.dtype == np.uint8
        assert gray.tolist() == [[255, 128], [0, 0]]

    def test_render_png(self, tmp_path, rng):
        """Test the PNG is 8-bit grayscale with the spectrogram's shape."""
        values = rng.normal(size=(30, 50))
        path = render_png(values, tmp_path / "img" / "frame.png")
        with Image.open(path) as image:
            assert image.mode == "L"
            assert image.size == (50, 30)

    def test_plot_with_overlay(self, tmp_path, rng):
        """Test the annotated figure renders with box overlays."""
        x = rng.normal(size=5000) + 1j * rng.normal(size=5000)
        spectrogram = stft_spectrogram(x, FS, SpectrogramSpec(fft_size=256, hop=64))
        boxes = events_to_bboxes([_truth()], spectrogram, 5e-3)
        path = plot_spectrogram(spectrogram, tmp_path / "plot.png", boxes, {9: "QPSK"}, "demo")
        assert path.is_file() and path.stat().st_size > 0


class TestCoco:
    def test_export(self, tmp_path):
        """Test images and annotations are written sorted with sequential ids."""
        coco_dir = tmp_path / "coco"
        records = []
        for image_id in (1, 0):
            name = f"images/f{image_id}.png"
            render_png(np.zeros((20, 30)), coco_dir / name)
            box = CocoBox(image_id=image_id, category_id=5, x=1, y=2, width=3, height=4)
            records.append((CocoImage(image_id, name, 30, 20, f"f{image_id}"), [box]))
        path = export_coco(records, "train", coco_dir)
        document = json.loads(path.read_text())
        assert [im["id"] for im in document["images"]] == [0, 1]
        assert [a["id"] for a in document["annotations"]] == [1, 2]
        assert document["annotations"][0]["bbox"] == [1, 2, 3, 4]
        assert document["annotations"][0]["area"] == 12
        assert len(document["categories"]) == 100

    def test_missing_image_raises(self, tmp_path):
        record = (CocoImage(0, "images/none.png", 30, 20, "none"), [])
        with pytest.raises(AnnotationError, match="Missing"):
            export_coco([record], "val", tmp_path)

    def test_box_outside_image_raises(self, tmp_path):
        render_png(np.zeros((20, 30)), tmp_path / "a.png")
        box = CocoBox(image_id=0, category_id=1, x=25, y=0, width=10, height=5)
        with pytest.raises(AnnotationError, match="outside"):
            export_coco([(CocoImage(0, "a.png", 30, 20, "a"), [box])], "test", tmp_path)

    def test_categories_follow_the_catalog(self):
        categories = coco_categories()
        assert categories[0]["id"] == 1
        assert categories[-1]["id"] == 100


class TestSplits:
    def test_eight_one_one(self):
        """Test 100 frames split 80/10/10 into disjoint sets covering every index."""
        splits = make_splits(100, seed=3)
        assert [len(splits[k]) for k in ("train", "val", "test")] == [80, 10, 10]
        combined = splits["train"] + splits["val"] + splits["test"]
        assert sorted(combined) == list(range(100))

    def test_deterministic_per_seed(self):
        assert make_splits(50, seed=1) == make_splits(50, seed=1)
        assert make_splits(50, seed=1) != make_splits(50, seed=2)

    def test_small_datasets_keep_everything_in_train(self, caplog):
        """Test fewer than ten frames warn and leave val and test empty."""
        splits = make_splits(5, seed=0)
        assert splits["train"] == [0, 1, 2, 3, 4]
        assert splits["val"] == splits["test"] == []
        assert "empty" in caplog.text

    def test_split_files(self, tmp_path):
        paths = write_split_files({"train": [2, 0], "val": [1], "test": []}, tmp_path)
        assert [p.name for p in paths] == ["train.txt", "val.txt", "test.txt"]
        assert paths[0].read_text() == "2\n0\n"
        assert paths[2].read_text() == ""
