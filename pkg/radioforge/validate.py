# radioforge/validate.py
"""Audits of configurations and generated datasets."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .annotate import SPLIT_NAMES, coco_categories
from .config import (
    MAX_FRAME_SAMPLES,
    MIN_FRAME_SAMPLES,
    build_config,
    load_config,
    sample_scenario,
)
from .errors import ArchiveError, RadioforgeError
from .exporters.sigmf import SigMFExporter, load_recording
from .schedule import MAX_INSTANCES_PER_FRAME, validate_plan
from .utils import CONFIG_FILE, DatasetManifest, load_json

logger = logging.getLogger(__name__)

DEFAULT_PLAN_SAMPLE = 20


@dataclass
class Violation:
    target: str
    code: str
    message: str

    def to_dict(self) -> Dict:
        return {"target": self.target, "code": self.code, "message": self.message}


@dataclass
class ValidationReport:
    kind: str
    path: str
    checked: int = 0
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, target: str, code: str, message: str) -> None:
        self.violations.append(Violation(target, code, message))

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "path": self.path,
            "checked": self.checked,
            "ok": self.ok,
            "violations": [v.to_dict() for v in self.violations],
        }


def validate_config_file(
    path: Optional[Union[str, Path]], plan_sample: int = DEFAULT_PLAN_SAMPLE
) -> ValidationReport:
    """Load a configuration and audit the plans of its first frames.

    Raises:
        ConfigError: The configuration itself is invalid
    """
    cfg = load_config(path)
    report = ValidationReport(kind="config", path=str(path or "reference"))
    for index in range(min(plan_sample, cfg.frames)):
        target = f"frame {index}"
        try:
            plan = sample_scenario(cfg, index)
        except RadioforgeError as e:
            report.add(target, "plan-failed", str(e))
            continue
        for violation in validate_plan(plan.schedule):
            report.add(target, violation.code, violation.message)
        report.checked += 1
    return report


def _check_frame(report: ValidationReport, exporter: SigMFExporter, name: str) -> Optional[Dict]:
    """Audit one receiver frame; returns its annotation when it could be read."""
    try:
        annotation = exporter.load_annotation(name)
    except ArchiveError as e:
        report.add(name, "missing-annotation", str(e))
        return None

    rx = annotation["annotation"]["rx"]
    signals = annotation["signals"]
    fs = float(rx["MasterClockRate"])
    duration = float(rx["TimeDuration"])
    n_expected = int(rx["NumSamples"])
    band_lo, band_hi = rx["ObservableBand"]

    if annotation.get("filePrefix") != name:
        report.add(name, "file-prefix", f"filePrefix is {annotation.get('filePrefix')!r}")
    if n_expected != max(1, int(round(duration * fs))):
        report.add(name, "sample-count", f"{n_expected} samples for {duration} s at {fs} Hz")
    if not MIN_FRAME_SAMPLES <= n_expected <= MAX_FRAME_SAMPLES:
        report.add(name, "frame-length", f"{n_expected} samples outside the supported range")
    if len(signals) > MAX_INSTANCES_PER_FRAME:
        report.add(name, "too-many-instances", f"{len(signals)} signal instances")
    if len(rx["SNRs"]) != len(signals):
        report.add(name, "snr-count", f"{len(rx['SNRs'])} SNRs for {len(signals)} signals")
    n_segments = sum(len(tx["StartTimes"]) for tx in annotation["annotation"]["tx"])
    if n_segments != len(signals):
        report.add(name, "signal-count", f"{n_segments} segments but {len(signals)} signals")

    slack = 1.0 / fs
    for signal in signals:
        label = f"tx{signal['TxId']}.seg{signal['Segment']}"
        start, length = signal["StartTime"], signal["TimeDuration"]
        if start < 0 or start + length > duration + slack:
            report.add(name, "exceeds-frame", f"{label} spans [{start}, {start + length}] s")
        lo = signal["CarrierFrequency"] + signal["BandWidth"][0]
        hi = signal["CarrierFrequency"] + signal["BandWidth"][1]
        if lo < band_lo - 1e-6 or hi > band_hi + 1e-6:
            report.add(name, "band-spill", f"{label} occupies [{lo:.1f}, {hi:.1f}] Hz")

    n_antennas = int(rx["NumReceiveAntennas"])
    for meta_path in exporter.recording_paths(name, n_antennas):
        try:
            samples, metadata = load_recording(meta_path)
        except ArchiveError as e:
            report.add(name, "missing-recording", str(e))
            continue
        if samples.size != n_expected:
            report.add(name, "recording-length", f"{meta_path.name} holds {samples.size} samples")
        if not np.isfinite(samples).all():
            report.add(name, "non-finite", f"{meta_path.name} holds non-finite samples")
        if len(metadata["annotations"]) != len(signals):
            report.add(
                name,
                "sigmf-annotations",
                f"{meta_path.name} has {len(metadata['annotations'])} annotations",
            )
    report.checked += 1
    return annotation


def _check_coco(
    report: ValidationReport, coco_dir: Path, signal_counts: Dict[str, int]
) -> None:
    n_categories = len(coco_categories())
    for split in SPLIT_NAMES:
        path = coco_dir / f"{split}.json"
        if not path.is_file():
            continue
        document = load_json(path)
        target = f"coco/{split}.json"
        if len(document.get("categories", [])) != n_categories:
            report.add(target, "categories", f"{len(document['categories'])} categories")
        images = {image["id"]: image for image in document.get("images", [])}
        per_image: Dict[int, int] = {}
        for ann in document.get("annotations", []):
            image = images.get(ann["image_id"])
            if image is None:
                report.add(target, "dangling-image", f"annotation {ann['id']} has no image")
                continue
            per_image[ann["image_id"]] = per_image.get(ann["image_id"], 0) + 1
            x, y, w, h = ann["bbox"]
            inside = x >= 0 and y >= 0 and x + w <= image["width"] and y + h <= image["height"]
            if w < 1 or h < 1 or not inside:
                report.add(
                    image.get("frame", image["file_name"]),
                    "box-out-of-bounds",
                    f"annotation {ann['id']} bbox {ann['bbox']} outside "
                    f"{image['width']}x{image['height']}",
                )
        for image_id, image in images.items():
            frame = image.get("frame")
            if not (coco_dir / image["file_name"]).is_file():
                report.add(frame or image["file_name"], "missing-image", image["file_name"])
            if frame in signal_counts and per_image.get(image_id, 0) != signal_counts[frame]:
                report.add(
                    frame,
                    "box-count",
                    f"{per_image.get(image_id, 0)} boxes for {signal_counts[frame]} signals",
                )


def validate_dataset(out_dir: Union[str, Path]) -> ValidationReport:
    """Audit a generated dataset: manifest, recordings, annotations and COCO files.

    Raises:
        ArchiveError: The manifest or configuration cannot be read
        ConfigError: The recorded configuration is invalid
    """
    out = Path(out_dir)
    manifest = DatasetManifest.load(out)
    cfg = build_config(load_json(out / CONFIG_FILE))
    exporter = SigMFExporter(
        out, iq_dir=cfg.value("output.iq_dir"), anno_dir=cfg.value("output.anno_dir")
    )
    report = ValidationReport(kind="dataset", path=str(out))

    names = manifest.file_names
    if len(set(names)) != len(names):
        report.add("manifest", "duplicate-frames", "manifest lists a frame more than once")
    on_disk = set(exporter.list_frames())
    for orphan in sorted(on_disk - set(names)):
        report.add(orphan, "orphan-frame", "annotation file is not listed in the manifest")
    for failure in manifest.failures:
        report.add(
            f"frame {failure['FrameIndex']}", "generation-failed", str(failure.get("Error"))
        )

    signal_counts: Dict[str, int] = {}
    for name in names:
        annotation = _check_frame(report, exporter, name)
        if annotation is not None:
            signal_counts[name] = len(annotation["signals"])

    coco_dir = out / cfg.value("output.coco_dir")
    if coco_dir.is_dir():
        _check_coco(report, coco_dir, signal_counts)
    logger.info(
        "Validated %d frames in %s: %d violations", report.checked, out, len(report.violations)
    )
    return report
