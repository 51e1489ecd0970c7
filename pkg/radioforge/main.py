# radioforge/main.py
"""Command flows behind the radioforge CLI."""

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from sigmf import SigMFFile

from .annotate import (
    SPLIT_NAMES,
    CocoImage,
    SpectrogramSpec,
    events_to_bboxes,
    export_coco,
    make_splits,
    plot_spectrogram,
    render_png,
    stft_spectrogram,
    write_split_files,
)
from .cards import generate_dataset_card, save_stats_plots
from .config import MasterConfig, build_config, load_config
from .core import SignalTruth, run_batch
from .errors import ArchiveError, ConfigError, RadioforgeError
from .exporters.sigmf import (
    NAMESPACE,
    SigMFExporter,
    antenna_stem,
    frame_name_from_stem,
    load_recording,
)
from .otel import setup_inmemory_otel, summarize_stage_timings
from .raytrace import COVERAGE_OK, compute_coverage, load_scene
from .registry import registry_as_json
from .utils import (
    CONFIG_FILE,
    DatasetManifest,
    dataset_stats,
    load_json,
    print_stats_summary,
    save_json,
)
from .validate import validate_config_file, validate_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CONFIG = 3

THREADS_ENV = "RADIOFORGE_THREADS"


@dataclass
class CommandResult:
    """Outcome of one CLI command."""

    exit_code: int
    summary: str
    report_path: Optional[Path] = None
    report: Optional[Dict] = None

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def parse_frame_range(text: str) -> Tuple[int, int]:
    """Parse an inclusive ``A..B`` range (or a single index) into ``(A, B)``."""
    head, sep, tail = text.partition("..")
    try:
        start = int(head)
        stop = int(tail) if sep else start
    except ValueError as e:
        raise ConfigError(f"Invalid frame range '{text}', expected A..B", key="frames") from e
    if start < 0 or stop < start:
        raise ConfigError(f"Invalid frame range '{text}'", key="frames")
    return start, stop


def resolve_workers(requested: int) -> int:
    """Requested worker count, capped by ``RADIOFORGE_THREADS`` when set."""
    workers = max(1, int(requested))
    cap = os.getenv(THREADS_ENV)
    if cap:
        try:
            limit = int(cap)
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got '{cap}'") from e
        if limit >= 1 and workers > limit:
            logger.info("Capping workers at %d (%s)", limit, THREADS_ENV)
            workers = limit
    return workers


def _write_report(result: CommandResult, path: Optional[str], command: str) -> CommandResult:
    if not path:
        return result
    payload = {"command": command, "exit_code": result.exit_code, "summary": result.summary}
    payload.update(result.report or {})
    result.report_path = save_json(path, payload)
    return result


def run_command(command: str, flow: Callable, args) -> CommandResult:
    """Run one command flow and map its errors onto exit codes.

    Configuration errors exit 3; I/O and other pipeline errors exit 2. When the
    arguments carry ``json_report`` the outcome is also written there.
    """
    try:
        result = flow(args)
    except ConfigError as e:
        print(f"[ERROR] Configuration error: {e}")
        result = CommandResult(EXIT_CONFIG, str(e), report={"error": str(e)})
    except (RadioforgeError, OSError) as e:
        print(f"[ERROR] {e}")
        result = CommandResult(EXIT_IO, str(e), report={"error": str(e)})
    try:
        return _write_report(result, getattr(args, "json_report", None), command)
    except ArchiveError as e:
        print(f"[ERROR] Could not write report: {e}")
        result.exit_code = max(result.exit_code, EXIT_IO)
        return result


def _load_dataset_config(out_dir: Path, override: Optional[str]) -> MasterConfig:
    if override:
        return load_config(override)
    return build_config(load_json(out_dir / CONFIG_FILE))


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def cmd_generate(args) -> CommandResult:
    """Generate a frame range into ``--out``."""
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    frames = getattr(args, "frames", None)
    start, stop = parse_frame_range(frames) if frames else (0, cfg.frames - 1)
    workers = resolve_workers(getattr(args, "workers", 1))
    _say(args, f"[CONFIG] Seed {cfg.seed}, frames {start}..{stop}, {workers} worker(s)")

    trace_report = getattr(args, "trace_report", None)
    tracer, exporter = setup_inmemory_otel(enable_otel=bool(trace_report))
    manifest = run_batch(
        cfg,
        range(start, stop + 1),
        args.out,
        workers=workers,
        tracer=tracer,
        quiet=getattr(args, "quiet", False),
    )
    report = {"counters": manifest.counters(), "failures": manifest.failures}
    if trace_report:
        timings = summarize_stage_timings(exporter.get_finished_spans())
        save_json(trace_report, {"stages": timings})
        report["stages"] = timings
        _say(args, f"[OK] Stage timings written to {trace_report}")

    requested = stop - start + 1
    failed = {f["FrameIndex"] for f in manifest.failures if start <= f["FrameIndex"] <= stop}
    summary = f"Frames generated: {requested - len(failed)}/{requested}"
    if failed:
        return CommandResult(EXIT_VALIDATION, summary + f", {len(failed)} failed", report=report)
    _say(args, f"\n[SUCCESS] {summary} into {args.out}")
    return CommandResult(EXIT_OK, summary, report=report)


# --------------------------------------------------------------------------
# spectrogram
# --------------------------------------------------------------------------


def _truths_from_sigmf(metadata: Dict, sample_rate: float, rf_center: float) -> List[SignalTruth]:
    """Rebuild signal truths from the per-signal SigMF annotations of a recording."""
    truths = []
    for ann in metadata["annotations"]:
        carrier = float(ann.get(f"{NAMESPACE}:carrier", 0.0))
        low = float(ann[SigMFFile.FLO_KEY]) - rf_center
        high = float(ann[SigMFFile.FHI_KEY]) - rf_center
        truths.append(
            SignalTruth(
                tx_id=int(ann.get(f"{NAMESPACE}:tx_id", 0)),
                segment=int(ann.get(f"{NAMESPACE}:segment", 0)),
                class_id=int(ann.get(f"{NAMESPACE}:class_id", 0)),
                modulation=ann.get(SigMFFile.LABEL_KEY, ""),
                carrier=carrier,
                band_edges=(low - carrier, high - carrier),
                start=ann[SigMFFile.START_INDEX_KEY] / sample_rate,
                duration=ann[SigMFFile.LENGTH_INDEX_KEY] / sample_rate,
                snr_db=[float(ann.get(f"{NAMESPACE}:snr_db", math.inf))],
            )
        )
    return truths


def _antenna_meta(meta_path: Path, antenna: Optional[int]) -> Path:
    if antenna is None:
        return meta_path
    name = frame_name_from_stem(meta_path.stem)
    sibling = meta_path.with_name(antenna_stem(name, antenna, 2) + ".sigmf-meta")
    if antenna == 0 and not sibling.is_file():
        return meta_path.with_name(name + ".sigmf-meta")
    return sibling


def cmd_spectrogram(args) -> CommandResult:
    """Render one recording's spectrogram, optionally with truth boxes overlaid."""
    meta_path = _antenna_meta(Path(args.frame), getattr(args, "antenna", None))
    samples, metadata = load_recording(meta_path)
    cfg = load_config(getattr(args, "config", None))
    spec = SpectrogramSpec.from_config(cfg)
    fs = float(metadata["global"][SigMFFile.SAMPLE_RATE_KEY])
    rf_center = float(metadata["captures"][0].get(SigMFFile.FREQUENCY_KEY, 0.0))

    spectrogram = stft_spectrogram(samples, fs, spec, band=cfg.band)
    out = Path(getattr(args, "out", None) or meta_path.with_suffix(".png"))
    if getattr(args, "overlay", False):
        truths = _truths_from_sigmf(metadata, fs, rf_center)
        boxes = events_to_bboxes(truths, spectrogram, samples.size / fs)
        labels = {t.class_id: t.modulation for t in truths}
        plot_spectrogram(spectrogram, out, boxes, labels, title=meta_path.name)
    else:
        render_png(spectrogram.to_db(), out, spec.dynamic_range_db)
    height, width = spectrogram.shape
    _say(args, f"[OK] Spectrogram {width}x{height} written to {out}")
    report = {"image": str(out), "shape": [height, width]}
    return CommandResult(EXIT_OK, f"Spectrogram written to {out}", report=report)


# --------------------------------------------------------------------------
# coco-export
# --------------------------------------------------------------------------


def cmd_coco_export(args) -> CommandResult:
    """Spectrogram images, COCO annotations and 8:1:1 splits for a generated dataset."""
    out_dir = Path(args.dataset)
    manifest = DatasetManifest.load(out_dir)
    cfg = _load_dataset_config(out_dir, getattr(args, "config", None))
    spec = SpectrogramSpec.from_config(cfg)
    exporter = SigMFExporter(
        out_dir, iq_dir=cfg.value("output.iq_dir"), anno_dir=cfg.value("output.anno_dir")
    )
    coco_dir = out_dir / cfg.value("output.coco_dir")

    records = []
    names = manifest.file_names
    for position, name in enumerate(names):
        samples, annotation = exporter.load(name)
        rx = annotation["annotation"]["rx"]
        spectrogram = stft_spectrogram(
            samples[0], float(rx["MasterClockRate"]), spec, band=tuple(rx["ObservableBand"])
        )
        truths = [SignalTruth.from_dict(s) for s in annotation["signals"]]
        boxes = events_to_bboxes(truths, spectrogram, float(rx["TimeDuration"]), position)
        file_name = f"images/{name}.png"
        render_png(spectrogram.to_db(), coco_dir / file_name, spec.dynamic_range_db)
        height, width = spectrogram.shape
        records.append((CocoImage(position, file_name, width, height, name), boxes))
        logger.debug("Annotated %s with %d boxes", name, len(boxes))

    seed = args.seed if getattr(args, "seed", None) is not None else manifest.seed
    splits = make_splits(len(records), seed)
    for split in SPLIT_NAMES:
        chosen = set(splits[split])
        export_coco([r for r in records if r[0].image_id in chosen], split, coco_dir)
    write_split_files(splits, coco_dir)
    manifest.splits = splits
    manifest.save(out_dir)

    n_boxes = sum(len(boxes) for _, boxes in records)
    counts = {k: len(v) for k, v in splits.items()}
    _say(args, f"[OK] {len(records)} images, {n_boxes} boxes written to {coco_dir}")
    _say(args, f"[INFO] Splits: {counts}")
    return CommandResult(
        EXIT_OK,
        f"COCO export: {len(records)} images, {n_boxes} boxes",
        report={"images": len(records), "annotations": n_boxes, "splits": counts},
    )


# --------------------------------------------------------------------------
# stats, validate, coverage, registry
# --------------------------------------------------------------------------


def cmd_stats(args) -> CommandResult:
    """Dataset statistics, optionally with histogram plots and a dataset card."""
    out_dir = Path(args.dataset)
    manifest = DatasetManifest.load(out_dir)
    report = dataset_stats(manifest)
    if not getattr(args, "quiet", False):
        print_stats_summary(report)

    if getattr(args, "plots", False):
        plots = save_stats_plots(report, out_dir / "stats")
        card = generate_dataset_card(
            report,
            manifest.seed,
            manifest.config_digest,
            dataset_name=out_dir.resolve().name,
            splits=manifest.splits or None,
        )
        card_path = out_dir / "README.md"
        card_path.write_text(card, encoding="utf-8")
        _say(args, f"[OK] {len(plots)} plots written to {out_dir / 'stats'}")
        _say(args, f"[OK] Dataset card written to {card_path}")

    summary = f"{report['total_frames']} frames from {report['scenarios']} scenarios"
    return CommandResult(EXIT_OK, summary, report={"stats": report})


def cmd_validate(args) -> CommandResult:
    """Audit a configuration file or a generated dataset."""
    if getattr(args, "dataset", None):
        report = validate_dataset(args.dataset)
    else:
        report = validate_config_file(getattr(args, "config", None))

    for violation in report.violations:
        print(f"[ERROR] {violation.target}: {violation.code}: {violation.message}")
    summary = f"Validated {report.checked} {report.kind} items: {len(report.violations)} violations"
    if report.ok:
        _say(args, f"[OK] {summary}")
        return CommandResult(EXIT_OK, summary, report=report.to_dict())
    return CommandResult(EXIT_VALIDATION, summary, report=report.to_dict())


def _parse_point(text: str) -> Tuple[float, float, float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"Invalid position '{text}', expected X,Y,Z") from e
    if len(values) != 3:
        raise ConfigError(f"Invalid position '{text}', expected X,Y,Z")
    return values[0], values[1], values[2]


def cmd_coverage(args) -> CommandResult:
    """Ray-traced received-power map of a scene for one transmitter position."""
    scene = load_scene(args.osm)
    grid = compute_coverage(
        scene,
        _parse_point(args.tx),
        spacing=args.spacing,
        rx_height=args.rx_height,
        frequency_hz=args.frequency,
        max_reflections=args.max_reflections,
    )
    grid.save_png(args.out, scene)
    written: Sequence[str] = [str(args.out)]
    if getattr(args, "csv", None):
        grid.to_csv(args.csv)
        written = [str(args.out), str(args.csv)]
    covered = int((grid.flags == COVERAGE_OK).sum())
    _say(args, f"[OK] Coverage: {covered}/{grid.flags.size} cells reached, written to {args.out}")
    return CommandResult(
        EXIT_OK,
        f"Coverage map of {scene.name or args.osm}",
        report={"cells": int(grid.flags.size), "covered": covered, "files": list(written)},
    )


def cmd_registry(args) -> CommandResult:
    """Export the modulation class catalog as JSON."""
    entries = registry_as_json()
    out = getattr(args, "out", None)
    if out:
        save_json(out, entries, quiet=getattr(args, "quiet", False))
    else:
        print(f"{len(entries)} modulation classes:")
        for entry in entries:
            print(f"  {entry['id']:3d}  {entry['name']:<14s} {entry['family']}")
    summary = f"{len(entries)} modulation classes"
    return CommandResult(EXIT_OK, summary, report={"count": len(entries)})
