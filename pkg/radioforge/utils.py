# radioforge/utils.py
"""Dataset I/O helpers: atomic JSON files, frame naming, the manifest and aggregate statistics."""

import hashlib
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .errors import ArchiveError

MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.json"
HISTOGRAM_BINS = 10


def frame_file_name(frame_index: int, rx_id: int) -> str:
    """``Frame_XXXXXX_Rx_YYYY`` prefix shared by a receiver frame's files."""
    return f"Frame_{frame_index:06d}_Rx_{rx_id:04d}"


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(data: Any) -> str:
    """Stable JSON text (indent 2, no NaN) used for every dataset file."""
    return json.dumps(data, indent=2, default=_json_default, allow_nan=False) + "\n"


def save_json(
    path: Union[str, Path],
    data: Any,
    quiet: bool = True,
    frame_index: Optional[int] = None,
) -> Path:
    """Write ``data`` as JSON through a temporary file and an atomic rename.

    Raises:
        ArchiveError: The file could not be written
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_text(to_json(data), encoding="utf-8")
        os.replace(tmp, path)
    except (OSError, TypeError, ValueError) as e:
        raise ArchiveError(f"Could not write {path}: {e}", frame_index=frame_index) from e
    if not quiet:
        print(f"[OK] Saved {path}")
    return path


def load_json(path: Union[str, Path], frame_index: Optional[int] = None) -> Any:
    """Read a JSON file, raising ``ArchiveError`` for missing or malformed files."""
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ArchiveError(f"File not found: {path}", frame_index=frame_index) from e
    except (OSError, json.JSONDecodeError) as e:
        raise ArchiveError(f"Could not read {path}: {e}", frame_index=frame_index) from e


def config_digest(settings: Dict) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    canonical = json.dumps(settings, sort_keys=True, default=_json_default)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _mean_snr(value: Any) -> Optional[float]:
    """Average a per-signal SNR entry (scalar or per-antenna list) in dB."""
    values = value if isinstance(value, list) else [value]
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if not finite:
        return None
    return float(10.0 * np.log10(np.mean(10.0 ** (np.asarray(finite) / 10.0))))


def manifest_entry(annotation: Dict) -> Dict:
    """Manifest record for one receiver frame, derived from its annotation document."""
    rx = annotation["annotation"]["rx"]
    frame = annotation["frame"]
    signals = []
    for signal in annotation["signals"]:
        lo, hi = signal["BandWidth"]
        signals.append(
            {
                "ClassId": signal["ClassId"],
                "ModulatorType": signal["ModulatorType"],
                "TimeDuration": signal["TimeDuration"],
                "BandWidth": hi - lo,
                "SNR": _mean_snr(signal["SNR"]),
            }
        )
    return {
        "filePrefix": annotation["filePrefix"],
        "FrameIndex": frame["FrameIndex"],
        "RxId": frame["RxId"],
        "NumReceiveAntennas": rx["NumReceiveAntennas"],
        "NumSamples": rx["NumSamples"],
        "TimeDuration": rx["TimeDuration"],
        "Signals": signals,
    }


@dataclass
class DatasetManifest:
    """Index of a generated dataset.

    ``frames`` holds one entry per receiver frame, sorted by (frame index, receiver id);
    ``failures`` holds frames that still failed after their retry.
    """

    seed: int
    config_digest: str = ""
    frames: List[Dict] = field(default_factory=list)
    failures: List[Dict] = field(default_factory=list)
    splits: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def frame_indices(self) -> List[int]:
        return sorted({entry["FrameIndex"] for entry in self.frames})

    @property
    def file_names(self) -> List[str]:
        return [entry["filePrefix"] for entry in self.frames]

    @property
    def total_frames(self) -> int:
        """Recorded receiver frames: the sum of receiver counts over all scenarios."""
        return len(self.frames)

    @property
    def instance_count(self) -> int:
        return sum(len(entry["Signals"]) for entry in self.frames)

    def counters(self) -> Dict[str, int]:
        return {
            "scenarios": len(self.frame_indices),
            "frames": self.total_frames,
            "instances": self.instance_count,
            "failures": len(self.failures),
        }

    def merge(
        self, indices: Iterable[int], entries: Sequence[Dict], failures: Sequence[Dict]
    ) -> None:
        """Replace every record of ``indices`` with the given entries and failures."""
        touched = set(indices)
        kept = [e for e in self.frames if e["FrameIndex"] not in touched]
        self.frames = sorted(kept + list(entries), key=lambda e: (e["FrameIndex"], e["RxId"]))
        kept_failures = [f for f in self.failures if f["FrameIndex"] not in touched]
        self.failures = sorted(kept_failures + list(failures), key=lambda f: f["FrameIndex"])

    def to_dict(self) -> Dict:
        return {
            "generator": "radioforge",
            "seed": self.seed,
            "configDigest": self.config_digest,
            "counters": self.counters(),
            "frames": self.frames,
            "failures": self.failures,
            "splits": self.splits,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DatasetManifest":
        return cls(
            seed=int(data["seed"]),
            config_digest=data.get("configDigest", ""),
            frames=list(data.get("frames", [])),
            failures=list(data.get("failures", [])),
            splits={k: list(v) for k, v in data.get("splits", {}).items()},
        )

    def save(self, out_dir: Union[str, Path], quiet: bool = True) -> Path:
        return save_json(Path(out_dir) / MANIFEST_FILE, self.to_dict(), quiet=quiet)

    @classmethod
    def load(cls, out_dir: Union[str, Path]) -> "DatasetManifest":
        return cls.from_dict(load_json(Path(out_dir) / MANIFEST_FILE))


def _histogram(values: Sequence[float], bins: int = HISTOGRAM_BINS) -> Dict[str, List]:
    if not values:
        return {"counts": [], "edges": []}
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return {"counts": [int(c) for c in counts], "edges": [float(e) for e in edges]}


def _count_table(values: Iterable) -> Dict[str, int]:
    counts = Counter(values)
    return {str(k): counts[k] for k in sorted(counts)}


def dataset_stats(manifest: DatasetManifest) -> Dict:
    """Aggregate report over every recorded receiver frame.

    Covers the frame total, the receiver count per scenario, the class histogram,
    categories and instances per frame, and duration, bandwidth and SNR histograms.

    Raises:
        ArchiveError: The manifest lists no frames
    """
    if not manifest.frames:
        raise ArchiveError("Manifest lists no frames")

    receivers = Counter(entry["FrameIndex"] for entry in manifest.frames)
    signals = [s for entry in manifest.frames for s in entry["Signals"]]
    class_counts = Counter(s["ModulatorType"] for s in signals)
    snrs = [s["SNR"] for s in signals if s["SNR"] is not None]
    instances = [len(entry["Signals"]) for entry in manifest.frames]

    return {
        "total_frames": manifest.total_frames,
        "scenarios": len(receivers),
        "receivers_per_scenario": _count_table(receivers.values()),
        "failures": len(manifest.failures),
        "instances": len(signals),
        "max_instances_per_frame": max(instances),
        "class_histogram": dict(sorted(class_counts.items(), key=lambda kv: (-kv[1], kv[0]))),
        "categories_per_frame": _count_table(
            len({s["ClassId"] for s in entry["Signals"]}) for entry in manifest.frames
        ),
        "instances_per_frame": _count_table(instances),
        "duration_histogram_s": _histogram([s["TimeDuration"] for s in signals]),
        "bandwidth_histogram_hz": _histogram([s["BandWidth"] for s in signals]),
        "snr_histogram_db": _histogram(snrs),
        "snr_undefined": len(signals) - len(snrs),
    }


def print_stats_summary(report: Dict) -> None:
    """Console summary of ``dataset_stats`` output."""
    print("\n" + "=" * 60)
    print("DATASET SUMMARY")
    print("=" * 60)
    print(f"  Frames: {report['total_frames']} from {report['scenarios']} scenarios")
    print(f"  Signal instances: {report['instances']}")
    print(f"  Max instances per frame: {report['max_instances_per_frame']}")
    print(f"  Distinct classes: {len(report['class_histogram'])}")
    if report["failures"]:
        print(f"  [WARNING] Failed frames: {report['failures']}")
    top = list(report["class_histogram"].items())[:5]
    for name, count in top:
        pct = count / report["instances"] * 100 if report["instances"] else 0.0
        print(f"    {name}: {count}/{report['instances']} ({pct:.1f}%)")
    print("=" * 60)
