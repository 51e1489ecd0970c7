# radioforge/cards.py
"""Dataset card and summary figures for generated radioforge datasets."""

from pathlib import Path
from typing import Dict, List, Optional, Union


def _get_header() -> str:
    """Front matter shared by every card."""
    return """---
license: cc-by-4.0
task_categories:
  - object-detection
tags:
  - radioforge
  - rf
  - spectrum-sensing
  - modulation-recognition
  - synthetic
---

"""


def _get_footer() -> str:
    return """
---

## About radioforge

radioforge synthesizes multi-transmitter, multi-receiver RF scenes: 100 modulation
classes, transmitter and receiver impairments, statistical fading or ray-traced
propagation over OpenStreetMap scenes, with ground truth recorded per receiver frame.

### File layout

```
<dataset>/
  config.json                      merged generation configuration
  manifest.json                    frame index, counters, failures, splits
  sequence_data/iq/*.sigmf-data    cf32_le samples per receiver antenna
  sequence_data/iq/*.sigmf-meta    SigMF metadata with per-signal annotations
  anno/Frame_XXXXXX_Rx_YYYY.json   ground truth (annotation.rx / annotation.tx)
  coco/{train,val,test}.json       COCO detection annotations on spectrogram images
```
"""


def _histogram_table(title: str, table: Dict[str, int], unit: str = "") -> str:
    total = sum(table.values())
    lines = [f"### {title}", "", f"| Value{unit} | Count | Share |", "|---|---|---|"]
    for key, count in table.items():
        pct = count / total * 100 if total else 0.0
        lines.append(f"| {key} | {count} | {pct:.1f}% |")
    return "\n".join(lines) + "\n"


def _binned_table(title: str, histogram: Dict[str, List], unit: str) -> str:
    counts, edges = histogram["counts"], histogram["edges"]
    if not counts:
        return f"### {title}\n\nNo values.\n"
    lines = [f"### {title}", "", f"| Range ({unit}) | Count |", "|---|---|"]
    for count, lo, hi in zip(counts, edges[:-1], edges[1:]):
        lines.append(f"| {lo:.4g} to {hi:.4g} | {count} |")
    return "\n".join(lines) + "\n"


def generate_dataset_card(
    report: Dict,
    seed: int,
    config_digest: str = "",
    dataset_name: Optional[str] = None,
    splits: Optional[Dict[str, List[int]]] = None,
) -> str:
    """
    Generate a markdown card describing a generated dataset.

    Args:
        report: Output of ``dataset_stats``
        seed: Master seed the dataset was generated with
        config_digest: SHA-256 of the merged configuration
        dataset_name: Title used in the card
        splits: Optional split assignment from ``make_splits``

    Returns:
        Markdown content for the dataset card
    """
    name = dataset_name or "radioforge dataset"
    top_classes = list(report["class_histogram"].items())[:20]
    class_table = _histogram_table(
        f"Modulation classes (top {len(top_classes)} of {len(report['class_histogram'])})",
        dict(top_classes),
    )
    split_lines = ""
    if splits:
        split_lines = "\n## Splits\n\n" + "\n".join(
            f"- **{k}**: {len(v)} frames" for k, v in splits.items()
        )
        split_lines += "\n"

    return f"""{_get_header()}
# {name}

Synthetic RF receiver frames with complete generation ground truth.

## Overview

- **Recorded frames**: {report['total_frames']} (sum of receiver counts over scenarios)
- **Scenarios**: {report['scenarios']}
- **Signal instances**: {report['instances']}
- **Max instances per frame**: {report['max_instances_per_frame']}
- **Failed scenarios**: {report['failures']}
- **Master seed**: {seed}
- **Configuration digest**: `{config_digest or 'n/a'}`
{split_lines}
## Distributions

{class_table}
{_histogram_table("Receivers per scenario", report["receivers_per_scenario"])}
{_histogram_table("Distinct classes per frame", report["categories_per_frame"])}
{_histogram_table("Signal instances per frame", report["instances_per_frame"])}
{_binned_table("Signal durations", report["duration_histogram_s"], "s")}
{_binned_table("Signal bandwidths", report["bandwidth_histogram_hz"], "Hz")}
{_binned_table("Signal SNR", report["snr_histogram_db"], "dB")}
Signals without a finite SNR (noise-free receivers or outage links): {report['snr_undefined']}
{_get_footer()}"""


def save_stats_plots(report: Dict, out_dir: Union[str, Path]) -> List[Path]:
    """Bar charts of the ``dataset_stats`` histograms as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    categorical = {
        "classes": ("class_histogram", "Modulation class"),
        "categories_per_frame": ("categories_per_frame", "Distinct classes per frame"),
        "instances_per_frame": ("instances_per_frame", "Instances per frame"),
    }
    for stem, (key, label) in categorical.items():
        table = report[key]
        fig, ax = plt.subplots(figsize=(max(6, len(table) * 0.25), 4))
        ax.bar(range(len(table)), list(table.values()), color="steelblue")
        ax.set_xticks(range(len(table)))
        ax.set_xticklabels(list(table.keys()), rotation=90 if len(table) > 12 else 0, fontsize=7)
        ax.set_xlabel(label)
        ax.set_ylabel("Count")
        fig.tight_layout()
        path = out_dir / f"{stem}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)

    binned = {
        "durations": ("duration_histogram_s", "Duration (s)"),
        "bandwidths": ("bandwidth_histogram_hz", "Bandwidth (Hz)"),
        "snr": ("snr_histogram_db", "SNR (dB)"),
    }
    for stem, (key, label) in binned.items():
        histogram = report[key]
        if not histogram["counts"]:
            continue
        edges = histogram["edges"]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.stairs(histogram["counts"], edges, fill=True, color="steelblue")
        ax.set_xlabel(label)
        ax.set_ylabel("Count")
        fig.tight_layout()
        path = out_dir / f"{stem}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
