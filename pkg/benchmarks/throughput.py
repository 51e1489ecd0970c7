#!/usr/bin/env python3
"""
Measure radioforge generation throughput for statistical-channel frames.

Generates a frame range with the reference configuration restricted to the
statistical channel family and reports frames per minute, receiver frames per
minute and the mean frame length. Results are printed, not asserted.

    python benchmarks/throughput.py --frames 40 --workers 8
"""

import argparse
import tempfile
import time
from pathlib import Path

from dotenv import load_dotenv

from radioforge.config import build_config
from radioforge.core import run_batch
from radioforge.main import resolve_workers
from radioforge.otel import setup_inmemory_otel, summarize_stage_timings

load_dotenv()

STATISTICAL_ONLY = {"statistical": 1.0, "raytrace": 0.0, "identity": 0.0}


def run_benchmark(frames: int, workers: int, seed: int, out_dir: Path, trace: bool) -> dict:
    """Generate ``frames`` scenarios into ``out_dir`` and time the batch."""
    cfg = build_config(
        {"seed": seed, "frames": frames, "channel": {"family_weights": STATISTICAL_ONLY}}
    )
    tracer, span_exporter = setup_inmemory_otel(enable_otel=trace)

    start = time.perf_counter()
    manifest = run_batch(cfg, range(frames), out_dir, workers=workers, tracer=tracer, quiet=True)
    elapsed = time.perf_counter() - start

    samples = [entry["NumSamples"] for entry in manifest.frames]
    result = {
        "scenarios": len(manifest.frame_indices),
        "receiver_frames": manifest.total_frames,
        "failures": len(manifest.failures),
        "seconds": elapsed,
        "scenarios_per_minute": len(manifest.frame_indices) / elapsed * 60.0,
        "receiver_frames_per_minute": manifest.total_frames / elapsed * 60.0,
        "mean_samples_per_frame": sum(samples) / len(samples) if samples else 0.0,
    }
    if span_exporter is not None:
        result["stages"] = summarize_stage_timings(span_exporter.get_finished_spans())
    return result


def main():
    parser = argparse.ArgumentParser(description="radioforge throughput benchmark")
    parser.add_argument("--frames", type=int, default=40, help="Scenarios to generate")
    parser.add_argument("--workers", type=int, default=8, help="Parallel frame workers")
    parser.add_argument("--seed", type=int, default=1, help="Master seed")
    parser.add_argument("--out", type=str, help="Keep the dataset here (default: temp dir)")
    parser.add_argument("--trace", action="store_true", help="Also report per-stage timings")
    args = parser.parse_args()

    workers = resolve_workers(args.workers)
    print(f"[CONFIG] {args.frames} statistical-channel scenarios, {workers} worker(s)")

    if args.out:
        result = run_benchmark(args.frames, workers, args.seed, Path(args.out), args.trace)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            result = run_benchmark(args.frames, workers, args.seed, Path(tmp), args.trace)

    print(f"[OK] {result['scenarios']} scenarios in {result['seconds']:.1f} s")
    print(f"  Scenarios per minute: {result['scenarios_per_minute']:.1f}")
    print(f"  Receiver frames per minute: {result['receiver_frames_per_minute']:.1f}")
    print(f"  Mean samples per frame: {result['mean_samples_per_frame']:.0f}")
    if result["failures"]:
        print(f"[WARNING] {result['failures']} scenarios failed")
    for stage, entry in result.get("stages", {}).items():
        print(f"  {stage:<15s} {entry['count']:5d} spans  mean {entry['mean_ms']:8.1f} ms")


if __name__ == "__main__":
    main()
