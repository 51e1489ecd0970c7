# radioforge/cli.py
"""CLI for generating and inspecting radioforge datasets."""

import argparse
import logging
import sys

from dotenv import load_dotenv

from . import main as flows

# Load .env file at startup
load_dotenv()

COMMANDS = {
    "generate": flows.cmd_generate,
    "spectrogram": flows.cmd_spectrogram,
    "coco-export": flows.cmd_coco_export,
    "stats": flows.cmd_stats,
    "validate": flows.cmd_validate,
    "coverage": flows.cmd_coverage,
    "registry": flows.cmd_registry,
}


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--json-report",
        type=str,
        metavar="PATH",
        help="Write a machine-readable JSON report of the command outcome",
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Only print errors")
    verbosity.add_argument("--verbose", action="store_true", help="Also show library log messages")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radioforge",
        description="Generate synthetic multi-transmitter RF datasets with ground truth",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_options()

    generate = subparsers.add_parser(
        "generate", parents=[common], help="Generate receiver frames into a dataset directory"
    )
    generate.add_argument("--config", type=str, help="JSON configuration (default: reference)")
    generate.add_argument("--out", type=str, required=True, help="Dataset output directory")
    generate.add_argument(
        "--frames",
        type=str,
        metavar="A..B",
        help="Inclusive frame index range (default: every configured frame)",
    )
    generate.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Parallel frame workers (capped by RADIOFORGE_THREADS)",
    )
    generate.add_argument("--seed", type=int, help="Override the configured master seed")
    generate.add_argument(
        "--trace-report",
        type=str,
        metavar="PATH",
        help="Enable OpenTelemetry stage tracing and write per-stage timings to PATH",
    )

    spectrogram = subparsers.add_parser(
        "spectrogram", parents=[common], help="Render the spectrogram of one recording"
    )
    spectrogram.add_argument("frame", type=str, help="Path to a .sigmf-meta file")
    spectrogram.add_argument("--out", type=str, help="PNG path (default: next to the recording)")
    spectrogram.add_argument("--antenna", type=int, help="Receive antenna of a multi-antenna frame")
    spectrogram.add_argument(
        "--overlay", action="store_true", help="Draw ground-truth boxes from the SigMF annotations"
    )
    spectrogram.add_argument("--config", type=str, help="Configuration with STFT settings")

    coco = subparsers.add_parser(
        "coco-export", parents=[common], help="Spectrogram images, COCO annotations and splits"
    )
    coco.add_argument("dataset", type=str, help="Dataset directory")
    coco.add_argument("--seed", type=int, help="Split seed (default: the dataset's master seed)")
    coco.add_argument("--config", type=str, help="Override the dataset's STFT settings")

    stats = subparsers.add_parser("stats", parents=[common], help="Dataset statistics")
    stats.add_argument("dataset", type=str, help="Dataset directory")
    stats.add_argument(
        "--plots", action="store_true", help="Write histogram PNGs and a markdown dataset card"
    )

    validate = subparsers.add_parser(
        "validate", parents=[common], help="Audit a configuration or a generated dataset"
    )
    target = validate.add_mutually_exclusive_group(required=True)
    target.add_argument("--config", type=str, help="Configuration file to audit")
    target.add_argument("--dataset", type=str, help="Dataset directory to audit")

    coverage = subparsers.add_parser(
        "coverage", parents=[common], help="Ray-traced coverage map of an OSM scene"
    )
    coverage.add_argument("osm", type=str, help="OSM file or builtin:<campus|canyon>")
    coverage.add_argument("--tx", type=str, required=True, metavar="X,Y,Z", help="Tx position (m)")
    coverage.add_argument("--spacing", type=float, default=5.0, help="Grid spacing in metres")
    coverage.add_argument("--rx-height", type=float, default=1.5, help="Receiver height in metres")
    coverage.add_argument("--frequency", type=float, default=1e9, help="Carrier frequency in Hz")
    coverage.add_argument("--max-reflections", type=int, default=2, help="Reflection order")
    coverage.add_argument("--out", type=str, required=True, help="Coverage PNG path")
    coverage.add_argument("--csv", type=str, help="Also write the grid as CSV")

    registry = subparsers.add_parser(
        "registry", parents=[common], help="List or export the modulation class catalog"
    )
    registry.add_argument("--out", type=str, help="JSON output path (default: print a table)")
    return parser


def main(argv=None):
    """Main entry point for the radioforge CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    result = flows.run_command(args.command, COMMANDS[args.command], args)
    if result.exit_code != flows.EXIT_OK:
        print(f"[ERROR] {args.command}: {result.summary}")
    if result.report_path is not None and not args.quiet:
        print(f"[OK] Report written to {result.report_path}")
    sys.exit(result.exit_code)


if __name__ == "__main__":  # pragma: no cover
    main()
