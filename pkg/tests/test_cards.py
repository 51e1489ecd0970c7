"""Tests for radioforge.cards module."""

from radioforge.cards import generate_dataset_card, save_stats_plots


def _report(**overrides):
    report = {
        "total_frames": 6,
        "scenarios": 3,
        "receivers_per_scenario": {"1": 1, "2": 1, "3": 1},
        "failures": 0,
        "instances": 9,
        "max_instances_per_frame": 2,
        "class_histogram": {"QPSK": 5, "FM": 3, "GMSK": 1},
        "categories_per_frame": {"1": 3, "2": 3},
        "instances_per_frame": {"1": 3, "2": 3},
        "duration_histogram_s": {"counts": [4, 5], "edges": [0.001, 0.002, 0.003]},
        "bandwidth_histogram_hz": {"counts": [9], "edges": [40000.0, 50000.0]},
        "snr_histogram_db": {"counts": [], "edges": []},
        "snr_undefined": 9,
    }
    report.update(overrides)
    return report


def test_card_has_header_and_overview():
    """Test the card carries front matter, counters and the seed."""
    card = generate_dataset_card(_report(), seed=42, config_digest="abc123", dataset_name="demo")
    assert card.startswith("---\nlicense: cc-by-4.0")
    assert "# demo" in card
    assert "**Recorded frames**: 6" in card
    assert "**Scenarios**: 3" in card
    assert "**Master seed**: 42" in card
    assert "`abc123`" in card
    assert "## About radioforge" in card


def test_card_tables():
    """Test class and binned histograms are rendered as markdown tables."""
    card = generate_dataset_card(_report(), seed=1)
    assert "| QPSK | 5 | 55.6% |" in card
    assert "| 0.001 to 0.002 | 4 |" in card
    assert "### Signal SNR\n\nNo values." in card
    assert "finite SNR (noise-free receivers or outage links): 9" in card
    assert "# radioforge dataset" in card


def test_card_splits_section():
    """Test the split section lists the frame count per split."""
    card = generate_dataset_card(_report(), seed=1, splits={"train": [0, 1], "val": [2]})
    assert "## Splits" in card
    assert "- **train**: 2 frames" in card
    assert "- **val**: 1 frames" in card
    assert "## Splits" not in generate_dataset_card(_report(), seed=1)


def test_save_stats_plots(tmp_path):
    """Test one PNG per categorical table and per non-empty binned histogram."""
    paths = save_stats_plots(_report(), tmp_path / "stats")
    assert sorted(p.name for p in paths) == [
        "bandwidths.png",
        "categories_per_frame.png",
        "classes.png",
        "durations.png",
        "instances_per_frame.png",
    ]
    assert all(p.stat().st_size > 0 for p in paths)
