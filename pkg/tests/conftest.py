# tests/conftest.py
"""Shared fixtures: a small fast configuration and generated datasets."""

import copy

import numpy as np
import pytest

SMALL_SETTINGS = {
    "seed": 7,
    "frames": 4,
    "scenario": {
        "tx_count": 1,
        "rx_count": 1,
        "segments_per_tx": 1,
        "tx_antennas": 1,
        "rx_antennas": 1,
        "symbols_per_segment": {"kind": "uniform-discrete", "low": 200, "high": 300},
        "transmit_power_dbm": 20.0,
    },
    "modulation": {"classes": ["QPSK"]},
    "channel": {"family_weights": {"statistical": 0.0, "raytrace": 0.0, "identity": 1.0}},
    "annotation": {"fft_size": 256, "hop": 64},
}


@pytest.fixture
def small_settings():
    """Deep copy of the fast single-link configuration dict."""
    return copy.deepcopy(SMALL_SETTINGS)


@pytest.fixture
def small_config(small_settings):
    """Validated fast configuration."""
    from radioforge.config import build_config

    return build_config(small_settings)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def generated_dataset(tmp_path, small_config):
    """Dataset directory with every configured frame generated."""
    from radioforge.core import run_batch

    out = tmp_path / "dataset"
    run_batch(small_config, range(small_config.frames), out, workers=1, quiet=True)
    return out
