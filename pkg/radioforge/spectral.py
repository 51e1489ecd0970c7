# radioforge/spectral.py
"""Centred STFT framing shared by spectrogram rendering and truth band measurement."""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)


def stft_column_count(n_samples: int, hop: int) -> int:
    return math.ceil(n_samples / hop)


def centred_stft(
    samples: np.ndarray,
    fft_size: int,
    hop: int,
    taps: np.ndarray,
    first_column: int = 0,
    n_columns: Optional[int] = None,
    offset: int = 0,
) -> np.ndarray:
    """Complex STFT (frequency x time, DC in the middle row) with frames centred on
    multiples of ``hop``.

    ``samples[0]`` sits at absolute sample ``offset`` and column ``c`` covers absolute
    samples [c hop - fft_size / 2, c hop + fft_size / 2), zeros outside ``samples``.
    A slice of a recording therefore gives the same cells as the whole recording.
    """
    x = np.asarray(samples, dtype=np.complex128).ravel()
    if n_columns is None:
        n_columns = stft_column_count(offset + x.size, hop) - first_column
    if n_columns < 1:
        raise ValueError(f"Need at least one STFT column, got {n_columns}")
    half = fft_size // 2
    base = first_column * hop - half
    padded = np.zeros((n_columns - 1) * hop + fft_size, dtype=np.complex128)
    lo = max(offset, base)
    hi = min(offset + x.size, base + padded.size)
    if hi > lo:
        padded[lo - base : hi - base] = x[lo - offset : hi - offset]
    frames = sliding_window_view(padded, fft_size)[::hop][:n_columns]
    return np.fft.fftshift(np.fft.fft(frames * taps, axis=1), axes=1).T


def visible_band(
    samples: np.ndarray,
    offset: int,
    n_frame: int,
    sample_rate: float,
    fft_size: int,
    hop: int,
    taps: np.ndarray,
    threshold_db: float = -20.0,
    band: Optional[Tuple[float, float]] = None,
) -> Optional[Tuple[float, float]]:
    """Absolute band (Hz about the band centre) whose spectrogram rows best match the
    cells within ``threshold_db`` of a burst's peak.

    ``samples`` is one burst alone, starting at frame sample ``offset``. Its columns are
    the ones a box from the burst's start and end covers. The mask is judged in a
    window extending the box by half its size on each side, as ``energy_mask_iou``
    does, and the contiguous run of rows around the peak row with the highest
    intersection over union wins. Edges sit half a bin beyond the outer row centres,
    clipped to ``band``.

    Returns:
        (low, high) in Hz, or None when the burst carries no energy
    """
    x = np.asarray(samples, dtype=np.complex128).ravel()
    if x.size == 0:
        return None
    n_cols = stft_column_count(n_frame, hop)
    x0 = min(offset // hop, n_cols - 1)
    x1 = min(n_cols, -(-(offset + x.size) // hop))
    width = max(1, x1 - x0)
    mx = max(1, width // 2)
    c0, c1 = max(0, x0 - mx), min(n_cols, x0 + width + mx)

    power = np.abs(centred_stft(x, fft_size, hop, taps, c0, c1 - c0, offset)) ** 2
    freqs = np.fft.fftshift(np.fft.fftfreq(fft_size, 1.0 / sample_rate))
    if band is not None:
        keep = (freqs >= band[0]) & (freqs <= band[1])
        power, freqs = power[keep], freqs[keep]
    if power.size == 0:
        return None

    inside = np.zeros(power.shape[1], dtype=bool)
    inside[x0 - c0 : x0 - c0 + width] = True
    row_peaks = power[:, inside].max(axis=1)
    peak = float(row_peaks.max())
    if not peak > 0 or not math.isfinite(peak):
        return None
    lit = power >= peak * 10.0 ** (threshold_db / 10.0)

    n_rows = power.shape[0]
    lit_in = lit[:, inside].sum(axis=1)
    lit_out = lit[:, ~inside].sum(axis=1)
    cum_in = np.concatenate([[0], np.cumsum(lit_in)])
    cum_out = np.concatenate([[0], np.cumsum(lit_out)])
    cum_all = cum_in + cum_out

    peak_row = int(np.argmax(row_peaks))
    lo = np.arange(peak_row + 1)[:, None]
    hi = np.arange(peak_row + 1, n_rows + 1)[None, :]
    height = hi - lo
    my = np.maximum(1, height // 2)
    w0 = np.maximum(0, lo - my)
    w1 = np.minimum(n_rows, hi + my)
    intersection = cum_in[hi] - cum_in[lo]
    union = (
        height * width
        + (cum_out[hi] - cum_out[lo])
        + (cum_all[lo] - cum_all[w0])
        + (cum_all[w1] - cum_all[hi])
    )
    iou = intersection / union
    i, j = np.unravel_index(int(np.argmax(iou)), iou.shape)
    first, last = int(lo[i, 0]), int(hi[0, j]) - 1

    df = sample_rate / fft_size
    low, high = float(freqs[first] - df / 2), float(freqs[last] + df / 2)
    if band is not None:
        low, high = max(low, band[0]), min(high, band[1])
    logger.debug("Visible band [%.0f, %.0f] Hz, expected IoU %.3f", low, high, iou[i, j])
    return low, high
