# radioforge/loopback.py
"""Reference demodulators used as the loopback oracle for every digital class.

These are noise-free receivers: matched filtering plus removal of the residual
pulse-truncation ISI for linear schemes, discriminator plus banded deconvolution for
CPM, and exact transform inversion for the multicarrier families.
"""

import math
from typing import Optional

import numpy as np
from scipy.linalg import lstsq, solve_banded

from .errors import ModulationError
from .modulate import (
    CPM_FAMILIES,
    LINEAR_FAMILIES,
    MULTICARRIER_FAMILIES,
    BasebandWaveform,
    ConstellationMap,
    ModulationSpec,
    build_constellation,
    cpm_frequency_pulse,
    gray_code,
    labels_to_bits,
    ofdm_demodulate,
    ostbc_block,
    ostbc_rate,
    rrc_taps,
    sfft,
)


def slice_symbols(received: np.ndarray, constellation: ConstellationMap) -> np.ndarray:
    """Nearest-point decision; returns bit labels."""
    received = np.asarray(received).ravel()
    labels = np.empty(received.size, dtype=np.int64)
    chunk = 4096
    for start in range(0, received.size, chunk):
        block = received[start : start + chunk]
        distance = np.abs(block[:, None] - constellation.points[None, :])
        labels[start : start + chunk] = np.argmin(distance, axis=1)
    return labels


def _toeplitz_banded(kernel: np.ndarray, lower: int, upper: int, n: int) -> np.ndarray:
    """Banded storage of T[row, col] = kernel[lower + row - col]."""
    ab = np.zeros((lower + upper + 1, n), dtype=np.float64)
    for d in range(-lower, upper + 1):
        ab[upper - d, :] = kernel[lower - d]
    return ab


def matched_filter_slots(samples: np.ndarray, spec: ModulationSpec, n_slots: int) -> np.ndarray:
    """Matched-filter outputs at the symbol instants with truncation ISI removed."""
    sps, span = spec.samples_per_symbol, spec.filter_span
    taps = rrc_taps(spec.roll_off, span, sps)
    filtered = np.convolve(samples, taps)
    slots = filtered[span * sps : span * sps + n_slots * sps : sps]
    cascade = np.convolve(taps, taps)[:: sps][: 2 * span + 1]
    ab = _toeplitz_banded(cascade, span, span, slots.size)
    return solve_banded((span, span), ab, slots)


def ostbc_decode(slots: np.ndarray, gains: np.ndarray, n_tx: int) -> np.ndarray:
    """Least-squares OSTBC combining for a single receive antenna with known gains."""
    per_block, block_slots = ostbc_rate(n_tx)
    if n_tx == 1:
        return slots / gains[0]
    n_blocks = slots.size // block_slots
    basis = np.eye(2 * per_block)
    columns = []
    for vector in basis:
        symbols = vector[:per_block] + 1j * vector[per_block:]
        response = ostbc_block(symbols, n_tx) @ gains
        columns.append(np.concatenate([response.real, response.imag]))
    design = np.stack(columns, axis=1)
    decoded = []
    for b in range(n_blocks):
        r = slots[b * block_slots : (b + 1) * block_slots]
        solution = lstsq(design, np.concatenate([r.real, r.imag]))[0]
        decoded.append(solution[:per_block] + 1j * solution[per_block:])
    return np.concatenate(decoded) if decoded else np.zeros(0, dtype=np.complex128)


def demodulate_linear(
    waveform: BasebandWaveform,
    n_symbols: Optional[int] = None,
    gains: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Recover bits from an ASK/OOK/PSK/QAM waveform (all antennas summed at one receiver)."""
    spec = waveform.spec
    n_tx = waveform.n_antennas
    if gains is None:
        gains = np.ones(n_tx, dtype=np.complex128)
    received = np.sum(gains[:, None] * waveform.samples * waveform.scale[:, None], axis=0)
    slots = matched_filter_slots(received, spec, waveform.symbol_count)
    symbols = ostbc_decode(slots, gains, n_tx)
    if n_symbols is not None:
        symbols = symbols[:n_symbols]
    constellation = build_constellation(spec.family, spec.order, spec.variant)
    return labels_to_bits(slice_symbols(symbols, constellation), constellation.bits_per_symbol)


def demodulate_cpm(samples: np.ndarray, spec: ModulationSpec, n_symbols: int) -> np.ndarray:
    """Frequency discriminator followed by banded deconvolution of the frequency pulse."""
    order = 2 if spec.family in ("MSK", "GMSK") else spec.order
    h = spec.cpm_index
    sps = spec.samples_per_symbol
    pulse = cpm_frequency_pulse(spec)
    length = pulse.size // sps

    increments = np.angle(samples[1:] * np.conj(samples[:-1])) / (2 * np.pi * h)
    needed = (n_symbols + length) * sps
    padded = np.zeros(needed)
    padded[: min(needed, increments.size)] = increments[:needed]
    windows = padded.reshape(-1, sps).sum(axis=1)
    kernel = pulse.reshape(length, sps).sum(axis=1)

    centre = (length - 1) // 2
    lower, upper = length - 1 - centre, centre
    rhs = windows[centre : centre + n_symbols]
    # T[row, col] = kernel[row + centre - col]
    ab = np.zeros((lower + upper + 1, n_symbols))
    for d in range(-lower, upper + 1):
        ab[upper - d, :] = kernel[centre - d]
    levels = solve_banded((lower, upper), ab, rhs)

    index = np.clip(np.round((levels + order - 1) / 2), 0, order - 1).astype(np.int64)
    return labels_to_bits(gray_code(index), int(math.log2(order)))


def demodulate_multicarrier(samples: np.ndarray, spec: ModulationSpec) -> np.ndarray:
    """Invert OFDM, SCFDMA or OTFS synthesis and slice the inner constellation."""
    grid = ofdm_demodulate(samples, spec)
    if spec.family == "SCFDMA":
        grid = np.fft.ifft(np.fft.ifftshift(grid, axes=1), axis=1, norm="ortho")
        symbols = grid.ravel()
    elif spec.family == "OTFS":
        n_doppler = spec.doppler_bins
        frames = grid.shape[0] // n_doppler
        parts = []
        for f in range(frames):
            tf = grid[f * n_doppler : (f + 1) * n_doppler].T
            parts.append(sfft(tf).T.ravel())
        symbols = np.concatenate(parts)
    else:
        symbols = grid.ravel()
    constellation = build_constellation(spec.inner_family, spec.inner_order)
    return labels_to_bits(slice_symbols(symbols, constellation), constellation.bits_per_symbol)


def demodulate(waveform: BasebandWaveform, n_bits: int) -> np.ndarray:
    """Dispatch to the reference demodulator; returns the first ``n_bits`` bits."""
    spec = waveform.spec
    if spec.family in LINEAR_FAMILIES:
        bits = demodulate_linear(waveform)
    elif spec.family in CPM_FAMILIES:
        k = spec.bits_per_symbol
        bits = demodulate_cpm(waveform.samples[0] * waveform.scale[0], spec, n_bits // k)
    elif spec.family in MULTICARRIER_FAMILIES:
        bits = demodulate_multicarrier(waveform.samples[0] * waveform.scale[0], spec)
    else:
        raise ModulationError(f"No reference demodulator for analog family {spec.family}")
    return bits[:n_bits]
