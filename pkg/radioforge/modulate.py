# radioforge/modulate.py
"""Modulation library: constellations, pulse shaping and unit-power baseband waveforms."""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.signal import hilbert
from scipy.special import erfc

from .errors import ModulationError

LINEAR_FAMILIES = ("ASK", "OOK", "PSK", "QAM")
CPM_FAMILIES = ("FSK", "MSK", "GMSK", "CPFSK")
ANALOG_FAMILIES = ("AM-DSB", "AM-SSB", "AM-VSB", "FM", "PM")
MULTICARRIER_FAMILIES = ("OFDM", "SCFDMA", "OTFS")
ALL_FAMILIES = LINEAR_FAMILIES + CPM_FAMILIES + ANALOG_FAMILIES + MULTICARRIER_FAMILIES

# Ring sizes of the experimental MIL-188 style amplitude/phase constellations.
MIL188_RINGS: Dict[int, Tuple[int, ...]] = {
    16: (4, 12),
    32: (4, 12, 16),
    64: (4, 12, 20, 28),
    256: (8, 24, 48, 72, 104),
}


@dataclass(frozen=True)
class ModulationSpec:
    """Fully specified modulation for one signal.

    Family-specific fields are ignored by families that do not use them.
    ``cp_length`` is counted in samples at the modulator rate.
    """

    family: str
    order: int = 0
    symbol_rate: float = 40e3
    samples_per_symbol: int = 8
    roll_off: float = 0.35
    filter_span: int = 16
    variant: Optional[str] = None
    # CPM
    mod_index: Optional[float] = None
    bt: Optional[float] = None
    pulse_length: int = 1
    # multicarrier
    subcarriers: int = 64
    cp_length: int = 16
    doppler_bins: int = 16
    inner_family: Optional[str] = None
    inner_order: int = 0
    # analog
    am_index: float = 0.8
    fm_deviation_ratio: float = 1.0
    pm_sensitivity: float = math.pi / 2
    # registry bookkeeping
    class_id: int = 0
    name: str = ""

    def __post_init__(self):
        if self.family not in ALL_FAMILIES:
            raise ModulationError(f"Unknown modulation family: {self.family}")
        if self.samples_per_symbol < 2:
            raise ModulationError(
                f"samples_per_symbol must be >= 2, got {self.samples_per_symbol}"
            )
        if not 0.0 <= self.roll_off <= 1.0:
            raise ModulationError(f"Roll-off must be in [0, 1], got {self.roll_off}")
        if self.symbol_rate <= 0:
            raise ModulationError(f"Symbol rate must be positive, got {self.symbol_rate}")
        digital_order = self.inner_order if self.family in MULTICARRIER_FAMILIES else self.order
        if self.family not in ANALOG_FAMILIES and not _is_power_of_two(digital_order):
            raise ModulationError(f"{self.family} order must be a power of 2, got {digital_order}")

    @property
    def sample_rate(self) -> float:
        return self.samples_per_symbol * self.symbol_rate

    @property
    def bits_per_symbol(self) -> int:
        if self.family in MULTICARRIER_FAMILIES:
            return int(math.log2(self.inner_order))
        if self.family in ANALOG_FAMILIES:
            return 0
        return int(math.log2(self.order))

    @property
    def is_digital(self) -> bool:
        return self.family not in ANALOG_FAMILIES

    @property
    def cpm_index(self) -> float:
        """Modulation index h of a CPM family."""
        if self.family in ("MSK", "GMSK"):
            return 0.5
        if self.mod_index is None:
            raise ModulationError(f"{self.family} needs a modulation index")
        return self.mod_index

    @property
    def tone_spacing(self) -> float:
        """Spacing (Hz) between adjacent CPM tones, h times the symbol rate."""
        return self.cpm_index * self.symbol_rate


@dataclass(frozen=True)
class ConstellationMap:
    """Constellation points indexed by their integer bit label (MSB first)."""

    family: str
    order: int
    points: np.ndarray = field(repr=False)
    gray: bool = True

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))

    def bit_labels(self) -> np.ndarray:
        """(order, bits_per_symbol) array of label bits, MSB first."""
        return labels_to_bits(np.arange(self.order), self.bits_per_symbol).reshape(self.order, -1)


@dataclass
class BasebandWaveform:
    """Unit-power complex baseband samples for each transmit antenna.

    ``scale`` holds the per-antenna factor removed by power normalization, so
    ``samples * scale`` restores the unnormalized modulator output. ``offset`` is the
    sample index where the first symbol period begins.
    """

    samples: np.ndarray
    sample_rate: float
    bandwidth: float
    symbol_count: int
    spec: ModulationSpec
    band_edges: Tuple[float, float]
    offset: int = 0
    scale: np.ndarray = field(default_factory=lambda: np.ones(1))
    symbols: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.atleast_2d(self.samples)

    @property
    def n_antennas(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def _is_power_of_two(value: int) -> bool:
    return value >= 2 and (value & (value - 1)) == 0


def gray_code(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    return values ^ (values >> 1)


def inverse_gray_code(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64).copy()
    shift = values >> 1
    while np.any(shift):
        values ^= shift
        shift >>= 1
    return values


def bits_to_labels(bits: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % bits_per_symbol:
        raise ModulationError(
            f"Bit count {bits.size} is not a multiple of {bits_per_symbol} bits per symbol"
        )
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return bits.reshape(-1, bits_per_symbol) @ weights


def labels_to_bits(labels: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def _normalize_points(points: np.ndarray) -> np.ndarray:
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def _pam_axis(levels: int) -> Tuple[np.ndarray, np.ndarray]:
    index = np.arange(levels)
    return 2 * index - (levels - 1), gray_code(index)


def build_constellation(family: str, order: int, variant: Optional[str] = None) -> ConstellationMap:
    """Unit-average-power, Gray-labeled constellation.

    Args:
        family: One of ASK, OOK, PSK, QAM
        order: Constellation size M
        variant: ``"mil188"`` selects the experimental ring constellations for QAM

    Returns:
        ConstellationMap with ``points[label]`` giving the point for each bit label
    """
    if family not in LINEAR_FAMILIES or not _is_power_of_two(order):
        raise ModulationError(f"Unsupported constellation ({family}, {order})")

    points = np.zeros(order, dtype=np.complex128)
    gray = True
    if family == "PSK":
        index = np.arange(order)
        offset = 0.0 if order == 2 else np.pi / order
        points[gray_code(index)] = np.exp(1j * (2 * np.pi * index / order + offset))
    elif family == "OOK":
        if order != 2:
            raise ModulationError(f"Unsupported constellation (OOK, {order})")
        points[:] = [0.0, 1.0]
    elif family == "ASK":
        # symmetric amplitude levels, no carrier line
        amp, g = _pam_axis(order)
        points[g] = amp
    elif variant == "mil188":
        if order not in MIL188_RINGS:
            raise ModulationError(f"Unsupported constellation (QAM mil188, {order})")
        gray = False
        rings = MIL188_RINGS[order]
        label = 0
        for ring, size in enumerate(rings):
            phases = 2 * np.pi * np.arange(size) / size + (np.pi / size) * (ring % 2)
            points[label : label + size] = (ring + 1) * np.exp(1j * phases)
            label += size
    else:
        n_bits = int(math.log2(order))
        if n_bits % 2 == 0:
            side = 1 << (n_bits // 2)
            amp, g = _pam_axis(side)
            half = n_bits // 2
            for i in range(side):
                for q in range(side):
                    points[(g[i] << half) | g[q]] = amp[i] + 1j * amp[q]
        elif order == 8:
            amp_i, g_i = _pam_axis(4)
            amp_q, g_q = _pam_axis(2)
            for i in range(4):
                for q in range(2):
                    points[(g_i[i] << 1) | g_q[q]] = amp_i[i] + 1j * amp_q[q]
        else:
            # cross: s x s grid with c x c corners removed, s = 3 * 2^((n - 3) / 2)
            gray = False
            side = 3 * (1 << ((n_bits - 3) // 2))
            corner = side // 6
            amp = 2 * np.arange(side) - (side - 1)
            label = 0
            for i in range(side):
                for q in range(side):
                    outer_i = i < corner or i >= side - corner
                    outer_q = q < corner or q >= side - corner
                    if outer_i and outer_q:
                        continue
                    points[label] = amp[i] + 1j * amp[q]
                    label += 1
    return ConstellationMap(family=family, order=order, points=_normalize_points(points), gray=gray)


def rrc_taps(beta: float, span: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, ``span * sps + 1`` long."""
    if not 0.0 <= beta <= 1.0:
        raise ModulationError(f"Roll-off must be in [0, 1], got {beta}")
    if span % 2 or span <= 0:
        raise ModulationError(f"Filter span must be even and positive, got {span}")
    if sps < 2:
        raise ModulationError(f"sps must be >= 2, got {sps}")

    t = (np.arange(span * sps + 1) - span * sps / 2) / sps
    taps = np.empty_like(t)
    for n, tn in enumerate(t):
        if abs(tn) < 1e-12:
            taps[n] = 1.0 - beta + 4 * beta / np.pi
        elif beta > 0 and abs(abs(tn) - 1 / (4 * beta)) < 1e-9:
            taps[n] = (beta / np.sqrt(2)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
            )
        else:
            num = np.sin(np.pi * tn * (1 - beta)) + 4 * beta * tn * np.cos(np.pi * tn * (1 + beta))
            den = np.pi * tn * (1 - (4 * beta * tn) ** 2)
            taps[n] = num / den
    return taps / np.sqrt(np.sum(taps**2))


def _unit_power(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize each row to unit mean power; all-zero rows are left untouched."""
    samples = np.atleast_2d(samples).astype(np.complex128)
    power = np.mean(np.abs(samples) ** 2, axis=1)
    scale = np.where(power > 0, np.sqrt(power), 1.0)
    return samples / scale[:, None], scale


def occupied_band(spec: ModulationSpec) -> Tuple[float, float]:
    """Occupied band edges (Hz) relative to the carrier."""
    rs = spec.symbol_rate
    family = spec.family
    if family in LINEAR_FAMILIES:
        half = (1 + spec.roll_off) * rs / 2
        return -half, half
    if family in CPM_FAMILIES:
        h = spec.cpm_index
        order = 2 if family in ("MSK", "GMSK") else spec.order
        if family == "GMSK" or spec.variant == "gaussian":
            width = ((order - 1) * h + 2 * (spec.bt or 0.3)) * rs
        else:
            width = ((order - 1) * h + 1) * rs
        return -width / 2, width / 2
    if family in MULTICARRIER_FAMILIES:
        spacing = rs / spec.subcarriers
        half = spec.subcarriers // 2
        return -half * spacing, (spec.subcarriers - half) * spacing
    f_m = rs / 2
    if family == "AM-DSB":
        return -f_m, f_m
    if family == "AM-SSB":
        return 0.0, f_m
    if family == "AM-VSB":
        return -0.25 * f_m, f_m
    if family == "FM":
        deviation = spec.fm_deviation_ratio * f_m
        return -(deviation + f_m), deviation + f_m
    return -(spec.pm_sensitivity + 1) * f_m, (spec.pm_sensitivity + 1) * f_m


def occupied_bandwidth(spec: ModulationSpec) -> float:
    lo, hi = occupied_band(spec)
    return hi - lo


# --------------------------------------------------------------------------
# Linear families
# --------------------------------------------------------------------------


def ostbc_encode(symbols: np.ndarray, n_tx: int) -> np.ndarray:
    """Space-time block encode a symbol stream.

    Returns an (n_tx, n_slots) array. ``n_tx=2`` is the Alamouti code; 3 and 4 use
    the rate-3/4 orthogonal design (first three columns for 3 antennas). The input is
    zero-padded to a whole number of blocks. No power split is applied here; callers
    divide by ``sqrt(n_tx)`` at the transmitter.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if n_tx == 1:
        return symbols[None, :].copy()
    if n_tx not in (2, 3, 4):
        raise ModulationError(f"OSTBC supports 1 to 4 transmit antennas, got {n_tx}")

    per_block = 2 if n_tx == 2 else 3
    pad = (-symbols.size) % per_block
    blocks = np.concatenate([symbols, np.zeros(pad, dtype=np.complex128)]).reshape(-1, per_block)
    codes = [ostbc_block(block, n_tx) for block in blocks]
    # each code is (slots, antennas); stack along time
    return np.concatenate(codes, axis=0).T if codes else np.zeros((n_tx, 0), dtype=np.complex128)


def ostbc_block(block: np.ndarray, n_tx: int) -> np.ndarray:
    """Code matrix (time slots x antennas) for one block of symbols."""
    if n_tx == 2:
        s1, s2 = block
        return np.array([[s1, s2], [-np.conj(s2), np.conj(s1)]])
    s1, s2, s3 = block
    code = np.array(
        [
            [s1, s2, s3, 0],
            [-np.conj(s2), np.conj(s1), 0, s3],
            [np.conj(s3), 0, -np.conj(s1), s2],
            [0, np.conj(s3), -np.conj(s2), -s1],
        ],
        dtype=np.complex128,
    )
    return code[:, :n_tx]


def ostbc_rate(n_tx: int) -> Tuple[int, int]:
    """(symbols, slots) per code block."""
    if n_tx == 1:
        return 1, 1
    if n_tx == 2:
        return 2, 2
    return 3, 4


def modulate_linear(
    bits: np.ndarray, spec: ModulationSpec, n_antennas: int = 1
) -> BasebandWaveform:
    """Gray map, OSTBC encode, upsample and RRC filter (ASK/OOK/PSK/QAM)."""
    if spec.family not in LINEAR_FAMILIES:
        raise ModulationError(f"{spec.family} is not a linear family")
    constellation = build_constellation(spec.family, spec.order, spec.variant)
    labels = bits_to_labels(bits, constellation.bits_per_symbol)
    symbols = constellation.points[labels]
    streams = ostbc_encode(symbols, n_antennas)

    sps = spec.samples_per_symbol
    taps = rrc_taps(spec.roll_off, spec.filter_span, sps)
    n_slots = streams.shape[1]
    upsampled = np.zeros((streams.shape[0], n_slots * sps), dtype=np.complex128)
    upsampled[:, ::sps] = streams
    shaped = np.stack([np.convolve(row, taps) for row in upsampled])
    samples, scale = _unit_power(shaped)
    lo, hi = occupied_band(spec)
    return BasebandWaveform(
        samples=samples,
        sample_rate=spec.sample_rate,
        bandwidth=hi - lo,
        symbol_count=n_slots,
        spec=spec,
        band_edges=(lo, hi),
        offset=spec.filter_span * sps // 2,
        scale=scale,
        symbols=symbols,
    )


# --------------------------------------------------------------------------
# Continuous phase modulation
# --------------------------------------------------------------------------


def cpm_levels(labels: np.ndarray, order: int) -> np.ndarray:
    """Gray label to odd amplitude level in {-(M-1), ..., M-1}."""
    return 2 * inverse_gray_code(labels) - (order - 1)


def gaussian_frequency_pulse(bt: float, sps: int, length: int) -> np.ndarray:
    """Gaussian-filtered rectangular frequency pulse spanning ``length`` symbols, sum 1/2."""
    t = (np.arange(length * sps) + 0.5) / sps - length / 2
    k = 2 * np.pi * bt / np.sqrt(np.log(2))
    q = 0.5 * erfc(k * (t - 0.5) / np.sqrt(2)) - 0.5 * erfc(k * (t + 0.5) / np.sqrt(2))
    return 0.5 * q / np.sum(q)


def cpm_frequency_pulse(spec: ModulationSpec) -> np.ndarray:
    sps = spec.samples_per_symbol
    if spec.family == "GMSK" or spec.variant == "gaussian":
        bt = spec.bt if spec.bt is not None else 0.3
        if bt <= 0:
            raise ModulationError(f"BT product must be positive, got {bt}")
        return gaussian_frequency_pulse(bt, sps, spec.pulse_length if spec.pulse_length > 1 else 3)
    return np.full(sps * max(spec.pulse_length, 1), 0.5 / (sps * max(spec.pulse_length, 1)))


def modulate_cpm(bits: np.ndarray, spec: ModulationSpec, n_antennas: int = 1) -> BasebandWaveform:
    """Constant-envelope CPM by phase integration (FSK/MSK/GMSK/CPFSK)."""
    if spec.family not in CPM_FAMILIES:
        raise ModulationError(f"{spec.family} is not a CPM family")
    order = 2 if spec.family in ("MSK", "GMSK") else spec.order
    h = spec.cpm_index
    if h <= 0:
        raise ModulationError(f"Modulation index must be positive, got {h}")

    k = int(math.log2(order))
    levels = cpm_levels(bits_to_labels(bits, k), order)
    pulse = cpm_frequency_pulse(spec)
    sps = spec.samples_per_symbol
    impulses = np.zeros(levels.size * sps)
    impulses[::sps] = levels
    increments = 2 * np.pi * h * np.convolve(impulses, pulse)
    phase = np.concatenate([[0.0], np.cumsum(increments)])
    samples = np.exp(1j * phase)
    lo, hi = occupied_band(spec)
    pulse_symbols = pulse.size // sps
    return BasebandWaveform(
        samples=np.repeat(samples[None, :], n_antennas, axis=0),
        sample_rate=spec.sample_rate,
        bandwidth=hi - lo,
        symbol_count=levels.size,
        spec=spec,
        band_edges=(lo, hi),
        offset=(pulse_symbols - 1) * sps // 2,
        scale=np.ones(n_antennas),
        symbols=levels.astype(np.float64),
    )


# --------------------------------------------------------------------------
# Analog families
# --------------------------------------------------------------------------


def vsb_filter(samples: np.ndarray, fs: float, vestige: float) -> np.ndarray:
    """Keep the upper sideband, a raised-cosine vestige of width ``vestige`` below DC."""
    spectrum = np.fft.fft(samples)
    freqs = np.fft.fftfreq(samples.size, d=1 / fs)
    mask = np.where(freqs >= vestige, 1.0, 0.0)
    edge = np.abs(freqs) < vestige
    mask[edge] = 0.5 * (1 + np.sin(np.pi * freqs[edge] / (2 * vestige)))
    return np.fft.ifft(spectrum * mask)


def modulate_analog(
    message: np.ndarray, spec: ModulationSpec, n_antennas: int = 1
) -> BasebandWaveform:
    """AM-DSB/SSB/VSB, FM and PM from a real message with peak magnitude <= 1."""
    if spec.family not in ANALOG_FAMILIES:
        raise ModulationError(f"{spec.family} is not an analog family")
    message = np.asarray(message, dtype=np.float64)
    if message.size and np.max(np.abs(message)) > 1 + 1e-12:
        raise ModulationError("Message peak exceeds 1")
    if spec.am_index > 1:
        raise ModulationError(f"AM index {spec.am_index} > 1 overmodulates")

    fs = spec.sample_rate
    f_m = spec.symbol_rate / 2
    family = spec.family
    if family == "AM-DSB":
        raw = (1 + spec.am_index * message).astype(np.complex128)
    elif family == "AM-SSB":
        raw = hilbert(message)
    elif family == "AM-VSB":
        raw = vsb_filter((1 + spec.am_index * message).astype(np.complex128), fs, 0.25 * f_m)
    elif family == "FM":
        deviation = spec.fm_deviation_ratio * f_m
        raw = np.exp(1j * 2 * np.pi * deviation * np.cumsum(message) / fs)
    else:
        raw = np.exp(1j * spec.pm_sensitivity * message)

    samples, scale = _unit_power(raw)
    lo, hi = occupied_band(spec)
    return BasebandWaveform(
        samples=np.repeat(samples, n_antennas, axis=0),
        sample_rate=fs,
        bandwidth=hi - lo,
        symbol_count=message.size // spec.samples_per_symbol,
        spec=spec,
        band_edges=(lo, hi),
        scale=np.repeat(scale, n_antennas),
    )


# --------------------------------------------------------------------------
# Multicarrier families
# --------------------------------------------------------------------------


def subcarrier_bins(n_subcarriers: int, fft_size: int) -> np.ndarray:
    """FFT bin of each subcarrier, centred on DC."""
    return (np.arange(n_subcarriers) - n_subcarriers // 2) % fft_size


def _inner_symbols(bits: np.ndarray, spec: ModulationSpec, per_block: int) -> np.ndarray:
    if spec.inner_family is None:
        raise ModulationError(f"{spec.family} needs an inner constellation")
    constellation = build_constellation(spec.inner_family, spec.inner_order)
    k = constellation.bits_per_symbol
    if np.asarray(bits).size % (k * per_block):
        raise ModulationError(
            f"{spec.family}: {np.asarray(bits).size} bits do not fill whole symbols of "
            f"{per_block} x {k} bits"
        )
    return constellation.points[bits_to_labels(bits, k)]


def _ofdm_synthesis(grid: np.ndarray, spec: ModulationSpec) -> np.ndarray:
    """Map (n_blocks, n_subcarriers) symbols to a CP-OFDM time series."""
    fft_size = spec.subcarriers * spec.samples_per_symbol
    if spec.cp_length >= fft_size:
        raise ModulationError(f"CP length {spec.cp_length} >= symbol length {fft_size}")
    full = np.zeros((grid.shape[0], fft_size), dtype=np.complex128)
    full[:, subcarrier_bins(spec.subcarriers, fft_size)] = grid
    body = np.fft.ifft(full, axis=1, norm="ortho")
    cp = spec.cp_length
    with_cp = np.concatenate([body[:, fft_size - cp :], body], axis=1) if cp else body
    return with_cp.ravel()


def ofdm_demodulate(samples: np.ndarray, spec: ModulationSpec) -> np.ndarray:
    """Strip CP and take the forward DFT; returns (n_blocks, n_subcarriers)."""
    fft_size = spec.subcarriers * spec.samples_per_symbol
    block = fft_size + spec.cp_length
    n_blocks = samples.size // block
    frames = samples[: n_blocks * block].reshape(n_blocks, block)[:, spec.cp_length :]
    spectrum = np.fft.fft(frames, axis=1, norm="ortho")
    return spectrum[:, subcarrier_bins(spec.subcarriers, fft_size)]


def _multicarrier_waveform(
    raw: np.ndarray, spec: ModulationSpec, symbols: np.ndarray, n_antennas: int
) -> BasebandWaveform:
    samples, scale = _unit_power(raw)
    lo, hi = occupied_band(spec)
    return BasebandWaveform(
        samples=np.repeat(samples, n_antennas, axis=0),
        sample_rate=spec.sample_rate,
        bandwidth=hi - lo,
        symbol_count=symbols.size,
        spec=spec,
        band_edges=(lo, hi),
        scale=np.repeat(scale, n_antennas),
        symbols=symbols,
    )


def modulate_ofdm(bits: np.ndarray, spec: ModulationSpec, n_antennas: int = 1) -> BasebandWaveform:
    """CP-OFDM with ``spec.subcarriers`` active subcarriers."""
    if spec.family != "OFDM":
        raise ModulationError(f"{spec.family} is not OFDM")
    symbols = _inner_symbols(bits, spec, spec.subcarriers)
    raw = _ofdm_synthesis(symbols.reshape(-1, spec.subcarriers), spec)
    return _multicarrier_waveform(raw, spec, symbols, n_antennas)


def modulate_scfdma(
    bits: np.ndarray, spec: ModulationSpec, n_antennas: int = 1
) -> BasebandWaveform:
    """DFT-spread OFDM with localized subcarrier mapping."""
    if spec.family != "SCFDMA":
        raise ModulationError(f"{spec.family} is not SCFDMA")
    symbols = _inner_symbols(bits, spec, spec.subcarriers)
    spread = np.fft.fft(symbols.reshape(-1, spec.subcarriers), axis=1, norm="ortho")
    spread = np.fft.fftshift(spread, axes=1)
    raw = _ofdm_synthesis(spread, spec)
    return _multicarrier_waveform(raw, spec, symbols, n_antennas)


def isfft(grid: np.ndarray) -> np.ndarray:
    """Delay-Doppler (delay x Doppler) to time-frequency (subcarrier x time slot)."""
    return np.fft.fft(np.fft.ifft(grid, axis=1, norm="ortho"), axis=0, norm="ortho")


def sfft(grid: np.ndarray) -> np.ndarray:
    """Inverse of :func:`isfft`."""
    return np.fft.fft(np.fft.ifft(grid, axis=0, norm="ortho"), axis=1, norm="ortho")


def modulate_otfs(bits: np.ndarray, spec: ModulationSpec, n_antennas: int = 1) -> BasebandWaveform:
    """OTFS: ISFFT of each delay-Doppler grid, then CP-OFDM per time slot."""
    if spec.family != "OTFS":
        raise ModulationError(f"{spec.family} is not OTFS")
    delay_bins, doppler_bins = spec.subcarriers, spec.doppler_bins
    try:
        symbols = _inner_symbols(bits, spec, delay_bins * doppler_bins)
    except ModulationError as e:
        raise ModulationError(f"OTFS grid mismatch: {e}") from e
    grids = symbols.reshape(-1, doppler_bins, delay_bins).transpose(0, 2, 1)
    slots = [isfft(grid).T for grid in grids]
    raw = _ofdm_synthesis(np.concatenate(slots, axis=0), spec)
    return _multicarrier_waveform(raw, spec, symbols, n_antennas)


# --------------------------------------------------------------------------
# Segment-level helpers
# --------------------------------------------------------------------------


def with_symbol_rate(spec: ModulationSpec, symbol_rate: float, roll_off: float) -> ModulationSpec:
    """Copy of ``spec`` with the drawn symbol rate and roll-off."""
    return replace(spec, symbol_rate=symbol_rate, roll_off=roll_off)


def payload_bits(spec: ModulationSpec, n_slots: int, n_antennas: int = 1) -> int:
    """Bits needed to cover ``n_slots`` symbol periods (0 for analog families)."""
    k = spec.bits_per_symbol
    family = spec.family
    if family in LINEAR_FAMILIES:
        per_block, slots = ostbc_rate(n_antennas)
        return max(1, n_slots // slots) * per_block * k
    if family in CPM_FAMILIES:
        return n_slots * k
    if family in MULTICARRIER_FAMILIES:
        target = n_slots * spec.samples_per_symbol
        block = spec.subcarriers * spec.samples_per_symbol + spec.cp_length
        if family == "OTFS":
            per_frame = block * spec.doppler_bins
            return math.ceil(target / per_frame) * spec.subcarriers * spec.doppler_bins * k
        return math.ceil(target / block) * spec.subcarriers * k
    return 0


def modulate_segment(
    content: np.ndarray, spec: ModulationSpec, n_antennas: int = 1
) -> BasebandWaveform:
    """Dispatch to the modulator for ``spec.family``."""
    family = spec.family
    if family in LINEAR_FAMILIES:
        return modulate_linear(content, spec, n_antennas)
    if family in CPM_FAMILIES:
        return modulate_cpm(content, spec, n_antennas)
    if family in ANALOG_FAMILIES:
        return modulate_analog(content, spec, n_antennas)
    if family == "OFDM":
        return modulate_ofdm(content, spec, n_antennas)
    if family == "SCFDMA":
        return modulate_scfdma(content, spec, n_antennas)
    return modulate_otfs(content, spec, n_antennas)


def cut_segment(waveform: BasebandWaveform, n_samples: int) -> np.ndarray:
    """Exactly ``n_samples`` samples per antenna starting at the waveform offset.

    Short waveforms are zero-padded; each antenna is renormalized to unit power.
    """
    out = np.zeros((waveform.n_antennas, n_samples), dtype=np.complex128)
    start = waveform_offset(waveform)
    chunk = waveform.samples[:, start : start + n_samples]
    out[:, : chunk.shape[1]] = chunk
    normalized, _ = _unit_power(out)
    return normalized


def spec_to_dict(spec: ModulationSpec) -> Dict:
    """Annotation-style modulation record for frame metadata."""
    record = {
        "ModulatorType": spec.name or spec.family,
        "ModulatorFamily": spec.family,
        "ModulatorOrder": spec.inner_order if spec.family in MULTICARRIER_FAMILIES else spec.order,
        "ClassId": spec.class_id,
        "SymbolRate": spec.symbol_rate,
        "SamplePerSymbol": spec.samples_per_symbol,
        "IsDigital": spec.is_digital,
    }
    if spec.family in LINEAR_FAMILIES:
        record["RollOff"] = spec.roll_off
    if spec.family in CPM_FAMILIES:
        record["ModulationIndex"] = spec.cpm_index
        if spec.bt is not None:
            record["BT"] = spec.bt
    if spec.family in MULTICARRIER_FAMILIES:
        record["NumSubcarriers"] = spec.subcarriers
        record["CyclicPrefixLength"] = spec.cp_length
        record["InnerModulation"] = f"{spec.inner_order}-{spec.inner_family}"
        if spec.family == "OTFS":
            record["NumDopplerBins"] = spec.doppler_bins
    if spec.family in ("AM-DSB", "AM-VSB"):
        record["ModulationIndex"] = spec.am_index
    return record


def waveform_offset(waveform: BasebandWaveform) -> int:
    """Sample index where the first symbol period starts (filter transient skipped)."""
    return int(waveform.offset)


def segment_samples(duration: float, sample_rate: float) -> int:
    """Number of samples a segment of ``duration`` seconds occupies at ``sample_rate``."""
    return max(1, int(round(duration * sample_rate)))
