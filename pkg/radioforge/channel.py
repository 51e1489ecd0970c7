# radioforge/channel.py
"""Statistical link channels: path loss, Rayleigh/Rician fading and MIMO mixing."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.signal.windows import kaiser

from .errors import ChannelError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

FADING_DISTRIBUTIONS = ("rayleigh", "rician", "static")
PATH_LOSS_MODELS = ("free-space", "log-distance")

# Half length (taps each side) of the windowed-sinc fractional delay filter.
FRACTIONAL_DELAY_HALF_LENGTH = 16


@dataclass(frozen=True)
class PathLossSpec:
    model: str = "free-space"
    distance_m: float = 1.0
    carrier_hz: float = 1e9
    exponent: float = 2.7
    reference_m: float = 1.0

    def __post_init__(self):
        if self.model not in PATH_LOSS_MODELS:
            raise ChannelError(f"Unknown path-loss model: {self.model}")
        if self.distance_m <= 0:
            raise ChannelError(f"Distance must be positive, got {self.distance_m}")

    def to_dict(self) -> Dict:
        return {
            "PathLossModel": self.model,
            "Distance": self.distance_m,
            "PathLoss": path_loss_db(self),
        }


@dataclass(frozen=True)
class FadingSpec:
    """Tapped-delay-line fading description for one Tx-Rx link.

    ``path_delays`` in seconds (first path at 0), ``path_gains_db`` average powers,
    ``k_factor`` linear (Rician only).
    """

    distribution: str = "rayleigh"
    path_delays: Tuple[float, ...] = (0.0,)
    path_gains_db: Tuple[float, ...] = (0.0,)
    max_doppler_hz: float = 0.0
    k_factor: Optional[float] = None
    n_tx: int = 1
    n_rx: int = 1
    n_oscillators: int = 64

    def __post_init__(self):
        if self.distribution not in FADING_DISTRIBUTIONS:
            raise ChannelError(f"Unknown fading distribution: {self.distribution}")
        if len(self.path_delays) != len(self.path_gains_db) or not self.path_delays:
            raise ChannelError("path_delays and path_gains_db must be non-empty and equal length")
        if self.path_delays[0] != 0 or any(
            b < a for a, b in zip(self.path_delays, self.path_delays[1:])
        ):
            raise ChannelError(f"Path delays must start at 0 and ascend: {self.path_delays}")
        if self.distribution == "rician" and (self.k_factor is None or self.k_factor < 0):
            raise ChannelError(f"Rician fading needs a K-factor >= 0, got {self.k_factor}")
        if self.n_oscillators < 32:
            raise ChannelError(f"At least 32 oscillators are required, got {self.n_oscillators}")

    def to_dict(self) -> Dict:
        record: Dict = {
            "FadingDistribution": self.distribution.capitalize(),
            "PathDelays": list(self.path_delays),
            "AveragePathGains": list(self.path_gains_db),
            "MaximumDopplerShift": self.max_doppler_hz,
        }
        if self.distribution == "rician":
            record["KFactor"] = self.k_factor
        return record


@dataclass
class ChannelRealization:
    """One link's channel, evaluated lazily per antenna pair.

    Statistical links keep their sum-of-sinusoids parameters; ray-traced links keep
    static complex tap gains of shape (n_tx, n_rx, n_paths). An outage realization has
    no taps and produces silence.
    """

    kind: str
    n_samples: int
    sample_rate: float
    n_tx: int
    n_rx: int
    delays: np.ndarray
    path_loss_db: float = 0.0
    doppler_hz: float = 0.0
    fading: Optional[FadingSpec] = None
    static_gains: Optional[np.ndarray] = field(default=None, repr=False)
    outage: bool = False
    # sum-of-sinusoids state, shape (n_tx, n_rx, n_paths[, n_oscillators])
    angle_offsets: Optional[np.ndarray] = field(default=None, repr=False)
    phases: Optional[np.ndarray] = field(default=None, repr=False)
    los_angles: Optional[np.ndarray] = field(default=None, repr=False)
    los_phases: Optional[np.ndarray] = field(default=None, repr=False)
    metadata: Dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return int(self.delays.size)

    def tap_gains(self, tx: int, rx: int) -> np.ndarray:
        """(n_paths, n_samples) complex gain processes for one antenna pair, path loss excluded."""
        if self.outage:
            return np.zeros((0, self.n_samples), dtype=np.complex128)
        if self.static_gains is not None:
            gains = np.repeat(self.static_gains[tx, rx][:, None], self.n_samples, axis=1)
            if self.kind == "raytrace" and self.doppler_hz:
                # mobility on a traced link is a common rotation of every ray
                t = np.arange(self.n_samples) / self.sample_rate
                gains = gains * np.exp(1j * 2 * np.pi * self.doppler_hz * t)
            return gains
        return _sum_of_sinusoids(self, tx, rx)

    def to_dict(self) -> Dict:
        record: Dict = {"ChannelKind": self.kind, "PathLoss": self.path_loss_db}
        if self.fading is not None:
            record.update(self.fading.to_dict())
        else:
            record["PathDelays"] = [float(d) for d in self.delays]
        if self.outage:
            record["Outage"] = True
        record.update(self.metadata)
        return record


def path_loss_db(spec: PathLossSpec) -> float:
    """Free-space 20 log10(4 pi d f / c) or log-distance anchored at ``reference_m``."""
    if spec.distance_m <= 0:
        raise ChannelError(f"Distance must be positive, got {spec.distance_m}")

    def _fspl(d: float) -> float:
        return 20.0 * math.log10(4 * math.pi * d * spec.carrier_hz / SPEED_OF_LIGHT)

    if spec.model == "free-space":
        return _fspl(spec.distance_m)
    return _fspl(spec.reference_m) + 10.0 * spec.exponent * math.log10(
        spec.distance_m / spec.reference_m
    )


def doppler_from_speed(speed: float, fc: float) -> float:
    if speed < 0:
        raise ChannelError(f"Speed must be >= 0, got {speed}")
    return speed * fc / SPEED_OF_LIGHT


def exponential_path_profile(
    n_extra: int,
    stream: np.random.Generator,
    min_delay: float = 50e-9,
    max_delay: float = 5e-6,
    decay: float = 1e-6,
) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """Log-uniform extra path delays with exponentially decaying average gains.

    Returns (delays, gains_db) with the first path at delay 0. Gains are normalized
    to unit total power.
    """
    extra = np.sort(np.exp(stream.uniform(math.log(min_delay), math.log(max_delay), size=n_extra)))
    delays = np.concatenate([[0.0], extra])
    powers = np.exp(-delays / decay)
    powers = powers / powers.sum()
    return tuple(float(d) for d in delays), tuple(float(10 * math.log10(p)) for p in powers)


def generate_tap_process(
    spec: FadingSpec,
    n_samples: int,
    fs: float,
    stream: np.random.Generator,
    path_loss: float = 0.0,
) -> ChannelRealization:
    """Draw an independent Jakes fading process for every antenna pair and path.

    Each diffuse tap is a sum of ``n_oscillators`` sinusoids with equally spaced
    arrival angles (random common offset) and independent random phases. Rician
    links add a line-of-sight component to tap 0 carrying K/(K+1) of its power.
    """
    if spec.max_doppler_hz >= fs / 2:
        raise ChannelError(f"Maximum Doppler {spec.max_doppler_hz} Hz is not below fs/2")
    shape = (spec.n_tx, spec.n_rx, len(spec.path_delays))
    realization = ChannelRealization(
        kind="statistical",
        n_samples=n_samples,
        sample_rate=fs,
        n_tx=spec.n_tx,
        n_rx=spec.n_rx,
        delays=np.asarray(spec.path_delays, dtype=np.float64),
        path_loss_db=path_loss,
        doppler_hz=spec.max_doppler_hz,
        fading=spec,
    )
    if spec.distribution == "static":
        amplitude = np.sqrt(10.0 ** (np.asarray(spec.path_gains_db) / 10.0))
        realization.static_gains = np.broadcast_to(amplitude, shape).astype(np.complex128)
        return realization

    # offsets kept away from multiples of pi so no two oscillators share a Doppler frequency
    realization.angle_offsets = stream.uniform(np.pi / 4, 3 * np.pi / 4, size=shape)
    realization.phases = stream.uniform(0.0, 2 * np.pi, size=shape + (spec.n_oscillators,))
    realization.los_angles = stream.uniform(0.0, 2 * np.pi, size=shape[:2])
    realization.los_phases = stream.uniform(0.0, 2 * np.pi, size=shape[:2])
    return realization


def _evaluation_grid(n_samples: int, fs: float, doppler: float) -> Tuple[np.ndarray, int]:
    """Sample indices where the slow gain process is evaluated (>= 32 points per Doppler cycle)."""
    if doppler <= 0:
        return np.array([0]), n_samples
    step = max(1, int(fs / (32 * doppler)))
    return np.arange(0, n_samples + step, step), step


def _sum_of_sinusoids(h: ChannelRealization, tx: int, rx: int) -> np.ndarray:
    spec = h.fading
    n_osc = spec.n_oscillators
    fs, n = h.sample_rate, h.n_samples
    grid, step = _evaluation_grid(n, fs, spec.max_doppler_hz)
    t = grid / fs
    gains_db = np.asarray(spec.path_gains_db)
    out = np.empty((h.n_paths, n), dtype=np.complex128)
    for p in range(h.n_paths):
        angles = (2 * np.pi * np.arange(n_osc) + h.angle_offsets[tx, rx, p]) / n_osc
        freqs = spec.max_doppler_hz * np.cos(angles)
        diffuse = np.zeros(t.size, dtype=np.complex128)
        for f, phi in zip(freqs, h.phases[tx, rx, p]):
            diffuse += np.exp(1j * (2 * np.pi * f * t + phi))
        diffuse /= math.sqrt(n_osc)
        if p == 0 and spec.distribution == "rician":
            k = spec.k_factor
            f_los = spec.max_doppler_hz * math.cos(h.los_angles[tx, rx])
            los = np.exp(1j * (2 * np.pi * f_los * t + h.los_phases[tx, rx]))
            diffuse = math.sqrt(k / (k + 1)) * los + math.sqrt(1 / (k + 1)) * diffuse
        diffuse *= math.sqrt(10.0 ** (gains_db[p] / 10.0))
        if step == 1 and grid.size >= n:
            out[p] = diffuse[:n]
        elif grid.size == 1:
            out[p] = diffuse[0]
        else:
            index = np.arange(n)
            out[p] = np.interp(index, grid, diffuse.real) + 1j * np.interp(
                index, grid, diffuse.imag
            )
    return out


def fractional_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Delay ``x`` by a possibly fractional number of samples; output keeps the input length."""
    x = np.asarray(x, dtype=np.complex128)
    if delay_samples < 0:
        raise ChannelError(f"Delay must be >= 0, got {delay_samples}")
    whole = int(math.floor(delay_samples))
    frac = delay_samples - whole
    if frac < 1e-12:
        shifted = x
    else:
        half = FRACTIONAL_DELAY_HALF_LENGTH
        k = np.arange(-half, half + 1)
        taps = np.sinc(k - frac) * kaiser(2 * half + 1, 8.0)
        taps /= taps.sum()
        shifted = np.convolve(x, taps)[half : half + x.size]
    out = np.zeros_like(x)
    if whole < x.size:
        out[whole:] = shifted[: x.size - whole]
    return out


def apply_channel(x: np.ndarray, h: ChannelRealization, fs: Optional[float] = None) -> np.ndarray:
    """Propagate per-antenna samples (n_tx, n) through ``h``; returns (n_rx, n)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
    if fs is not None and not math.isclose(fs, h.sample_rate):
        raise ChannelError(f"Channel sampled at {h.sample_rate} Hz, waveform at {fs} Hz")
    if x.shape[0] != h.n_tx:
        raise ChannelError(f"Waveform has {x.shape[0]} antennas, channel expects {h.n_tx}")
    if x.shape[1] > h.n_samples:
        raise ChannelError(
            f"Channel realization covers {h.n_samples} samples, waveform has {x.shape[1]}"
        )
    n = x.shape[1]
    out = np.zeros((h.n_rx, n), dtype=np.complex128)
    if h.outage:
        return out
    loss = 10.0 ** (-h.path_loss_db / 20.0)
    delayed = [
        [fractional_delay(x[a], d * h.sample_rate) for d in h.delays] for a in range(h.n_tx)
    ]
    for b in range(h.n_rx):
        for a in range(h.n_tx):
            gains = h.tap_gains(a, b)[:, :n]
            for p in range(h.n_paths):
                out[b] += delayed[a][p] * gains[p]
    return out * loss


def identity_channel(n_samples: int, fs: float, n_tx: int = 1, n_rx: int = 1) -> ChannelRealization:
    """Unit single-tap channel with zero path loss; every tx antenna reaches every rx antenna."""
    return ChannelRealization(
        kind="identity",
        n_samples=n_samples,
        sample_rate=fs,
        n_tx=n_tx,
        n_rx=n_rx,
        delays=np.zeros(1),
        static_gains=np.ones((n_tx, n_rx, 1), dtype=np.complex128),
    )


def estimate_k_factor(envelope: np.ndarray) -> float:
    """Moment-based Rician K estimate from envelope samples."""
    r2 = np.asarray(envelope, dtype=np.float64) ** 2
    m2 = float(np.mean(r2))
    m4 = float(np.mean(r2**2))
    disc = 2 * m2**2 - m4
    if disc <= 0:
        return 0.0
    root = math.sqrt(disc)
    if m2 - root <= 0:
        return math.inf
    return root / (m2 - root)
