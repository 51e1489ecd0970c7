# radioforge/impair.py
"""RF front-end impairments, thermal noise and ground-truth SNR."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import welch

from .errors import ImpairmentError

logger = logging.getLogger(__name__)

BOLTZMANN = 1.380649e-23
REFERENCE_TEMPERATURE_K = 290.0

NONLINEARITY_MODELS = ("cubic-polynomial", "hyperbolic-tangent", "saleh", "ghorbani", "rapp")

# Names recorded in the "Method" field
_MODEL_LABELS = {
    "cubic-polynomial": "Cubic polynomial",
    "hyperbolic-tangent": "Hyperbolic tangent",
    "saleh": "Saleh model",
    "ghorbani": "Ghorbani model",
    "rapp": "Rapp model",
}

DEFAULT_SALEH = (2.1587, 1.1517, 4.0033, 9.1040)
DEFAULT_GHORBANI_AM = (8.1081, 1.5413, 6.5202, -0.0718)
DEFAULT_GHORBANI_PM = (4.6645, 2.0965, 10.88, -0.003)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        return -math.inf
    return 10.0 * math.log10(watts) + 30.0


def mean_power(x: np.ndarray) -> float:
    x = np.asarray(x)
    return float(np.mean(np.abs(x) ** 2)) if x.size else 0.0


# --------------------------------------------------------------------------
# Specs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IqImbalanceSpec:
    """Amplitude imbalance ``amplitude_db`` (dB) and phase imbalance ``phase_deg`` (degrees)."""

    amplitude_db: float = 0.0
    phase_deg: float = 0.0
    enabled: bool = True

    def coefficients(self) -> Tuple[complex, complex]:
        """(alpha, beta) of y = alpha * x + beta * conj(x)."""
        if not self.enabled:
            return 1.0 + 0j, 0j
        g = 10.0 ** (self.amplitude_db / 20.0)
        rotation = g * np.exp(1j * np.deg2rad(self.phase_deg))
        return complex((rotation + 1) / 2), complex((rotation - 1) / 2)

    def to_dict(self) -> Dict:
        if not self.enabled:
            return {"A": 0.0, "P": 0.0}
        return {"A": self.amplitude_db, "P": self.phase_deg}


@dataclass(frozen=True)
class DcOffsetSpec:
    """DC offset power relative to the signal, in dB; ``-inf`` disables it."""

    level_db: float = -math.inf

    @property
    def enabled(self) -> bool:
        return math.isfinite(self.level_db)

    def to_dict(self) -> Dict:
        return {"Level": self.level_db if self.enabled else None}


@dataclass(frozen=True)
class PhaseNoiseSpec:
    """Phase-noise level (dBc/Hz) at ``offset_hz``; ``-inf`` disables it."""

    level_dbc_hz: float = -math.inf
    offset_hz: float = 1e4

    @property
    def enabled(self) -> bool:
        return math.isfinite(self.level_dbc_hz)

    def to_dict(self) -> Dict:
        return {
            "Level": self.level_dbc_hz if self.enabled else None,
            "FrequencyOffset": self.offset_hz,
        }


@dataclass(frozen=True)
class NonlinearitySpec:
    """Memoryless AM/AM and AM/PM amplifier model.

    Envelope amplitudes are in sqrt(W). ``gain_db`` is the small-signal gain used by
    the cubic, tanh and Rapp models; ``iip3_dbm`` is referred to per-tone envelope
    power; ``saturation_dbm`` is the output saturation power for tanh and Rapp.
    """

    model: Optional[str] = None
    gain_db: float = 0.0
    iip3_dbm: float = 30.0
    saturation_dbm: float = 30.0
    smoothness: float = 2.0
    saleh: Tuple[float, float, float, float] = DEFAULT_SALEH
    ghorbani_am: Tuple[float, float, float, float] = DEFAULT_GHORBANI_AM
    ghorbani_pm: Tuple[float, float, float, float] = DEFAULT_GHORBANI_PM
    drive_dbm: float = 10.0

    def __post_init__(self):
        if self.model is not None and self.model not in NONLINEARITY_MODELS:
            raise ImpairmentError(f"Unknown nonlinearity model: {self.model}")
        if self.model == "rapp" and self.smoothness < 0.5:
            raise ImpairmentError(f"Rapp smoothness must be >= 0.5, got {self.smoothness}")

    @property
    def enabled(self) -> bool:
        return self.model is not None

    @property
    def linear_gain(self) -> float:
        return 10.0 ** (self.gain_db / 20.0)

    def to_dict(self) -> Dict:
        if not self.enabled:
            return {"Method": None}
        record: Dict = {"Method": _MODEL_LABELS[self.model], "InputDrive": self.drive_dbm}
        if self.model == "cubic-polynomial":
            record.update({"LinearGain": self.gain_db, "IIP3": self.iip3_dbm})
        elif self.model in ("hyperbolic-tangent", "rapp"):
            record.update({"LinearGain": self.gain_db, "OutputSaturation": self.saturation_dbm})
            if self.model == "rapp":
                record["Smoothness"] = self.smoothness
        elif self.model == "saleh":
            record.update(
                {"AmAmParameters": list(self.saleh[:2]), "AmPmParameters": list(self.saleh[2:])}
            )
        else:
            record.update(
                {"AmAmParameters": list(self.ghorbani_am), "AmPmParameters": list(self.ghorbani_pm)}
            )
        return record


@dataclass(frozen=True)
class ThermalNoiseSpec:
    """Receiver noise temperature in kelvin; 0 disables noise injection."""

    temperature_k: float = 0.0
    noise_figure_db: Optional[float] = None

    def __post_init__(self):
        if self.temperature_k < 0:
            raise ImpairmentError(f"Noise temperature must be >= 0, got {self.temperature_k}")

    @classmethod
    def from_noise_figure(cls, nf_db: float) -> "ThermalNoiseSpec":
        return cls(temperature_k=noise_temperature_from_nf(nf_db), noise_figure_db=nf_db)

    def variance(self, fs: float) -> float:
        return BOLTZMANN * self.temperature_k * fs

    def to_dict(self) -> Dict:
        record: Dict = {"NoiseTemperature": self.temperature_k}
        if self.noise_figure_db is not None:
            record["NoiseFigure"] = self.noise_figure_db
        return record


def noise_temperature_from_nf(nf_db: float) -> float:
    """T = T0 (F - 1) with T0 = 290 K."""
    return REFERENCE_TEMPERATURE_K * (10.0 ** (nf_db / 10.0) - 1.0)


# --------------------------------------------------------------------------
# Impairments
# --------------------------------------------------------------------------


def apply_iq_imbalance(x: np.ndarray, spec: IqImbalanceSpec) -> np.ndarray:
    if not spec.enabled or (spec.amplitude_db == 0 and spec.phase_deg == 0):
        return np.array(x, dtype=np.complex128, copy=True)
    alpha, beta = spec.coefficients()
    x = np.asarray(x, dtype=np.complex128)
    return alpha * x + beta * np.conj(x)


def image_rejection_ratio_db(spec: IqImbalanceSpec) -> float:
    alpha, beta = spec.coefficients()
    if beta == 0:
        return math.inf
    return 20.0 * math.log10(abs(alpha) / abs(beta))


def apply_dc_offset(x: np.ndarray, spec: DcOffsetSpec, stream: np.random.Generator) -> np.ndarray:
    """Add a constant with power ``level_db`` relative to the mean power of ``x``."""
    x = np.asarray(x, dtype=np.complex128)
    if x.size == 0:
        raise ImpairmentError("DC offset needs a non-empty waveform")
    if not spec.enabled:
        return x.copy()
    magnitude = math.sqrt(10.0 ** (spec.level_db / 10.0) * mean_power(x))
    phase = stream.uniform(0.0, 2 * np.pi)
    return x + magnitude * np.exp(1j * phase)


def phase_noise_process(
    n_samples: int, spec: PhaseNoiseSpec, fs: float, stream: np.random.Generator
) -> np.ndarray:
    """Random-walk phase (radians) whose spectrum is ``level_dbc_hz`` at the anchor offset.

    The increment variance is 4 pi^2 f0^2 L / fs, giving L(f) ~ L * (f0 / f)^2.
    """
    if spec.offset_hz >= fs / 2:
        raise ImpairmentError(
            f"Phase-noise anchor {spec.offset_hz} Hz is not below fs/2 = {fs / 2} Hz"
        )
    level = 10.0 ** (spec.level_dbc_hz / 10.0)
    sigma = math.sqrt(4 * math.pi**2 * spec.offset_hz**2 * level / fs)
    return np.cumsum(stream.normal(0.0, sigma, size=n_samples))


def apply_phase_noise(
    x: np.ndarray, spec: PhaseNoiseSpec, stream: np.random.Generator, fs: float
) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if not spec.enabled:
        return x.copy()
    phase = phase_noise_process(x.shape[-1], spec, fs, stream)
    return x * np.exp(1j * phase)


def am_am(r: np.ndarray, spec: NonlinearitySpec) -> np.ndarray:
    """Output envelope for input envelope ``r`` (sqrt(W))."""
    r = np.asarray(r, dtype=np.float64)
    model = spec.model
    if model is None:
        return r.copy()
    if model == "saleh":
        alpha, beta = spec.saleh[:2]
        return alpha * r / (1 + beta * r**2)
    if model == "ghorbani":
        x1, x2, x3, x4 = spec.ghorbani_am
        return x1 * r**x2 / (1 + x3 * r**x2) + x4 * r
    if model == "rapp":
        g = spec.linear_gain
        a_sat = math.sqrt(dbm_to_watts(spec.saturation_dbm))
        p = spec.smoothness
        return g * r / (1 + (g * r / a_sat) ** (2 * p)) ** (1 / (2 * p))
    if model == "hyperbolic-tangent":
        g = spec.linear_gain
        a_sat = math.sqrt(dbm_to_watts(spec.saturation_dbm))
        return a_sat * np.tanh(g * r / a_sat)
    # cubic: G r (1 - r^2 / A^2), held at its maximum beyond r = A / sqrt(3)
    g = spec.linear_gain
    a = math.sqrt(dbm_to_watts(spec.iip3_dbm))
    clipped = np.minimum(r, a / math.sqrt(3))
    return g * clipped * (1 - clipped**2 / a**2)


def am_pm(r: np.ndarray, spec: NonlinearitySpec) -> np.ndarray:
    """Phase rotation (radians) for input envelope ``r``."""
    r = np.asarray(r, dtype=np.float64)
    if spec.model == "saleh":
        alpha, beta = spec.saleh[2:]
        return alpha * r**2 / (1 + beta * r**2)
    if spec.model == "ghorbani":
        y1, y2, y3, y4 = spec.ghorbani_pm
        return y1 * r**y2 / (1 + y3 * r**y2) + y4 * r
    return np.zeros_like(r)


def apply_nonlinearity(x: np.ndarray, spec: NonlinearitySpec) -> np.ndarray:
    """Memoryless envelope map; the input phase is preserved apart from AM/PM."""
    x = np.asarray(x, dtype=np.complex128)
    if not spec.enabled:
        return x.copy()
    r = np.abs(x)
    unit = np.ones_like(x)
    nonzero = r > 0
    unit[nonzero] = x[nonzero] / r[nonzero]
    return am_am(r, spec) * unit * np.exp(1j * am_pm(r, spec))


def apply_nonlinearity_at_drive(x: np.ndarray, spec: NonlinearitySpec) -> np.ndarray:
    """Apply the amplifier with the input mean power set to ``spec.drive_dbm``.

    The output is scaled back by the same factor, so the small-signal gain of the
    model is preserved relative to the input level.
    """
    x = np.asarray(x, dtype=np.complex128)
    power = mean_power(x)
    if not spec.enabled or power == 0:
        return x.copy()
    k = math.sqrt(dbm_to_watts(spec.drive_dbm) / power)
    return apply_nonlinearity(k * x, spec) / k


def apply_thermal_noise(
    x: np.ndarray, spec: ThermalNoiseSpec, fs: float, stream: np.random.Generator
) -> np.ndarray:
    """Add complex AWGN with per-sample variance k_B T fs, independent per antenna row."""
    if fs <= 0:
        raise ImpairmentError(f"Sample rate must be positive, got {fs}")
    x = np.asarray(x, dtype=np.complex128)
    if spec.temperature_k == 0:
        return x.copy()
    sigma = math.sqrt(spec.variance(fs) / 2)
    noise = stream.normal(0.0, sigma, size=x.shape) + 1j * stream.normal(0.0, sigma, size=x.shape)
    return x + noise


# --------------------------------------------------------------------------
# Ground truth
# --------------------------------------------------------------------------


def measure_truth_snr(power_w: float, spec: ThermalNoiseSpec, bandwidth: float) -> float:
    """SNR (dB) of a signal with received power ``power_w`` against k_B T B."""
    if bandwidth <= 0:
        raise ImpairmentError(f"Bandwidth must be positive, got {bandwidth}")
    if power_w <= 0:
        return -math.inf
    noise = BOLTZMANN * spec.temperature_k * bandwidth
    if noise == 0:
        return math.inf
    return 10.0 * math.log10(power_w / noise)


def format_snrs(per_signal: Sequence[Sequence[float]]) -> List[Union[float, List, None]]:
    """Annotation SNR list: scalars for single-antenna values, lists otherwise.

    Non-finite values become ``None`` so the record stays valid JSON.
    """

    def _clean(value: float) -> Optional[float]:
        return float(value) if math.isfinite(value) else None

    out: List = []
    for values in per_signal:
        values = list(values)
        if len(values) == 1:
            out.append(_clean(values[0]))
        else:
            out.append([_clean(v) for v in values])
    return out


def estimate_snr_db(
    samples: np.ndarray,
    fs: float,
    band: Tuple[float, float],
    nperseg: int = 1024,
) -> float:
    """Periodogram SNR estimate of the signal occupying ``band`` (Hz, baseband).

    The noise density is the median of the bins outside the band; the signal power is
    the in-band power above that floor.
    """
    freqs, psd = welch(
        np.asarray(samples), fs=fs, nperseg=nperseg, return_onesided=False, detrend=False
    )
    lo, hi = band
    inside = (freqs >= lo) & (freqs <= hi)
    outside = ~inside
    if not np.any(outside) or not np.any(inside):
        raise ImpairmentError("Band leaves no bins for the SNR estimate")
    df = fs / nperseg
    noise_density = float(np.median(psd[outside]))
    signal_power = float(np.sum(psd[inside]) * df) - noise_density * inside.sum() * df
    if signal_power <= 0 or noise_density <= 0:
        return -math.inf
    return 10.0 * math.log10(signal_power / (noise_density * (hi - lo)))
