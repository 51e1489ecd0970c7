# radioforge/source.py
"""Baseband information content: PRBS bits for digital schemes, messages for analog ones."""

import logging
import struct
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import SourceError

logger = logging.getLogger(__name__)

# Maximal-length feedback taps (register positions, 1-indexed) per register length.
LFSR_TAPS: Dict[int, Tuple[int, ...]] = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
    25: (25, 22),
    26: (26, 6, 2, 1),
    27: (27, 5, 2, 1),
    28: (28, 25),
    29: (29, 27),
    30: (30, 6, 4, 1),
    31: (31, 28),
    32: (32, 22, 2, 1),
}

MESSAGE_KINDS = ("prbs", "audio-file", "multitone")


@dataclass(frozen=True)
class MessageSource:
    """Description of where a segment's content comes from."""

    kind: str
    register_length: Optional[int] = None
    path: Optional[str] = None
    tones: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise SourceError(f"Unknown message source kind: {self.kind}")
        if self.register_length is not None and not 3 <= self.register_length <= 32:
            raise SourceError(
                f"PRBS register length must be in [3, 32], got {self.register_length}"
            )
        if self.kind == "audio-file" and not self.path:
            raise SourceError("audio-file source requires a path")


@dataclass(frozen=True)
class SourceSettings:
    """Config-level choices for segment content."""

    prbs_register_length: Optional[int] = None
    audio_dir: Optional[str] = None
    tone_count: Tuple[int, int] = (16, 32)
    tone_frequency_fraction: Tuple[float, float] = (0.1, 1.0)
    audio_files: Tuple[str, ...] = field(default=(), compare=False)


def generate_bits(src: MessageSource, n: int, stream: np.random.Generator) -> np.ndarray:
    """Generate ``n`` bits (uint8) from a PRBS register or a direct uniform draw.

    Args:
        src: A ``prbs`` source; ``register_length=None`` selects direct uniform draws
        n: Number of bits
        stream: Random stream for the draw or the initial register state

    Returns:
        Array of 0/1 values of length ``n``
    """
    if n < 1:
        raise SourceError(f"Bit count must be >= 1, got {n}")
    if src.register_length is None:
        return stream.integers(0, 2, size=n, dtype=np.uint8)

    length = src.register_length
    taps = LFSR_TAPS[length]
    seed_state = int(stream.integers(1, 2**length, dtype=np.uint64))
    out = np.empty(n, dtype=np.uint8)
    # history[k] holds a[k]; a[k] = XOR of a[k - t] over the taps
    history = [(seed_state >> i) & 1 for i in range(length)]
    for k in range(n):
        if k < length:
            bit = history[k]
        else:
            bit = 0
            for t in taps:
                bit ^= history[k - t]
            history.append(bit)
        out[k] = bit
    return out


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    """Scale integer PCM to [-1, 1); float data passes through."""
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if np.issubdtype(data.dtype, np.signedinteger):
        # 24-bit samples arrive left-justified in int32
        return data.astype(np.float64) / float(2 ** (8 * data.dtype.itemsize - 1))
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise SourceError(f"Unsupported PCM sample type: {data.dtype}")


def load_audio(src: MessageSource, remove_dc: bool = True) -> Tuple[np.ndarray, float]:
    """Read a PCM WAV file as a normalized real waveform.

    Args:
        src: An ``audio-file`` source
        remove_dc: Subtract the mean after normalization

    Returns:
        Tuple of (samples, sample rate in Hz)
    """
    path = Path(src.path)
    try:
        with warnings.catch_warnings():
            # a short data chunk only surfaces as a warning
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(str(path))
    except wavfile.WavFileWarning as e:
        raise SourceError(f"Truncated audio file: {path} ({e})") from e
    except (ValueError, EOFError, struct.error) as e:
        raise SourceError(f"Unsupported audio codec in {path}: {e}") from e
    except OSError as e:
        raise SourceError(f"Cannot read audio file {path}: {e}") from e

    if data.ndim > 1:
        data = data[:, 0]
    samples = _pcm_to_float(data)
    if remove_dc and samples.size:
        samples = samples - samples.mean()
    return samples, float(rate)


def generate_multitone(src: MessageSource, duration: float, fs: float) -> np.ndarray:
    """Sum of the configured sinusoids, zero-mean and peak-normalized to 1."""
    if duration <= 0:
        raise SourceError(f"Duration must be positive, got {duration}")
    if not src.tones:
        raise SourceError("Multitone source needs at least one tone")
    for freq, _ in src.tones:
        if freq >= fs / 2:
            raise SourceError(f"Tone {freq} Hz is not below fs/2 = {fs / 2} Hz")

    n = max(1, int(round(duration * fs)))
    t = np.arange(n) / fs
    message = np.zeros(n)
    for freq, amplitude in src.tones:
        message += amplitude * np.cos(2 * np.pi * freq * t)
    return _normalize_message(message)


def resample_message(samples: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Polyphase windowed-sinc rate conversion (Kaiser, beta 8.6)."""
    ratio = Fraction(fs_out / fs_in).limit_denominator(1000)
    if ratio == 1:
        return np.asarray(samples, dtype=np.float64)
    return resample_poly(samples, ratio.numerator, ratio.denominator, window=("kaiser", 8.6))


def _normalize_message(message: np.ndarray) -> np.ndarray:
    message = message - message.mean()
    peak = np.max(np.abs(message)) if message.size else 0.0
    if peak > 0:
        message = message / peak
    return message


def list_audio_files(audio_dir: Optional[str]) -> List[str]:
    """Sorted WAV files under ``audio_dir`` (empty list when unset)."""
    if not audio_dir:
        return []
    directory = Path(audio_dir)
    if not directory.is_dir():
        raise SourceError(f"Audio directory not found: {audio_dir}")
    return sorted(str(p) for p in directory.iterdir() if p.suffix.lower() == ".wav")


def draw_message(
    settings: SourceSettings,
    n_samples: int,
    fs: float,
    max_frequency: float,
    stream: np.random.Generator,
) -> Tuple[np.ndarray, MessageSource]:
    """Draw an analog message for one segment.

    An audio excerpt is used when the settings list WAV files, otherwise a random
    multitone below ``max_frequency`` with one tone in each equal slice of the
    configured frequency range, so the message fills its band.
    """
    if settings.audio_files:
        path = settings.audio_files[int(stream.integers(0, len(settings.audio_files)))]
        src = MessageSource(kind="audio-file", path=path)
        logger.debug("Using audio excerpt from %s", path)
        samples, fs_audio = load_audio(src)
        samples = resample_message(samples, fs_audio, fs)
        if samples.size == 0:
            raise SourceError(f"Audio file is empty: {path}")
        start = int(stream.integers(0, samples.size))
        excerpt = np.resize(np.roll(samples, -start), n_samples)
        return _normalize_message(excerpt), src

    low, high = settings.tone_count
    n_tones = int(stream.integers(low, high + 1))
    f_lo, f_hi = settings.tone_frequency_fraction
    edges = np.linspace(f_lo, f_hi, n_tones + 1)
    freqs = stream.uniform(edges[:-1], edges[1:]) * max_frequency
    amps = stream.uniform(0.3, 1.0, size=n_tones)
    src = MessageSource(
        kind="multitone",
        tones=tuple((float(f), float(a)) for f, a in zip(freqs, amps)),
    )
    return generate_multitone(src, n_samples / fs, fs)[:n_samples], src


def describe_source(src: MessageSource) -> Dict:
    """JSON-friendly provenance record for a message source."""
    record: Dict = {"Kind": src.kind}
    if src.register_length is not None:
        record["RegisterLength"] = src.register_length
    if src.path:
        record["Path"] = Path(src.path).name
    if src.tones:
        record["Tones"] = [[f, a] for f, a in src.tones]
    return record

