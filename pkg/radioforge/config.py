# radioforge/config.py
"""Configuration loading, parameter distributions and per-frame scenario sampling.

A user configuration is a JSON document deep-merged over the shipped reference
configuration (``radioforge/configs/reference.json``). Every sampled scalar is a
distribution leaf collected under its dotted name, and every frame's plan is a pure
function of (master seed, frame index).
"""

import copy
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .channel import (
    FADING_DISTRIBUTIONS,
    PATH_LOSS_MODELS,
    FadingSpec,
    PathLossSpec,
    doppler_from_speed,
    exponential_path_profile,
)
from .errors import ConfigError, ScheduleError
from .impair import (
    DEFAULT_GHORBANI_AM,
    DEFAULT_GHORBANI_PM,
    DEFAULT_SALEH,
    NONLINEARITY_MODELS,
    DcOffsetSpec,
    IqImbalanceSpec,
    NonlinearitySpec,
    PhaseNoiseSpec,
    ThermalNoiseSpec,
)
from .modulate import (
    ModulationSpec,
    occupied_band,
    segment_samples,
    spec_to_dict,
    with_symbol_rate,
)
from .raytrace import OsmScene, load_scene
from .registry import ModulationClass, get_class, list_registry
from .schedule import (
    EmissionEvent,
    FramePlan,
    TimeAllocation,
    allocate_frequency,
    allocate_time,
    concurrent_pairs,
    make_concurrent,
)
from .source import SourceSettings, list_audio_files

logger = logging.getLogger(__name__)

DISTRIBUTION_KINDS = ("fixed", "uniform-continuous", "uniform-discrete", "categorical")
CHANNEL_FAMILIES = ("statistical", "raytrace", "identity")
ENVIRONMENTS = ("outdoor", "indoor")
WINDOWS = ("hamming", "hann", "blackman")

# Objects whose keys are user-defined rather than fixed by the reference file.
FREE_FORM_KEYS = frozenset({"modulation.class_weights", "channel.raytrace.materials"})

# Count parameters and the bounds their distributions must stay within.
COUNT_LIMITS = {
    "scenario.tx_count": (1, 4),
    "scenario.rx_count": (1, 4),
    "scenario.segments_per_tx": (1, 3),
    "scenario.tx_antennas": (1, 4),
    "scenario.rx_antennas": (1, 4),
}

MIN_FRAME_SAMPLES = 2_000
MAX_FRAME_SAMPLES = 4_000_000
MAX_RESAMPLE_DENOMINATOR = 32
POSITION_ATTEMPTS = 200


# --------------------------------------------------------------------------
# Distributions
# --------------------------------------------------------------------------


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class ParameterDistribution:
    """One sampled scalar: fixed, uniform (continuous or discrete) or categorical."""

    kind: str
    low: Optional[float] = None
    high: Optional[float] = None
    value: Any = None
    choices: Tuple[Any, ...] = ()
    weights: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ConfigError(f"Unknown distribution kind '{self.kind}'")
        if self.kind in ("uniform-continuous", "uniform-discrete"):
            if not (_is_number(self.low) and _is_number(self.high)):
                raise ConfigError(f"{self.kind} needs numeric 'low' and 'high'")
            if self.low > self.high:
                raise ConfigError(f"Lower bound {self.low} exceeds upper bound {self.high}")
            if self.kind == "uniform-discrete" and not (
                float(self.low).is_integer() and float(self.high).is_integer()
            ):
                raise ConfigError(
                    f"Discrete bounds must be integers, got [{self.low}, {self.high}]"
                )
        elif self.kind == "categorical":
            if not self.choices:
                raise ConfigError("Categorical distribution needs at least one choice")
            if self.weights:
                if len(self.weights) != len(self.choices):
                    raise ConfigError("Categorical weights must match the number of choices")
                if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
                    raise ConfigError("Categorical weights must be >= 0 with a positive sum")
        elif self.value is None:
            raise ConfigError("Fixed distribution needs a 'value'")

    @classmethod
    def from_json(cls, raw: Any, key: str = "") -> "ParameterDistribution":
        """Parse a distribution leaf; a bare number or string is a fixed value."""
        try:
            if not isinstance(raw, dict):
                return cls(kind="fixed", value=raw)
            unknown = set(raw) - {"kind", "low", "high", "value", "choices", "weights"}
            if unknown:
                bad = sorted(unknown)[0]
                raise ConfigError(f"Unknown configuration key: {key}.{bad}", key=f"{key}.{bad}")
            return cls(
                kind=raw.get("kind", ""),
                low=raw.get("low"),
                high=raw.get("high"),
                value=raw.get("value"),
                choices=tuple(raw.get("choices", ())),
                weights=tuple(float(w) for w in raw.get("weights", ())),
            )
        except ConfigError as e:
            if e.key:
                raise
            raise ConfigError(f"{key}: {e}", key=key) from e

    @property
    def probabilities(self) -> np.ndarray:
        if self.weights:
            w = np.asarray(self.weights, dtype=np.float64)
            return w / w.sum()
        return np.full(len(self.choices), 1.0 / len(self.choices))

    def pmf(self) -> Tuple[List[Any], np.ndarray]:
        """Support and probabilities of a discrete distribution."""
        if self.kind == "fixed":
            return [self.value], np.ones(1)
        if self.kind == "uniform-discrete":
            support = list(range(int(self.low), int(self.high) + 1))
            return support, np.full(len(support), 1.0 / len(support))
        if self.kind == "categorical":
            return list(self.choices), self.probabilities
        raise ConfigError(f"A {self.kind} distribution has no probability mass function")

    def probability_at_least(self, threshold: float) -> float:
        support, probs = self.pmf()
        return float(sum(p for v, p in zip(support, probs) if v >= threshold))

    @property
    def bounds(self) -> Tuple[Any, Any]:
        """(lowest, highest) value the distribution can produce."""
        if self.kind == "fixed":
            return self.value, self.value
        if self.kind == "categorical":
            if all(_is_number(c) for c in self.choices):
                return min(self.choices), max(self.choices)
            return self.choices[0], self.choices[-1]
        return self.low, self.high

    def contains(self, x: Any) -> bool:
        if self.kind == "fixed":
            return x == self.value
        if self.kind == "categorical":
            return x in self.choices
        return self.low <= x <= self.high

    def draw(self, rng: np.random.Generator) -> Any:
        if self.kind == "fixed":
            return self.value
        if self.kind == "uniform-continuous":
            return float(rng.uniform(self.low, self.high))
        if self.kind == "uniform-discrete":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        return self.choices[int(rng.choice(len(self.choices), p=self.probabilities))]

    def to_dict(self) -> Dict:
        if self.kind == "fixed":
            return {"kind": "fixed", "value": self.value}
        if self.kind == "categorical":
            record: Dict = {"kind": "categorical", "choices": list(self.choices)}
            if self.weights:
                record["weights"] = list(self.weights)
            return record
        return {"kind": self.kind, "low": self.low, "high": self.high}


# --------------------------------------------------------------------------
# Master configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MasterConfig:
    """Validated, merged configuration. Treated as immutable and shared across workers."""

    seed: int
    frames: int
    band: Tuple[float, float]
    master_clock_rate: float
    rf_center_frequency: float
    distributions: Mapping[str, ParameterDistribution]
    classes: Tuple[ModulationClass, ...]
    class_weights: Tuple[float, ...]
    channel_weights: Mapping[str, float]
    source: SourceSettings
    settings: Mapping[str, Any] = field(repr=False)

    @property
    def band_width(self) -> float:
        return self.band[1] - self.band[0]

    def value(self, dotted: str) -> Any:
        """Plain (non-distribution) setting by dotted name."""
        node: Any = self.settings
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"Unknown configuration key: {dotted}", key=dotted)
            node = node[part]
        return node

    def distribution(self, name: str) -> ParameterDistribution:
        try:
            return self.distributions[name]
        except KeyError as e:
            raise ConfigError(f"Unknown distribution: {name}", key=name) from e

    def draw(self, name: str, rng: np.random.Generator) -> Any:
        return self.distribution(name).draw(rng)

    def with_seed(self, seed: int) -> "MasterConfig":
        _check_seed(seed)
        settings = copy.deepcopy(dict(self.settings))
        settings["seed"] = seed
        return replace(self, seed=seed, settings=settings)

    def with_frames(self, frames: int) -> "MasterConfig":
        if frames < 1:
            raise ConfigError(f"frames must be >= 1, got {frames}", key="frames")
        settings = copy.deepcopy(dict(self.settings))
        settings["frames"] = frames
        return replace(self, frames=frames, settings=settings)

    def to_dict(self) -> Dict:
        return copy.deepcopy(dict(self.settings))


def reference_config_path() -> Path:
    """Location of the shipped reference configuration."""
    return Path(str(resources.files("radioforge.configs").joinpath("reference.json")))


def schema_path() -> Path:
    return Path(str(resources.files("radioforge.configs").joinpath("config.schema.json")))


@lru_cache(maxsize=1)
def _reference_text() -> str:
    return resources.files("radioforge.configs").joinpath("reference.json").read_text("utf-8")


def reference_settings() -> Dict:
    return json.loads(_reference_text())


def _is_distribution(node: Any) -> bool:
    return isinstance(node, dict) and "kind" in node


def _merge(base: Dict, override: Dict, path: str = "") -> Dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"Unknown configuration key: {dotted}", key=dotted)
        reference = base[key]
        if dotted in FREE_FORM_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be an object", key=dotted)
            merged[key] = {**reference, **value}
        elif isinstance(reference, dict) and not _is_distribution(reference):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be an object", key=dotted)
            merged[key] = _merge(reference, value, dotted)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _collect(
    reference: Dict, merged: Dict, path: str, out: Dict[str, ParameterDistribution]
) -> None:
    """Parse distribution leaves and type-check plain leaves against the reference."""
    for key, ref_value in reference.items():
        dotted = f"{path}.{key}" if path else key
        value = merged[key]
        if _is_distribution(ref_value):
            out[dotted] = ParameterDistribution.from_json(value, dotted)
        elif dotted in FREE_FORM_KEYS:
            continue
        elif isinstance(ref_value, dict):
            _collect(ref_value, value, dotted, out)
        elif isinstance(ref_value, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{dotted} must be true or false", key=dotted)
        elif _is_number(ref_value):
            if not _is_number(value):
                raise ConfigError(f"{dotted} must be a number, got {value!r}", key=dotted)
        elif isinstance(ref_value, str):
            allowed = (str, list) if dotted == "modulation.classes" else (str,)
            if not isinstance(value, allowed):
                raise ConfigError(f"{dotted} must be a string, got {value!r}", key=dotted)
        elif isinstance(ref_value, list):
            if not isinstance(value, list):
                raise ConfigError(f"{dotted} must be a list, got {value!r}", key=dotted)


def _check_seed(seed: Any) -> None:
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2^64), got {seed!r}", key="seed")


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}", key=key)


def _select_classes(settings: Dict) -> Tuple[Tuple[ModulationClass, ...], Tuple[float, ...]]:
    modulation = settings["modulation"]
    selected = modulation["classes"]
    if selected == "all":
        classes = list(list_registry())
    elif isinstance(selected, list):
        classes = []
        for key in selected:
            try:
                classes.append(get_class(key))
            except ValueError as e:
                raise ConfigError(f"modulation.classes: {e}", key="modulation.classes") from e
    else:
        raise ConfigError(
            "modulation.classes must be \"all\" or a list of class names/ids",
            key="modulation.classes",
        )
    if not modulation["include_experimental"]:
        classes = [c for c in classes if not c.experimental]
    _require(bool(classes), "modulation.classes", "modulation registry is empty")

    names = {c.name for c in classes}
    for name, weight in modulation["class_weights"].items():
        _require(
            name in names,
            f"modulation.class_weights.{name}",
            "not a selected modulation class",
        )
        _require(
            _is_number(weight) and weight >= 0,
            f"modulation.class_weights.{name}",
            "weight must be >= 0",
        )
    weights = tuple(float(modulation["class_weights"].get(c.name, 1.0)) for c in classes)
    _require(sum(weights) > 0, "modulation.class_weights", "weights sum to zero")
    return tuple(classes), weights


def _validate(settings: Dict, dists: Dict[str, ParameterDistribution]) -> None:
    _check_seed(settings["seed"])
    frames = settings["frames"]
    _require(isinstance(frames, int) and frames >= 1, "frames", "frame count must be >= 1")

    band = settings["band"]
    observable = band["observable"]
    _require(
        len(observable) == 2 and all(_is_number(v) for v in observable),
        "band.observable",
        "must be a [low, high] pair in Hz",
    )
    _require(observable[0] < observable[1], "band.observable", "low must be below high")
    width = observable[1] - observable[0]
    _require(
        band["master_clock_rate"] > 2 * width,
        "band.master_clock_rate",
        f"must exceed twice the observable band width ({2 * width:.0f} Hz)",
    )
    _require(
        band["master_clock_rate"] / 2 >= max(abs(observable[0]), abs(observable[1])),
        "band.observable",
        "must lie within the master clock Nyquist band",
    )
    _require(band["rf_center_frequency"] > 0, "band.rf_center_frequency", "must be positive")

    for name, (lo, hi) in COUNT_LIMITS.items():
        low, high = dists[name].bounds
        _require(
            dists[name].kind in ("fixed", "uniform-discrete", "categorical"),
            name,
            "counts need a discrete distribution",
        )
        _require(lo <= low and high <= hi, name, f"counts must stay within [{lo}, {hi}]")
    low, _ = dists["scenario.symbols_per_segment"].bounds
    _require(low >= 1, "scenario.symbols_per_segment", "must be >= 1")
    low, _ = dists["scenario.symbol_rate"].bounds
    _require(low > 0, "scenario.symbol_rate", "must be positive")
    low, high = dists["scenario.roll_off"].bounds
    _require(0 <= low and high <= 1, "scenario.roll_off", "must stay within [0, 1]")
    low, _ = dists["scenario.speed_mps"].bounds
    _require(low >= 0, "scenario.speed_mps", "must be >= 0")

    weights = settings["channel"]["family_weights"]
    for family, weight in weights.items():
        _require(
            _is_number(weight) and weight >= 0,
            f"channel.family_weights.{family}",
            "weight must be >= 0",
        )
    _require(
        abs(sum(weights.values()) - 1.0) < 1e-9,
        "channel.family_weights",
        f"weights must sum to 1, got {sum(weights.values())}",
    )

    statistical = settings["channel"]["statistical"]
    for choice in dists["channel.statistical.fading_distribution"].choices or (
        dists["channel.statistical.fading_distribution"].value,
    ):
        _require(
            choice in FADING_DISTRIBUTIONS,
            "channel.statistical.fading_distribution",
            f"unknown fading distribution '{choice}'",
        )
    for choice in dists["channel.statistical.environment"].choices or (
        dists["channel.statistical.environment"].value,
    ):
        _require(
            choice in ENVIRONMENTS,
            "channel.statistical.environment",
            f"unknown environment '{choice}'",
        )
    _require(
        statistical["path_loss_model"] in PATH_LOSS_MODELS,
        "channel.statistical.path_loss_model",
        f"must be one of {PATH_LOSS_MODELS}",
    )
    low, high = dists["channel.statistical.extra_paths"].bounds
    _require(0 <= low and high <= 8, "channel.statistical.extra_paths", "must stay within [0, 8]")
    low, _ = dists["channel.statistical.k_factor"].bounds
    _require(low >= 0, "channel.statistical.k_factor", "must be >= 0")
    _require(
        0 < statistical["min_path_delay_s"] < statistical["max_path_delay_s"],
        "channel.statistical.min_path_delay_s",
        "must be positive and below max_path_delay_s",
    )
    _require(statistical["oscillators"] >= 32, "channel.statistical.oscillators", "must be >= 32")

    raytrace = settings["channel"]["raytrace"]
    _require(
        0 <= raytrace["max_reflections"] <= 2,
        "channel.raytrace.max_reflections",
        "must be 0, 1 or 2",
    )
    for material, gamma in raytrace["materials"].items():
        _require(
            _is_number(gamma) and -1 <= gamma <= 1,
            f"channel.raytrace.materials.{material}",
            "reflection coefficient must be in [-1, 1]",
        )

    _require(
        raytrace["max_candidate_facades"] >= 1,
        "channel.raytrace.max_candidate_facades",
        "must be >= 1",
    )
    _require(raytrace["element_spacing"] > 0, "channel.raytrace.element_spacing", "must be > 0")

    for key, rel in settings["output"].items():
        _require(
            bool(rel) and not Path(rel).is_absolute() and ".." not in Path(rel).parts,
            f"output.{key}",
            "must be a relative path inside the output directory",
        )

    for side in ("tx", "rx"):
        name = f"impairments.{side}.nonlinearity.model"
        for model in dists[name].choices or (dists[name].value,):
            _require(model in NONLINEARITY_MODELS, name, f"unknown model '{model}'")

    schedule = settings["schedule"]
    _require(schedule["guard_fraction"] >= 0, "schedule.guard_fraction", "must be >= 0")
    _require(schedule["frame_margin_s"] >= 0, "schedule.frame_margin_s", "must be >= 0")
    _require(
        isinstance(schedule["max_retries"], int) and schedule["max_retries"] >= 0,
        "schedule.max_retries",
        "must be a non-negative integer",
    )
    low, high = dists["schedule.overlap_probability"].bounds
    _require(0 <= low and high <= 1, "schedule.overlap_probability", "must stay within [0, 1]")
    multi = dists["scenario.tx_count"].probability_at_least(2)
    if high > multi:
        logger.warning(
            "schedule.overlap_probability up to %.3f exceeds the %.3f chance of a "
            "multi-transmitter frame; the overlap rate will be capped",
            high,
            multi,
        )
    for name in ("schedule.overlap_extent", "schedule.idle_gap_fraction"):
        _require(
            dists[name].kind in ("fixed", "uniform-continuous"),
            name,
            "must be fixed or uniform-continuous",
        )
    low, high = dists["schedule.overlap_extent"].bounds
    _require(0 <= low and high < 1, "schedule.overlap_extent", "must stay within [0, 1)")
    low, _ = dists["schedule.idle_gap_fraction"].bounds
    _require(low > 0, "schedule.idle_gap_fraction", "idle gaps must be positive")

    annotation = settings["annotation"]
    fft_size = annotation["fft_size"]
    _require(
        isinstance(fft_size, int) and fft_size >= 2 and fft_size & (fft_size - 1) == 0,
        "annotation.fft_size",
        "must be a power of 2",
    )
    _require(
        isinstance(annotation["hop"], int) and 1 <= annotation["hop"] <= fft_size,
        "annotation.hop",
        "must be in [1, fft_size]",
    )
    _require(annotation["window"] in WINDOWS, "annotation.window", f"must be one of {WINDOWS}")
    _require(annotation["scale"] in ("linear", "dB"), "annotation.scale", "must be linear or dB")

    length = settings["source"]["prbs_register_length"]
    _require(
        length is None or (isinstance(length, int) and 3 <= length <= 32),
        "source.prbs_register_length",
        "must be null or an integer in [3, 32]",
    )
    tones = settings["source"]["tone_count"]
    _require(
        len(tones) == 2 and 1 <= tones[0] <= tones[1],
        "source.tone_count",
        "must be [low, high] with 1 <= low <= high",
    )


def build_config(raw: Dict) -> MasterConfig:
    """Validate an in-memory configuration dict merged over the reference defaults.

    Raises:
        ConfigError: Unknown key or invalid value; the message names the dotted key
    """
    if not isinstance(raw, dict):
        raise ConfigError("Configuration root must be a JSON object")
    reference = reference_settings()
    settings = _merge(reference, raw)
    dists: Dict[str, ParameterDistribution] = {}
    _collect(reference, settings, "", dists)
    _validate(settings, dists)

    classes, class_weights = _select_classes(settings)
    source = settings["source"]
    audio_files = tuple(list_audio_files(source["audio_dir"]))
    band = settings["band"]
    return MasterConfig(
        seed=int(settings["seed"]),
        frames=int(settings["frames"]),
        band=(float(band["observable"][0]), float(band["observable"][1])),
        master_clock_rate=float(band["master_clock_rate"]),
        rf_center_frequency=float(band["rf_center_frequency"]),
        distributions=dists,
        classes=classes,
        class_weights=class_weights,
        channel_weights={
            k: float(v) for k, v in settings["channel"]["family_weights"].items() if v > 0
        },
        source=SourceSettings(
            prbs_register_length=source["prbs_register_length"],
            audio_dir=source["audio_dir"],
            tone_count=(int(source["tone_count"][0]), int(source["tone_count"][1])),
            audio_files=audio_files,
        ),
        settings=settings,
    )


def load_config(path: Optional[Union[str, Path]] = None) -> MasterConfig:
    """Load and validate a JSON configuration file (the reference config when ``path`` is None).

    Raises:
        ConfigError: Missing or malformed file, unknown key or invalid value
    """
    if path is None:
        return build_config({})
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file {path}: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: line {e.lineno} column {e.colno}") from e
    cfg = build_config(raw)
    logger.info("Loaded configuration %s (seed %d, %d frames)", path, cfg.seed, cfg.frames)
    return cfg


# --------------------------------------------------------------------------
# Seeds and streams
# --------------------------------------------------------------------------


def frame_seed(master_seed: int, frame_index: int) -> int:
    """64-bit per-frame seed derived from (master seed, frame index)."""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(frame_index,))
    return int(sequence.generate_state(2, dtype=np.uint64)[0])


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def derive_stream(seed: int, label: str) -> np.random.Generator:
    """Independent PCG64 stream for one pipeline stage of one frame."""
    if not label:
        raise ConfigError("Stream label must be non-empty")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(_label_key(label),))
    return np.random.Generator(np.random.PCG64(sequence))


def snap_symbol_rate(
    rate: float,
    samples_per_symbol: int,
    master_clock_rate: float,
    bounds: Tuple[float, float],
) -> float:
    """Nearest symbol rate whose resampling ratio to the master clock is exact.

    The ratio master_clock / (sps * rate) is limited to a fraction with a small
    denominator, preferring a value inside ``bounds``.
    """
    exact = master_clock_rate / (samples_per_symbol * rate)
    ratio = Fraction(exact).limit_denominator(MAX_RESAMPLE_DENOMINATOR)
    snapped = master_clock_rate / (samples_per_symbol * float(ratio))
    low, high = bounds
    grid = MAX_RESAMPLE_DENOMINATOR
    if snapped > high:
        snapped = master_clock_rate / (samples_per_symbol * math.ceil(exact * grid) / grid)
    elif snapped < low:
        snapped = master_clock_rate / (samples_per_symbol * math.floor(exact * grid) / grid)
    if not low <= snapped <= high:
        logger.warning(
            "Symbol rate %.1f Hz cannot be snapped inside %s; kept as drawn", rate, bounds
        )
        return rate
    return snapped


def resample_ratio(sample_rate: float, master_clock_rate: float) -> Tuple[int, int]:
    """(up, down) integers converting ``sample_rate`` to the master clock."""
    ratio = Fraction(master_clock_rate / sample_rate).limit_denominator(1000)
    return ratio.numerator, ratio.denominator


# --------------------------------------------------------------------------
# Scenario plans
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentPlan:
    index: int
    symbol_count: int
    spec: ModulationSpec
    start: float = 0.0
    duration: float = 0.0

    @property
    def band_edges(self) -> Tuple[float, float]:
        return occupied_band(self.spec)


@dataclass
class TransmitterPlan:
    tx_id: int
    modulation: ModulationClass
    symbol_rate: float
    n_antennas: int
    segments: List[SegmentPlan]
    power_dbm: float
    speed_mps: float
    iq: IqImbalanceSpec
    dc: DcOffsetSpec
    phase_noise: PhaseNoiseSpec
    nonlinearity: NonlinearitySpec
    carrier: float = 0.0
    position: Optional[Tuple[float, float, float]] = None

    @property
    def name(self) -> str:
        return f"Tx_{self.tx_id:04d}"

    @property
    def band_edges(self) -> Tuple[float, float]:
        """Union of the segments' occupied bands relative to the carrier."""
        edges = [s.band_edges for s in self.segments]
        return min(lo for lo, _ in edges), max(hi for _, hi in edges)

    def site(self) -> Dict:
        record: Dict = {"Name": self.name}
        if self.position is not None:
            record["Position"] = list(self.position)
            record["Antenna"] = {"Height": self.position[2], "Count": self.n_antennas}
        return record

    def to_dict(self) -> Dict:
        record = spec_to_dict(self.segments[0].spec)
        record.update(
            {
                "CarrierFrequency": self.carrier,
                "NumTransmitAntennas": self.n_antennas,
                "TransmitPower": self.power_dbm,
                "Speed": self.speed_mps,
                "IqImbalanceConfig": self.iq.to_dict(),
                "DcOffsetConfig": self.dc.to_dict(),
                "PhaseNoiseConfig": self.phase_noise.to_dict(),
                "MemoryLessNonlinearityConfig": self.nonlinearity.to_dict(),
                "SiteConfig": self.site(),
                "RollOffs": [s.spec.roll_off for s in self.segments],
                "SymbolCounts": [s.symbol_count for s in self.segments],
                "StartTimes": [s.start for s in self.segments],
                "TimeDurations": [s.duration for s in self.segments],
                "BandWidth": [list(s.band_edges) for s in self.segments],
            }
        )
        return record


@dataclass
class ReceiverPlan:
    rx_id: int
    n_antennas: int
    iq: IqImbalanceSpec
    dc: DcOffsetSpec
    nonlinearity: NonlinearitySpec
    thermal: ThermalNoiseSpec
    position: Optional[Tuple[float, float, float]] = None

    @property
    def name(self) -> str:
        return f"Rx_{self.rx_id:04d}"

    def site(self) -> Dict:
        record: Dict = {"Name": self.name}
        if self.position is not None:
            record["Position"] = list(self.position)
            record["Antenna"] = {"Height": self.position[2], "Count": self.n_antennas}
        return record

    def to_dict(self) -> Dict:
        return {
            "NumReceiveAntennas": self.n_antennas,
            "IqImbalanceConfig": self.iq.to_dict(),
            "DcOffsetConfig": self.dc.to_dict(),
            "MemoryLessNonlinearityConfig": self.nonlinearity.to_dict(),
            "ThermalNoiseConfig": self.thermal.to_dict(),
            "SiteConfig": self.site(),
        }


@dataclass
class LinkPlan:
    """Channel recipe for one Tx-Rx pair. Ray-traced links are traced at synthesis time."""

    tx_id: int
    rx_id: int
    family: str
    fading: Optional[FadingSpec] = None
    path_loss: Optional[PathLossSpec] = None
    environment: Optional[str] = None
    doppler_hz: float = 0.0

    def to_dict(self) -> Dict:
        record: Dict = {"ChannelFamily": self.family, "MaximumDopplerShift": self.doppler_hz}
        if self.environment:
            record["Environment"] = self.environment
        if self.fading is not None:
            record.update(self.fading.to_dict())
        if self.path_loss is not None:
            record.update(self.path_loss.to_dict())
        return record


@dataclass
class ScenarioPlan:
    """One frame's fully sampled generation recipe."""

    frame_index: int
    frame_seed: int
    master_clock_rate: float
    rf_center_frequency: float
    band: Tuple[float, float]
    channel_family: str
    transmitters: List[TransmitterPlan]
    receivers: List[ReceiverPlan]
    links: List[LinkPlan]
    schedule: FramePlan
    scene: Optional[str] = None
    attempts: int = 1

    @property
    def frame_duration(self) -> float:
        return self.schedule.frame_duration

    @property
    def n_samples(self) -> int:
        return segment_samples(self.frame_duration, self.master_clock_rate)

    @property
    def instance_count(self) -> int:
        return sum(len(tx.segments) for tx in self.transmitters)

    def link(self, tx_id: int, rx_id: int) -> LinkPlan:
        for link in self.links:
            if link.tx_id == tx_id and link.rx_id == rx_id:
                return link
        raise KeyError(f"No link from tx {tx_id} to rx {rx_id}")

    def to_dict(self) -> Dict:
        return {
            "FrameIndex": self.frame_index,
            "FrameSeed": self.frame_seed,
            "MasterClockRate": self.master_clock_rate,
            "RfCenterFrequency": self.rf_center_frequency,
            "ObservableBand": list(self.band),
            "ChannelFamily": self.channel_family,
            "Scene": self.scene,
            "Attempts": self.attempts,
            "TimeDuration": self.frame_duration,
            "tx": [tx.to_dict() for tx in self.transmitters],
            "rx": [rx.to_dict() for rx in self.receivers],
            "links": [link.to_dict() for link in self.links],
            "schedule": self.schedule.to_dict(),
        }


def _enabled(cfg: MasterConfig, prefix: str) -> bool:
    return bool(cfg.value(f"{prefix}.enabled"))


def _draw_iq(cfg: MasterConfig, side: str, rng: np.random.Generator) -> IqImbalanceSpec:
    prefix = f"impairments.{side}.iq_imbalance"
    amplitude = cfg.draw(f"{prefix}.amplitude_db", rng)
    phase = cfg.draw(f"{prefix}.phase_deg", rng)
    if not _enabled(cfg, prefix):
        return IqImbalanceSpec(enabled=False)
    return IqImbalanceSpec(amplitude_db=amplitude, phase_deg=phase)


def _draw_dc(cfg: MasterConfig, side: str, rng: np.random.Generator) -> DcOffsetSpec:
    prefix = f"impairments.{side}.dc_offset"
    level = cfg.draw(f"{prefix}.level_db", rng)
    if not _enabled(cfg, prefix):
        return DcOffsetSpec()
    return DcOffsetSpec(level_db=level)


def _draw_phase_noise(cfg: MasterConfig, rng: np.random.Generator) -> PhaseNoiseSpec:
    prefix = "impairments.tx.phase_noise"
    level = cfg.draw(f"{prefix}.level_dbc_hz", rng)
    if not _enabled(cfg, prefix):
        return PhaseNoiseSpec()
    return PhaseNoiseSpec(level_dbc_hz=level, offset_hz=float(cfg.value(f"{prefix}.offset_hz")))


def _draw_nonlinearity(cfg: MasterConfig, side: str, rng: np.random.Generator) -> NonlinearitySpec:
    prefix = f"impairments.{side}.nonlinearity"
    model = cfg.draw(f"{prefix}.model", rng)
    gain = cfg.draw(f"{prefix}.gain_db", rng)
    iip3 = cfg.draw(f"{prefix}.iip3_dbm", rng)
    saturation = cfg.draw(f"{prefix}.saturation_dbm", rng)
    smoothness = cfg.draw(f"{prefix}.smoothness", rng)
    scale = cfg.draw(f"{prefix}.coefficient_scale", rng)
    if not _enabled(cfg, prefix):
        return NonlinearitySpec()
    return NonlinearitySpec(
        model=model,
        gain_db=gain,
        iip3_dbm=iip3,
        saturation_dbm=saturation,
        smoothness=smoothness,
        saleh=tuple(scale * c for c in DEFAULT_SALEH),
        ghorbani_am=tuple(scale * c for c in DEFAULT_GHORBANI_AM),
        ghorbani_pm=tuple(scale * c for c in DEFAULT_GHORBANI_PM),
        drive_dbm=float(cfg.value(f"{prefix}.drive_dbm")),
    )


def _draw_thermal(cfg: MasterConfig, rng: np.random.Generator) -> ThermalNoiseSpec:
    prefix = "impairments.rx.thermal_noise"
    nf = cfg.draw(f"{prefix}.noise_figure_db", rng)
    if not _enabled(cfg, prefix):
        return ThermalNoiseSpec()
    return ThermalNoiseSpec.from_noise_figure(nf)


def _draw_transmitter(cfg: MasterConfig, tx_id: int, rng: np.random.Generator) -> TransmitterPlan:
    probabilities = np.asarray(cfg.class_weights) / sum(cfg.class_weights)
    modulation = cfg.classes[int(rng.choice(len(cfg.classes), p=probabilities))]
    template = modulation.template
    rate_dist = cfg.distribution("scenario.symbol_rate")
    symbol_rate = snap_symbol_rate(
        rate_dist.draw(rng),
        template.samples_per_symbol,
        cfg.master_clock_rate,
        rate_dist.bounds,
    )
    n_antennas = cfg.draw("scenario.tx_antennas", rng)
    n_segments = cfg.draw("scenario.segments_per_tx", rng)
    # one roll-off per transmitter keeps every segment on the same occupied band
    roll_off = cfg.draw("scenario.roll_off", rng)
    segments = []
    for s in range(n_segments):
        count = cfg.draw("scenario.symbols_per_segment", rng)
        segments.append(
            SegmentPlan(
                index=s,
                symbol_count=count,
                spec=with_symbol_rate(template, symbol_rate, roll_off),
            )
        )
    return TransmitterPlan(
        tx_id=tx_id,
        modulation=modulation,
        symbol_rate=symbol_rate,
        n_antennas=n_antennas,
        segments=segments,
        power_dbm=cfg.draw("scenario.transmit_power_dbm", rng),
        speed_mps=cfg.draw("scenario.speed_mps", rng),
        iq=_draw_iq(cfg, "tx", rng),
        dc=_draw_dc(cfg, "tx", rng),
        phase_noise=_draw_phase_noise(cfg, rng),
        nonlinearity=_draw_nonlinearity(cfg, "tx", rng),
    )


def _draw_receiver(cfg: MasterConfig, rx_id: int, rng: np.random.Generator) -> ReceiverPlan:
    return ReceiverPlan(
        rx_id=rx_id,
        n_antennas=cfg.draw("scenario.rx_antennas", rng),
        iq=_draw_iq(cfg, "rx", rng),
        dc=_draw_dc(cfg, "rx", rng),
        nonlinearity=_draw_nonlinearity(cfg, "rx", rng),
        thermal=_draw_thermal(cfg, rng),
    )


@lru_cache(maxsize=16)
def cached_scene(ref: str) -> OsmScene:
    return load_scene(ref)


def draw_position(
    scene: OsmScene, height: float, rng: np.random.Generator
) -> Tuple[float, float, float]:
    """Uniform position inside the scene bounds and outside every building prism."""
    xmin, ymin, xmax, ymax = scene.bounds
    for _ in range(POSITION_ATTEMPTS):
        x = float(rng.uniform(xmin, xmax))
        y = float(rng.uniform(ymin, ymax))
        if not scene.inside_building(x, y, height):
            return x, y, height
    raise ConfigError(
        f"Could not place a site outside buildings in scene '{scene.name}' "
        f"after {POSITION_ATTEMPTS} attempts"
    )


def _statistical_link(
    cfg: MasterConfig,
    tx: TransmitterPlan,
    rx: ReceiverPlan,
    rng: np.random.Generator,
) -> LinkPlan:
    prefix = "channel.statistical"
    environment = cfg.draw(f"{prefix}.environment", rng)
    distribution = cfg.draw(f"{prefix}.fading_distribution", rng)
    k_factor = cfg.draw(f"{prefix}.k_factor", rng)
    n_extra = cfg.draw(f"{prefix}.extra_paths", rng)
    delays, gains = exponential_path_profile(
        n_extra,
        rng,
        min_delay=float(cfg.value(f"{prefix}.min_path_delay_s")),
        max_delay=float(cfg.value(f"{prefix}.max_path_delay_s")),
        decay=float(cfg.value(f"{prefix}.path_decay_s")),
    )
    distance = cfg.draw(f"{prefix}.{environment}_distance_m", rng)
    carrier_hz = cfg.rf_center_frequency + tx.carrier
    doppler = doppler_from_speed(tx.speed_mps, carrier_hz)
    return LinkPlan(
        tx_id=tx.tx_id,
        rx_id=rx.rx_id,
        family="statistical",
        environment=environment,
        doppler_hz=doppler,
        fading=FadingSpec(
            distribution=distribution,
            path_delays=delays,
            path_gains_db=gains,
            max_doppler_hz=doppler,
            k_factor=k_factor if distribution == "rician" else None,
            n_tx=tx.n_antennas,
            n_rx=rx.n_antennas,
            n_oscillators=int(cfg.value(f"{prefix}.oscillators")),
        ),
        path_loss=PathLossSpec(
            model=cfg.value(f"{prefix}.path_loss_model"),
            distance_m=distance,
            carrier_hz=carrier_hz,
            exponent=float(cfg.value(f"{prefix}.{environment}_exponent")),
        ),
    )


def _segment_intervals(timing: TimeAllocation) -> List[List[Tuple[float, float]]]:
    return [
        [(start, start + d) for start, d in zip(starts, durations)]
        for starts, durations in zip(timing.starts, timing.durations)
    ]


def decide_overlap(cfg: MasterConfig, seed: int) -> Tuple[bool, float]:
    """Whether this frame carries one deliberate spectral overlap.

    The decision comes from its own stream, drawn once per frame, so plan retries
    cannot change it and the rate over all frames is ``schedule.overlap_probability``.

    Returns:
        (overlap wanted, the drawn overlap probability)
    """
    rng = derive_stream(seed, "plan.overlap")
    probability = float(cfg.draw("schedule.overlap_probability", rng))
    if cfg.distribution("scenario.tx_count").probability_at_least(2) == 0:
        return False, probability
    return bool(rng.uniform() < probability), probability


def _draw_tx_count(
    cfg: MasterConfig, overlap: bool, overlap_probability: float, rng: np.random.Generator
) -> int:
    """Transmitter count given the overlap decision.

    Overlap frames need two or more transmitters. The other frames are reweighted so
    the count marginal over all frames stays the configured one.
    """
    support, probs = cfg.distribution("scenario.tx_count").pmf()
    multi = np.asarray([v >= 2 for v in support], dtype=np.float64)
    p_multi = float(probs @ multi)
    if overlap:
        weights = probs * multi
    elif 0 < p_multi and overlap_probability < 1:
        weights = np.clip(probs - overlap_probability * probs * multi / p_multi, 0.0, None)
    else:
        weights = probs
    if weights.sum() <= 0:
        weights = probs
    return int(support[int(rng.choice(len(support), p=weights / weights.sum()))])


def _attempt(cfg: MasterConfig, frame_index: int, seed: int, attempt: int) -> ScenarioPlan:
    label = "plan" if attempt == 0 else f"plan.retry{attempt}"
    rng = derive_stream(seed, label)

    overlap, overlap_probability = decide_overlap(cfg, seed)
    n_tx = _draw_tx_count(cfg, overlap, overlap_probability, rng)
    overlap = overlap and n_tx >= 2
    n_rx = cfg.draw("scenario.rx_count", rng)
    families = sorted(cfg.channel_weights)
    weights = np.asarray([cfg.channel_weights[f] for f in families])
    family = families[int(rng.choice(len(families), p=weights / weights.sum()))]
    transmitters = [_draw_transmitter(cfg, i, rng) for i in range(n_tx)]
    receivers = [_draw_receiver(cfg, j, rng) for j in range(n_rx)]

    # time then frequency placement
    fs = cfg.master_clock_rate
    timing = allocate_time(
        [[s.symbol_count for s in tx.segments] for tx in transmitters],
        [tx.symbol_rate for tx in transmitters],
        rng,
        idle_gap_fraction=cfg.distribution("schedule.idle_gap_fraction").bounds,
        start_offset_fraction=cfg.distribution("schedule.start_offset_fraction").bounds,
        frame_margin_s=float(cfg.value("schedule.frame_margin_s")),
        sample_rate=fs,
    )
    if overlap and not concurrent_pairs(_segment_intervals(timing)):
        pair = tuple(int(i) for i in rng.choice(n_tx, size=2, replace=False))
        timing = make_concurrent(
            timing,
            pair,
            rng,
            frame_margin_s=float(cfg.value("schedule.frame_margin_s")),
            sample_rate=fs,
        )
    intervals = _segment_intervals(timing)
    carriers, overlaps = allocate_frequency(
        [tx.band_edges for tx in transmitters],
        intervals,
        cfg.band,
        guard_fraction=float(cfg.value("schedule.guard_fraction")),
        overlap_probability=1.0 if overlap else 0.0,
        overlap_extent=cfg.distribution("schedule.overlap_extent").bounds,
        stream=rng,
    )

    events: List[EmissionEvent] = []
    for tx, starts, durations, carrier in zip(
        transmitters, timing.starts, timing.durations, carriers
    ):
        tx.carrier = float(carrier)
        tx.segments = [
            replace(seg, start=float(start), duration=float(d))
            for seg, start, d in zip(tx.segments, starts, durations)
        ]
        for seg in tx.segments:
            events.append(
                EmissionEvent(
                    tx_id=tx.tx_id,
                    segment=seg.index,
                    start=seg.start,
                    duration=seg.duration,
                    carrier=tx.carrier,
                    band_edges=seg.band_edges,
                    symbol_count=seg.symbol_count,
                    symbol_rate=tx.symbol_rate,
                )
            )
    plan_schedule = FramePlan(
        frame_duration=timing.frame_duration,
        events=events,
        band=cfg.band,
        overlaps=list(overlaps),
        symbol_bounds=cfg.distribution("scenario.symbols_per_segment").bounds,
        max_overlap_fraction=cfg.distribution("schedule.overlap_extent").bounds[1],
    )
    n_samples = segment_samples(timing.frame_duration, fs)
    if not MIN_FRAME_SAMPLES <= n_samples <= MAX_FRAME_SAMPLES:
        raise ScheduleError(
            f"Frame of {n_samples} samples is outside [{MIN_FRAME_SAMPLES}, {MAX_FRAME_SAMPLES}]"
        )

    scene_ref = None
    links: List[LinkPlan] = []
    if family == "raytrace":
        scene_ref = cfg.draw("channel.raytrace.scene", rng)
        scene = cached_scene(scene_ref)
        for tx in transmitters:
            tx.position = draw_position(scene, cfg.draw("channel.raytrace.tx_height_m", rng), rng)
        for rx in receivers:
            rx.position = draw_position(scene, cfg.draw("channel.raytrace.rx_height_m", rng), rng)
    for tx in transmitters:
        for rx in receivers:
            if family == "statistical":
                links.append(_statistical_link(cfg, tx, rx, rng))
            elif family == "raytrace":
                doppler = doppler_from_speed(tx.speed_mps, cfg.rf_center_frequency + tx.carrier)
                links.append(LinkPlan(tx.tx_id, rx.rx_id, "raytrace", doppler_hz=doppler))
            else:
                links.append(LinkPlan(tx.tx_id, rx.rx_id, "identity"))

    return ScenarioPlan(
        frame_index=frame_index,
        frame_seed=seed,
        master_clock_rate=fs,
        rf_center_frequency=cfg.rf_center_frequency,
        band=cfg.band,
        channel_family=family,
        transmitters=transmitters,
        receivers=receivers,
        links=links,
        schedule=plan_schedule,
        scene=scene_ref,
        attempts=attempt + 1,
    )


def sample_scenario(cfg: MasterConfig, frame_index: int) -> ScenarioPlan:
    """Draw the complete plan for one frame.

    The plan depends only on (master seed, frame index). Infeasible frequency
    packing re-draws the transmitter set from a retry stream.

    Raises:
        ConfigError: ``frame_index`` outside [0, frames)
        ScheduleError: Still infeasible after ``schedule.max_retries`` retries
    """
    if not 0 <= frame_index < cfg.frames:
        raise ConfigError(f"Frame index {frame_index} outside [0, {cfg.frames})")
    seed = frame_seed(cfg.seed, frame_index)
    retries = int(cfg.value("schedule.max_retries"))
    last: Optional[ScheduleError] = None
    for attempt in range(retries + 1):
        try:
            return _attempt(cfg, frame_index, seed, attempt)
        except ScheduleError as e:
            last = e
            logger.info("Frame %d plan attempt %d infeasible: %s", frame_index, attempt, e)
    raise ScheduleError(
        f"Frame {frame_index}: no feasible plan after {retries + 1} attempts ({last})"
    )
