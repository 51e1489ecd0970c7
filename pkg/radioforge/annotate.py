# radioforge/annotate.py
"""Spectrograms, bounding boxes, COCO export and dataset splits."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy.signal import get_window

from .config import WINDOWS, MasterConfig, derive_stream
from .core import SignalTruth
from .errors import AnnotationError
from .registry import list_registry
from .spectral import centred_stft, stft_column_count
from .utils import save_json

logger = logging.getLogger(__name__)

SCALES = ("linear", "dB")
SPLIT_NAMES = ("train", "val", "test")
_DB_FLOOR = 1e-30


@dataclass(frozen=True)
class SpectrogramSpec:
    window: str = "hamming"
    fft_size: int = 1024
    hop: int = 256
    scale: str = "dB"
    dynamic_range_db: float = 80.0
    energy_threshold_db: float = -20.0

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise AnnotationError(f"Unknown window '{self.window}'; expected one of {WINDOWS}")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise AnnotationError(f"FFT size must be a power of 2, got {self.fft_size}")
        if not 1 <= self.hop <= self.fft_size:
            raise AnnotationError(f"Hop must be in [1, {self.fft_size}], got {self.hop}")
        if self.scale not in SCALES:
            raise AnnotationError(f"Unknown magnitude scale '{self.scale}'")
        if self.dynamic_range_db <= 0:
            raise AnnotationError("Dynamic range must be positive")

    @classmethod
    def from_config(cls, cfg: MasterConfig) -> "SpectrogramSpec":
        return cls(
            window=cfg.value("annotation.window"),
            fft_size=int(cfg.value("annotation.fft_size")),
            hop=int(cfg.value("annotation.hop")),
            scale=cfg.value("annotation.scale"),
            dynamic_range_db=float(cfg.value("annotation.dynamic_range_db")),
            energy_threshold_db=float(cfg.value("annotation.energy_threshold_db")),
        )

    def window_taps(self) -> np.ndarray:
        return get_window(self.window, self.fft_size, fftbins=True)


@dataclass
class Spectrogram:
    """STFT magnitudes, rows ordered from the highest to the lowest frequency."""

    values: np.ndarray
    freqs: np.ndarray
    times: np.ndarray
    sample_rate: float
    spec: SpectrogramSpec

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def bin_width(self) -> float:
        return self.sample_rate / self.spec.fft_size

    def to_db(self) -> np.ndarray:
        if self.spec.scale == "dB":
            return self.values
        return 20.0 * np.log10(np.maximum(self.values, _DB_FLOOR))


def stft_spectrogram(
    samples: np.ndarray,
    sample_rate: float,
    spec: SpectrogramSpec,
    band: Optional[Tuple[float, float]] = None,
) -> Spectrogram:
    """Centred STFT magnitude (frequency x time) of one antenna's samples.

    Frames are centred on multiples of the hop (half a window of zeros padded at both
    ends), giving ceil(N / hop) columns. Rows outside ``band`` (Hz about the centre
    frequency) are dropped and the rest flipped so row 0 is the highest frequency.

    Raises:
        AnnotationError: Fewer samples than one window, or no bins inside ``band``
    """
    x = np.asarray(samples, dtype=np.complex128).ravel()
    n = x.size
    if n < spec.fft_size:
        raise AnnotationError(
            f"Frame of {n} samples is shorter than one {spec.fft_size}-point window"
        )
    n_cols = stft_column_count(n, spec.hop)
    magnitude = np.abs(centred_stft(x, spec.fft_size, spec.hop, spec.window_taps()))
    freqs = np.fft.fftshift(np.fft.fftfreq(spec.fft_size, 1.0 / sample_rate))

    if band is not None:
        keep = (freqs >= band[0]) & (freqs <= band[1])
        if not np.any(keep):
            raise AnnotationError(f"No frequency bins inside band {band}")
        magnitude, freqs = magnitude[keep], freqs[keep]
    magnitude, freqs = magnitude[::-1], freqs[::-1]
    if spec.scale == "dB":
        magnitude = 20.0 * np.log10(np.maximum(magnitude, _DB_FLOOR))
    times = np.arange(n_cols) * spec.hop / sample_rate
    return Spectrogram(magnitude, freqs, times, sample_rate, spec)


def stft_energy(spectrogram: Spectrogram) -> float:
    """Signal energy implied by a linear-scale spectrogram (sum |X|^2 hop / (N sum w^2))."""
    if spectrogram.spec.scale != "linear":
        raise AnnotationError("Energy needs a linear-scale spectrogram")
    spec = spectrogram.spec
    window_energy = float(np.sum(spec.window_taps() ** 2))
    total = float(np.sum(spectrogram.values**2))
    return total * spec.hop / (spec.fft_size * window_energy)


@dataclass
class CocoBox:
    image_id: int
    category_id: int
    x: int
    y: int
    width: int
    height: int
    snr_db: Optional[float] = None
    tx_id: int = 0
    segment: int = 0

    @property
    def area(self) -> int:
        return self.width * self.height

    def to_coco(self, annotation_id: int) -> Dict:
        return {
            "id": annotation_id,
            "image_id": self.image_id,
            "category_id": self.category_id,
            "bbox": [self.x, self.y, self.width, self.height],
            "area": self.area,
            "iscrowd": 0,
            "snr_db": self.snr_db,
            "tx_id": self.tx_id,
            "segment": self.segment,
        }


def _mean_snr(values: Sequence[float]) -> Optional[float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return None
    return float(10.0 * math.log10(np.mean([10.0 ** (v / 10.0) for v in finite])))


def events_to_bboxes(
    truths: Sequence[SignalTruth],
    spectrogram: Spectrogram,
    frame_duration: float,
    image_id: int = 0,
) -> List[CocoBox]:
    """Map ground-truth signals onto spectrogram pixels.

    Columns: x = floor(T_L fs / hop), width = ceil(T_R fs / hop) - x. Rows are those
    whose centre frequency lies within the signal's band edges. Every box is clipped
    to the image and is at least one pixel in each direction.

    Raises:
        AnnotationError: A signal lies outside the frame in time or outside the band
    """
    height, width = spectrogram.shape
    fs, hop = spectrogram.sample_rate, spectrogram.spec.hop
    df = spectrogram.bin_width
    f_top, f_bottom = float(spectrogram.freqs[0]), float(spectrogram.freqs[-1])
    tol = 1e-9
    boxes = []
    for t in truths:
        if t.start < -tol or t.end > frame_duration + max(tol, 1.0 / fs):
            raise AnnotationError(
                f"Signal tx{t.tx_id}.seg{t.segment} [{t.start}, {t.end}] s lies outside "
                f"the {frame_duration} s frame"
            )
        if t.freq_high < f_bottom - df or t.freq_low > f_top + df:
            raise AnnotationError(
                f"Signal tx{t.tx_id}.seg{t.segment} [{t.freq_low:.0f}, {t.freq_high:.0f}] Hz "
                "lies outside the spectrogram band"
            )
        x0 = min(max(0, math.floor(t.start * fs / hop)), width - 1)
        x1 = min(width, math.ceil(t.end * fs / hop))
        y0 = max(0, math.ceil((f_top - t.freq_high) / df))
        y1 = min(height, math.floor((f_top - t.freq_low) / df) + 1)
        y0 = min(y0, height - 1)
        boxes.append(
            CocoBox(
                image_id=image_id,
                category_id=t.class_id,
                x=x0,
                y=y0,
                width=max(1, x1 - x0),
                height=max(1, y1 - y0),
                snr_db=_mean_snr(t.snr_db),
                tx_id=t.tx_id,
                segment=t.segment,
            )
        )
    return boxes


def energy_mask_iou(box: CocoBox, values_db: np.ndarray, threshold_db: float = -20.0) -> float:
    """IoU between ``box`` and the cells within ``threshold_db`` of the box peak.

    The mask is evaluated in a window extending the box by half its size on each side.
    """
    height, width = values_db.shape
    mx, my = max(1, box.width // 2), max(1, box.height // 2)
    r0, r1 = max(0, box.y - my), min(height, box.y + box.height + my)
    c0, c1 = max(0, box.x - mx), min(width, box.x + box.width + mx)
    region = values_db[r0:r1, c0:c1]
    inside = np.zeros_like(region, dtype=bool)
    inside[box.y - r0 : box.y - r0 + box.height, box.x - c0 : box.x - c0 + box.width] = True
    peak = float(np.max(region[inside]))
    mask = region >= peak + threshold_db
    union = np.logical_or(mask, inside).sum()
    return float(np.logical_and(mask, inside).sum() / union) if union else 0.0


def to_grayscale(values_db: np.ndarray, dynamic_range_db: float = 80.0) -> np.ndarray:
    """Clip to [peak - range, peak] and map linearly onto 0..255."""
    values_db = np.asarray(values_db, dtype=np.float64)
    peak = float(np.max(values_db))
    floor = peak - dynamic_range_db
    scaled = (np.clip(values_db, floor, peak) - floor) / dynamic_range_db
    return np.round(scaled * 255.0).astype(np.uint8)


def render_png(
    values_db: np.ndarray, path: Union[str, Path], dynamic_range_db: float = 80.0
) -> Path:
    """8-bit grayscale PNG of a dB spectrogram."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_grayscale(values_db, dynamic_range_db)).save(path)
    return path


def plot_spectrogram(
    spectrogram: Spectrogram,
    path: Union[str, Path],
    boxes: Sequence[CocoBox] = (),
    labels: Optional[Dict[int, str]] = None,
    title: str = "",
) -> Path:
    """Annotated spectrogram figure with box overlays in time/frequency units."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    values = spectrogram.to_db()
    peak = float(np.max(values))
    t_end = spectrogram.times[-1] + spectrogram.spec.hop / spectrogram.sample_rate
    df = spectrogram.bin_width
    extent = (0.0, t_end, spectrogram.freqs[-1] / 1e3, spectrogram.freqs[0] / 1e3)
    col_s = spectrogram.spec.hop / spectrogram.sample_rate

    fig, ax = plt.subplots(figsize=(10, 5))
    image = ax.imshow(
        values,
        aspect="auto",
        extent=extent,
        cmap="viridis",
        vmin=peak - spectrogram.spec.dynamic_range_db,
        vmax=peak,
    )
    for box in boxes:
        f_hi = (spectrogram.freqs[0] - box.y * df) / 1e3
        rect = Rectangle(
            (box.x * col_s, f_hi - box.height * df / 1e3),
            box.width * col_s,
            box.height * df / 1e3,
            fill=False,
            edgecolor="red",
            linewidth=1.2,
        )
        ax.add_patch(rect)
        name = (labels or {}).get(box.category_id, str(box.category_id))
        snr = "" if box.snr_db is None else f" {box.snr_db:.1f} dB"
        ax.text(box.x * col_s, f_hi, f"{name}{snr}", color="white", fontsize=7, va="bottom")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Frequency offset (kHz)")
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax, label="Magnitude (dB)")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# --------------------------------------------------------------------------
# COCO export and splits
# --------------------------------------------------------------------------


@dataclass
class CocoImage:
    image_id: int
    file_name: str
    width: int
    height: int
    frame_name: str

    def to_coco(self) -> Dict:
        return {
            "id": self.image_id,
            "file_name": self.file_name,
            "width": self.width,
            "height": self.height,
            "frame": self.frame_name,
        }


def coco_categories() -> List[Dict]:
    return [
        {"id": c.class_id, "name": c.name, "supercategory": c.family} for c in list_registry()
    ]


def export_coco(
    records: Sequence[Tuple[CocoImage, Sequence[CocoBox]]],
    split: str,
    coco_dir: Union[str, Path],
) -> Path:
    """Write ``<coco_dir>/<split>.json`` for the given images and their boxes.

    Images and annotations are sorted by id, so identical inputs give identical bytes.

    Raises:
        AnnotationError: An image file is missing or a box lies outside its image
    """
    coco_dir = Path(coco_dir)
    images, annotations = [], []
    next_id = 1
    for image, boxes in sorted(records, key=lambda r: r[0].image_id):
        if not (coco_dir / image.file_name).is_file():
            raise AnnotationError(f"Missing spectrogram image {image.file_name} for {split}")
        images.append(image.to_coco())
        for box in boxes:
            if (
                box.x < 0
                or box.y < 0
                or box.x + box.width > image.width
                or box.y + box.height > image.height
            ):
                raise AnnotationError(f"Box outside image {image.file_name}: {box}")
            annotations.append(box.to_coco(next_id))
            next_id += 1
    document = {
        "info": {"description": f"radioforge {split} split", "version": "1.0"},
        "images": images,
        "annotations": annotations,
        "categories": coco_categories(),
    }
    return save_json(coco_dir / f"{split}.json", document)


def make_splits(n_frames: int, seed: int) -> Dict[str, List[int]]:
    """Deterministic shuffled 8:1:1 partition of ``range(n_frames)``.

    val and test each get floor(0.1 n); train takes the remainder.
    """
    if n_frames < 0:
        raise AnnotationError(f"Frame count must be >= 0, got {n_frames}")
    if n_frames < 10:
        logger.warning("Only %d frames; val and test splits will be empty", n_frames)
    order = derive_stream(seed, "splits").permutation(n_frames)
    k = n_frames // 10
    return {
        "train": sorted(int(i) for i in order[2 * k :]),
        "val": sorted(int(i) for i in order[:k]),
        "test": sorted(int(i) for i in order[k : 2 * k]),
    }


def write_split_files(splits: Dict[str, List[int]], coco_dir: Union[str, Path]) -> List[Path]:
    """``train.txt`` / ``val.txt`` / ``test.txt`` with one index per line."""
    coco_dir = Path(coco_dir)
    coco_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SPLIT_NAMES:
        path = coco_dir / f"{name}.txt"
        path.write_text("".join(f"{i}\n" for i in splits.get(name, [])), encoding="utf-8")
        paths.append(path)
    return paths
