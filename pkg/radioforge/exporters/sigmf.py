"""SigMF exporter: one recording pair per receiver antenna plus an annotation JSON per frame.

Layout under the dataset root::

    <iq_dir>/Frame_XXXXXX_Rx_YYYY.sigmf-data / .sigmf-meta        (single antenna)
    <iq_dir>/Frame_XXXXXX_Rx_YYYY_antK.sigmf-data / .sigmf-meta   (antenna K of several)
    <anno_dir>/Frame_XXXXXX_Rx_YYYY.json

The annotation JSON is written last, so its presence marks a complete frame.
"""

import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from sigmf import SigMFFile
from sigmf.error import SigMFError
from sigmf.sigmffile import fromfile

from ..errors import ArchiveError
from ..utils import load_json, save_json
from .base import BaseExporter

logger = logging.getLogger(__name__)

DATATYPE = "cf32_le"
NAMESPACE = "radioforge"


def antenna_stem(name: str, antenna: int, n_antennas: int) -> str:
    return name if n_antennas == 1 else f"{name}_ant{antenna}"


def frame_name_from_stem(stem: str) -> str:
    """Strip an ``_antK`` suffix from a recording stem."""
    head, sep, tail = stem.rpartition("_ant")
    return head if sep and tail.isdigit() else stem


def load_recording(meta_path: Union[str, Path]) -> Tuple[np.ndarray, Dict]:
    """Samples and metadata of one SigMF recording.

    Returns:
        tuple: (complex64 samples, {"global": ..., "captures": ..., "annotations": ...})
    """
    meta_path = Path(meta_path)
    try:
        handle = fromfile(str(meta_path))
        samples = np.asarray(handle.read_samples(), dtype=np.complex64)
        metadata = {
            "global": handle.get_global_info(),
            "captures": handle.get_captures(),
            "annotations": handle.get_annotations(),
        }
    except (OSError, ValueError, SigMFError) as e:
        raise ArchiveError(f"Could not read SigMF recording {meta_path}: {e}") from e
    return samples, metadata


class SigMFExporter(BaseExporter):
    """Writes receiver frames as SigMF recordings with interleaved cf32 samples."""

    def __init__(
        self,
        out_dir: Union[str, Path],
        iq_dir: str = "sequence_data/iq",
        anno_dir: str = "anno",
    ):
        self.out_dir = Path(out_dir)
        self.iq_dir = self.out_dir / iq_dir
        self.anno_dir = self.out_dir / anno_dir

    def data_path(self, stem: str) -> Path:
        return self.iq_dir / f"{stem}.sigmf-data"

    def meta_path(self, stem: str) -> Path:
        return self.iq_dir / f"{stem}.sigmf-meta"

    def annotation_path(self, name: str) -> Path:
        return self.anno_dir / f"{name}.json"

    def _global_info(self, frame: Any, antenna: int) -> Dict:
        return {
            SigMFFile.DATATYPE_KEY: DATATYPE,
            SigMFFile.SAMPLE_RATE_KEY: float(frame.master_clock_rate),
            SigMFFile.DESCRIPTION_KEY: frame.name,
            f"{NAMESPACE}:frame_index": int(frame.frame_index),
            f"{NAMESPACE}:rx_id": int(frame.rx_id),
            f"{NAMESPACE}:antenna": antenna,
            f"{NAMESPACE}:num_antennas": int(frame.n_antennas),
        }

    def _annotate(self, meta: SigMFFile, frame: Any, antenna: int) -> None:
        fs = frame.master_clock_rate
        for truth in frame.truths:
            start = int(round(truth.start * fs))
            length = min(int(round(truth.duration * fs)), frame.n_samples - start)
            record = {
                SigMFFile.LABEL_KEY: truth.modulation,
                SigMFFile.FLO_KEY: frame.rf_center_frequency + truth.freq_low,
                SigMFFile.FHI_KEY: frame.rf_center_frequency + truth.freq_high,
                f"{NAMESPACE}:class_id": truth.class_id,
                f"{NAMESPACE}:tx_id": truth.tx_id,
                f"{NAMESPACE}:segment": truth.segment,
                f"{NAMESPACE}:carrier": truth.carrier,
            }
            snr = truth.snr_db[antenna]
            if math.isfinite(snr):
                record[f"{NAMESPACE}:snr_db"] = snr
            meta.add_annotation(start, max(1, length), metadata=record)

    def _write_recording(self, frame: Any, antenna: int) -> List[Path]:
        stem = antenna_stem(frame.name, antenna, frame.n_antennas)
        data_path, meta_path = self.data_path(stem), self.meta_path(stem)
        data_tmp = data_path.with_name(data_path.name + ".tmp")
        meta_tmp = meta_path.with_name(meta_path.name + ".tmp")

        frame.samples[antenna].astype("<c8").tofile(data_tmp)
        os.replace(data_tmp, data_path)

        meta = SigMFFile(data_file=str(data_path), global_info=self._global_info(frame, antenna))
        meta.add_capture(0, metadata={SigMFFile.FREQUENCY_KEY: frame.rf_center_frequency})
        self._annotate(meta, frame, antenna)
        meta.validate()
        with open(meta_tmp, "w", encoding="utf-8") as fp:
            meta.dump(fp, pretty=True)
        os.replace(meta_tmp, meta_path)
        return [data_path, meta_path]

    def export(self, frame: Any) -> List[Path]:
        """Write every antenna recording of ``frame``, then its annotation JSON.

        Raises:
            ArchiveError: A file could not be written (carries the frame index)
        """
        written: List[Path] = []
        try:
            self.iq_dir.mkdir(parents=True, exist_ok=True)
            for antenna in range(frame.n_antennas):
                written.extend(self._write_recording(frame, antenna))
        except (OSError, ValueError, SigMFError) as e:
            raise ArchiveError(
                f"Could not write recording {frame.name}: {e}", frame_index=frame.frame_index
            ) from e
        written.append(
            save_json(
                self.annotation_path(frame.name), frame.annotation, frame_index=frame.frame_index
            )
        )
        logger.debug("Archived %s (%d files)", frame.name, len(written))
        return written

    def exists(self, name: str) -> bool:
        return self.annotation_path(name).is_file()

    def load_annotation(self, name: str) -> Dict:
        return load_json(self.annotation_path(name))

    def recording_paths(self, name: str, n_antennas: int) -> List[Path]:
        return [self.meta_path(antenna_stem(name, k, n_antennas)) for k in range(n_antennas)]

    def load(self, name: str) -> Tuple[np.ndarray, Dict]:
        annotation = self.load_annotation(name)
        n_antennas = int(annotation["annotation"]["rx"]["NumReceiveAntennas"])
        rows = [load_recording(path)[0] for path in self.recording_paths(name, n_antennas)]
        if len({row.size for row in rows}) != 1:
            raise ArchiveError(f"Antenna recordings of {name} differ in length")
        return np.stack(rows), annotation

    def list_frames(self) -> List[str]:
        if not self.anno_dir.is_dir():
            return []
        return sorted(p.stem for p in self.anno_dir.glob("Frame_*_Rx_*.json"))
