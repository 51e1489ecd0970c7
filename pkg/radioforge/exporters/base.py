"""Base exporter interface for radioforge."""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np


class BaseExporter(ABC):
    """Abstract base class for receiver-frame archives."""

    @abstractmethod
    def export(self, frame: Any) -> List[Path]:
        """Write one receiver frame; returns the files written."""

    @abstractmethod
    def exists(self, name: str) -> bool:
        """True when the frame ``name`` has been archived completely."""

    @abstractmethod
    def load_annotation(self, name: str) -> Dict:
        """Annotation document of an archived frame."""

    @abstractmethod
    def load(self, name: str) -> Tuple[np.ndarray, Dict]:
        """(samples of shape (n_antennas, n), annotation) of an archived frame."""

    @abstractmethod
    def list_frames(self) -> List[str]:
        """Names of every archived frame, sorted."""
