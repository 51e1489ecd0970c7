"""Exporters for radioforge receiver frames."""

from .base import BaseExporter
from .sigmf import SigMFExporter

__all__ = ["BaseExporter", "SigMFExporter"]
