# radioforge/otel.py
"""In-memory OpenTelemetry tracing of the per-frame pipeline stages."""

import logging
import threading
from typing import Dict, List, Optional, Tuple

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor, SpanExporter, SpanExportResult

logger = logging.getLogger(__name__)

PIPELINE_STAGES = ("plan", "modulate", "tx_impairments", "channel", "receiver", "archive")


def _safe_attr_value(value):
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, (list, tuple)):
        return [_safe_attr_value(item) for item in value]
    return str(value)


def _safe_attrs_to_dict(attrs) -> Dict:
    if not attrs:
        return {}
    try:
        return {str(key): _safe_attr_value(value) for key, value in attrs.items()}
    except Exception as exc:  # pylint: disable=broad-exception-caught
        logger.warning("Attribute conversion failed: %s", exc)
        return {}


class InMemorySpanExporter(SpanExporter):
    """Keeps finished spans as plain dicts; safe to share across worker threads."""

    def __init__(self):
        self._spans: List[Dict] = []
        self._lock = threading.Lock()

    def export(self, spans):
        converted = [self._to_dict(span) for span in spans]
        with self._lock:
            self._spans.extend(converted)
        return SpanExportResult.SUCCESS

    def shutdown(self):
        pass

    def get_finished_spans(self) -> List[Dict]:
        with self._lock:
            return list(self._spans)

    def clear(self):
        with self._lock:
            self._spans.clear()

    def _to_dict(self, span) -> Dict:
        status_code = None
        if hasattr(span.status, "status_code"):
            status_map = {0: "UNSET", 1: "OK", 2: "ERROR"}
            status_code = status_map.get(span.status.status_code.value, "UNKNOWN")
        return {
            "trace_id": hex(span.get_span_context().trace_id),
            "span_id": hex(span.get_span_context().span_id),
            "parent_span_id": hex(span.parent.span_id) if span.parent else None,
            "name": span.name,
            "start_time": span.start_time,
            "end_time": span.end_time,
            "duration_ms": (
                (span.end_time - span.start_time) / 1e6 if span.end_time and span.start_time else 0
            ),
            "attributes": _safe_attrs_to_dict(span.attributes),
            "status": {"code": status_code},
        }


def setup_inmemory_otel(
    enable_otel: bool = False,
    service_name: str = "radioforge",
) -> Tuple[trace.Tracer, Optional[InMemorySpanExporter]]:
    """Set up in-memory tracing.

    Args:
        enable_otel: Record spans; when False a no-op tracer is returned
        service_name: Service name attached to the tracer resource

    Returns:
        tuple: (tracer, span_exporter); the exporter is None when tracing is off
    """
    if not enable_otel:
        return trace.NoOpTracer(), None

    resource = Resource.create(
        {
            "service.name": service_name,
            "telemetry.sdk.name": "opentelemetry",
            "telemetry.sdk.language": "python",
        }
    )
    provider = TracerProvider(resource=resource)
    span_exporter = InMemorySpanExporter()
    provider.add_span_processor(SimpleSpanProcessor(span_exporter))
    logger.info("In-memory tracing enabled for %s", service_name)
    return provider.get_tracer(service_name), span_exporter


def summarize_stage_timings(spans: List[Dict]) -> Dict[str, Dict]:
    """Per-stage span counts and wall time (ms), plus the frame totals."""
    summary: Dict[str, Dict] = {}
    for span in spans:
        name = span["name"]
        if name not in PIPELINE_STAGES and name != "frame":
            continue
        entry = summary.setdefault(name, {"count": 0, "total_ms": 0.0, "errors": 0})
        entry["count"] += 1
        entry["total_ms"] += float(span.get("duration_ms") or 0.0)
        if span.get("status", {}).get("code") == "ERROR":
            entry["errors"] += 1
    for entry in summary.values():
        entry["mean_ms"] = entry["total_ms"] / entry["count"] if entry["count"] else 0.0
    return dict(sorted(summary.items()))
