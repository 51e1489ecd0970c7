"""Tests for radioforge.otel module."""

import threading
from unittest.mock import Mock

from opentelemetry import trace
from opentelemetry.sdk.trace.export import SpanExportResult

from radioforge.otel import (
    InMemorySpanExporter,
    setup_inmemory_otel,
    summarize_stage_timings,
)


def _mock_span(name="modulate", status=0, attributes=None, parent=None):
    span = Mock()
    span.get_span_context().trace_id = 12345
    span.get_span_context().span_id = 67890
    span.parent = parent
    span.name = name
    span.start_time = 1_000_000_000
    span.end_time = 1_004_000_000
    span.attributes = attributes if attributes is not None else {"frame.index": 3}
    span.status = Mock(status_code=Mock(value=status))
    return span


def test_inmemory_span_exporter_initialization():
    """Test InMemorySpanExporter starts empty."""
    exporter = InMemorySpanExporter()
    assert exporter.get_finished_spans() == []


def test_export_converts_spans_to_dicts():
    """Test exported spans are stored as plain dicts."""
    exporter = InMemorySpanExporter()
    result = exporter.export([_mock_span()])
    assert result == SpanExportResult.SUCCESS

    (span,) = exporter.get_finished_spans()
    assert span["name"] == "modulate"
    assert span["trace_id"] == hex(12345)
    assert span["parent_span_id"] is None
    assert span["duration_ms"] == 4.0
    assert span["attributes"] == {"frame.index": 3}
    assert span["status"]["code"] == "UNSET"


def test_export_with_parent_and_error_status():
    """Test parent ids and error status codes are kept."""
    exporter = InMemorySpanExporter()
    exporter.export([_mock_span(status=2, parent=Mock(span_id=42))])
    (span,) = exporter.get_finished_spans()
    assert span["parent_span_id"] == hex(42)
    assert span["status"]["code"] == "ERROR"


def test_unsupported_attribute_values_become_strings():
    """Test attribute values outside the OTel primitives are stringified."""
    exporter = InMemorySpanExporter()
    exporter.export([_mock_span(attributes={"shape": (2, [3, object]), "none": None})])
    attrs = exporter.get_finished_spans()[0]["attributes"]
    assert attrs["shape"][0] == 2
    assert isinstance(attrs["shape"][1][1], str)
    assert attrs["none"] is None


def test_clear():
    exporter = InMemorySpanExporter()
    exporter.export([_mock_span()])
    exporter.clear()
    assert exporter.get_finished_spans() == []


def test_concurrent_exports_are_all_kept():
    """Test spans exported from several threads are all retained."""
    exporter = InMemorySpanExporter()

    def worker():
        for _ in range(50):
            exporter.export([_mock_span()])

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(exporter.get_finished_spans()) == 200


def test_setup_disabled_returns_noop():
    """Test disabled tracing returns a no-op tracer and no exporter."""
    tracer, exporter = setup_inmemory_otel(enable_otel=False)
    assert isinstance(tracer, trace.NoOpTracer)
    assert exporter is None


def test_setup_enabled_records_spans():
    """Test enabled tracing records finished spans without touching the global provider."""
    before = trace.get_tracer_provider()
    tracer, exporter = setup_inmemory_otel(enable_otel=True, service_name="test")
    with tracer.start_as_current_span("frame", attributes={"frame.index": 0}):
        with tracer.start_as_current_span("plan"):
            pass
    spans = exporter.get_finished_spans()
    assert [s["name"] for s in spans] == ["plan", "frame"]
    assert spans[0]["parent_span_id"] == spans[1]["span_id"]
    assert trace.get_tracer_provider() is before


def test_summarize_stage_timings():
    """Test per-stage counts, totals, means and error tallies."""
    spans = [
        {"name": "frame", "duration_ms": 10.0, "status": {"code": "OK"}},
        {"name": "modulate", "duration_ms": 2.0, "status": {"code": "UNSET"}},
        {"name": "modulate", "duration_ms": 4.0, "status": {"code": "ERROR"}},
        {"name": "unrelated", "duration_ms": 99.0, "status": {"code": "UNSET"}},
    ]
    summary = summarize_stage_timings(spans)
    assert list(summary) == ["frame", "modulate"]
    assert summary["modulate"] == {"count": 2, "total_ms": 6.0, "errors": 1, "mean_ms": 3.0}
