# radioforge/core.py
"""Frame synthesis and parallel batch generation."""

import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from opentelemetry import trace
from scipy.signal import get_window, resample_poly

from .channel import (
    ChannelRealization,
    apply_channel,
    generate_tap_process,
    identity_channel,
    path_loss_db,
)
from .config import (
    LinkPlan,
    MasterConfig,
    ReceiverPlan,
    ScenarioPlan,
    TransmitterPlan,
    cached_scene,
    derive_stream,
    resample_ratio,
    sample_scenario,
)
from .errors import ConfigError, FrameGenerationError, RadioforgeError
from .exporters.base import BaseExporter
from .exporters.sigmf import SigMFExporter
from .impair import (
    apply_dc_offset,
    apply_iq_imbalance,
    apply_nonlinearity_at_drive,
    apply_phase_noise,
    apply_thermal_noise,
    dbm_to_watts,
    format_snrs,
    mean_power,
    measure_truth_snr,
)
from .modulate import cut_segment, modulate_segment, payload_bits, segment_samples
from .raytrace import rays_to_channel, trace_paths
from .schedule import EmissionEvent
from .source import MessageSource, describe_source, draw_message, generate_bits
from .spectral import visible_band
from .utils import (
    CONFIG_FILE,
    MANIFEST_FILE,
    DatasetManifest,
    config_digest,
    frame_file_name,
    manifest_entry,
    save_json,
)

logger = logging.getLogger(__name__)

# Kaiser window of the polyphase resampler (windowed-sinc, ~-90 dB stopband)
RESAMPLE_WINDOW = ("kaiser", 8.6)
ANALOG_MESSAGE_FRACTION = 0.4


@dataclass
class SignalTruth:
    """Ground truth of one emitted segment as seen by one receiver."""

    tx_id: int
    segment: int
    class_id: int
    modulation: str
    carrier: float
    band_edges: Tuple[float, float]
    start: float
    duration: float
    symbol_count: int = 0
    snr_db: List[float] = field(default_factory=list)

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def bandwidth(self) -> float:
        return self.band_edges[1] - self.band_edges[0]

    @property
    def freq_low(self) -> float:
        return self.carrier + self.band_edges[0]

    @property
    def freq_high(self) -> float:
        return self.carrier + self.band_edges[1]

    def to_dict(self) -> Dict:
        return {
            "TxId": self.tx_id,
            "Segment": self.segment,
            "ClassId": self.class_id,
            "ModulatorType": self.modulation,
            "CarrierFrequency": self.carrier,
            "BandWidth": list(self.band_edges),
            "StartTime": self.start,
            "TimeDuration": self.duration,
            "SymbolCount": self.symbol_count,
            "SNR": format_snrs([self.snr_db])[0],
        }

    @classmethod
    def from_dict(cls, record: Dict) -> "SignalTruth":
        snr = record.get("SNR")
        values = snr if isinstance(snr, list) else [snr]
        return cls(
            tx_id=record["TxId"],
            segment=record["Segment"],
            class_id=record["ClassId"],
            modulation=record["ModulatorType"],
            carrier=record["CarrierFrequency"],
            band_edges=tuple(record["BandWidth"]),
            start=record["StartTime"],
            duration=record["TimeDuration"],
            symbol_count=record.get("SymbolCount", 0),
            snr_db=[float("inf") if v is None else float(v) for v in values],
        )


@dataclass
class ReceiverFrame:
    """Digitized output of one receiver for one frame."""

    frame_index: int
    rx_id: int
    samples: np.ndarray
    master_clock_rate: float
    rf_center_frequency: float
    frame_duration: float
    truths: List[SignalTruth]
    annotation: Dict = field(default_factory=dict, repr=False)

    @property
    def name(self) -> str:
        return frame_file_name(self.frame_index, self.rx_id)

    @property
    def n_antennas(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class _Emission:
    """A transmitter's frame-length antenna signals at the master clock rate."""

    tx: TransmitterPlan
    samples: np.ndarray
    spans: List[Tuple[int, int]]
    sources: List[Dict]


@contextmanager
def _stage(tracer: trace.Tracer, name: str, frame_index: int, **attributes) -> Iterator:
    """Span for one pipeline stage; any failure is re-raised with stage attribution."""
    attrs = {"frame.index": frame_index, **attributes}
    with tracer.start_as_current_span(name, attributes=attrs) as span:
        try:
            yield span
        except FrameGenerationError:
            raise
        except Exception as e:
            raise FrameGenerationError(frame_index, name, e) from e


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------


def modulate_transmitter(
    tx: TransmitterPlan, cfg: MasterConfig, seed: int
) -> Tuple[List[np.ndarray], List[Dict]]:
    """Unit-power baseband of every segment at its modulator rate, plus content provenance."""
    bursts, sources = [], []
    for seg in tx.segments:
        spec = seg.spec
        stream = derive_stream(seed, f"tx{tx.tx_id}.seg{seg.index}.bits")
        n = segment_samples(seg.duration, spec.sample_rate)
        if spec.is_digital:
            src = MessageSource(kind="prbs", register_length=cfg.source.prbs_register_length)
            content = generate_bits(
                src, payload_bits(spec, seg.symbol_count, tx.n_antennas), stream
            )
        else:
            content, src = draw_message(
                cfg.source, n, spec.sample_rate, ANALOG_MESSAGE_FRACTION * spec.symbol_rate, stream
            )
        waveform = modulate_segment(content, spec, tx.n_antennas)
        bursts.append(cut_segment(waveform, n))
        sources.append(describe_source(src))
    return bursts, sources


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.shape[1] >= n:
        return x[:, :n]
    return np.pad(x, ((0, 0), (0, n - x.shape[1])))


def impair_transmitter(
    tx: TransmitterPlan, bursts: Sequence[np.ndarray], plan: ScenarioPlan
) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    """Tx impairments, power scaling, resampling and upconversion onto the frame grid.

    Each antenna's PA is driven at the configured level; the result is renormalized
    and scaled so the antennas together radiate ``tx.power_dbm``.

    Returns:
        tuple: ((n_antennas, n_samples) frame signal, per-segment sample spans)
    """
    fs = plan.master_clock_rate
    n_frame = plan.n_samples
    out = np.zeros((tx.n_antennas, n_frame), dtype=np.complex128)
    amplitude = np.sqrt(dbm_to_watts(tx.power_dbm) / tx.n_antennas)
    spans = []
    for seg, burst in zip(tx.segments, bursts):
        label = f"tx{tx.tx_id}.seg{seg.index}"
        fs_mod = seg.spec.sample_rate
        x = apply_iq_imbalance(burst, tx.iq)
        x = apply_dc_offset(x, tx.dc, derive_stream(plan.frame_seed, f"{label}.dc"))
        # one oscillator per transmitter, shared by its antennas
        x = apply_phase_noise(
            x, tx.phase_noise, derive_stream(plan.frame_seed, f"{label}.phase_noise"), fs_mod
        )
        x = np.stack([apply_nonlinearity_at_drive(row, tx.nonlinearity) for row in x])
        powers = np.array([mean_power(row) for row in x])
        x = x / np.sqrt(np.where(powers > 0, powers, 1.0))[:, None] * amplitude

        up, down = resample_ratio(fs_mod, fs)
        if up != down:
            x = resample_poly(x, up, down, axis=1, window=RESAMPLE_WINDOW)
        start = int(round(seg.start * fs))
        end = min(start + segment_samples(seg.duration, fs), n_frame)
        x = _fit_length(x, end - start)
        n_abs = np.arange(start, end)
        out[:, start:end] += x * np.exp(2j * np.pi * tx.carrier * n_abs / fs)
        spans.append((start, end))
    return out, spans


def realize_channel(
    link: LinkPlan,
    tx: TransmitterPlan,
    rx: ReceiverPlan,
    plan: ScenarioPlan,
    cfg: MasterConfig,
) -> ChannelRealization:
    """Channel realization of one link on the frame's sample grid."""
    fs, n = plan.master_clock_rate, plan.n_samples
    if link.family == "statistical":
        stream = derive_stream(plan.frame_seed, f"link{tx.tx_id}.{rx.rx_id}.fading")
        return generate_tap_process(
            link.fading, n, fs, stream, path_loss=path_loss_db(link.path_loss)
        )
    if link.family == "raytrace":
        prefix = "channel.raytrace"
        fc = plan.rf_center_frequency + tx.carrier
        rays = trace_paths(
            cached_scene(plan.scene),
            tx.position,
            rx.position,
            max_reflections=int(cfg.value(f"{prefix}.max_reflections")),
            frequency_hz=fc,
            reflection_coefficient=float(cfg.value(f"{prefix}.reflection_coefficient")),
            materials=dict(cfg.value(f"{prefix}.materials")),
            max_candidate_facades=int(cfg.value(f"{prefix}.max_candidate_facades")),
        )
        if not rays:
            logger.info("Link tx%d -> rx%d is in outage", tx.tx_id, rx.rx_id)
        return rays_to_channel(
            rays,
            fc,
            fs,
            n,
            tx.n_antennas,
            rx.n_antennas,
            element_spacing=float(cfg.value(f"{prefix}.element_spacing")),
            doppler_hz=link.doppler_hz,
        )
    return identity_channel(n, fs, tx.n_antennas, rx.n_antennas)


def _tx_record(emission: _Emission, link: LinkPlan, channel: ChannelRealization) -> Dict:
    record = emission.tx.to_dict()
    record.update(link.to_dict())
    record.update(channel.to_dict())
    record["Sources"] = emission.sources
    return record


def build_annotation(
    plan: ScenarioPlan,
    rx: ReceiverPlan,
    tx_records: List[Dict],
    truths: List[SignalTruth],
) -> Dict:
    """Annotation document of one receiver frame (``annotation.rx`` / ``annotation.tx``)."""
    rx_record = {
        "MasterClockRate": plan.master_clock_rate,
        "RfCenterFrequency": plan.rf_center_frequency,
        "ObservableBand": list(plan.band),
        "TimeDuration": plan.frame_duration,
        "NumSamples": plan.n_samples,
    }
    rx_record.update(rx.to_dict())
    rx_record["SNRs"] = format_snrs([t.snr_db for t in truths])
    return {
        "annotation": {"rx": rx_record, "tx": tx_records},
        "signals": [t.to_dict() for t in truths],
        "frame": {
            "FrameIndex": plan.frame_index,
            "FrameSeed": plan.frame_seed,
            "RxId": rx.rx_id,
            "ChannelFamily": plan.channel_family,
            "Scene": plan.scene,
            "Attempts": plan.attempts,
            "Overlaps": [
                {"TxA": o.tx_a, "TxB": o.tx_b, "Fraction": o.fraction}
                for o in plan.schedule.overlaps
            ],
        },
        "filePrefix": frame_file_name(plan.frame_index, rx.rx_id),
    }


def truth_band_edges(
    burst: np.ndarray,
    offset: int,
    event: EmissionEvent,
    plan: ScenarioPlan,
    cfg: MasterConfig,
) -> Tuple[float, float]:
    """Band edges relative to the carrier, measured on the annotation spectrogram grid.

    ``burst`` is the received segment alone at one antenna. Silent bursts and frames
    shorter than one window keep the nominal edges of the plan.
    """
    fft_size = int(cfg.value("annotation.fft_size"))
    measured = None
    if plan.n_samples >= fft_size:
        measured = visible_band(
            burst,
            offset,
            plan.n_samples,
            plan.master_clock_rate,
            fft_size,
            int(cfg.value("annotation.hop")),
            get_window(cfg.value("annotation.window"), fft_size, fftbins=True),
            threshold_db=float(cfg.value("annotation.energy_threshold_db")),
            band=plan.band,
        )
    if measured is None:
        return tuple(event.band_edges)
    return measured[0] - event.carrier, measured[1] - event.carrier


def receive(
    rx: ReceiverPlan,
    emissions: Sequence[_Emission],
    plan: ScenarioPlan,
    cfg: MasterConfig,
    tracer: trace.Tracer,
) -> ReceiverFrame:
    """Propagate every emission to ``rx``, record ground truth, then add noise and Rx impairments.

    Truth SNRs are measured per segment and antenna before the receiver adds anything,
    against the nominal bandwidth. Truth band edges follow the visible energy of the
    segment at antenna 0, the antenna the spectrograms are rendered from.
    """
    fs = plan.master_clock_rate
    idx = plan.frame_index
    total = np.zeros((rx.n_antennas, plan.n_samples), dtype=np.complex128)
    truths: List[SignalTruth] = []
    tx_records: List[Dict] = []
    events = {(e.tx_id, e.segment): e for e in plan.schedule.events}

    for emission in emissions:
        tx = emission.tx
        link = plan.link(tx.tx_id, rx.rx_id)
        with _stage(tracer, "channel", idx, tx=tx.tx_id, rx=rx.rx_id, family=link.family):
            channel = realize_channel(link, tx, rx, plan, cfg)
            y = apply_channel(emission.samples, channel, fs)
        total += y
        tx_records.append(_tx_record(emission, link, channel))
        for seg, (a, b) in zip(tx.segments, emission.spans):
            event = events[(tx.tx_id, seg.index)]
            snrs = [
                measure_truth_snr(mean_power(y[k, a:b]), rx.thermal, event.bandwidth)
                for k in range(rx.n_antennas)
            ]
            truths.append(
                SignalTruth(
                    tx_id=tx.tx_id,
                    segment=seg.index,
                    class_id=tx.modulation.class_id,
                    modulation=tx.modulation.name,
                    carrier=event.carrier,
                    band_edges=truth_band_edges(y[0, a:b], a, event, plan, cfg),
                    start=event.start,
                    duration=event.duration,
                    symbol_count=event.symbol_count,
                    snr_db=snrs,
                )
            )

    with _stage(tracer, "receiver", idx, rx=rx.rx_id):
        label = f"rx{rx.rx_id}"
        noise_stream = derive_stream(plan.frame_seed, f"{label}.noise")
        x = apply_thermal_noise(total, rx.thermal, fs, noise_stream)
        x = np.stack([apply_nonlinearity_at_drive(row, rx.nonlinearity) for row in x])
        x = apply_iq_imbalance(x, rx.iq)
        x = apply_dc_offset(x, rx.dc, derive_stream(plan.frame_seed, f"{label}.dc"))

    return ReceiverFrame(
        frame_index=idx,
        rx_id=rx.rx_id,
        samples=x,
        master_clock_rate=fs,
        rf_center_frequency=plan.rf_center_frequency,
        frame_duration=plan.frame_duration,
        truths=truths,
        annotation=build_annotation(plan, rx, tx_records, truths),
    )


def synthesize_frame(
    plan: ScenarioPlan, cfg: MasterConfig, tracer: Optional[trace.Tracer] = None
) -> List[ReceiverFrame]:
    """Execute a scenario plan end to end; one ``ReceiverFrame`` per receiver.

    Args:
        plan: Plan produced by ``sample_scenario``
        cfg: Configuration the plan was sampled from
        tracer: Optional tracer receiving per-stage spans

    Returns:
        Receiver frames in receiver-id order

    Raises:
        FrameGenerationError: A stage failed; ``stage`` names it
    """
    tracer = tracer or trace.NoOpTracer()
    idx = plan.frame_index
    emissions: List[_Emission] = []
    for tx in plan.transmitters:
        with _stage(tracer, "modulate", idx, tx=tx.tx_id, modulation=tx.modulation.name):
            bursts, sources = modulate_transmitter(tx, cfg, plan.frame_seed)
        with _stage(tracer, "tx_impairments", idx, tx=tx.tx_id):
            samples, spans = impair_transmitter(tx, bursts, plan)
        emissions.append(_Emission(tx=tx, samples=samples, spans=spans, sources=sources))
    return [receive(rx, emissions, plan, cfg, tracer) for rx in plan.receivers]


# --------------------------------------------------------------------------
# Batch generation
# --------------------------------------------------------------------------


@dataclass
class FrameOutcome:
    frame_index: int
    entries: List[Dict] = field(default_factory=list)
    error: Optional[str] = None
    stage: Optional[str] = None
    resumed: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None

    def failure(self) -> Dict:
        return {"FrameIndex": self.frame_index, "Stage": self.stage, "Error": self.error}


def generate_frame(
    cfg: MasterConfig,
    frame_index: int,
    exporter: BaseExporter,
    tracer: Optional[trace.Tracer] = None,
    resume: bool = True,
) -> FrameOutcome:
    """Plan, synthesize and archive one frame; frames already on disk are only re-indexed."""
    tracer = tracer or trace.NoOpTracer()
    with tracer.start_as_current_span("frame", attributes={"frame.index": frame_index}) as span:
        with _stage(tracer, "plan", frame_index):
            plan = sample_scenario(cfg, frame_index)
        span.set_attribute("frame.receivers", len(plan.receivers))
        span.set_attribute("frame.instances", plan.instance_count)

        names = [frame_file_name(frame_index, rx.rx_id) for rx in plan.receivers]
        if resume and all(exporter.exists(name) for name in names):
            with _stage(tracer, "archive", frame_index, resumed=True):
                entries = [manifest_entry(exporter.load_annotation(name)) for name in names]
            return FrameOutcome(frame_index, entries, resumed=True)

        frames = synthesize_frame(plan, cfg, tracer)
        with _stage(tracer, "archive", frame_index):
            for frame in frames:
                exporter.export(frame)
        return FrameOutcome(frame_index, [manifest_entry(f.annotation) for f in frames])


def _generate_with_retry(
    cfg: MasterConfig,
    frame_index: int,
    exporter: BaseExporter,
    tracer: trace.Tracer,
    resume: bool,
) -> FrameOutcome:
    last: Optional[RadioforgeError] = None
    for attempt in (1, 2):
        try:
            return generate_frame(cfg, frame_index, exporter, tracer, resume)
        except RadioforgeError as e:
            last = e
            logger.warning("Frame %d attempt %d failed: %s", frame_index, attempt, e)
    return FrameOutcome(frame_index, error=str(last), stage=getattr(last, "stage", None))


def run_batch(
    cfg: MasterConfig,
    frame_indices: Sequence[int],
    out_dir: Union[str, Path],
    workers: int = 1,
    exporter: Optional[BaseExporter] = None,
    tracer: Optional[trace.Tracer] = None,
    resume: bool = True,
    quiet: bool = False,
) -> DatasetManifest:
    """Generate and archive a range of frames in parallel.

    Frames are independent and every random draw derives from (seed, frame index), so
    the files written do not depend on ``workers``. Each frame is retried once; frames
    that fail twice are listed in the manifest's ``failures``.

    Args:
        cfg: Validated configuration
        frame_indices: Frame indices to generate (each in [0, cfg.frames))
        out_dir: Dataset root
        workers: Thread pool size
        exporter: Archive writer (SigMF under ``out_dir`` by default)
        tracer: Optional tracer receiving frame and stage spans
        resume: Skip frames whose files already exist
        quiet: Suppress progress lines

    Returns:
        The manifest, also written to ``<out_dir>/manifest.json``
    """
    indices = sorted(set(int(i) for i in frame_indices))
    if not indices:
        raise ConfigError("Frame range is empty", key="frames")
    bad = [i for i in indices if not 0 <= i < cfg.frames]
    if bad:
        raise ConfigError(f"Frame indices outside [0, {cfg.frames}): {bad[:5]}", key="frames")

    out = Path(out_dir)
    tracer = tracer or trace.NoOpTracer()
    exporter = exporter or SigMFExporter(
        out, iq_dir=cfg.value("output.iq_dir"), anno_dir=cfg.value("output.anno_dir")
    )
    workers = max(1, min(int(workers), len(indices)))
    save_json(out / CONFIG_FILE, cfg.to_dict())

    if not quiet:
        print(f"[INFO] Generating {len(indices)} frames with {workers} worker(s) into {out}")

    def worker(index: int) -> FrameOutcome:
        return _generate_with_retry(cfg, index, exporter, tracer, resume)

    outcomes: List[FrameOutcome] = []
    step = max(1, len(indices) // 20)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for done, outcome in enumerate(executor.map(worker, indices), start=1):
            outcomes.append(outcome)
            if not outcome.ok:
                print(f"[ERROR] Frame {outcome.frame_index} failed: {outcome.error}")
            if not quiet and (done % step == 0 or done == len(indices)):
                print(f"[PROGRESS] {done}/{len(indices)} frames")

    digest = config_digest(cfg.to_dict())
    manifest_path = out / MANIFEST_FILE
    manifest = DatasetManifest(seed=cfg.seed, config_digest=digest)
    if manifest_path.is_file():
        previous = DatasetManifest.load(out)
        if previous.config_digest == digest:
            manifest = previous
        else:
            logger.warning("Existing manifest in %s has a different configuration; replacing", out)
    manifest.merge(
        indices,
        [entry for o in outcomes for entry in o.entries],
        [o.failure() for o in outcomes if not o.ok],
    )
    manifest.save(out)

    if not quiet:
        resumed = sum(1 for o in outcomes if o.resumed)
        ok = sum(1 for o in outcomes if o.ok)
        print(f"[OK] Frames generated: {ok}/{len(indices)} ({ok / len(indices) * 100:.1f}%)")
        if resumed:
            print(f"[INFO] {resumed} frames were already on disk")
        print(f"[OK] Manifest: {manifest.total_frames} receiver frames in {manifest_path}")
    return manifest
