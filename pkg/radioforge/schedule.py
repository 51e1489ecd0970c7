# radioforge/schedule.py
"""Time and frequency placement of every transmitter's segments within a frame."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ScheduleError

logger = logging.getLogger(__name__)

MAX_INSTANCES_PER_FRAME = 12


@dataclass(frozen=True)
class EmissionEvent:
    """One segment on air. ``carrier`` is relative to the observable band centre (Hz);
    ``band_edges`` are the occupied band edges relative to the carrier."""

    tx_id: int
    segment: int
    start: float
    duration: float
    carrier: float
    band_edges: Tuple[float, float]
    symbol_count: int = 0
    symbol_rate: float = 0.0

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
            "StartTime": self.start,
            "TimeDuration": self.duration,
            "CarrierFrequency": self.carrier,
            "BandWidth": list(self.band_edges),
            "SymbolCount": self.symbol_count,
        }


@dataclass(frozen=True)
class OverlapRecord:
    tx_a: int
    tx_b: int
    fraction: float


@dataclass(frozen=True)
class PlanViolation:
    code: str
    message: str
    tx_id: Optional[int] = None
    segment: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            "code": self.code,
            "message": self.message,
            "tx": self.tx_id,
            "segment": self.segment,
        }


@dataclass
class FramePlan:
    frame_duration: float
    events: List[EmissionEvent]
    band: Tuple[float, float]
    overlaps: List[OverlapRecord] = field(default_factory=list)
    symbol_bounds: Optional[Tuple[int, int]] = None
    max_overlap_fraction: Optional[float] = None

    def events_for(self, tx_id: int) -> List[EmissionEvent]:
        return [e for e in self.events if e.tx_id == tx_id]

    def to_dict(self) -> Dict:
        return {
            "FrameDuration": self.frame_duration,
            "Events": [e.to_dict() for e in self.events],
            "Overlaps": [
                {"Pair": [o.tx_a, o.tx_b], "Fraction": o.fraction} for o in self.overlaps
            ],
        }


@dataclass(frozen=True)
class TimeAllocation:
    starts: List[List[float]]
    durations: List[List[float]]
    frame_duration: float


def allocate_time(
    symbol_counts: Sequence[Sequence[int]],
    symbol_rates: Sequence[float],
    stream: np.random.Generator,
    idle_gap_fraction: Tuple[float, float] = (0.1, 1.0),
    start_offset_fraction: Tuple[float, float] = (0.0, 1.0),
    frame_margin_s: float = 0.005,
    sample_rate: Optional[float] = None,
) -> TimeAllocation:
    """Sequential segments per transmitter separated by random idle gaps.

    Args:
        symbol_counts: Per transmitter, the symbol count of each of its 1-3 segments
        symbol_rates: Per transmitter symbol rate (Hz)
        stream: Random stream for offsets and gaps
        idle_gap_fraction: Gap bounds as fractions of the transmitter's mean segment duration
        start_offset_fraction: First-start bounds as fractions of the mean segment duration
        frame_margin_s: Silence appended after the latest event
        sample_rate: When given, start times are snapped to this sample grid

    Returns:
        TimeAllocation with per-segment starts and durations
    """
    starts: List[List[float]] = []
    durations: List[List[float]] = []
    latest = 0.0
    for counts, rate in zip(symbol_counts, symbol_rates):
        if not 1 <= len(counts) <= 3:
            raise ScheduleError(f"Each transmitter needs 1-3 segments, got {len(counts)}")
        seg_durations = [count / rate for count in counts]
        mean = float(np.mean(seg_durations))
        t = stream.uniform(*start_offset_fraction) * mean
        tx_starts = []
        for i, d in enumerate(seg_durations):
            if sample_rate:
                t = round(t * sample_rate) / sample_rate
            tx_starts.append(t)
            t = t + d
            latest = max(latest, t)
            if i < len(seg_durations) - 1:
                t += stream.uniform(*idle_gap_fraction) * mean
        starts.append(tx_starts)
        durations.append(seg_durations)
    return TimeAllocation(
        starts=starts, durations=durations, frame_duration=latest + frame_margin_s
    )


def _concurrent(a: Sequence[Tuple[float, float]], b: Sequence[Tuple[float, float]]) -> bool:
    return any(s1 < e2 and s2 < e1 for s1, e1 in a for s2, e2 in b)


def concurrent_pairs(intervals: Sequence[Sequence[Tuple[float, float]]]) -> List[Tuple[int, int]]:
    """Transmitter pairs with at least one pair of time-overlapping segments."""
    pairs = []
    for i in range(len(intervals)):
        for j in range(i + 1, len(intervals)):
            if _concurrent(intervals[i], intervals[j]):
                pairs.append((i, j))
    return pairs


def make_concurrent(
    timing: TimeAllocation,
    pair: Tuple[int, int],
    stream: np.random.Generator,
    frame_margin_s: float = 0.005,
    sample_rate: Optional[float] = None,
) -> TimeAllocation:
    """Shift the second transmitter of ``pair`` so its first segment starts inside the
    first segment of the other one. Gaps and durations are kept; the frame is resized.
    """
    a, b = pair
    first_start = timing.starts[a][0]
    first_end = first_start + timing.durations[a][0]
    target = first_start + stream.uniform() * (first_end - first_start)
    if sample_rate:
        target = first_start + math.floor((target - first_start) * sample_rate) / sample_rate
    delta = target - timing.starts[b][0]
    starts = [list(s) for s in timing.starts]
    starts[b] = [s + delta for s in starts[b]]
    latest = max(
        s + d for tx_s, tx_d in zip(starts, timing.durations) for s, d in zip(tx_s, tx_d)
    )
    return TimeAllocation(
        starts=starts, durations=timing.durations, frame_duration=latest + frame_margin_s
    )


def allocate_frequency(
    band_edges: Sequence[Tuple[float, float]],
    intervals: Sequence[Sequence[Tuple[float, float]]],
    band: Tuple[float, float],
    guard_fraction: float,
    overlap_probability: float,
    overlap_extent: Tuple[float, float],
    stream: np.random.Generator,
) -> Tuple[List[float], List[OverlapRecord]]:
    """Carrier per transmitter, packed disjointly across the band.

    When at least one time-concurrent transmitter pair exists, with probability
    ``overlap_probability`` one such pair is chosen uniformly and placed adjacent
    with a band overlap equal to a fraction (drawn from ``overlap_extent``) of the
    narrower signal. Every other neighbour pair keeps a guard of ``guard_fraction``
    of the narrower bandwidth. Remaining slack is spread uniformly at random.

    Args:
        band_edges: Occupied (low, high) edges relative to each transmitter's carrier
        intervals: Per transmitter, the (start, end) times of its segments
        band: Observable band (low, high) relative to the band centre
        guard_fraction: Guard as a fraction of the narrower neighbour's bandwidth
        overlap_probability: Probability of one overlapping pair given a concurrent pair.
            Frame sampling passes 0 or 1 here after its own per-frame decision, see
            ``radioforge.config.decide_overlap``
        overlap_extent: Bounds of the overlap fraction
        stream: Random stream

    Returns:
        (carriers, overlaps)

    Raises:
        ScheduleError: The signals do not fit in the band
    """
    n = len(band_edges)
    widths = [hi - lo for lo, hi in band_edges]
    overlaps: List[OverlapRecord] = []

    pair = None
    fraction = 0.0
    pairs = concurrent_pairs(intervals)
    if pairs and stream.uniform() < overlap_probability:
        pair = pairs[int(stream.integers(0, len(pairs)))]
        fraction = float(stream.uniform(*overlap_extent))
    # blocks are lists of tx ids placed contiguously
    blocks: List[List[int]] = [[i] for i in range(n) if pair is None or i not in pair]
    if pair is not None:
        inner = list(pair) if stream.uniform() < 0.5 else [pair[1], pair[0]]
        blocks.append(inner)
    order = stream.permutation(len(blocks))
    blocks = [blocks[k] for k in order]

    def gap(a: int, b: int) -> float:
        if pair is not None and {a, b} == set(pair):
            return -fraction * min(widths[a], widths[b])
        return guard_fraction * min(widths[a], widths[b])

    sequence = [tx for block in blocks for tx in block]
    needed = sum(widths) + sum(gap(a, b) for a, b in zip(sequence, sequence[1:]))
    available = band[1] - band[0]
    if needed > available:
        raise ScheduleError(
            f"Signals need {needed:.0f} Hz but the observable band is {available:.0f} Hz"
        )

    slack = (available - needed) * stream.dirichlet(np.ones(len(blocks) + 1))
    carriers = [0.0] * n
    position = band[0]
    for k, block in enumerate(blocks):
        position += slack[k]
        for idx, tx in enumerate(block):
            if idx > 0:
                position += gap(block[idx - 1], tx)
            carriers[tx] = position - band_edges[tx][0]
            position += widths[tx]
        if k < len(blocks) - 1:
            position += gap(block[-1], blocks[k + 1][0])

    if pair is not None:
        a, b = pair
        overlaps.append(OverlapRecord(tx_a=a, tx_b=b, fraction=fraction))
        logger.debug("Overlapping tx %d and tx %d by %.3f", a, b, fraction)
    return carriers, overlaps


def frequency_overlap_fraction(a: EmissionEvent, b: EmissionEvent) -> float:
    """Band intersection as a fraction of the narrower event's bandwidth."""
    shared = min(a.freq_high, b.freq_high) - max(a.freq_low, b.freq_low)
    if shared <= 0:
        return 0.0
    return shared / min(a.bandwidth, b.bandwidth)


def overlapping_pairs(plan: FramePlan) -> List[Tuple[EmissionEvent, EmissionEvent, float]]:
    """Events from different transmitters that overlap in both time and frequency."""
    out = []
    events = plan.events
    for i in range(len(events)):
        for j in range(i + 1, len(events)):
            a, b = events[i], events[j]
            if a.tx_id == b.tx_id or not (a.start < b.end and b.start < a.end):
                continue
            fraction = frequency_overlap_fraction(a, b)
            if fraction > 0:
                out.append((a, b, fraction))
    return out


def validate_plan(plan: FramePlan) -> List[PlanViolation]:
    """Check every frame-plan invariant; an empty list means the plan is valid."""
    tol = 1e-9
    violations: List[PlanViolation] = []
    band_lo, band_hi = plan.band
    slack = max(1e-6, 1e-9 * (band_hi - band_lo))

    if len(plan.events) > MAX_INSTANCES_PER_FRAME:
        violations.append(
            PlanViolation(
                "too-many-instances",
                f"{len(plan.events)} signal instances exceed {MAX_INSTANCES_PER_FRAME}",
            )
        )

    for e in plan.events:
        if e.start < 0:
            violations.append(
                PlanViolation("negative-start", f"starts at {e.start} s", e.tx_id, e.segment)
            )
        if e.duration <= 0:
            violations.append(
                PlanViolation(
                    "non-positive-duration", f"duration {e.duration} s", e.tx_id, e.segment
                )
            )
        if e.end > plan.frame_duration + tol:
            violations.append(
                PlanViolation(
                    "exceeds-frame",
                    f"ends at {e.end} s after frame end {plan.frame_duration} s",
                    e.tx_id,
                    e.segment,
                )
            )
        if e.freq_low < band_lo - slack or e.freq_high > band_hi + slack:
            violations.append(
                PlanViolation(
                    "band-spill",
                    f"occupies [{e.freq_low:.1f}, {e.freq_high:.1f}] Hz outside "
                    f"[{band_lo:.1f}, {band_hi:.1f}] Hz",
                    e.tx_id,
                    e.segment,
                )
            )
        if plan.symbol_bounds is not None:
            low, high = plan.symbol_bounds
            if not low <= e.symbol_count <= high:
                violations.append(
                    PlanViolation(
                        "symbol-count",
                        f"{e.symbol_count} symbols outside [{low}, {high}]",
                        e.tx_id,
                        e.segment,
                    )
                )

    by_tx: Dict[int, List[EmissionEvent]] = {}
    for e in plan.events:
        by_tx.setdefault(e.tx_id, []).append(e)
    for tx_id, events in by_tx.items():
        events = sorted(events, key=lambda ev: ev.start)
        for prev, cur in zip(events, events[1:]):
            if cur.start <= prev.end + tol:
                violations.append(
                    PlanViolation(
                        "same-tx-overlap",
                        f"segment {cur.segment} starts before segment {prev.segment} ends "
                        "plus an idle gap",
                        tx_id,
                        cur.segment,
                    )
                )

    if plan.max_overlap_fraction is not None:
        for a, b, fraction in overlapping_pairs(plan):
            if fraction > plan.max_overlap_fraction + 1e-9:
                violations.append(
                    PlanViolation(
                        "excess-overlap",
                        f"tx {a.tx_id} and tx {b.tx_id} overlap by {fraction:.3f} of the "
                        f"narrower band (max {plan.max_overlap_fraction})",
                        a.tx_id,
                        a.segment,
                    )
                )
    return violations
