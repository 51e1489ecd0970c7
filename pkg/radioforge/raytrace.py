# radioforge/raytrace.py
"""Site-specific propagation: OSM building parsing and image-method ray tracing.

Buildings are extruded 2.5D prisms whose walls are vertical facades. Rays are the
line-of-sight path plus specular facade reflections up to second order.
"""

import csv
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from matplotlib.path import Path as PolygonPath

from .channel import SPEED_OF_LIGHT, ChannelRealization
from .errors import ChannelError, OsmParseError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
DEFAULT_BUILDING_HEIGHT_M = 10.0
LEVEL_HEIGHT_M = 3.0
DEFAULT_REFLECTION_COEFFICIENT = -0.7
BUILTIN_SCENES = ("campus", "canyon")

_EPS = 1e-9


@dataclass(frozen=True)
class Building:
    way_id: str
    footprint: np.ndarray = field(repr=False)  # (k, 2) vertices, not repeated at the end
    height: float = DEFAULT_BUILDING_HEIGHT_M
    material: Optional[str] = None


@dataclass(frozen=True)
class Facades:
    """Vertical wall segments of every building, as parallel arrays."""

    starts: np.ndarray
    ends: np.ndarray
    heights: np.ndarray
    materials: Tuple[Optional[str], ...]

    def __len__(self) -> int:
        return int(self.heights.size)

    @property
    def midpoints(self) -> np.ndarray:
        return (self.starts + self.ends) / 2


@dataclass
class OsmScene:
    """Building footprints in local east/north metres about the scene centroid."""

    buildings: List[Building]
    bounds: Tuple[float, float, float, float]
    origin: Tuple[float, float] = (0.0, 0.0)
    name: str = ""

    @cached_property
    def facades(self) -> Facades:
        starts, ends, heights, materials = [], [], [], []
        for building in self.buildings:
            pts = building.footprint
            for i in range(len(pts)):
                starts.append(pts[i])
                ends.append(pts[(i + 1) % len(pts)])
                heights.append(building.height)
                materials.append(building.material)
        if not starts:
            empty = np.zeros((0, 2))
            return Facades(empty, empty.copy(), np.zeros(0), ())
        return Facades(np.array(starts), np.array(ends), np.array(heights), tuple(materials))

    @cached_property
    def _paths(self) -> List[PolygonPath]:
        return [PolygonPath(b.footprint) for b in self.buildings]

    def inside_building(self, x: float, y: float, z: float = 0.0) -> bool:
        """True when (x, y, z) lies within a building prism."""
        for building, path in zip(self.buildings, self._paths):
            if z <= building.height and path.contains_point((x, y)):
                return True
        return False

    @property
    def extent(self) -> Tuple[float, float]:
        xmin, ymin, xmax, ymax = self.bounds
        return xmax - xmin, ymax - ymin


@dataclass(frozen=True)
class Ray:
    vertices: np.ndarray = field(repr=False)  # (k + 2, 3) from tx to rx
    interactions: int
    length: float
    gain: complex
    delay: float
    aod: Tuple[float, float]  # azimuth, elevation (rad)
    aoa: Tuple[float, float]
    facade_ids: Tuple[int, ...] = ()


# --------------------------------------------------------------------------
# OSM parsing
# --------------------------------------------------------------------------


def _project(
    lat: np.ndarray, lon: np.ndarray, lat0: float, lon0: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Local equirectangular tangent-plane projection (metres east, north)."""
    x = EARTH_RADIUS_M * np.deg2rad(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.deg2rad(lat - lat0)
    return x, y


def _parse_height(tags: Dict[str, str]) -> float:
    raw = tags.get("height")
    if raw:
        try:
            value = float(raw.lower().replace("m", "").strip())
            if value > 0:
                return value
        except ValueError:
            logger.warning("Ignoring unparseable height tag %r", raw)
    levels = tags.get("building:levels")
    if levels:
        try:
            value = float(levels) * LEVEL_HEIGHT_M
            if value > 0:
                return value
        except ValueError:
            logger.warning("Ignoring unparseable building:levels tag %r", levels)
    return DEFAULT_BUILDING_HEIGHT_M


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(polygon: np.ndarray) -> bool:
    n = len(polygon)
    edges = [(polygon[i], polygon[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def parse_osm(xml: Union[bytes, str], name: str = "") -> OsmScene:
    """Parse OSM XML v0.6 into building prisms.

    Closed ways tagged ``building`` become footprints. Unclosed or degenerate ways
    and ways referencing unknown nodes are skipped with a warning.

    Raises:
        OsmParseError: The document is not well-formed XML
    """
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as e:
        raise OsmParseError(f"Malformed OSM XML: {e}") from e

    nodes: Dict[str, Tuple[float, float]] = {}
    for node in root.iter("node"):
        try:
            nodes[node.attrib["id"]] = (float(node.attrib["lat"]), float(node.attrib["lon"]))
        except (KeyError, ValueError) as e:
            raise OsmParseError(f"Invalid node element: {node.attrib}") from e

    if nodes:
        coords = np.array(list(nodes.values()))
        lat0, lon0 = float(coords[:, 0].mean()), float(coords[:, 1].mean())
    else:
        lat0, lon0 = 0.0, 0.0

    buildings: List[Building] = []
    for way in root.iter("way"):
        tags = {t.attrib.get("k"): t.attrib.get("v") for t in way.iter("tag")}
        if "building" not in tags:
            continue
        way_id = way.attrib.get("id", "?")
        refs = [nd.attrib.get("ref") for nd in way.iter("nd")]
        if len(refs) < 4 or refs[0] != refs[-1]:
            logger.warning("Skipping unclosed building way %s", way_id)
            continue
        if any(ref not in nodes for ref in refs):
            logger.warning("Skipping building way %s with unknown node references", way_id)
            continue
        latlon = np.array([nodes[ref] for ref in refs[:-1]])
        x, y = _project(latlon[:, 0], latlon[:, 1], lat0, lon0)
        footprint = np.column_stack([x, y])
        if not _is_simple(footprint):
            logger.warning("Skipping self-intersecting building way %s", way_id)
            continue
        buildings.append(
            Building(
                way_id=way_id,
                footprint=footprint,
                height=_parse_height(tags),
                material=tags.get("building:material"),
            )
        )

    bounds_el = root.find("bounds")
    if bounds_el is not None:
        try:
            bx, by = _project(
                np.array([float(bounds_el.attrib["minlat"]), float(bounds_el.attrib["maxlat"])]),
                np.array([float(bounds_el.attrib["minlon"]), float(bounds_el.attrib["maxlon"])]),
                lat0,
                lon0,
            )
        except (KeyError, ValueError) as e:
            raise OsmParseError(f"Invalid bounds element: {bounds_el.attrib}") from e
        bounds = (float(bx[0]), float(by[0]), float(bx[1]), float(by[1]))
    elif nodes:
        x, y = _project(coords[:, 0], coords[:, 1], lat0, lon0)
        bounds = (float(x.min()), float(y.min()), float(x.max()), float(y.max()))
    else:
        bounds = (0.0, 0.0, 0.0, 0.0)

    logger.info("Parsed %d buildings from OSM scene %s", len(buildings), name or "<memory>")
    return OsmScene(buildings=buildings, bounds=bounds, origin=(lat0, lon0), name=name)


def load_osm(path: Union[str, Path]) -> OsmScene:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OsmParseError(f"Cannot read OSM file {path}: {e}") from e
    return parse_osm(data, name=path.stem)


def load_builtin_scene(name: str) -> OsmScene:
    """Load one of the packaged synthetic scenes (``campus`` or ``canyon``)."""
    if name not in BUILTIN_SCENES:
        raise OsmParseError(f"Unknown builtin scene '{name}', expected one of {BUILTIN_SCENES}")
    data = resources.files("radioforge.scenes").joinpath(f"{name}.osm").read_bytes()
    return parse_osm(data, name=name)


def load_scene(ref: str) -> OsmScene:
    """Resolve ``builtin:<name>`` or a file path."""
    if ref.startswith("builtin:"):
        return load_builtin_scene(ref.split(":", 1)[1])
    return load_osm(ref)


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


def _blocked(p: np.ndarray, q: np.ndarray, facades: Facades, exclude: Sequence[int] = ()) -> bool:
    """True when segment p->q passes through any facade below its roof line."""
    if len(facades) == 0:
        return False
    d = q[:2] - p[:2]
    e = facades.ends - facades.starts
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    w = facades.starts - p[:2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / denom
        s = (w[:, 0] * d[1] - w[:, 1] * d[0]) / denom
    hit = (np.abs(denom) > _EPS) & (t > _EPS) & (t < 1 - _EPS) & (s >= -_EPS) & (s <= 1 + _EPS)
    if exclude:
        hit[list(exclude)] = False
    if not np.any(hit):
        return False
    z = p[2] + t[hit] * (q[2] - p[2])
    return bool(np.any(z < facades.heights[hit]))


def _mirror(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mirror a 3D point across the vertical plane through facade a-b."""
    direction = (b - a) / np.linalg.norm(b - a)
    rel = point[:2] - a
    along = np.dot(rel, direction) * direction
    mirrored = a + 2 * along - rel
    return np.array([mirrored[0], mirrored[1], point[2]])


def _hit_facade(
    p: np.ndarray, q: np.ndarray, a: np.ndarray, b: np.ndarray, height: float
) -> Optional[np.ndarray]:
    """Point where segment p->q crosses facade a-b within its extent and height."""
    d = q[:2] - p[:2]
    e = b - a
    denom = d[0] * e[1] - d[1] * e[0]
    if abs(denom) < _EPS:
        return None
    w = a - p[:2]
    t = (w[0] * e[1] - w[1] * e[0]) / denom
    s = (w[0] * d[1] - w[1] * d[0]) / denom
    if not (_EPS < t < 1 - _EPS) or not (0.0 <= s < 1.0):
        return None
    point = p + t * (q - p)
    if point[2] < 0 or point[2] > height:
        return None
    return point


def _angles(direction: np.ndarray) -> Tuple[float, float]:
    horizontal = math.hypot(direction[0], direction[1])
    return math.atan2(direction[1], direction[0]), math.atan2(direction[2], horizontal)


def _make_ray(
    vertices: List[np.ndarray],
    facade_ids: Tuple[int, ...],
    coefficient: float,
    wavelength: float,
) -> Ray:
    pts = np.array(vertices)
    length = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    gain = (
        wavelength
        / (4 * math.pi * length)
        * coefficient
        * np.exp(-1j * 2 * math.pi * length / wavelength)
    )
    return Ray(
        vertices=pts,
        interactions=len(facade_ids),
        length=length,
        gain=complex(gain),
        delay=length / SPEED_OF_LIGHT,
        aod=_angles(pts[1] - pts[0]),
        aoa=_angles(pts[-2] - pts[-1]),
        facade_ids=facade_ids,
    )


def _reflection_coefficient(
    facades: Facades, index: int, default: float, materials: Optional[Dict[str, float]]
) -> float:
    material = facades.materials[index]
    if materials and material in materials:
        return materials[material]
    return default


def trace_paths(
    scene: OsmScene,
    tx: Sequence[float],
    rx: Sequence[float],
    max_reflections: int = 2,
    frequency_hz: float = 1e9,
    reflection_coefficient: float = DEFAULT_REFLECTION_COEFFICIENT,
    materials: Optional[Dict[str, float]] = None,
    max_candidate_facades: Optional[int] = None,
) -> List[Ray]:
    """Line-of-sight and facade-reflected rays between two points.

    Args:
        scene: Parsed scene
        tx: Transmitter position (x, y, z) in metres
        rx: Receiver position (x, y, z) in metres
        max_reflections: 0, 1 or 2
        frequency_hz: Carrier frequency used for the complex ray gains
        reflection_coefficient: Default reflection coefficient for facades
        materials: Optional ``building:material`` -> coefficient overrides
        max_candidate_facades: Keep only the facades nearest the link midpoint

    Returns:
        Rays ordered by interaction count then length; empty when fully blocked
    """
    if not 0 <= max_reflections <= 2:
        raise ChannelError(f"max_reflections must be 0, 1 or 2, got {max_reflections}")
    tx = np.asarray(tx, dtype=np.float64)
    rx = np.asarray(rx, dtype=np.float64)
    if tx[2] < 0 or rx[2] < 0:
        raise ChannelError("Transmitter and receiver must be above ground")
    wavelength = SPEED_OF_LIGHT / frequency_hz
    facades = scene.facades
    rays: List[Ray] = []

    if not _blocked(tx, rx, facades):
        rays.append(_make_ray([tx, rx], (), 1.0, wavelength))
    if max_reflections == 0 or len(facades) == 0:
        return rays

    candidates = np.arange(len(facades))
    if max_candidate_facades is not None and len(facades) > max_candidate_facades:
        centre = (tx[:2] + rx[:2]) / 2
        distance = np.linalg.norm(facades.midpoints - centre, axis=1)
        candidates = np.sort(np.argsort(distance, kind="stable")[:max_candidate_facades])

    def gamma(i: int) -> float:
        return _reflection_coefficient(facades, i, reflection_coefficient, materials)

    for f in candidates:
        a, b, h = facades.starts[f], facades.ends[f], facades.heights[f]
        image = _mirror(tx, a, b)
        point = _hit_facade(image, rx, a, b, h)
        if point is None:
            continue
        if _blocked(tx, point, facades, (f,)) or _blocked(point, rx, facades, (f,)):
            continue
        rays.append(_make_ray([tx, point, rx], (int(f),), gamma(f), wavelength))

    if max_reflections >= 2:
        for f1 in candidates:
            a1, b1, h1 = facades.starts[f1], facades.ends[f1], facades.heights[f1]
            image1 = _mirror(tx, a1, b1)
            for f2 in candidates:
                if f2 == f1:
                    continue
                a2, b2, h2 = facades.starts[f2], facades.ends[f2], facades.heights[f2]
                image2 = _mirror(image1, a2, b2)
                p2 = _hit_facade(image2, rx, a2, b2, h2)
                if p2 is None:
                    continue
                p1 = _hit_facade(image1, p2, a1, b1, h1)
                if p1 is None:
                    continue
                if (
                    _blocked(tx, p1, facades, (f1,))
                    or _blocked(p1, p2, facades, (f1, f2))
                    or _blocked(p2, rx, facades, (f2,))
                ):
                    continue
                rays.append(
                    _make_ray(
                        [tx, p1, p2, rx], (int(f1), int(f2)), gamma(f1) * gamma(f2), wavelength
                    )
                )

    rays.sort(key=lambda r: (r.interactions, r.length))
    return rays


def rays_to_channel(
    rays: Sequence[Ray],
    fc: float,
    fs: float,
    n_samples: int,
    n_tx: int = 1,
    n_rx: int = 1,
    element_spacing: float = 0.5,
    doppler_hz: float = 0.0,
) -> ChannelRealization:
    """Static tapped channel with one tap per ray at its excess delay.

    Antennas are uniform linear arrays along the x axis with ``element_spacing``
    wavelengths between elements. An empty ray list yields an outage realization.
    """
    if not rays:
        return ChannelRealization(
            kind="raytrace",
            n_samples=n_samples,
            sample_rate=fs,
            n_tx=n_tx,
            n_rx=n_rx,
            delays=np.zeros(0),
            outage=True,
            metadata={"RayCount": 0},
        )
    delays = np.array([r.delay for r in rays])
    first = float(delays.min())
    gains = np.array([r.gain for r in rays])

    def steering(n: int, azimuth: float, elevation: float) -> np.ndarray:
        phase = 2 * np.pi * element_spacing * math.cos(elevation) * math.cos(azimuth)
        return np.exp(1j * phase * np.arange(n))

    static = np.empty((n_tx, n_rx, len(rays)), dtype=np.complex128)
    for p, ray in enumerate(rays):
        static[:, :, p] = gains[p] * np.outer(steering(n_tx, *ray.aod), steering(n_rx, *ray.aoa))
    total = float(np.sum(np.abs(gains) ** 2))
    return ChannelRealization(
        kind="raytrace",
        n_samples=n_samples,
        sample_rate=fs,
        n_tx=n_tx,
        n_rx=n_rx,
        delays=delays - first,
        doppler_hz=doppler_hz,
        static_gains=static,
        metadata={
            "RayCount": len(rays),
            "Frequency": fc,
            "FirstArrivalDelay": first,
            "PathLoss": -10.0 * math.log10(total),
            "PathDelays": [float(d) for d in delays - first],
            "AveragePathGains": [float(20 * math.log10(abs(g))) for g in gains],
        },
    )


# --------------------------------------------------------------------------
# Coverage
# --------------------------------------------------------------------------

COVERAGE_OK = 0
COVERAGE_TX_CELL = 1
COVERAGE_OUTAGE = 2
COVERAGE_INSIDE_BUILDING = 3


@dataclass
class CoverageGrid:
    """Received power (dBm) on a regular grid of cell centres."""

    x: np.ndarray
    y: np.ndarray
    power_dbm: np.ndarray  # (ny, nx), NaN where flagged
    flags: np.ndarray  # (ny, nx) COVERAGE_* codes
    tx: Tuple[float, float, float]

    def to_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x_m", "y_m", "power_dbm", "flag"])
            for j, yv in enumerate(self.y):
                for i, xv in enumerate(self.x):
                    power = self.power_dbm[j, i]
                    writer.writerow(
                        [
                            f"{xv:.3f}",
                            f"{yv:.3f}",
                            "" if not np.isfinite(power) else f"{power:.3f}",
                            int(self.flags[j, i]),
                        ]
                    )

    def save_png(self, path: Union[str, Path], scene: Optional[OsmScene] = None) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(7, 6))
        half_x = (self.x[1] - self.x[0]) / 2 if self.x.size > 1 else 0.5
        half_y = (self.y[1] - self.y[0]) / 2 if self.y.size > 1 else 0.5
        image = ax.imshow(
            np.ma.masked_invalid(self.power_dbm),
            origin="lower",
            extent=(
                self.x[0] - half_x,
                self.x[-1] + half_x,
                self.y[0] - half_y,
                self.y[-1] + half_y,
            ),
            cmap="viridis",
        )
        fig.colorbar(image, ax=ax, label="Received power (dBm)")
        if scene is not None:
            for building in scene.buildings:
                closed = np.vstack([building.footprint, building.footprint[:1]])
                ax.plot(closed[:, 0], closed[:, 1], color="white", linewidth=0.8)
        ax.plot(self.tx[0], self.tx[1], marker="^", color="red", markersize=8)
        ax.set_xlabel("East (m)")
        ax.set_ylabel("North (m)")
        ax.set_title("Signal coverage")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def compute_coverage(
    scene: OsmScene,
    tx: Sequence[float],
    spacing: float,
    rx_height: float = 1.5,
    frequency_hz: float = 1e9,
    tx_power_dbm: float = 0.0,
    max_reflections: int = 2,
    bounds: Optional[Tuple[float, float, float, float]] = None,
    **trace_kwargs,
) -> CoverageGrid:
    """Incoherent sum of ray powers at every cell centre.

    The cell containing the transmitter, cells inside buildings and cells with no
    ray are flagged and carry NaN power.
    """
    if spacing <= 0:
        raise ChannelError(f"Grid spacing must be positive, got {spacing}")
    xmin, ymin, xmax, ymax = bounds or scene.bounds
    if xmax <= xmin or ymax <= ymin:
        raise ChannelError("Scene bounds are empty; pass explicit bounds")
    xs = np.arange(xmin + spacing / 2, xmax, spacing)
    ys = np.arange(ymin + spacing / 2, ymax, spacing)
    tx = np.asarray(tx, dtype=np.float64)
    power = np.full((ys.size, xs.size), np.nan)
    flags = np.zeros((ys.size, xs.size), dtype=np.int64)

    for j, yv in enumerate(ys):
        for i, xv in enumerate(xs):
            if abs(xv - tx[0]) < spacing / 2 and abs(yv - tx[1]) < spacing / 2:
                flags[j, i] = COVERAGE_TX_CELL
                continue
            if scene.inside_building(xv, yv, rx_height):
                flags[j, i] = COVERAGE_INSIDE_BUILDING
                continue
            rays = trace_paths(
                scene,
                tx,
                (xv, yv, rx_height),
                max_reflections=max_reflections,
                frequency_hz=frequency_hz,
                **trace_kwargs,
            )
            if not rays:
                flags[j, i] = COVERAGE_OUTAGE
                continue
            total = sum(abs(r.gain) ** 2 for r in rays)
            power[j, i] = tx_power_dbm + 10.0 * math.log10(total)

    logger.info(
        "Coverage grid %dx%d: %d outage cells",
        xs.size,
        ys.size,
        int(np.sum(flags == COVERAGE_OUTAGE)),
    )
    return CoverageGrid(x=xs, y=ys, power_dbm=power, flags=flags, tx=tuple(float(v) for v in tx))
