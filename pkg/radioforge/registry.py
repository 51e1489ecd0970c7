# radioforge/registry.py
"""The fixed 100-class modulation catalog.

Class IDs are positional and never change between releases; annotation category IDs
are the class IDs.
"""

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple, Union

from .errors import ModulationError
from .modulate import ModulationSpec

MULTICARRIER_INNER: Tuple[Tuple[str, int], ...] = (
    tuple(("PSK", m) for m in (2, 4, 8, 16, 32, 64))
    + tuple(("QAM", m) for m in (4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096))
    + tuple(("ASK", m) for m in (4, 8, 16))
)


@dataclass(frozen=True)
class ModulationClass:
    """One catalog entry; ``template`` is completed per signal with drawn rates."""

    class_id: int
    name: str
    family: str
    order: int
    variant: Optional[str]
    experimental: bool
    template: ModulationSpec

    def to_dict(self) -> Dict:
        spec = asdict(self.template)
        spec.pop("symbol_rate")
        spec.pop("roll_off")
        return {
            "id": self.class_id,
            "name": self.name,
            "family": self.family,
            "order": self.order,
            "variant": self.variant,
            "experimental": self.experimental,
            "defaults": spec,
        }


def _constellation_label(family: str, order: int) -> str:
    if family == "PSK" and order == 2:
        return "BPSK"
    if family == "PSK" and order == 4:
        return "QPSK"
    return f"{order}{family}"


def _catalog_rows() -> List[Tuple[str, Dict]]:
    rows: List[Tuple[str, Dict]] = []
    for family, name in (
        ("AM-DSB", "DSB-AM"),
        ("AM-SSB", "SSB-AM"),
        ("AM-VSB", "VSB-AM"),
        ("FM", "FM"),
        ("PM", "PM"),
    ):
        rows.append((name, {"family": family}))

    rows.append(("OOK", {"family": "OOK", "order": 2}))
    for m in (4, 8, 16):
        rows.append((f"{m}-ASK", {"family": "ASK", "order": m}))
    for m in (2, 4, 8, 16, 32, 64):
        label = {2: "BPSK", 4: "QPSK"}.get(m, f"{m}-PSK")
        rows.append((label, {"family": "PSK", "order": m}))
    for m in (8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096):
        rows.append((f"{m}-QAM", {"family": "QAM", "order": m}))
    for m in (16, 32, 64, 256):
        rows.append(
            (
                f"MIL188-{m}QAM",
                {"family": "QAM", "order": m, "variant": "mil188", "experimental": True},
            )
        )

    for m in (2, 4, 8):
        rows.append(
            (
                f"{m}-FSK",
                {
                    "family": "FSK",
                    "order": m,
                    "mod_index": 1.0,
                    "samples_per_symbol": 16 if m == 8 else 8,
                },
            )
        )
    for m in (2, 4, 8):
        rows.append(
            (
                f"{m}-GFSK",
                {
                    "family": "FSK",
                    "order": m,
                    "variant": "gaussian",
                    "mod_index": 0.5,
                    "bt": 0.5,
                    "pulse_length": 3,
                },
            )
        )
    rows.append(("MSK", {"family": "MSK", "order": 2}))
    rows.append(("GMSK", {"family": "GMSK", "order": 2, "bt": 0.3, "pulse_length": 3}))
    for m in (2, 4, 8):
        rows.append(
            (
                f"{m}-CPFSK",
                {
                    "family": "CPFSK",
                    "order": m,
                    "mod_index": 0.7,
                    "samples_per_symbol": 16 if m == 8 else 8,
                },
            )
        )

    for family, extras in (
        ("OFDM", {"subcarriers": 64, "cp_length": 64}),
        ("SCFDMA", {"subcarriers": 64, "cp_length": 64}),
        ("OTFS", {"subcarriers": 32, "cp_length": 32, "doppler_bins": 16}),
    ):
        for inner_family, inner_order in MULTICARRIER_INNER:
            rows.append(
                (
                    f"{family}-{_constellation_label(inner_family, inner_order)}",
                    {
                        "family": family,
                        "inner_family": inner_family,
                        "inner_order": inner_order,
                        **extras,
                    },
                )
            )
    return rows


@lru_cache(maxsize=1)
def list_registry() -> Tuple[ModulationClass, ...]:
    """Full catalog in class-ID order (IDs start at 1)."""
    entries = []
    for class_id, (name, params) in enumerate(_catalog_rows(), start=1):
        params = dict(params)
        experimental = params.pop("experimental", False)
        template = ModulationSpec(class_id=class_id, name=name, **params)
        entries.append(
            ModulationClass(
                class_id=class_id,
                name=name,
                family=template.family,
                order=template.inner_order or template.order,
                variant=template.variant or template.inner_family,
                experimental=experimental,
                template=template,
            )
        )
    return tuple(entries)


def get_class(key: Union[int, str]) -> ModulationClass:
    """Look up a class by ID or by name."""
    for entry in list_registry():
        if entry.class_id == key or entry.name == key:
            return entry
    raise ModulationError(f"Unknown modulation class: {key}")


def registry_as_json() -> List[Dict]:
    return [entry.to_dict() for entry in list_registry()]
