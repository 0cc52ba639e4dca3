"""IGS-inspired ground station catalog.

The bundled catalog lists 13 globally distributed stations in nested-subset
order: the first N rows form the N-station network for N in
{1, 2, 3, 5, 10, 13}.
"""
from __future__ import annotations

import csv
from importlib import resources
from pathlib import Path

from .orbital import GroundStation

VALID_NETWORK_SIZES = (1, 2, 3, 5, 10, 13)


def load_catalog(path: str | Path | None = None) -> list[GroundStation]:
    """Read a station catalog CSV (name, lat_deg, lon_deg[, alt_km]).

    With no path, loads the bundled 13-station catalog.
    """
    if path is None:
        text = resources.files("spacefl").joinpath("stations.csv").read_text()
        lines = text.splitlines()
    else:
        lines = Path(path).read_text().splitlines()
    reader = csv.DictReader(lines)
    stations = []
    for i, row in enumerate(reader, start=2):
        try:
            stations.append(GroundStation(
                name=row["name"].strip(),
                lat_deg=float(row["lat_deg"]),
                lon_deg=float(row["lon_deg"]),
                alt_km=float(row.get("alt_km") or 0.0),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad station catalog row at line {i}: {exc}") from exc
    return stations


def station_network(n: int, catalog: list[GroundStation] | None = None) -> list[GroundStation]:
    """First-n nested subset of the catalog; n must be a valid network size."""
    if n not in VALID_NETWORK_SIZES:
        raise ValueError(
            f"invalid station count {n}; valid sizes are {list(VALID_NETWORK_SIZES)}"
        )
    catalog = catalog if catalog is not None else load_catalog()
    if n > len(catalog):
        raise ValueError(f"catalog has only {len(catalog)} stations, need {n}")
    return catalog[:n]
