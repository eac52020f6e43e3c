"""Region topology from a TLE file and a ground-station list."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path

import numpy as np

from ..domain import ParticipantId, ParticipantKind
from .tle import TleRecord, load_tle, position_ecef

EARTH_RADIUS_M = 6371e3
DEFAULT_BS_RADIUS_M = 50e3


class LinkKind(str, enum.Enum):
    SAT_TERRESTRIAL = "SatTerrestrial"
    ISL = "ISL"
    WIRED = "Wired"


@dataclass(frozen=True)
class Station:
    name: str
    lat_deg: float
    lon_deg: float


def load_stations(path: str | Path) -> list[Station]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"name", "lat_deg", "lon_deg"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for row_no, row in enumerate(reader, start=2):
            try:
                lat, lon = float(row["lat_deg"]), float(row["lon_deg"])
            except ValueError:
                raise ValueError(f"{path}: line {row_no}: bad coordinates") from None
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError(f"{path}: line {row_no}: coordinates out of range")
            out.append(Station(row["name"].strip(), lat, lon))
    return out


def sample_data_path(name: str) -> Path:
    return Path(str(resources.files("pscdss") / "data" / name))


def default_tle_path() -> Path:
    return sample_data_path("leo_shell_550km.tle")


def default_stations_path() -> Path:
    return sample_data_path("us_stations.csv")


def geodetic_to_ecef(lat_deg: float, lon_deg: float, radius: float = EARTH_RADIUS_M) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    return radius * np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def destination(lat_deg: float, lon_deg: float, bearing: float, dist_m: float,
                radius: float = EARTH_RADIUS_M) -> tuple[float, float]:
    """Point reached along a great circle from a start point, bearing in radians."""
    lat1, lon1 = math.radians(lat_deg), math.radians(lon_deg)
    delta = dist_m / radius
    lat2 = math.asin(math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(bearing))
    lon2 = lon1 + math.atan2(math.sin(bearing) * math.sin(delta) * math.cos(lat1),
                             math.cos(delta) - math.sin(lat1) * math.sin(lat2))
    lon_deg2 = (math.degrees(lon2) + 540.0) % 360.0 - 180.0
    return math.degrees(lat2), lon_deg2


def great_circle_m(a: np.ndarray, b: np.ndarray) -> float:
    ra, rb = np.linalg.norm(a), np.linalg.norm(b)
    cosang = float(np.clip(np.dot(a, b) / (ra * rb), -1.0, 1.0))
    return EARTH_RADIUS_M * math.acos(cosang)


@dataclass
class Topology:
    positions: dict[ParticipantId, np.ndarray]
    regions: list[list[ParticipantId]]
    disseminators: list[ParticipantId]
    bootstrapper: ParticipantId
    catalog: dict[ParticipantId, int] = field(default_factory=dict)
    station_names: list[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.regions)

    def regulator(self, region: int) -> ParticipantId:
        return self.regions[region][0]

    def satellites(self, region: int) -> list[ParticipantId]:
        return [p for p in self.regions[region] if p.kind is ParticipantKind.SATELLITE]

    @staticmethod
    def _is_space(p: ParticipantId) -> bool:
        return p.kind in (ParticipantKind.SATELLITE, ParticipantKind.DISSEMINATOR)

    def link_kind(self, a: ParticipantId, b: ParticipantId) -> LinkKind:
        sa, sb = self._is_space(a), self._is_space(b)
        if sa and sb:
            return LinkKind.ISL
        if sa or sb:
            return LinkKind.SAT_TERRESTRIAL
        return LinkKind.WIRED

    def distance(self, a: ParticipantId, b: ParticipantId) -> float:
        """Path length: great circle for wired links, straight line otherwise."""
        pa, pb = self.positions[a], self.positions[b]
        if self.link_kind(a, b) is LinkKind.WIRED:
            return great_circle_m(pa, pb)
        return float(np.linalg.norm(pa - pb))


def build_topology(tle_file: str | Path | None = None, stations_file: str | Path | None = None,
                   m: int = 4, nr: int = 15, seed: int = 0, ns: int = 5,
                   bs_radius_m: float = DEFAULT_BS_RADIUS_M, when: datetime | None = None,
                   records: list[TleRecord] | None = None) -> Topology:
    """Place M regions of ``nr`` members each (``nr - ns`` ground nodes, ``ns`` satellites).

    Regulators sit at the first M stations. Base stations are uniform in a
    disc of ``bs_radius_m`` around their station. Each region takes the ``ns``
    satellites nearest its regulator that no earlier region claimed; every
    other satellite is a disseminator and the lowest catalog number among
    them hosts the bootstrapper.
    """
    if ns < 0 or nr - ns < 1:
        raise ValueError("need 0 <= Ns <= Nr - 1 (a region always has its regulator)")
    stations = load_stations(stations_file or default_stations_path())
    if m < 1 or m > len(stations):
        raise ValueError(f"M={m} but only {len(stations)} stations are available")
    recs = records if records is not None else load_tle(tle_file or default_tle_path())
    recs = sorted(recs, key=lambda r: r.catalog)
    if len(recs) < m * ns + 1:
        raise ValueError("not enough satellites for the requested regions plus a bootstrapper")
    t = when or max(r.epoch for r in recs)
    sat_pos = np.array([position_ecef(r, t) for r in recs])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x70])))

    positions: dict[ParticipantId, np.ndarray] = {}
    regions: list[list[ParticipantId]] = []
    catalog: dict[ParticipantId, int] = {}
    taken = np.zeros(len(recs), dtype=bool)
    for r in range(m):
        st = stations[r]
        reg = ParticipantId.regulator(r)
        positions[reg] = geodetic_to_ecef(st.lat_deg, st.lon_deg)
        members = [reg]
        for k in range(1, nr - ns):
            dist = bs_radius_m * math.sqrt(rng.random())
            bearing = 2.0 * math.pi * rng.random()
            lat, lon = destination(st.lat_deg, st.lon_deg, bearing, dist)
            pid = ParticipantId(r, ParticipantKind.BASE_STATION, k)
            positions[pid] = geodetic_to_ecef(lat, lon)
            members.append(pid)
        d = np.linalg.norm(sat_pos - positions[reg], axis=1)
        d[taken] = np.inf
        for k, idx in enumerate(np.argsort(d, kind="stable")[:ns]):
            taken[idx] = True
            pid = ParticipantId(r, ParticipantKind.SATELLITE, k)
            positions[pid] = sat_pos[idx]
            catalog[pid] = recs[idx].catalog
            members.append(pid)
        regions.append(members)
    disseminators = []
    for idx in np.flatnonzero(~taken):
        pid = ParticipantId(-1, ParticipantKind.DISSEMINATOR, int(recs[idx].catalog))
        positions[pid] = sat_pos[idx]
        catalog[pid] = recs[idx].catalog
        disseminators.append(pid)
    return Topology(positions=positions, regions=regions, disseminators=disseminators,
                    bootstrapper=disseminators[0], catalog=catalog,
                    station_names=[s.name for s in stations[:m]])
