"""Two-line element parsing and circular-orbit propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

MU_EARTH = 3.986004418e14  # m^3 s^-2
SIDEREAL_RATE = 7.2921150e-5  # rad/s
TLE_LINE_LENGTH = 69


class TleError(ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def tle_checksum(body: str) -> int:
    """Modulo-10 checksum over the first 68 columns: digits count, '-' counts 1."""
    total = 0
    for ch in body[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


@dataclass(frozen=True)
class TleRecord:
    name: str
    catalog: int
    epoch: datetime
    inclination_deg: float
    raan_deg: float
    eccentricity: float
    arg_perigee_deg: float
    mean_anomaly_deg: float
    mean_motion_rev_day: float

    @property
    def mean_motion_rad_s(self) -> float:
        return self.mean_motion_rev_day * 2.0 * math.pi / 86400.0

    @property
    def semi_major_axis_m(self) -> float:
        n = self.mean_motion_rad_s
        return (MU_EARTH / (n * n)) ** (1.0 / 3.0)


def _epoch(field: str) -> datetime:
    yy = int(field[:2])
    year = 2000 + yy if yy < 57 else 1900 + yy
    day = float(field[2:])
    return datetime(year, 1, 1, tzinfo=timezone.utc) + timedelta(days=day - 1.0)


def _check_line(line: str, line_no: int, expect: str) -> None:
    if len(line) != TLE_LINE_LENGTH:
        raise TleError(line_no, f"expected {TLE_LINE_LENGTH} characters, got {len(line)}")
    if line[0] != expect:
        raise TleError(line_no, f"expected line type {expect!r}, got {line[0]!r}")
    if not line[68].isdigit() or int(line[68]) != tle_checksum(line):
        raise TleError(line_no, f"checksum mismatch (computed {tle_checksum(line)}, found {line[68]!r})")


def _parse_pair(name: str, l1: str, l2: str, n1: int, n2: int) -> TleRecord:
    _check_line(l1, n1, "1")
    _check_line(l2, n2, "2")
    try:
        catalog = int(l1[2:7])
        if int(l2[2:7]) != catalog:
            raise TleError(n2, "catalog number differs from line 1")
        return TleRecord(
            name=name or f"SAT-{catalog}",
            catalog=catalog,
            epoch=_epoch(l1[18:32]),
            inclination_deg=float(l2[8:16]),
            raan_deg=float(l2[17:25]),
            eccentricity=float("0." + l2[26:33].strip()),
            arg_perigee_deg=float(l2[34:42]),
            mean_anomaly_deg=float(l2[43:51]),
            mean_motion_rev_day=float(l2[52:63]),
        )
    except ValueError as exc:
        if isinstance(exc, TleError):
            raise
        raise TleError(n1, f"unparseable field ({exc})") from None


def parse_tle(text: str) -> list[TleRecord]:
    """Parse two- or three-line element sets; blank lines are ignored."""
    lines = [(i + 1, ln.rstrip("\r\n")) for i, ln in enumerate(text.splitlines())]
    lines = [(n, ln.rstrip()) if not ln.startswith(("1 ", "2 ")) else (n, ln) for n, ln in lines]
    lines = [(n, ln) for n, ln in lines if ln.strip()]
    records = []
    i = 0
    while i < len(lines):
        n, ln = lines[i]
        name = ""
        if not ln.startswith("1 "):
            name = ln.strip()
            i += 1
            if i >= len(lines):
                raise TleError(n, "name line without element lines")
            n, ln = lines[i]
        if i + 1 >= len(lines):
            raise TleError(n, "line 1 without a following line 2")
        n2, ln2 = lines[i + 1]
        records.append(_parse_pair(name, ln, ln2, n, n2))
        i += 2
    return records


def load_tle(path: str | Path) -> list[TleRecord]:
    return parse_tle(Path(path).read_text(encoding="ascii"))


def format_tle(rec: TleRecord, element_set: int = 999) -> tuple[str, str]:
    """Render a record as two checksummed 69-column lines."""
    year = rec.epoch.year % 100
    start = datetime(rec.epoch.year, 1, 1, tzinfo=timezone.utc)
    day = (rec.epoch - start).total_seconds() / 86400.0 + 1.0
    epoch = f"{year:02d}{day:012.8f}"
    l1 = (f"1 {rec.catalog:05d}U {'24001A':<8} {epoch:14} {' .00000000':>10} "
          f"{' 00000-0':>8} {' 00000-0':>8} 0 {element_set:>4}")
    ecc = f"{rec.eccentricity:.7f}"[2:]
    l2 = (f"2 {rec.catalog:05d} {rec.inclination_deg:8.4f} {rec.raan_deg:8.4f} {ecc} "
          f"{rec.arg_perigee_deg:8.4f} {rec.mean_anomaly_deg:8.4f} {rec.mean_motion_rev_day:11.8f}{0:5d}")
    return l1 + str(tle_checksum(l1)), l2 + str(tle_checksum(l2))


def walker_constellation(planes: int, per_plane: int, altitude_m: float, inclination_deg: float,
                         epoch: datetime, phasing: int = 1, earth_radius_m: float = 6371e3,
                         first_catalog: int = 44000) -> list[TleRecord]:
    """Circular Walker-delta shell as TLE records."""
    a = earth_radius_m + altitude_m
    n_rev_day = math.sqrt(MU_EARTH / a**3) * 86400.0 / (2.0 * math.pi)
    total = planes * per_plane
    recs = []
    for p in range(planes):
        for s in range(per_plane):
            idx = p * per_plane + s
            recs.append(TleRecord(
                name=f"SHELL-{idx:04d}",
                catalog=first_catalog + idx,
                epoch=epoch,
                inclination_deg=inclination_deg,
                raan_deg=360.0 * p / planes,
                eccentricity=0.0,
                arg_perigee_deg=0.0,
                mean_anomaly_deg=(360.0 * s / per_plane + 360.0 * phasing * p / total) % 360.0,
                mean_motion_rev_day=n_rev_day,
            ))
    return recs


def gmst_rad(t: datetime) -> float:
    """Greenwich mean sidereal angle (linear IAU-82 approximation)."""
    jd = t.timestamp() / 86400.0 + 2440587.5
    deg = 280.46061837 + 360.98564736629 * (jd - 2451545.0)
    return math.radians(deg % 360.0)


def position_ecef(rec: TleRecord, t: datetime) -> np.ndarray:
    """Position at ``t`` assuming a circular orbit (eccentricity ignored)."""
    a = rec.semi_major_axis_m
    dt = (t - rec.epoch).total_seconds()
    u = math.radians(rec.arg_perigee_deg + rec.mean_anomaly_deg) + rec.mean_motion_rad_s * dt
    inc = math.radians(rec.inclination_deg)
    raan = math.radians(rec.raan_deg)
    x_orb, y_orb = a * math.cos(u), a * math.sin(u)
    eci = np.array([
        x_orb * math.cos(raan) - y_orb * math.cos(inc) * math.sin(raan),
        x_orb * math.sin(raan) + y_orb * math.cos(inc) * math.cos(raan),
        y_orb * math.sin(inc),
    ])
    g = gmst_rad(t)
    c, s = math.cos(g), math.sin(g)
    return np.array([c * eci[0] + s * eci[1], -s * eci[0] + c * eci[1], eci[2]])


def positions_ecef(records: Iterable[TleRecord], t: datetime) -> np.ndarray:
    return np.array([position_ecef(r, t) for r in records])
